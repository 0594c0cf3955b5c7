//! Finite groups as explicit element arithmetic with optional materialized
//! multiplication tables, group actions on finite point sets, and index
//! subsets of a declared universe.
//!
//! Groups small enough for a full table (order <= `TABLE_CAP`) get one;
//! larger members of structured families (cyclic, elementary abelian 2,
//! dihedral, direct products, permutation closures) expose the same indexed
//! interface through O(1)/O(deg) arithmetic on the element encoding, so the
//! downstream counting code never branches on representation.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type Elem = u32;

/// Order up to which the full `order x order` multiplication table is built.
pub const TABLE_CAP: usize = 2048;
/// Hard bound on group order for any construction.
pub const ORDER_CAP: u64 = 1_000_000;
/// Bound on `domain_size * order` for materialized action tables.
pub const ACTION_TABLE_CAP: u64 = 10_000_000;

/// Construction descriptor, also the CLI mini-language AST.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupSpec {
    Cyclic(u64),
    Ea2(u32),
    Dihedral(u64),
    Symmetric(u32),
    Gl2(u32),
    Product(Box<GroupSpec>, Box<GroupSpec>),
    /// Generators as permutations in one-line notation (0-based images).
    PermClosure(Vec<Vec<u8>>),
}

impl GroupSpec {
    pub fn canonical(&self) -> String {
        match self {
            GroupSpec::Cyclic(n) => format!("cyclic:{n}"),
            GroupSpec::Ea2(m) => format!("ea2:{m}"),
            GroupSpec::Dihedral(n) => format!("dihedral:{n}"),
            GroupSpec::Symmetric(n) => format!("sym:{n}"),
            GroupSpec::Gl2(q) => format!("gl2:{q}"),
            GroupSpec::Product(a, b) => format!("prod({},{})", a.canonical(), b.canonical()),
            GroupSpec::PermClosure(gens) => {
                let parts: Vec<String> = gens.iter().map(|g| cycle_notation(g)).collect();
                format!("perm:{}", parts.join(";"))
            }
        }
    }
}

/// Parses the group mini-language: `cyclic:6`, `ea2:16`, `sym:4`, `gl2:3`,
/// `dihedral:8`, `prod(sym:3,cyclic:2)`, `perm:(1 2 3)(4 5);(1 2)`.
pub fn parse_group_spec(s: &str) -> Result<GroupSpec> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("prod(") {
        let inner = rest
            .strip_suffix(')')
            .ok_or_else(|| Error::SpecParse(format!("unterminated prod(...): {s}")))?;
        let mut depth = 0usize;
        let mut split = None;
        for (i, c) in inner.char_indices() {
            match c {
                '(' => depth += 1,
                ')' => depth = depth.saturating_sub(1),
                ',' if depth == 0 => {
                    split = Some(i);
                    break;
                }
                _ => {}
            }
        }
        let i = split.ok_or_else(|| Error::SpecParse(format!("prod needs two factors: {s}")))?;
        return Ok(GroupSpec::Product(
            Box::new(parse_group_spec(&inner[..i])?),
            Box::new(parse_group_spec(&inner[i + 1..])?),
        ));
    }
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n.trim(), a.trim()),
        None => (s, ""),
    };
    let num = |what: &str| -> Result<u64> {
        arg.parse::<u64>()
            .map_err(|_| Error::SpecParse(format!("{what} needs a numeric argument, got `{arg}`")))
    };
    match name {
        "cyclic" => Ok(GroupSpec::Cyclic(num("cyclic")?)),
        "ea2" => Ok(GroupSpec::Ea2(num("ea2")? as u32)),
        "dihedral" => Ok(GroupSpec::Dihedral(num("dihedral")?)),
        "sym" => Ok(GroupSpec::Symmetric(num("sym")? as u32)),
        "gl2" => Ok(GroupSpec::Gl2(num("gl2")? as u32)),
        "perm" => {
            if arg.is_empty() {
                return Err(Error::SpecParse("perm: needs generator cycles".into()));
            }
            let gens = arg
                .split(';')
                .map(parse_cycles)
                .collect::<Result<Vec<_>>>()?;
            Ok(GroupSpec::PermClosure(gens))
        }
        _ => Err(Error::SpecParse(format!("unknown group family `{name}`"))),
    }
}

/// Parses cycle notation like `(1 2 3)(4 5)` (1-based points) into a
/// one-line permutation; degree is the largest point mentioned.
fn parse_cycles(s: &str) -> Result<Vec<u8>> {
    let s = s.trim();
    let mut cycles: Vec<Vec<usize>> = Vec::new();
    let mut max_pt = 0usize;
    let mut rest = s;
    while !rest.is_empty() {
        let open = rest
            .find('(')
            .ok_or_else(|| Error::SpecParse(format!("expected `(` in cycles: {s}")))?;
        let close = rest[open..]
            .find(')')
            .ok_or_else(|| Error::SpecParse(format!("unbalanced cycles: {s}")))?
            + open;
        let body = &rest[open + 1..close];
        let pts = body
            .split([' ', ','])
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<usize>()
                    .ok()
                    .filter(|&p| p >= 1)
                    .ok_or_else(|| Error::SpecParse(format!("bad point `{t}` in {s}")))
            })
            .collect::<Result<Vec<_>>>()?;
        for &p in &pts {
            max_pt = max_pt.max(p);
        }
        cycles.push(pts);
        rest = &rest[close + 1..];
    }
    if max_pt == 0 {
        return Err(Error::SpecParse(format!("empty permutation: {s}")));
    }
    if max_pt > 64 {
        return Err(Error::SpecParse(format!(
            "permutation degree {max_pt} too large"
        )));
    }
    let mut image: Vec<u8> = (0..max_pt as u8).collect();
    for cyc in &cycles {
        for w in 0..cyc.len() {
            let from = cyc[w] - 1;
            let to = cyc[(w + 1) % cyc.len()] - 1;
            image[from] = to as u8;
        }
    }
    // Reject non-permutations (repeated points within or across cycles).
    let mut seen = vec![false; max_pt];
    for &v in &image {
        if seen[v as usize] {
            return Err(Error::SpecParse(format!("not a permutation: {s}")));
        }
        seen[v as usize] = true;
    }
    Ok(image)
}

fn cycle_notation(perm: &[u8]) -> String {
    let n = perm.len();
    let mut seen = vec![false; n];
    let mut out = String::new();
    for start in 0..n {
        if seen[start] || perm[start] as usize == start {
            seen[start] = true;
            continue;
        }
        let mut cyc = vec![start];
        seen[start] = true;
        let mut cur = perm[start] as usize;
        while cur != start {
            seen[cur] = true;
            cyc.push(cur);
            cur = perm[cur] as usize;
        }
        out.push('(');
        out.push_str(
            &cyc.iter()
                .map(|p| (p + 1).to_string())
                .collect::<Vec<_>>()
                .join(" "),
        );
        out.push(')');
    }
    if out.is_empty() {
        out.push('e');
    }
    out
}

enum Ops {
    Table {
        mul: Vec<Elem>,
        inv: Vec<Elem>,
        labels: Vec<String>,
    },
    Cyclic {
        n: u64,
    },
    Ea2 {
        m: u32,
    },
    Dihedral {
        n: u64,
    },
    Perm {
        perms: Vec<Vec<u8>>,
        index: HashMap<Vec<u8>, Elem>,
        inv: Vec<Elem>,
        gens: Vec<Elem>,
    },
    Product {
        a: Arc<FiniteGroup>,
        b: Arc<FiniteGroup>,
    },
}

/// A finite group over element indices `0..order`, identity at a fixed index.
pub struct FiniteGroup {
    order: usize,
    identity: Elem,
    abelian: bool,
    family: String,
    ops: Ops,
}

impl std::fmt::Debug for FiniteGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FiniteGroup({}, order {})", self.family, self.order)
    }
}

impl FiniteGroup {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn identity(&self) -> Elem {
        self.identity
    }

    pub fn is_abelian(&self) -> bool {
        self.abelian
    }

    /// Construction descriptor this group was built from.
    pub fn family(&self) -> &str {
        &self.family
    }

    /// A generating set, when the construction knows one. Conjugacy classes
    /// are orbits under conjugation by generators alone, which keeps
    /// invariant computation linear for large permutation groups.
    pub fn known_generators(&self) -> Option<Vec<Elem>> {
        match &self.ops {
            Ops::Perm { gens, .. } => Some(gens.clone()),
            // Rotation r and reflection s generate the dihedral group.
            Ops::Dihedral { n } => Some(vec![1, *n as Elem]),
            Ops::Product { a, b } => {
                let ga = a.known_generators()?;
                let gb = b.known_generators()?;
                let nb = b.order as u64;
                let mut out: Vec<Elem> =
                    ga.into_iter().map(|x| (x as u64 * nb) as Elem).collect();
                out.extend(gb);
                Some(out)
            }
            Ops::Cyclic { n } => Some(if *n > 1 { vec![1] } else { vec![] }),
            Ops::Ea2 { m } => Some((0..*m).map(|j| 1 << j).collect()),
            Ops::Table { .. } => None,
        }
    }

    #[inline]
    pub fn mul(&self, g: Elem, h: Elem) -> Elem {
        debug_assert!((g as usize) < self.order && (h as usize) < self.order);
        match &self.ops {
            Ops::Table { mul, .. } => mul[g as usize * self.order + h as usize],
            Ops::Cyclic { n } => ((g as u64 + h as u64) % n) as Elem,
            Ops::Ea2 { .. } => g ^ h,
            Ops::Dihedral { n } => {
                let n = *n;
                let (s1, c1) = (g as u64 >= n, g as u64 % n);
                let (s2, c2) = (h as u64 >= n, h as u64 % n);
                // Elements act as x -> sign*x + c; composition applies h first.
                let c = if s1 { (c1 + n - c2) % n } else { (c1 + c2) % n };
                let s = s1 ^ s2;
                (if s { n + c } else { c }) as Elem
            }
            Ops::Perm { perms, index, .. } => {
                let p = &perms[g as usize];
                let q = &perms[h as usize];
                let composed: Vec<u8> = p.iter().map(|&x| q[x as usize]).collect();
                index[&composed]
            }
            Ops::Product { a, b } => {
                let nb = b.order as u64;
                let (ga, gb) = (g as u64 / nb, g as u64 % nb);
                let (ha, hb) = (h as u64 / nb, h as u64 % nb);
                (a.mul(ga as Elem, ha as Elem) as u64 * nb + b.mul(gb as Elem, hb as Elem) as u64)
                    as Elem
            }
        }
    }

    #[inline]
    pub fn inv(&self, g: Elem) -> Elem {
        debug_assert!((g as usize) < self.order);
        match &self.ops {
            Ops::Table { inv, .. } => inv[g as usize],
            Ops::Cyclic { n } => ((n - g as u64) % n) as Elem,
            Ops::Ea2 { .. } => g,
            Ops::Dihedral { n } => {
                let n = *n;
                let (s, c) = (g as u64 >= n, g as u64 % n);
                if s {
                    g
                } else {
                    ((n - c) % n) as Elem
                }
            }
            Ops::Perm { inv, .. } => inv[g as usize],
            Ops::Product { a, b } => {
                let nb = b.order as u64;
                (a.inv((g as u64 / nb) as Elem) as u64 * nb + b.inv((g as u64 % nb) as Elem) as u64)
                    as Elem
            }
        }
    }

    /// Bounds-checked multiplication for callers holding untrusted indices.
    pub fn mul_checked(&self, g: Elem, h: Elem) -> Result<Elem> {
        if (g as usize) >= self.order || (h as usize) >= self.order {
            return Err(Error::InvalidArg(format!(
                "element index out of range: mul({g}, {h}) in group of order {}",
                self.order
            )));
        }
        Ok(self.mul(g, h))
    }

    #[inline]
    pub fn square(&self, g: Elem) -> Elem {
        self.mul(g, g)
    }

    pub fn conjugate(&self, g: Elem, x: Elem) -> Elem {
        self.mul(self.mul(self.inv(x), g), x)
    }

    pub fn commute(&self, g: Elem, h: Elem) -> bool {
        self.mul(g, h) == self.mul(h, g)
    }

    pub fn label(&self, g: Elem) -> String {
        match &self.ops {
            Ops::Table { labels, .. } => labels[g as usize].clone(),
            Ops::Cyclic { .. } => g.to_string(),
            Ops::Ea2 { m } => {
                let bits: Vec<String> = (0..*m).map(|j| ((g >> j) & 1).to_string()).collect();
                format!("({})", bits.join(","))
            }
            Ops::Dihedral { n } => dihedral_label(g as u64, *n),
            Ops::Perm { perms, .. } => cycle_notation(&perms[g as usize]),
            Ops::Product { a, b } => {
                let nb = b.order as u64;
                format!(
                    "({},{})",
                    a.label((g as u64 / nb) as Elem),
                    b.label((g as u64 % nb) as Elem)
                )
            }
        }
    }

    pub fn elements(&self) -> impl Iterator<Item = Elem> + '_ {
        0..self.order as Elem
    }

    /// Full structural validation: identity, inverses, Latin-square rows and
    /// columns, and associativity (all triples up to order 64, at least 1e5
    /// random triples beyond).
    pub fn validate(&self) -> Result<()> {
        let n = self.order;
        let e = self.identity;
        for g in self.elements() {
            if self.mul(e, g) != g || self.mul(g, e) != g {
                return Err(Error::InternalInvariant(format!("identity fails at {g}")));
            }
            if self.mul(g, self.inv(g)) != e {
                return Err(Error::InternalInvariant(format!("inverse fails at {g}")));
            }
        }
        if n <= TABLE_CAP {
            let mut row = vec![false; n];
            for g in self.elements() {
                row.iter_mut().for_each(|x| *x = false);
                for h in self.elements() {
                    let v = self.mul(g, h) as usize;
                    if row[v] {
                        return Err(Error::InternalInvariant(format!(
                            "row {g} not a permutation"
                        )));
                    }
                    row[v] = true;
                }
            }
            for h in self.elements() {
                row.iter_mut().for_each(|x| *x = false);
                for g in self.elements() {
                    let v = self.mul(g, h) as usize;
                    if row[v] {
                        return Err(Error::InternalInvariant(format!(
                            "column {h} not a permutation"
                        )));
                    }
                    row[v] = true;
                }
            }
        }
        let check = |a: Elem, b: Elem, c: Elem| -> Result<()> {
            if self.mul(self.mul(a, b), c) != self.mul(a, self.mul(b, c)) {
                return Err(Error::InternalInvariant(format!(
                    "associativity fails at ({a},{b},{c})"
                )));
            }
            Ok(())
        };
        if n <= 64 {
            for a in self.elements() {
                for b in self.elements() {
                    for c in self.elements() {
                        check(a, b, c)?;
                    }
                }
            }
        } else {
            let mut rng = crate::sampler::SplitMix64::new(0x9E3779B97F4A7C15);
            for _ in 0..100_000 {
                let a = rng.below(n as u64) as Elem;
                let b = rng.below(n as u64) as Elem;
                let c = rng.below(n as u64) as Elem;
                check(a, b, c)?;
            }
        }
        Ok(())
    }
}

fn dihedral_label(g: u64, n: u64) -> String {
    let (refl, c) = (g >= n, g % n);
    match (refl, c) {
        (false, 0) => "e".to_string(),
        (false, 1) => "r".to_string(),
        (false, _) => format!("r^{c}"),
        (true, 0) => "s".to_string(),
        (true, 1) => "r*s".to_string(),
        (true, _) => format!("r^{c}*s"),
    }
}

/// Builds the group described by `spec`. Orders above `TABLE_CAP` stay in
/// their structured encoding; everything else is materialized as a table.
pub fn build_group(spec: &GroupSpec) -> Result<Arc<FiniteGroup>> {
    let g = match spec {
        GroupSpec::Cyclic(n) => {
            if *n < 1 {
                return Err(Error::InvalidArg("cyclic order must be >= 1".into()));
            }
            check_order(*n)?;
            structured(*n as usize, 0, true, spec, Ops::Cyclic { n: *n })
        }
        GroupSpec::Ea2(m) => {
            if *m < 1 || *m > 20 {
                return Err(Error::InvalidArg("ea2 exponent must be in 1..=20".into()));
            }
            structured(1usize << m, 0, true, spec, Ops::Ea2 { m: *m })
        }
        GroupSpec::Dihedral(n) => {
            if *n < 2 {
                return Err(Error::InvalidArg("dihedral parameter must be >= 2".into()));
            }
            check_order(2 * n)?;
            structured(2 * *n as usize, 0, *n <= 2, spec, Ops::Dihedral { n: *n })
        }
        GroupSpec::Symmetric(n) => build_symmetric(*n)?,
        GroupSpec::Gl2(q) => build_gl2(*q)?,
        GroupSpec::Product(a, b) => {
            let ga = build_group(a)?;
            let gb = build_group(b)?;
            let order = ga.order as u64 * gb.order as u64;
            check_order(order)?;
            let abelian = ga.abelian && gb.abelian;
            structured(
                order as usize,
                0,
                abelian,
                spec,
                Ops::Product { a: ga, b: gb },
            )
        }
        GroupSpec::PermClosure(gens) => build_perm_closure(gens)?,
    };
    Ok(Arc::new(g))
}

pub fn build_group_str(spec: &str) -> Result<Arc<FiniteGroup>> {
    build_group(&parse_group_spec(spec)?)
}

fn check_order(n: u64) -> Result<()> {
    if n > ORDER_CAP {
        return Err(Error::CapExceeded {
            what: "group order".into(),
            limit: ORDER_CAP,
            requested: n,
        });
    }
    Ok(())
}

/// Wraps structured ops, collapsing to a table when the order is small.
fn structured(
    order: usize,
    identity: Elem,
    abelian: bool,
    spec: &GroupSpec,
    ops: Ops,
) -> FiniteGroup {
    let g = FiniteGroup {
        order,
        identity,
        abelian,
        family: spec.canonical(),
        ops,
    };
    if order <= TABLE_CAP {
        tabulate(g)
    } else {
        g
    }
}

fn tabulate(g: FiniteGroup) -> FiniteGroup {
    let n = g.order;
    let mut mul = vec![0 as Elem; n * n];
    for a in 0..n as Elem {
        for b in 0..n as Elem {
            mul[a as usize * n + b as usize] = g.mul(a, b);
        }
    }
    let inv: Vec<Elem> = (0..n as Elem).map(|a| g.inv(a)).collect();
    let labels: Vec<String> = (0..n as Elem).map(|a| g.label(a)).collect();
    let abelian = (0..n).all(|a| (a..n).all(|b| mul[a * n + b] == mul[b * n + a]));
    FiniteGroup {
        order: n,
        identity: g.identity,
        abelian,
        family: g.family,
        ops: Ops::Table { mul, inv, labels },
    }
}

fn perm_inverse(p: &[u8]) -> Vec<u8> {
    let mut inv = vec![0u8; p.len()];
    for (i, &v) in p.iter().enumerate() {
        inv[v as usize] = i as u8;
    }
    inv
}

fn build_symmetric(n: u32) -> Result<FiniteGroup> {
    if !(1..=8).contains(&n) {
        return Err(Error::InvalidArg("sym degree must be in 1..=8".into()));
    }
    // Lexicographic enumeration puts the identity first.
    let mut perms: Vec<Vec<u8>> = Vec::new();
    let mut cur: Vec<u8> = (0..n as u8).collect();
    loop {
        perms.push(cur.clone());
        // next_permutation
        let mut i = n as usize;
        if i < 2 {
            break;
        }
        i -= 1;
        while i > 0 && cur[i - 1] >= cur[i] {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        let mut j = n as usize - 1;
        while cur[j] <= cur[i - 1] {
            j -= 1;
        }
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
    let mut generators: Vec<Vec<u8>> = Vec::new();
    if n >= 2 {
        let mut t: Vec<u8> = (0..n as u8).collect();
        t.swap(0, 1);
        generators.push(t);
        let cycle: Vec<u8> = (0..n as u8).map(|i| (i + 1) % n as u8).collect();
        generators.push(cycle);
    }
    finish_perm_group(perms, &generators, &GroupSpec::Symmetric(n))
}

fn finish_perm_group(
    perms: Vec<Vec<u8>>,
    generators: &[Vec<u8>],
    spec: &GroupSpec,
) -> Result<FiniteGroup> {
    let order = perms.len();
    let index: HashMap<Vec<u8>, Elem> = perms
        .iter()
        .enumerate()
        .map(|(i, p)| (p.clone(), i as Elem))
        .collect();
    let inv: Vec<Elem> = perms.iter().map(|p| index[&perm_inverse(p)]).collect();
    let identity = index[&(0..perms[0].len() as u8).collect::<Vec<u8>>()];
    let gens: Vec<Elem> = generators.iter().map(|g| index[g]).collect();
    let abelian = order <= 2;
    let g = FiniteGroup {
        order,
        identity,
        abelian,
        family: spec.canonical(),
        ops: Ops::Perm { perms, index, inv, gens },
    };
    Ok(if order <= TABLE_CAP { tabulate(g) } else { g })
}

fn build_perm_closure(gens: &[Vec<u8>]) -> Result<FiniteGroup> {
    if gens.is_empty() {
        return Err(Error::InvalidArg(
            "perm closure needs at least one generator".into(),
        ));
    }
    let deg = gens.iter().map(|g| g.len()).max().unwrap();
    let gens: Vec<Vec<u8>> = gens
        .iter()
        .map(|g| {
            let mut p = g.clone();
            p.extend(p.len() as u8..deg as u8);
            p
        })
        .collect();
    // Breadth-first closure; discovery order fixes the element indexing,
    // identity first.
    let identity: Vec<u8> = (0..deg as u8).collect();
    let mut perms = vec![identity.clone()];
    let mut index: HashMap<Vec<u8>, Elem> = HashMap::new();
    index.insert(identity, 0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        for gen in &gens {
            let next: Vec<u8> = perms[i].iter().map(|&x| gen[x as usize]).collect();
            if !index.contains_key(&next) {
                let id = perms.len() as Elem;
                if id as u64 >= ORDER_CAP {
                    return Err(Error::CapExceeded {
                        what: "perm closure".into(),
                        limit: ORDER_CAP,
                        requested: id as u64 + 1,
                    });
                }
                index.insert(next.clone(), id);
                perms.push(next);
                queue.push_back(id as usize);
            }
        }
    }
    let inv: Vec<Elem> = perms.iter().map(|p| index[&perm_inverse(p)]).collect();
    let abelian = gens.iter().enumerate().all(|(i, a)| {
        gens[i..].iter().all(|b| {
            let ab: Vec<u8> = a.iter().map(|&x| b[x as usize]).collect();
            let ba: Vec<u8> = b.iter().map(|&x| a[x as usize]).collect();
            ab == ba
        })
    });
    let gen_ids: Vec<Elem> = gens.iter().map(|g| index[g]).collect();
    let g = FiniteGroup {
        order: perms.len(),
        identity: 0,
        abelian,
        family: GroupSpec::PermClosure(gens.clone()).canonical(),
        ops: Ops::Perm { perms, index, inv, gens: gen_ids },
    };
    Ok(if g.order <= TABLE_CAP { tabulate(g) } else { g })
}

fn build_gl2(q: u32) -> Result<FiniteGroup> {
    if ![2u32, 3, 5, 7].contains(&q) {
        return Err(Error::InvalidArg(format!(
            "gl2 supports prime q in {{2,3,5,7}}, got {q}"
        )));
    }
    let q64 = q as u64;
    let mut mats: Vec<[u8; 4]> = Vec::new();
    // Deterministic row-major enumeration of invertible matrices; the
    // identity is inserted first so it lands at index 0.
    mats.push([1, 0, 0, 1]);
    for a in 0..q {
        for b in 0..q {
            for c in 0..q {
                for d in 0..q {
                    let det = (a as i64 * d as i64 - b as i64 * c as i64).rem_euclid(q as i64);
                    let m = [a as u8, b as u8, c as u8, d as u8];
                    if det != 0 && m != [1, 0, 0, 1] {
                        mats.push(m);
                    }
                }
            }
        }
    }
    let expect = (q64 * q64 - 1) * (q64 * q64 - q64);
    if mats.len() as u64 != expect {
        return Err(Error::InternalInvariant(format!(
            "gl2({q}) enumeration found {} matrices, expected {expect}",
            mats.len()
        )));
    }
    let n = mats.len();
    let index: HashMap<[u8; 4], Elem> = mats
        .iter()
        .enumerate()
        .map(|(i, m)| (*m, i as Elem))
        .collect();
    let mulm = |x: &[u8; 4], y: &[u8; 4]| -> [u8; 4] {
        let e = |i: usize| -> u32 { x[i] as u32 };
        let f = |i: usize| -> u32 { y[i] as u32 };
        [
            ((e(0) * f(0) + e(1) * f(2)) % q) as u8,
            ((e(0) * f(1) + e(1) * f(3)) % q) as u8,
            ((e(2) * f(0) + e(3) * f(2)) % q) as u8,
            ((e(2) * f(1) + e(3) * f(3)) % q) as u8,
        ]
    };
    let mut mul = vec![0 as Elem; n * n];
    for i in 0..n {
        for j in 0..n {
            mul[i * n + j] = index[&mulm(&mats[i], &mats[j])];
        }
    }
    let mut inv = vec![0 as Elem; n];
    for i in 0..n {
        for j in 0..n {
            if mul[i * n + j] == 0 {
                inv[i] = j as Elem;
                break;
            }
        }
    }
    let labels: Vec<String> = mats
        .iter()
        .map(|m| format!("[[{},{}],[{},{}]]", m[0], m[1], m[2], m[3]))
        .collect();
    Ok(FiniteGroup {
        order: n,
        identity: 0,
        abelian: false,
        family: format!("gl2:{q}"),
        ops: Ops::Table { mul, inv, labels },
    })
}

/// A set of element indices over a declared universe, sorted and distinct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subset {
    universe_size: usize,
    members: Vec<Elem>,
}

impl Subset {
    pub fn new(universe_size: usize, mut members: Vec<Elem>) -> Result<Subset> {
        members.sort_unstable();
        members.dedup();
        if let Some(&last) = members.last() {
            if last as usize >= universe_size {
                return Err(Error::InvalidArg(format!(
                    "member {last} outside universe of size {universe_size}"
                )));
            }
        }
        Ok(Subset {
            universe_size,
            members,
        })
    }

    pub fn full(universe_size: usize) -> Subset {
        Subset {
            universe_size,
            members: (0..universe_size as Elem).collect(),
        }
    }

    pub fn universe_size(&self) -> usize {
        self.universe_size
    }

    pub fn members(&self) -> &[Elem] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, g: Elem) -> bool {
        self.members.binary_search(&g).is_ok()
    }

    pub fn is_full(&self) -> bool {
        self.members.len() == self.universe_size
    }

    /// Image of the subset under group inversion.
    pub fn inverse_image(&self, g: &FiniteGroup) -> Result<Subset> {
        self.check_universe(g.order())?;
        Subset::new(
            self.universe_size,
            self.members.iter().map(|&x| g.inv(x)).collect(),
        )
    }

    /// Closed under inverses.
    pub fn is_symmetric(&self, g: &FiniteGroup) -> Result<bool> {
        Ok(*self == self.inverse_image(g)?)
    }

    pub fn check_universe(&self, expected: usize) -> Result<()> {
        if self.universe_size != expected {
            return Err(Error::UniverseMismatch {
                expected,
                got: self.universe_size,
            });
        }
        Ok(())
    }
}

enum ActionRepr {
    Table(Vec<Elem>),
    /// Right regular action: points are group elements, `act(w, g) = w*g`.
    Regular,
}

/// A right action of a group on `0..domain_size`, as a lookup or the regular
/// action evaluated through group multiplication.
pub struct GroupAction {
    group: Arc<FiniteGroup>,
    domain_size: usize,
    repr: ActionRepr,
}

impl GroupAction {
    /// The right regular action of `g` on itself.
    pub fn regular(group: Arc<FiniteGroup>) -> GroupAction {
        let domain_size = group.order();
        GroupAction {
            group,
            domain_size,
            repr: ActionRepr::Regular,
        }
    }

    /// Wraps an explicit `domain_size x order` table (row-major by point).
    pub fn from_table(
        group: Arc<FiniteGroup>,
        domain_size: usize,
        table: Vec<Elem>,
    ) -> Result<GroupAction> {
        if table.len() != domain_size * group.order() {
            return Err(Error::InvalidArg("action table has wrong shape".into()));
        }
        if domain_size as u64 * group.order() as u64 > ACTION_TABLE_CAP {
            return Err(Error::CapExceeded {
                what: "action table".into(),
                limit: ACTION_TABLE_CAP,
                requested: domain_size as u64 * group.order() as u64,
            });
        }
        let a = GroupAction {
            group,
            domain_size,
            repr: ActionRepr::Table(table),
        };
        a.validate()?;
        Ok(a)
    }

    pub fn group(&self) -> &Arc<FiniteGroup> {
        &self.group
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    #[inline]
    pub fn act(&self, point: Elem, g: Elem) -> Elem {
        match &self.repr {
            ActionRepr::Table(t) => t[point as usize * self.group.order() + g as usize],
            ActionRepr::Regular => self.group.mul(point, g),
        }
    }

    /// Identity fixes every point; compatibility `act(act(w,g),h) = act(w,gh)`
    /// checked fully when `domain*order^2 <= 1e7`, sampled otherwise.
    pub fn validate(&self) -> Result<()> {
        let e = self.group.identity();
        for w in 0..self.domain_size as Elem {
            if self.act(w, e) != w {
                return Err(Error::InternalInvariant(format!(
                    "identity moves point {w}"
                )));
            }
        }
        let n = self.group.order() as u64;
        let full = self.domain_size as u64 * n * n <= 10_000_000;
        if full {
            for w in 0..self.domain_size as Elem {
                for g in self.group.elements() {
                    for h in self.group.elements() {
                        if self.act(self.act(w, g), h) != self.act(w, self.group.mul(g, h)) {
                            return Err(Error::InternalInvariant(format!(
                                "action incompatible at ({w},{g},{h})"
                            )));
                        }
                    }
                }
            }
        } else {
            let mut rng = crate::sampler::SplitMix64::new(0xA076_1D64_78BD_642F);
            for _ in 0..100_000 {
                let w = rng.below(self.domain_size as u64) as Elem;
                let g = rng.below(n) as Elem;
                let h = rng.below(n) as Elem;
                if self.act(self.act(w, g), h) != self.act(w, self.group.mul(g, h)) {
                    return Err(Error::InternalInvariant(format!(
                        "action incompatible at ({w},{g},{h})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Stabilizer size of a point (regular actions: always 1).
    pub fn stabilizer_size(&self, point: Elem) -> usize {
        self.group
            .elements()
            .filter(|&g| self.act(point, g) == point)
            .count()
    }

    pub fn is_semiregular(&self) -> bool {
        match self.repr {
            ActionRepr::Regular => true,
            ActionRepr::Table(_) => {
                (0..self.domain_size as Elem).all(|w| self.stabilizer_size(w) == 1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(spec: &str) -> Arc<FiniteGroup> {
        build_group_str(spec).unwrap()
    }

    #[test]
    fn orders_match_constructions() {
        assert_eq!(g("cyclic:1").order(), 1);
        assert_eq!(g("cyclic:6").order(), 6);
        assert_eq!(g("ea2:4").order(), 16);
        assert_eq!(g("dihedral:4").order(), 8);
        assert_eq!(g("sym:4").order(), 24);
        assert_eq!(g("gl2:2").order(), 6);
        assert_eq!(g("gl2:3").order(), 48);
        assert_eq!(g("gl2:5").order(), 480);
        assert_eq!(g("prod(sym:3,cyclic:2)").order(), 12);
    }

    #[test]
    fn gl2_rejects_bad_q() {
        assert!(build_group_str("gl2:4").is_err());
        assert!(build_group_str("gl2:11").is_err());
    }

    #[test]
    fn structural_validation_battery() {
        for spec in [
            "cyclic:1",
            "cyclic:2",
            "cyclic:7",
            "ea2:3",
            "dihedral:2",
            "dihedral:5",
            "sym:3",
            "sym:4",
            "gl2:2",
            "gl2:3",
            "prod(cyclic:2,cyclic:3)",
        ] {
            g(spec).validate().unwrap_or_else(|e| panic!("{spec}: {e}"));
        }
    }

    #[test]
    fn large_structured_groups_stay_untabulated() {
        let big = g("cyclic:10007");
        assert_eq!(big.order(), 10007);
        assert_eq!(big.mul(10006, 1), 0);
    }

    #[test]
    fn cyclic_arithmetic() {
        let c6 = g("cyclic:6");
        assert_eq!(c6.mul(2, 5), 1);
        assert_eq!(c6.inv(2), 4);
        for x in c6.elements() {
            assert_eq!(c6.mul(x, c6.inv(x)), c6.identity());
        }
    }

    #[test]
    fn sym3_transpositions_are_involutions() {
        let s3 = g("sym:3");
        let transpositions: Vec<Elem> = s3
            .elements()
            .filter(|&x| x != s3.identity() && s3.square(x) == s3.identity())
            .collect();
        assert_eq!(transpositions.len(), 3);
        for t in transpositions {
            assert_eq!(s3.mul(t, t), s3.identity());
        }
    }

    #[test]
    fn perm_closure_matches_symmetric() {
        let s4 = g("perm:(1 2);(1 2 3 4)");
        assert_eq!(s4.order(), 24);
        s4.validate().unwrap();
        let a4 = g("perm:(1 2 3);(2 3 4)");
        assert_eq!(a4.order(), 12);
    }

    #[test]
    fn regular_action_is_free_and_compatible() {
        for spec in ["cyclic:2", "sym:3", "dihedral:4"] {
            let grp = g(spec);
            let act = GroupAction::regular(grp.clone());
            act.validate().unwrap();
            assert!(act.is_semiregular());
            for w in 0..act.domain_size() as Elem {
                assert_eq!(act.stabilizer_size(w), 1);
                for x in grp.elements() {
                    assert_eq!(act.act(w, x), grp.mul(w, x));
                }
            }
            // act(identity, g) = g under the regular action
            for x in grp.elements() {
                assert_eq!(act.act(grp.identity(), x), x);
            }
        }
    }

    #[test]
    fn subset_construction_and_symmetry() {
        let s3 = g("sym:3");
        let all = Subset::full(6);
        assert!(all.is_symmetric(&s3).unwrap());
        assert!(Subset::new(6, vec![7]).is_err());
        let sub = Subset::new(6, vec![3, 1, 1]).unwrap();
        assert_eq!(sub.members(), &[1, 3]);
    }

    #[test]
    fn spec_round_trips() {
        for s in [
            "cyclic:6",
            "ea2:16",
            "sym:4",
            "gl2:3",
            "dihedral:8",
            "prod(sym:3,cyclic:2)",
        ] {
            let spec = parse_group_spec(s).unwrap();
            assert_eq!(spec.canonical(), s);
        }
        assert!(parse_group_spec("frobnicate:9").is_err());
        assert!(parse_group_spec("prod(cyclic:2").is_err());
    }

    #[test]
    fn labels_are_human_readable() {
        let s3 = g("sym:3");
        assert_eq!(s3.label(s3.identity()), "e");
        let c6 = g("cyclic:6");
        assert_eq!(c6.label(4), "4");
        let d4 = g("dihedral:4");
        assert_eq!(d4.label(0), "e");
        let gl = g("gl2:2");
        assert_eq!(gl.label(0), "[[1,0],[0,1]]");
    }
}
