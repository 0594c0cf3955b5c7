//! Finitely generated infinite-group models with exact normal forms,
//! breadth-first word-metric balls, per-radius density profiles, and
//! ball-restricted energy statistics.
//!
//! Four models: free groups of rank r, integer lattices Z^d with the l1
//! metric, the discrete Heisenberg group, and the lamplighter C2 wr Z.
//! Energies over balls always multiply in the model itself and detect
//! coincidences through the canonical normal forms; products are never
//! truncated to the ball.

use std::collections::{HashMap, HashSet};
use std::fmt::Debug;
use std::hash::Hash;

use crate::error::{Error, Result};
use crate::expectation::{binomial_q_value, q_weight_counts};
use crate::invariants::QVariant;
use crate::rat::Rat;
use crate::sampler::{McEstimate, SamplingConfig, SplitMix64, SubsetUniverse};

/// Default size up to which per-radius commuting pairs are scanned exactly.
pub const EXACT_PAIR_CAP: usize = 5000;
/// Pair draws for sampled commuting-probability estimates.
pub const PAIR_SAMPLE_TRIALS: u64 = 1_000_000;

/// A finitely generated group given by canonical normal forms.
pub trait GroupModel: Sync {
    type El: Clone + Eq + Hash + Ord + Debug + Send + Sync;

    fn name(&self) -> String;
    fn identity(&self) -> Self::El;
    /// Symmetric generating set, with display labels.
    fn generators(&self) -> Vec<(String, Self::El)>;
    fn mul(&self, x: &Self::El, y: &Self::El) -> Self::El;
    fn inv(&self, x: &Self::El) -> Self::El;

    fn is_involution(&self, x: &Self::El) -> bool {
        *x != self.identity() && self.mul(x, x) == self.identity()
    }

    fn commutes(&self, x: &Self::El, y: &Self::El) -> bool {
        self.mul(x, y) == self.mul(y, x)
    }
}

/// Free group of rank r: reduced words over generators 1..=r, inverses as
/// negated entries.
pub struct FreeModel {
    pub rank: usize,
}

impl GroupModel for FreeModel {
    type El = Vec<i8>;

    fn name(&self) -> String {
        format!("free:{}", self.rank)
    }

    fn identity(&self) -> Vec<i8> {
        Vec::new()
    }

    fn generators(&self) -> Vec<(String, Vec<i8>)> {
        let mut gens = Vec::new();
        for i in 1..=self.rank as i8 {
            gens.push((format!("x{i}"), vec![i]));
            gens.push((format!("x{i}^-1"), vec![-i]));
        }
        gens
    }

    fn mul(&self, x: &Vec<i8>, y: &Vec<i8>) -> Vec<i8> {
        let mut out = x.clone();
        for &g in y {
            if out.last() == Some(&-g) {
                out.pop();
            } else {
                out.push(g);
            }
        }
        out
    }

    fn inv(&self, x: &Vec<i8>) -> Vec<i8> {
        x.iter().rev().map(|&g| -g).collect()
    }
}

/// Z^d with generators +-e_i; balls are l1 balls.
pub struct LatticeModel {
    pub dim: usize,
}

impl GroupModel for LatticeModel {
    type El = Vec<i32>;

    fn name(&self) -> String {
        format!("lattice:{}", self.dim)
    }

    fn identity(&self) -> Vec<i32> {
        vec![0; self.dim]
    }

    fn generators(&self) -> Vec<(String, Vec<i32>)> {
        let mut gens = Vec::new();
        for i in 0..self.dim {
            for (sign, tag) in [(1, ""), (-1, "^-1")] {
                let mut v = vec![0; self.dim];
                v[i] = sign;
                gens.push((format!("e{}{}", i + 1, tag), v));
            }
        }
        gens
    }

    fn mul(&self, x: &Vec<i32>, y: &Vec<i32>) -> Vec<i32> {
        x.iter().zip(y).map(|(a, b)| a + b).collect()
    }

    fn inv(&self, x: &Vec<i32>) -> Vec<i32> {
        x.iter().map(|a| -a).collect()
    }

    fn commutes(&self, _x: &Vec<i32>, _y: &Vec<i32>) -> bool {
        true
    }
}

/// Integer Heisenberg group: triples with
/// (a,b,c)(a',b',c') = (a+a', b+b', c+c'+a*b').
pub struct HeisenbergModel;

impl GroupModel for HeisenbergModel {
    type El = (i64, i64, i64);

    fn name(&self) -> String {
        "heisenberg".into()
    }

    fn identity(&self) -> (i64, i64, i64) {
        (0, 0, 0)
    }

    fn generators(&self) -> Vec<(String, (i64, i64, i64))> {
        vec![
            ("x".into(), (1, 0, 0)),
            ("x^-1".into(), (-1, 0, 0)),
            ("y".into(), (0, 1, 0)),
            ("y^-1".into(), (0, -1, 0)),
        ]
    }

    fn mul(&self, x: &(i64, i64, i64), y: &(i64, i64, i64)) -> (i64, i64, i64) {
        (x.0 + y.0, x.1 + y.1, x.2 + y.2 + x.0 * y.1)
    }

    fn inv(&self, x: &(i64, i64, i64)) -> (i64, i64, i64) {
        (-x.0, -x.1, -x.2 + x.0 * x.1)
    }

    fn commutes(&self, x: &(i64, i64, i64), y: &(i64, i64, i64)) -> bool {
        // The commutator depends only on the cross term a*b' - a'*b.
        x.0 * y.1 == y.0 * x.1
    }
}

/// Lamplighter C2 wr Z: a finite set of lit lamps plus a cursor. Generators
/// are the cursor shifts and the toggle at the cursor.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Lamp {
    /// Sorted positions of lit lamps.
    pub lamps: Vec<i16>,
    pub pos: i16,
}

pub struct LamplighterModel;

fn lamp_xor(a: &[i16], b: impl Iterator<Item = i16>) -> Vec<i16> {
    let mut set: Vec<i16> = a.to_vec();
    for p in b {
        match set.binary_search(&p) {
            Ok(i) => {
                set.remove(i);
            }
            Err(i) => set.insert(i, p),
        }
    }
    set
}

impl GroupModel for LamplighterModel {
    type El = Lamp;

    fn name(&self) -> String {
        "lamplighter".into()
    }

    fn identity(&self) -> Lamp {
        Lamp {
            lamps: Vec::new(),
            pos: 0,
        }
    }

    fn generators(&self) -> Vec<(String, Lamp)> {
        vec![
            (
                "t".into(),
                Lamp {
                    lamps: vec![],
                    pos: 1,
                },
            ),
            (
                "t^-1".into(),
                Lamp {
                    lamps: vec![],
                    pos: -1,
                },
            ),
            (
                "a".into(),
                Lamp {
                    lamps: vec![0],
                    pos: 0,
                },
            ),
        ]
    }

    fn mul(&self, x: &Lamp, y: &Lamp) -> Lamp {
        // (f, m)(g, l) = (f xor shift_m(g), m + l)
        Lamp {
            lamps: lamp_xor(&x.lamps, y.lamps.iter().map(|&p| p + x.pos)),
            pos: x.pos + y.pos,
        }
    }

    fn inv(&self, x: &Lamp) -> Lamp {
        let mut lamps: Vec<i16> = x.lamps.iter().map(|&p| p - x.pos).collect();
        lamps.sort_unstable();
        Lamp { lamps, pos: -x.pos }
    }

    fn is_involution(&self, x: &Lamp) -> bool {
        // Squares vanish exactly on the base group (cursor home, any lamps).
        x.pos == 0 && !x.lamps.is_empty()
    }
}

/// A word-metric ball with its layer structure. Elements are ordered by
/// (BFS layer, normal-form order), so indices are reproducible.
pub struct Ball<El> {
    pub elems: Vec<El>,
    /// `layer_start[l]..layer_start[l+1]` indexes layer l; the final entry
    /// is the total size.
    pub layer_start: Vec<usize>,
}

impl<El> Ball<El> {
    pub fn radius(&self) -> usize {
        self.layer_start.len() - 2
    }

    pub fn size(&self) -> usize {
        self.elems.len()
    }

    /// Size of the concentric ball of a smaller radius (a prefix).
    pub fn prefix_size(&self, radius: usize) -> usize {
        self.layer_start[(radius + 1).min(self.layer_start.len() - 1)]
    }
}

/// Exact BFS ball of the given radius around the identity.
pub fn ball<M: GroupModel>(model: &M, radius: usize) -> Result<Ball<M::El>> {
    let gens: Vec<M::El> = model.generators().into_iter().map(|(_, g)| g).collect();
    let id = model.identity();
    let mut seen: HashSet<M::El> = HashSet::new();
    seen.insert(id.clone());
    let mut elems = vec![id];
    let mut layer_start = vec![0usize, 1];
    let mut frontier = 0..1usize;
    for _ in 1..=radius {
        let mut next: Vec<M::El> = Vec::new();
        for i in frontier.clone() {
            let x = elems[i].clone();
            for g in &gens {
                let y = model.mul(&x, g);
                if seen.insert(y.clone()) {
                    next.push(y);
                }
            }
        }
        next.sort_unstable();
        let cap = crate::caps::ball_cap();
        if (elems.len() + next.len()) as u64 > cap {
            return Err(Error::CapExceeded {
                what: format!("ball of {}", model.name()),
                limit: cap,
                requested: (elems.len() + next.len()) as u64,
            });
        }
        let start = elems.len();
        elems.extend(next);
        layer_start.push(elems.len());
        frontier = start..elems.len();
    }
    Ok(Ball { elems, layer_start })
}

/// Per-radius densities of an infinite-group model.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DensityRow {
    pub radius: usize,
    pub ball_size: u64,
    /// Commuting-pair density over the ball squared.
    pub cp: f64,
    pub cp_exact: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cp_stderr: Option<f64>,
    /// Equal-square pair density; always exact (square histogram).
    pub sq: f64,
    /// Involution density |I /\ B_n| / |B_n|, identity included.
    pub iota: f64,
    pub involution_count: u64,
    /// |B_n| / |B_{n-1}|; 1.0 at radius 0.
    pub growth_ratio: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct DensityProfile {
    pub model: String,
    pub exact_pair_cap: usize,
    pub seed: u64,
    pub rows: Vec<DensityRow>,
}

/// Ball sizes and cp/sq/iota densities for every radius up to `n_max`.
/// Involution and equal-square counts are exact at every radius; commuting
/// pairs are scanned exactly up to `exact_pair_cap` elements and estimated
/// from seeded uniform pairs beyond (stderr recorded).
pub fn density_profile<M: GroupModel>(
    model: &M,
    n_max: usize,
    exact_pair_cap: usize,
    seed: u64,
) -> Result<DensityProfile> {
    let b = ball(model, n_max)?;
    let mut rows = Vec::with_capacity(n_max + 1);
    // Square histogram grown layer by layer; the equal-square pair count
    // over the prefix updates in O(1) per element.
    let mut square_counts: HashMap<M::El, u64> = HashMap::new();
    let mut equal_square_pairs: u64 = 0;
    let mut involutions: u64 = 0;
    let mut prev_size = 1u64;
    for radius in 0..=n_max {
        let size = b.prefix_size(radius);
        let new_range = if radius == 0 {
            0..size
        } else {
            b.prefix_size(radius - 1)..size
        };
        for x in &b.elems[new_range] {
            let sq = model.mul(x, x);
            let m = square_counts.entry(sq).or_insert(0);
            equal_square_pairs += 2 * *m + 1;
            *m += 1;
            if model.is_involution(x) || *x == model.identity() {
                involutions += 1;
            }
        }
        let total_pairs = (size as u64) * (size as u64);
        let (cp, cp_exact, cp_stderr) = if size <= exact_pair_cap {
            let mut commuting = 0u64;
            for x in &b.elems[..size] {
                for y in &b.elems[..size] {
                    if model.commutes(x, y) {
                        commuting += 1;
                    }
                }
            }
            (commuting as f64 / total_pairs as f64, true, None)
        } else {
            let mut rng = SplitMix64::for_stream(seed, radius as u64);
            let mut hits = 0u64;
            for _ in 0..PAIR_SAMPLE_TRIALS {
                let x = &b.elems[rng.below(size as u64) as usize];
                let y = &b.elems[rng.below(size as u64) as usize];
                if model.commutes(x, y) {
                    hits += 1;
                }
            }
            let p = hits as f64 / PAIR_SAMPLE_TRIALS as f64;
            let se = (p * (1.0 - p) / PAIR_SAMPLE_TRIALS as f64).sqrt();
            (p, false, Some(se))
        };
        rows.push(DensityRow {
            radius,
            ball_size: size as u64,
            cp,
            cp_exact,
            cp_stderr,
            sq: equal_square_pairs as f64 / total_pairs as f64,
            iota: involutions as f64 / size as f64,
            involution_count: involutions,
            growth_ratio: size as f64 / prev_size as f64,
        });
        prev_size = size as u64;
    }
    Ok(DensityProfile {
        model: model.name(),
        exact_pair_cap,
        seed,
        rows,
    })
}

/// A ball as a sampling universe; products are evaluated in the model.
pub struct BallUniverse<'a, M: GroupModel> {
    pub model: &'a M,
    pub elems: &'a [M::El],
}

impl<M: GroupModel> SubsetUniverse for BallUniverse<'_, M> {
    fn size(&self) -> usize {
        self.elems.len()
    }

    fn describe(&self) -> String {
        format!(
            "{} ball of {} elements",
            self.model.name(),
            self.elems.len()
        )
    }

    fn energy_aa(&self, members: &[u32]) -> i64 {
        let mut products = Vec::with_capacity(members.len() * members.len());
        for &x in members {
            for &y in members {
                products.push(
                    self.model
                        .mul(&self.elems[x as usize], &self.elems[y as usize]),
                );
            }
        }
        crate::energy::energy_of_products(products).0 as i64
    }

    fn energy_aainv(&self, members: &[u32]) -> i64 {
        let mut products = Vec::with_capacity(members.len() * members.len());
        for &c in members {
            let ci = self.model.inv(&self.elems[c as usize]);
            for &a in members {
                products.push(self.model.mul(&ci, &self.elems[a as usize]));
            }
        }
        crate::energy::energy_of_products(products).0 as i64
    }

    fn product_size_a2(&self, members: &[u32]) -> i64 {
        let mut products = Vec::with_capacity(members.len() * members.len());
        for &x in members {
            for &y in members {
                products.push(
                    self.model
                        .mul(&self.elems[x as usize], &self.elems[y as usize]),
                );
            }
        }
        products.sort_unstable();
        products.dedup();
        products.len() as i64
    }

    fn product_size_aainv(&self, members: &[u32]) -> i64 {
        let mut products = Vec::with_capacity(members.len() * members.len());
        for &x in members {
            for &y in members {
                products.push(self.model.mul(
                    &self.elems[x as usize],
                    &self.model.inv(&self.elems[y as usize]),
                ));
            }
        }
        products.sort_unstable();
        products.dedup();
        products.len() as i64
    }
}

/// Monte Carlo E[E(A,A)] or E[E(A,A^{-1})] for uniform k-subsets of the
/// radius-n ball.
pub fn ball_energy_mc<M: GroupModel>(
    model: &M,
    radius: usize,
    variant: QVariant,
    cfg: &SamplingConfig,
) -> Result<McEstimate> {
    let b = ball(model, radius)?;
    let universe = BallUniverse {
        model,
        elems: &b.elems,
    };
    crate::sampler::mc_expected(&universe, cfg, |u, m| match variant {
        QVariant::Aa => u.energy_aa(m),
        QVariant::AaInv => u.energy_aainv(m),
    })
}

/// Exact expected energy over k-subsets of the radius-n ball, by triple
/// enumeration with the membership filter. lattice:1 gets a closed-form
/// O(1) counter; everything else pays |B|^3.
pub fn filtration_expectation<M: GroupModel>(
    model: &M,
    radius: usize,
    k: usize,
    variant: QVariant,
) -> Result<Rat> {
    let b = ball(model, radius)?;
    let elems = &b.elems;
    let membership: HashSet<&M::El> = elems.iter().collect();
    let weights = q_weight_counts(
        elems,
        |x, y| model.mul(x, y),
        |x| model.inv(x),
        |d| membership.contains(d),
        variant,
    )?;
    binomial_q_value(elems.len() as u64, k, weights)
}

/// Closed-form weight counts for the interval ball [-n, n] of Z. The (A,A)
/// and (A,A^{-1}) variants coincide: negating one coordinate swaps the two
/// fourth-point equations while preserving the interval.
pub fn interval_q_weights(radius: u64, _variant: QVariant) -> [u64; 4] {
    let n = radius;
    let b = 2 * n + 1;
    let w1 = b;
    let w2 = 2 * b * (b - 1);
    let w3 = 4 * n * n;
    // Triples whose fourth point stays inside: b^3 - sum over (a,b) of |a+b|.
    let t = b * b * b - 2 * n * (2 * n + 1) * (2 * n + 2) / 3;
    let w4 = t - w1 - w2 - w3;
    [w1, w2, w3, w4]
}

/// `filtration_expectation` for lattice:1 at any radius, via the closed form.
pub fn interval_expectation(radius: u64, k: usize, variant: QVariant) -> Result<Rat> {
    binomial_q_value(2 * radius + 1, k, interval_q_weights(radius, variant))
}

/// Model mini-language: `free:2`, `lattice:1`, `heisenberg`, `lamplighter`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    Free(usize),
    Lattice(usize),
    Heisenberg,
    Lamplighter,
}

pub fn parse_model_spec(s: &str) -> Result<ModelSpec> {
    let s = s.trim();
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (s, None),
    };
    let num = |what: &str| -> Result<usize> {
        arg.and_then(|a| a.parse::<usize>().ok())
            .filter(|&v| v >= 1)
            .ok_or_else(|| Error::SpecParse(format!("{what} needs a positive argument")))
    };
    match name {
        "free" => {
            let r = num("free")?;
            if r > 4 {
                return Err(Error::SpecParse("free rank capped at 4".into()));
            }
            Ok(ModelSpec::Free(r))
        }
        "lattice" => {
            let d = num("lattice")?;
            if d > 6 {
                return Err(Error::SpecParse("lattice dimension capped at 6".into()));
            }
            Ok(ModelSpec::Lattice(d))
        }
        "heisenberg" => Ok(ModelSpec::Heisenberg),
        "lamplighter" => Ok(ModelSpec::Lamplighter),
        _ => Err(Error::SpecParse(format!("unknown model `{name}`"))),
    }
}

impl ModelSpec {
    pub fn canonical(&self) -> String {
        match self {
            ModelSpec::Free(r) => format!("free:{r}"),
            ModelSpec::Lattice(d) => format!("lattice:{d}"),
            ModelSpec::Heisenberg => "heisenberg".into(),
            ModelSpec::Lamplighter => "lamplighter".into(),
        }
    }
}

/// Enum-erased entry points used by the CLI.
pub fn model_ball_sizes(spec: &ModelSpec, n_max: usize) -> Result<Vec<u64>> {
    fn sizes<M: GroupModel>(m: &M, n_max: usize) -> Result<Vec<u64>> {
        let b = ball(m, n_max)?;
        Ok((0..=n_max).map(|r| b.prefix_size(r) as u64).collect())
    }
    match spec {
        ModelSpec::Free(r) => sizes(&FreeModel { rank: *r }, n_max),
        ModelSpec::Lattice(d) => sizes(&LatticeModel { dim: *d }, n_max),
        ModelSpec::Heisenberg => sizes(&HeisenbergModel, n_max),
        ModelSpec::Lamplighter => sizes(&LamplighterModel, n_max),
    }
}

pub fn model_density_profile(
    spec: &ModelSpec,
    n_max: usize,
    exact_pair_cap: usize,
    seed: u64,
) -> Result<DensityProfile> {
    match spec {
        ModelSpec::Free(r) => density_profile(&FreeModel { rank: *r }, n_max, exact_pair_cap, seed),
        ModelSpec::Lattice(d) => {
            density_profile(&LatticeModel { dim: *d }, n_max, exact_pair_cap, seed)
        }
        ModelSpec::Heisenberg => density_profile(&HeisenbergModel, n_max, exact_pair_cap, seed),
        ModelSpec::Lamplighter => density_profile(&LamplighterModel, n_max, exact_pair_cap, seed),
    }
}

pub fn model_ball_energy_mc(
    spec: &ModelSpec,
    radius: usize,
    variant: QVariant,
    cfg: &SamplingConfig,
) -> Result<McEstimate> {
    match spec {
        ModelSpec::Free(r) => ball_energy_mc(&FreeModel { rank: *r }, radius, variant, cfg),
        ModelSpec::Lattice(d) => ball_energy_mc(&LatticeModel { dim: *d }, radius, variant, cfg),
        ModelSpec::Heisenberg => ball_energy_mc(&HeisenbergModel, radius, variant, cfg),
        ModelSpec::Lamplighter => ball_energy_mc(&LamplighterModel, radius, variant, cfg),
    }
}

pub fn model_filtration_expectation(
    spec: &ModelSpec,
    radius: usize,
    k: usize,
    variant: QVariant,
) -> Result<Rat> {
    match spec {
        ModelSpec::Lattice(1) => interval_expectation(radius as u64, k, variant),
        ModelSpec::Free(r) => filtration_expectation(&FreeModel { rank: *r }, radius, k, variant),
        ModelSpec::Lattice(d) => {
            filtration_expectation(&LatticeModel { dim: *d }, radius, k, variant)
        }
        ModelSpec::Heisenberg => filtration_expectation(&HeisenbergModel, radius, k, variant),
        ModelSpec::Lamplighter => filtration_expectation(&LamplighterModel, radius, k, variant),
    }
}

/// Generic MC statistic over a model ball (product sizes, ratio events).
pub fn model_ball_mc_statistic(
    spec: &ModelSpec,
    radius: usize,
    stat: &crate::sampler::Statistic,
    cfg: &SamplingConfig,
) -> Result<McEstimate> {
    fn run<M: GroupModel>(
        m: &M,
        radius: usize,
        stat: &crate::sampler::Statistic,
        cfg: &SamplingConfig,
    ) -> Result<McEstimate> {
        let b = ball(m, radius)?;
        let u = BallUniverse {
            model: m,
            elems: &b.elems,
        };
        crate::sampler::mc_expected(&u, cfg, |u, members| stat.evaluate(u, members))
    }
    match spec {
        ModelSpec::Free(r) => run(&FreeModel { rank: *r }, radius, stat, cfg),
        ModelSpec::Lattice(d) => run(&LatticeModel { dim: *d }, radius, stat, cfg),
        ModelSpec::Heisenberg => run(&HeisenbergModel, radius, stat, cfg),
        ModelSpec::Lamplighter => run(&LamplighterModel, radius, stat, cfg),
    }
}
