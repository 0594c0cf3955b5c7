//! Applications layer: sum/difference dominance statistics, randomized
//! additive-basis search, iterated power covers, the thin-basis density
//! demo over the integers, and the staged thin-set construction along
//! chains of nested finite groups.

use std::collections::HashSet;
use std::hash::Hash;

use num_bigint::BigInt;

use crate::error::{Error, Result};
use crate::group::{FiniteGroup, Subset};
use crate::rat::{rat_to_string, Rat};
use crate::sampler::{sample_k_subset, SamplingConfig, SplitMix64, SubsetUniverse};

/// A ratio threshold for the dominance experiment, with the guaranteed
/// lower bound on the event probability when one applies.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DominanceThreshold {
    /// Threshold as `"p/q"`; events are `ratio <= threshold`.
    pub threshold: String,
    /// Guaranteed asymptotic lower bound c*delta for the event probability,
    /// as `"p/q"`, where applicable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guaranteed: Option<String>,
    pub label: String,
}

impl DominanceThreshold {
    pub fn new(threshold: Rat, guaranteed: Option<Rat>, label: impl Into<String>) -> Self {
        DominanceThreshold {
            threshold: rat_to_string(&threshold),
            guaranteed: guaranteed.as_ref().map(rat_to_string),
            label: label.into(),
        }
    }

    fn threshold_rat(&self) -> Rat {
        crate::rat::rat_parse(&self.threshold).expect("stored threshold is valid")
    }
}

/// Default thresholds (1/3 - delta)^{-1} for delta in {1/20, 1/10, 1/5},
/// with the guaranteed probability c*delta at c = 9/10, plus group-aware
/// thresholds from the invariant densities when available.
pub fn default_dominance_thresholds(
    invariants: Option<&crate::invariants::GroupInvariants>,
) -> Vec<DominanceThreshold> {
    let third = Rat::new(1.into(), 3.into());
    let c = Rat::new(9.into(), 10.into());
    let mut out = Vec::new();
    for (num, den) in [(1i64, 20i64), (1, 10), (1, 5)] {
        let delta = Rat::new(num.into(), den.into());
        let threshold = (&third - &delta).recip();
        out.push(DominanceThreshold::new(
            threshold,
            Some(&c * &delta),
            format!("(1/3 - {num}/{den})^-1"),
        ));
    }
    if let Some(inv) = invariants {
        // Densities eps/|G|, kappa/|G|, iota/|G|; delta picked at half the
        // base rate so the threshold stays valid.
        let one = Rat::new(1.into(), 1.into());
        let base1 = (&one + &inv.sq + &inv.cp).recip();
        let delta1 = &base1 / Rat::new(2.into(), 1.into());
        out.push(DominanceThreshold::new(
            (&base1 - &delta1).recip(),
            Some(&c * &delta1),
            "group-aware |AA^-1|/|A^2| bound",
        ));
        let iota_density = Rat::new(inv.iota.into(), inv.order.into());
        let base2 = (Rat::new(2.into(), 1.into()) + iota_density).recip();
        let delta2 = &base2 / Rat::new(2.into(), 1.into());
        out.push(DominanceThreshold::new(
            (&base2 - &delta2).recip(),
            Some(&c * &delta2),
            "group-aware |A^2|/|AA^-1| bound",
        ));
    }
    out
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ThresholdOutcome {
    #[serde(flatten)]
    pub threshold: DominanceThreshold,
    pub p_inv_over_sq_le: f64,
    pub p_sq_over_inv_le: f64,
}

/// Empirical sum/difference dominance statistics for uniform k-subsets.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DominanceReport {
    pub universe: String,
    pub k: usize,
    pub trials: u64,
    pub seed: u64,
    pub outcomes: Vec<ThresholdOutcome>,
    pub mean_size_a2: f64,
    pub mean_size_aainv: f64,
    /// Raw sample moments of E(A,A) and E(A,A^{-1}), orders 1..4.
    pub energy_aa_moments: [f64; 4],
    pub energy_aainv_moments: [f64; 4],
    pub max_ratio_inv_over_sq: f64,
    pub max_ratio_sq_over_inv: f64,
}

#[derive(Clone)]
struct DomAccum {
    le_inv_sq: Vec<u64>,
    le_sq_inv: Vec<u64>,
    sum_s2: i128,
    sum_inv: i128,
    e_aa: [i128; 4],
    e_inv: [i128; 4],
    // Max ratios as exact fractions (num, den).
    max_inv_sq: (i64, i64),
    max_sq_inv: (i64, i64),
}

impl DomAccum {
    fn new(nt: usize) -> DomAccum {
        DomAccum {
            le_inv_sq: vec![0; nt],
            le_sq_inv: vec![0; nt],
            sum_s2: 0,
            sum_inv: 0,
            e_aa: [0; 4],
            e_inv: [0; 4],
            max_inv_sq: (0, 1),
            max_sq_inv: (0, 1),
        }
    }

    fn merge(mut self, o: DomAccum) -> DomAccum {
        for i in 0..self.le_inv_sq.len() {
            self.le_inv_sq[i] += o.le_inv_sq[i];
            self.le_sq_inv[i] += o.le_sq_inv[i];
        }
        self.sum_s2 += o.sum_s2;
        self.sum_inv += o.sum_inv;
        for i in 0..4 {
            self.e_aa[i] += o.e_aa[i];
            self.e_inv[i] += o.e_inv[i];
        }
        if frac_lt(self.max_inv_sq, o.max_inv_sq) {
            self.max_inv_sq = o.max_inv_sq;
        }
        if frac_lt(self.max_sq_inv, o.max_sq_inv) {
            self.max_sq_inv = o.max_sq_inv;
        }
        self
    }
}

fn frac_lt(a: (i64, i64), b: (i64, i64)) -> bool {
    // a.0/a.1 < b.0/b.1 with positive denominators.
    (a.0 as i128) * (b.1 as i128) < (b.0 as i128) * (a.1 as i128)
}

fn moments(sums: [i128; 4], n: f64) -> [f64; 4] {
    [
        sums[0] as f64 / n,
        sums[1] as f64 / n,
        sums[2] as f64 / n,
        sums[3] as f64 / n,
    ]
}

/// Per trial: exact |A^{*2}|, |AA^{-1}|, both energies; accumulates the
/// ratio-event frequencies and the first four energy moments.
pub fn dominance_experiment<U: SubsetUniverse + ?Sized>(
    universe: &U,
    thresholds: &[DominanceThreshold],
    cfg: &SamplingConfig,
) -> Result<DominanceReport> {
    let n = universe.size();
    if cfg.k > n {
        return Err(Error::InvalidArg(format!(
            "k={} exceeds universe size {n}",
            cfg.k
        )));
    }
    if cfg.trials == 0 {
        return Err(Error::InvalidArg("trials must be >= 1".into()));
    }
    let rats: Vec<Rat> = thresholds.iter().map(|t| t.threshold_rat()).collect();
    let run_range = |lo: u64, hi: u64| -> Result<DomAccum> {
        let mut acc = DomAccum::new(thresholds.len());
        for t in lo..hi {
            let mut rng = SplitMix64::for_stream(cfg.seed, t);
            let members = sample_k_subset(n, cfg.k, &mut rng)?;
            let s2 = universe.product_size_a2(&members);
            let sinv = universe.product_size_aainv(&members);
            let eaa = universe.energy_aa(&members);
            let einv = universe.energy_aainv(&members);
            acc.sum_s2 += s2 as i128;
            acc.sum_inv += sinv as i128;
            for (order, slot) in acc.e_aa.iter_mut().enumerate() {
                *slot += (eaa as i128).pow(order as u32 + 1);
            }
            for (order, slot) in acc.e_inv.iter_mut().enumerate() {
                *slot += (einv as i128).pow(order as u32 + 1);
            }
            for (i, c) in rats.iter().enumerate() {
                // sinv/s2 <= c and s2/sinv <= c by cross-multiplication.
                if BigInt::from(sinv) * c.denom() <= BigInt::from(s2) * c.numer() {
                    acc.le_inv_sq[i] += 1;
                }
                if BigInt::from(s2) * c.denom() <= BigInt::from(sinv) * c.numer() {
                    acc.le_sq_inv[i] += 1;
                }
            }
            if frac_lt(acc.max_inv_sq, (sinv, s2)) {
                acc.max_inv_sq = (sinv, s2);
            }
            if frac_lt(acc.max_sq_inv, (s2, sinv)) {
                acc.max_sq_inv = (s2, sinv);
            }
        }
        Ok(acc)
    };
    let threads = cfg.threads.max(1).min(cfg.trials as usize);
    let acc = if threads <= 1 {
        run_range(0, cfg.trials)?
    } else {
        let chunk = cfg.trials.div_ceil(threads as u64);
        let nt = thresholds.len();
        let results: Vec<Result<DomAccum>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads as u64)
                .map(|i| {
                    let lo = i * chunk;
                    let hi = ((i + 1) * chunk).min(cfg.trials);
                    let run = &run_range;
                    scope.spawn(move || {
                        if lo >= hi {
                            Ok(DomAccum::new(nt))
                        } else {
                            run(lo, hi)
                        }
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("dominance thread panicked"))
                .collect()
        });
        let mut acc = DomAccum::new(nt);
        for r in results {
            acc = acc.merge(r?);
        }
        acc
    };
    let tn = cfg.trials as f64;
    let outcomes = thresholds
        .iter()
        .enumerate()
        .map(|(i, t)| ThresholdOutcome {
            threshold: t.clone(),
            p_inv_over_sq_le: acc.le_inv_sq[i] as f64 / tn,
            p_sq_over_inv_le: acc.le_sq_inv[i] as f64 / tn,
        })
        .collect();
    Ok(DominanceReport {
        universe: universe.describe(),
        k: cfg.k,
        trials: cfg.trials,
        seed: cfg.seed,
        outcomes,
        mean_size_a2: acc.sum_s2 as f64 / tn,
        mean_size_aainv: acc.sum_inv as f64 / tn,
        energy_aa_moments: moments(acc.e_aa, tn),
        energy_aainv_moments: moments(acc.e_inv, tn),
        max_ratio_inv_over_sq: acc.max_inv_sq.0 as f64 / acc.max_inv_sq.1 as f64,
        max_ratio_sq_over_inv: acc.max_sq_inv.0 as f64 / acc.max_sq_inv.1 as f64,
    })
}

/// The size budget h(|G|) used by the basis search and the staged thin-set
/// construction: target subsets of size about sqrt(|G|) * h(|G|).
#[derive(Debug, Clone, PartialEq)]
pub enum HFun {
    Log2,
    SqrtLog,
    Const(f64),
}

impl HFun {
    pub fn eval(&self, n: f64) -> f64 {
        match self {
            HFun::Log2 => n.log2().max(1.0),
            HFun::SqrtLog => n.log2().max(1.0).sqrt(),
            HFun::Const(c) => *c,
        }
    }

    pub fn tag(&self) -> String {
        match self {
            HFun::Log2 => "log2".into(),
            HFun::SqrtLog => "sqrtlog".into(),
            HFun::Const(c) => format!("const:{c}"),
        }
    }

    pub fn parse(s: &str) -> Result<HFun> {
        match s {
            "log2" => Ok(HFun::Log2),
            "sqrtlog" => Ok(HFun::SqrtLog),
            _ => {
                if let Some(c) = s.strip_prefix("const:") {
                    let c: f64 = c
                        .parse()
                        .map_err(|_| Error::SpecParse(format!("bad h constant `{c}`")))?;
                    if c <= 0.0 {
                        return Err(Error::SpecParse("h constant must be positive".into()));
                    }
                    Ok(HFun::Const(c))
                } else {
                    Err(Error::SpecParse(format!("unknown h function `{s}`")))
                }
            }
        }
    }
}

/// delta = 1 + (3 + alpha)/h^2: the slack factor in the energy prefilter
/// and the per-layer cover target |F|/delta.
pub fn doubling_slack(h_value: f64, alpha: f64) -> f64 {
    1.0 + (3.0 + alpha) / (h_value * h_value)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct BasisSearchResult {
    pub group: String,
    pub group_order: u64,
    pub h_tag: String,
    pub target_epsilon: f64,
    pub k: usize,
    pub budget: u64,
    pub candidates_tried: u64,
    pub prefilter_rejections: u64,
    /// Members of the found set, when any candidate passed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub found: Option<Vec<u32>>,
    /// |A^{*2}| / |G| of the found set as `"p/q"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub achieved_cover: Option<String>,
}

/// Randomized search for a near-basis: samples k-subsets with
/// k = ceil(sqrt(|G|) h(|G|)) until |A^{*2}| >= (1 - epsilon)|G|.
///
/// The optional energy prefilter discards candidates whose E(A,A) exceeds
/// delta * k^4 / |G| before paying for the product set; a found set is
/// always re-verified through the independent product-set path.
pub fn basis_search(
    g: &FiniteGroup,
    h: &HFun,
    epsilon: f64,
    budget: u64,
    seed: u64,
    energy_prefilter: bool,
) -> Result<BasisSearchResult> {
    let n = g.order();
    if n < 8 {
        return Err(Error::InvalidArg("basis search needs |G| >= 8".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArg("epsilon must lie in [0, 1]".into()));
    }
    let hv = h.eval(n as f64);
    let k = ((n as f64).sqrt() * hv).ceil() as usize;
    let k = k.clamp(1, n);
    let needed = ((1.0 - epsilon) * n as f64).ceil() as i64;
    let energy_cap = doubling_slack(hv, 1.0) * (k as f64).powi(4) / n as f64;
    let mut tried = 0u64;
    let mut rejected = 0u64;
    let mut found: Option<(Vec<u32>, i64)> = None;
    for attempt in 0..budget {
        let mut rng = SplitMix64::for_stream(seed, attempt);
        let members = sample_k_subset(n, k, &mut rng)?;
        tried += 1;
        if energy_prefilter && (g.energy_aa(&members) as f64) > energy_cap {
            rejected += 1;
            continue;
        }
        let cover = g.product_size_a2(&members);
        if cover >= needed {
            found = Some((members, cover));
            break;
        }
    }
    let mut result = BasisSearchResult {
        group: g.family().to_string(),
        group_order: n as u64,
        h_tag: h.tag(),
        target_epsilon: epsilon,
        k,
        budget,
        candidates_tried: tried,
        prefilter_rejections: rejected,
        found: None,
        achieved_cover: None,
    };
    if let Some((members, cover)) = found {
        // Re-verify through the exact product-set path.
        let subset = Subset::new(n, members.clone())?;
        let verified = crate::energy::product_set(&subset, &subset, g)?.len() as i64;
        if verified != cover {
            return Err(Error::InternalInvariant(format!(
                "product size mismatch: sampler {cover} vs product_set {verified}"
            )));
        }
        if verified < needed {
            return Err(Error::InternalInvariant(
                "re-verification lost the cover bound".into(),
            ));
        }
        result.achieved_cover = Some(rat_to_string(&Rat::new(
            (verified as u64).into(),
            (n as u64).into(),
        )));
        result.found = Some(members);
    }
    Ok(result)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct PowerCoverProfile {
    pub group: String,
    pub group_order: u64,
    pub base_size: u64,
    /// |A^{*m}| for m = 1..=max_power.
    pub sizes: Vec<u64>,
    /// First m with A^{*m} = G, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covers_group_at: Option<usize>,
    /// First m with A^{*m} = A^{*(m+1)} as sets (within the computed range).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stabilized_at: Option<usize>,
}

pub const MAX_POWER: usize = 8;

/// Iterated exact product sets A, A^{*2}, ..., A^{*m}.
pub fn power_cover(g: &FiniteGroup, a: &Subset, max_power: usize) -> Result<PowerCoverProfile> {
    a.check_universe(g.order())?;
    if max_power == 0 || max_power > MAX_POWER {
        return Err(Error::InvalidArg(format!(
            "power must be in 1..={MAX_POWER}"
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArg("power cover needs a nonempty set".into()));
    }
    let n = g.order();
    let mut current: Vec<bool> = vec![false; n];
    for &x in a.members() {
        current[x as usize] = true;
    }
    let mut sizes = vec![a.len() as u64];
    let mut covers_group_at = (a.len() == n).then_some(1);
    let mut stabilized_at = None;
    for m in 2..=max_power {
        let mut next = vec![false; n];
        for (p, _) in current.iter().enumerate().filter(|(_, &v)| v) {
            for &x in a.members() {
                next[g.mul(p as u32, x) as usize] = true;
            }
        }
        if stabilized_at.is_none() && next == current {
            stabilized_at = Some(m - 1);
        }
        current = next;
        let size = current.iter().filter(|&&v| v).count() as u64;
        sizes.push(size);
        if covers_group_at.is_none() && size == n as u64 {
            covers_group_at = Some(m);
        }
    }
    Ok(PowerCoverProfile {
        group: g.family().to_string(),
        group_order: n as u64,
        base_size: a.len() as u64,
        sizes,
        covers_group_at,
        stabilized_at,
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ThinBasisReport {
    pub n: u64,
    /// |{+-m^2} /\ [-n, n]|.
    pub square_count: u64,
    pub square_density: f64,
    /// |(A+A) /\ [-n, n]| with exact membership (differences of squares
    /// plus sums of two squares).
    pub sumset_count: u64,
    pub sumset_density: f64,
    /// The residue-characterized part alone: #{m : m != 2 mod 4}.
    pub residue_count: u64,
    pub residue_density: f64,
    /// Entries of the form 2 mod 4 that are sums of two squares.
    pub two_square_extra: u64,
}

fn isqrt(v: u64) -> u64 {
    let mut r = (v as f64).sqrt() as u64;
    while r * r > v {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= v {
        r += 1;
    }
    r
}

fn is_sum_of_two_squares(m: u64) -> bool {
    let mut a = 0u64;
    while a * a * 2 <= m {
        let rest = m - a * a;
        let b = isqrt(rest);
        if b * b == rest {
            return true;
        }
        a += 1;
    }
    false
}

/// Densities of the signed squares A = {+-m^2} and of A+A inside [-n, n].
///
/// Membership in A+A: every m with m != 2 (mod 4) is a difference of two
/// squares ((m+1)/2 and (m-1)/2 for odd m, m/4 +- 1 for multiples of 4);
/// the remaining residue class contributes exactly the sums of two squares,
/// tested by bounded search (sieved above 2^20).
pub fn thin_basis_demo(n: u64) -> Result<ThinBasisReport> {
    let cap = crate::caps::thin_basis_cap();
    if n == 0 || n > cap {
        return Err(Error::CapExceeded {
            what: "thin basis window".into(),
            limit: cap,
            requested: n,
        });
    }
    let window = 2 * n + 1;
    let square_count = 2 * isqrt(n) + 1;
    // Count of m in [-n, n] with m = 2 (mod 4): the window minus those is
    // the residue-characterized membership count.
    let pos_two_mod_four = (n + 2) / 4;
    let residue_count = window - 2 * pos_two_mod_four;
    let two_square_extra = if n >= (1 << 20) {
        // Sieve: mark a^2 + b^2 <= n, then count the 2 mod 4 entries.
        let words = (n / 64 + 1) as usize;
        let mut bits = vec![0u64; words];
        let mut a = 0u64;
        while a * a <= n {
            let mut b = a;
            loop {
                let s = a * a + b * b;
                if s > n {
                    break;
                }
                bits[(s / 64) as usize] |= 1 << (s % 64);
                b += 1;
            }
            a += 1;
        }
        let mut count = 0u64;
        let mut m = 2u64;
        while m <= n {
            if bits[(m / 64) as usize] >> (m % 64) & 1 == 1 {
                count += 1;
            }
            m += 4;
        }
        2 * count
    } else {
        let mut count = 0u64;
        let mut m = 2u64;
        while m <= n {
            if is_sum_of_two_squares(m) {
                count += 1;
            }
            m += 4;
        }
        2 * count
    };
    let sumset_count = residue_count + two_square_extra;
    Ok(ThinBasisReport {
        n,
        square_count,
        square_density: square_count as f64 / window as f64,
        sumset_count,
        sumset_density: sumset_count as f64 / window as f64,
        residue_count,
        residue_density: residue_count as f64 / window as f64,
        two_square_extra,
    })
}

/// Chains of nested finite groups for the staged thin-set construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainSpec {
    /// C2 <= C2^2 <= ... <= C2^stages.
    Ea2 { stages: u32 },
    /// S2 <= S3 <= ... <= S_max_degree.
    Sym { max_degree: u32 },
}

impl ChainSpec {
    pub fn parse(s: &str) -> Result<ChainSpec> {
        let (name, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::SpecParse(format!("chain spec needs name:arg, got `{s}`")))?;
        let v: u32 = arg
            .trim()
            .parse()
            .map_err(|_| Error::SpecParse(format!("bad chain stage count `{arg}`")))?;
        match name.trim() {
            "ea2" => {
                if !(1..=16).contains(&v) {
                    return Err(Error::SpecParse("ea2 chain supports 1..=16 stages".into()));
                }
                Ok(ChainSpec::Ea2 { stages: v })
            }
            "sym" => {
                if !(2..=8).contains(&v) {
                    return Err(Error::SpecParse("sym chain supports degrees 2..=8".into()));
                }
                Ok(ChainSpec::Sym { max_degree: v })
            }
            _ => Err(Error::SpecParse(format!("unknown chain family `{name}`"))),
        }
    }

    pub fn canonical(&self) -> String {
        match self {
            ChainSpec::Ea2 { stages } => format!("ea2:{stages}"),
            ChainSpec::Sym { max_degree } => format!("sym:{max_degree}"),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct StageReport {
    pub stage: usize,
    pub group_order: u64,
    pub layer_size: u64,
    pub k: usize,
    /// Whether a layer set meeting |A_i^{*2}| >= |F_i|/delta was found.
    pub layer_found: bool,
    pub layer_cover: u64,
    pub layer_cover_target: u64,
    /// |A /\ G_i| / |G_i| for the accumulated union.
    pub cumulative_a_density: f64,
    /// |A^{*2} /\ G_i| / |G_i| for the accumulated union.
    pub cumulative_sq_density: f64,
}

#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub h: HFun,
    pub seed: u64,
    pub budget_per_stage: u64,
    pub alpha: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            h: HFun::Const(1.3),
            seed: 1,
            budget_per_stage: 200,
            alpha: 1.0,
        }
    }
}

/// Staged construction: disjoint layers F_i = G_i \ G_{i-1}, a sampled
/// near-doubling set inside each layer, and per-stage densities of the
/// union and its product set. The union's density shrinks while the
/// product set fills the group.
pub fn locally_finite_thin_set(chain: &ChainSpec, cfg: &ChainConfig) -> Result<Vec<StageReport>> {
    match chain {
        ChainSpec::Ea2 { stages } => {
            let mul = |x: &u32, y: &u32| x ^ y;
            let layers: Vec<Vec<u32>> = (1..=*stages)
                .map(|i| {
                    let lo = 1u32 << (i - 1);
                    (lo..(1u32 << i)).collect()
                })
                .collect();
            run_chain(&layers, mul, cfg)
        }
        ChainSpec::Sym { max_degree } => {
            let deg = *max_degree as usize;
            let mul = |x: &Vec<u8>, y: &Vec<u8>| -> Vec<u8> {
                x.iter().map(|&p| y[p as usize]).collect()
            };
            // Layer i (0-based stage): permutations of degree i+2 moving the
            // top point, padded up to the chain's final degree.
            let mut layers: Vec<Vec<Vec<u8>>> = Vec::new();
            for d in 2..=deg {
                let mut layer = Vec::new();
                permutations(d, &mut |p: &[u8]| {
                    if p[d - 1] as usize != d - 1 {
                        let mut padded = p.to_vec();
                        padded.extend(d as u8..deg as u8);
                        layer.push(padded);
                    }
                });
                layer.sort_unstable();
                layers.push(layer);
            }
            run_chain(&layers, mul, cfg)
        }
    }
}

fn permutations(d: usize, visit: &mut impl FnMut(&[u8])) {
    let mut p: Vec<u8> = (0..d as u8).collect();
    let mut c = vec![0usize; d];
    visit(&p);
    let mut i = 0;
    while i < d {
        if c[i] < i {
            if i % 2 == 0 {
                p.swap(0, i);
            } else {
                p.swap(c[i], i);
            }
            visit(&p);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

fn run_chain<T, M>(layers: &[Vec<T>], mul: M, cfg: &ChainConfig) -> Result<Vec<StageReport>>
where
    T: Clone + Eq + Hash + Ord,
    M: Fn(&T, &T) -> T,
{
    let mut reports = Vec::new();
    let mut union: Vec<T> = Vec::new();
    let mut group_order = 1u64; // the trivial base group
    for (idx, layer) in layers.iter().enumerate() {
        group_order += layer.len() as u64;
        let f = layer.len() as f64;
        let hv = cfg.h.eval(f);
        let k = ((f.sqrt() * hv).ceil() as usize).clamp(1, layer.len());
        let delta = doubling_slack(hv, cfg.alpha);
        let target = (f / delta).ceil() as u64;
        let mut best_cover = 0u64;
        let mut best: Option<Vec<T>> = None;
        for attempt in 0..cfg.budget_per_stage {
            let stream = ((idx as u64) << 32) | attempt;
            let mut rng = SplitMix64::for_stream(cfg.seed, stream);
            let picks = sample_k_subset(layer.len(), k, &mut rng)?;
            let candidate: Vec<T> = picks.iter().map(|&i| layer[i as usize].clone()).collect();
            let mut products: HashSet<T> = HashSet::new();
            for x in &candidate {
                for y in &candidate {
                    products.insert(mul(x, y));
                }
            }
            let cover = products.len() as u64;
            if cover > best_cover {
                best_cover = cover;
                best = Some(candidate);
            }
            if cover >= target {
                break;
            }
        }
        let layer_found = best_cover >= target;
        if let Some(candidate) = best {
            union.extend(candidate);
        }
        // Densities of the union and its full product set inside G_i.
        let mut sq: HashSet<T> = HashSet::new();
        for x in &union {
            for y in &union {
                sq.insert(mul(x, y));
            }
        }
        reports.push(StageReport {
            stage: idx + 1,
            group_order,
            layer_size: layer.len() as u64,
            k,
            layer_found,
            layer_cover: best_cover,
            layer_cover_target: target,
            cumulative_a_density: union.len() as f64 / group_order as f64,
            cumulative_sq_density: sq.len() as f64 / group_order as f64,
        });
    }
    Ok(reports)
}
