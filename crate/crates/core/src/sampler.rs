//! Uniform k-subset sampling, seeded Monte Carlo estimation of subset
//! statistics, and the exhaustive enumeration oracle.
//!
//! Reproducibility contract: the generator is SplitMix64. The stream for
//! trial `t` of a run seeded with `s` starts from state
//! `mix(s ^ mix(t + 1))`, where `mix` is the SplitMix64 output finalizer.
//! Trials therefore depend only on `(seed, trial index)`, never on thread
//! scheduling, and all aggregation is over exact integers, so estimates are
//! bit-identical for every thread count.

use std::collections::BTreeMap;

use num_bigint::BigInt;

use crate::error::{Error, Result};
use crate::rat::{binomial, Rat};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64: 64-bit state, full-period, splittable by state derivation.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> SplitMix64 {
        SplitMix64 { state: mix(seed) }
    }

    /// Stream derivation rule for parallel trials: `(seed, stream)` pairs map
    /// to scattered states through the bijective finalizer.
    pub fn for_stream(seed: u64, stream: u64) -> SplitMix64 {
        SplitMix64 {
            state: mix(seed ^ mix(stream.wrapping_add(1))),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform draw from `0..m` by rejection; unbiased for every `m >= 1`.
    #[inline]
    pub fn below(&mut self, m: u64) -> u64 {
        debug_assert!(m >= 1);
        let threshold = m.wrapping_neg() % m;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % m;
            }
        }
    }

    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Uniform k-subset of `0..n` by Floyd's selection: O(k) draws, each of the
/// C(n,k) subsets equally likely. Returned sorted ascending.
pub fn sample_k_subset(n: usize, k: usize, rng: &mut SplitMix64) -> Result<Vec<u32>> {
    if k > n {
        return Err(Error::InvalidArg(format!(
            "cannot sample {k}-subset of {n} points"
        )));
    }
    let mut chosen: Vec<u32> = Vec::with_capacity(k);
    for j in (n - k)..n {
        let t = rng.below(j as u64 + 1) as u32;
        if chosen.contains(&t) {
            chosen.push(j as u32);
        } else {
            chosen.push(t);
        }
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Lexicographic iterator over all k-subsets of `0..n`.
pub struct Combinations {
    n: usize,
    k: usize,
    cur: Vec<u32>,
    fresh: bool,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Combinations {
        Combinations {
            n,
            k,
            cur: (0..k as u32).collect(),
            fresh: true,
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        if self.done {
            return None;
        }
        if self.fresh {
            self.fresh = false;
            return Some(self.cur.clone());
        }
        // Advance the rightmost index that can still move.
        let (n, k) = (self.n, self.k);
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                return None;
            }
            i -= 1;
            if self.cur[i] < (n - k + i) as u32 {
                self.cur[i] += 1;
                for j in i + 1..k {
                    self.cur[j] = self.cur[j - 1] + 1;
                }
                return Some(self.cur.clone());
            }
        }
    }
}

/// Anything a k-subset statistic can be evaluated against: a finite group or
/// a word-metric ball of an infinite model.
pub trait SubsetUniverse: Sync {
    fn size(&self) -> usize;
    fn describe(&self) -> String;
    /// E(A, A) under the regular action, members as universe indices.
    fn energy_aa(&self, members: &[u32]) -> i64;
    /// E(A, A^{-1}).
    fn energy_aainv(&self, members: &[u32]) -> i64;
    fn product_size_a2(&self, members: &[u32]) -> i64;
    fn product_size_aainv(&self, members: &[u32]) -> i64;
}

/// A registered custom statistic: a named pure function of the subset.
#[derive(Clone, Copy)]
pub struct CustomStatistic {
    pub name: &'static str,
    pub eval: fn(&dyn SubsetUniverse, &[u32]) -> i64,
}

impl std::fmt::Debug for CustomStatistic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CustomStatistic({})", self.name)
    }
}

impl PartialEq for CustomStatistic {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

/// Built-in custom statistics reachable as `CUSTOM:<name>`.
pub const CUSTOM_STATISTICS: &[CustomStatistic] = &[
    CustomStatistic {
        // E(A, A^{-1}) - E(A, A): how much the inverse pairing inflates
        // the coincidence count.
        name: "ENERGY_GAP_INV_MINUS_AA",
        eval: |u, m| u.energy_aainv(m) - u.energy_aa(m),
    },
    CustomStatistic {
        // k^2 - |A^{*2}|: distance from the injective-products extreme.
        name: "DOUBLING_DEFICIT",
        eval: |u, m| (m.len() * m.len()) as i64 - u.product_size_a2(m),
    },
    CustomStatistic {
        // |A A^{-1}| - |A^{*2}|: positive for difference-dominant draws.
        name: "SIZE_GAP_INV_MINUS_A2",
        eval: |u, m| u.product_size_aainv(m) - u.product_size_a2(m),
    },
];

/// Named statistics the CLI and the estimators understand.
#[derive(Debug, Clone, PartialEq)]
pub enum Statistic {
    EnergyAa,
    EnergyAaInv,
    SizeA2,
    SizeAaInv,
    /// Indicator of `|A A^{-1}| <= c * |A^{*2}|` for a rational threshold c.
    RatioEvent(Rat),
    /// One of `CUSTOM_STATISTICS`, resolved at parse time.
    Custom(CustomStatistic),
}

impl Statistic {
    pub fn parse(name: &str) -> Result<Statistic> {
        match name {
            "ENERGY_AA" => Ok(Statistic::EnergyAa),
            "ENERGY_AAINV" => Ok(Statistic::EnergyAaInv),
            "SIZE_A2" => Ok(Statistic::SizeA2),
            "SIZE_AAINV" => Ok(Statistic::SizeAaInv),
            _ => {
                if let Some(arg) = name.strip_prefix("RATIO_EVENT:") {
                    let c = crate::rat::rat_parse(arg)
                        .ok_or_else(|| Error::InvalidArg(format!("bad ratio threshold `{arg}`")))?;
                    Ok(Statistic::RatioEvent(c))
                } else if let Some(arg) = name.strip_prefix("CUSTOM:") {
                    CUSTOM_STATISTICS
                        .iter()
                        .find(|c| c.name == arg)
                        .map(|c| Statistic::Custom(*c))
                        .ok_or_else(|| {
                            Error::InvalidArg(format!(
                                "unknown custom statistic `{arg}`; registered: {}",
                                CUSTOM_STATISTICS
                                    .iter()
                                    .map(|c| c.name)
                                    .collect::<Vec<_>>()
                                    .join(", ")
                            ))
                        })
                } else {
                    Err(Error::InvalidArg(format!("unknown statistic `{name}`")))
                }
            }
        }
    }

    pub fn evaluate(&self, universe: &dyn SubsetUniverse, members: &[u32]) -> i64 {
        match self {
            Statistic::EnergyAa => universe.energy_aa(members),
            Statistic::EnergyAaInv => universe.energy_aainv(members),
            Statistic::SizeA2 => universe.product_size_a2(members),
            Statistic::SizeAaInv => universe.product_size_aainv(members),
            Statistic::RatioEvent(c) => {
                let sq = universe.product_size_a2(members);
                let inv = universe.product_size_aainv(members);
                // |AA^-1| <= c * |A^2|, compared exactly by cross-multiplying.
                let lhs = BigInt::from(inv) * c.denom();
                let rhs = BigInt::from(sq) * c.numer();
                i64::from(lhs <= rhs)
            }
            Statistic::Custom(custom) => (custom.eval)(universe, members),
        }
    }
}

/// Monte Carlo estimation parameters.
#[derive(Debug, Clone)]
pub struct SamplingConfig {
    pub seed: u64,
    pub trials: u64,
    pub k: usize,
    pub threads: usize,
    pub keep_histogram: bool,
}

impl SamplingConfig {
    pub fn new(seed: u64, trials: u64, k: usize) -> SamplingConfig {
        SamplingConfig {
            seed,
            trials,
            k,
            threads: default_threads(),
            keep_histogram: false,
        }
    }

    pub fn with_threads(mut self, threads: usize) -> SamplingConfig {
        self.threads = threads.max(1);
        self
    }
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Seeded Monte Carlo estimate of an integer-valued subset statistic.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
    pub min: i64,
    pub max: i64,
    /// Raw sample moments m_j = sum(x^j)/trials for j = 1..4.
    pub raw_moments: [f64; 4],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<BTreeMap<i64, u64>>,
}

#[derive(Default)]
struct Accum {
    s1: i128,
    s2: i128,
    s3: i128,
    s4: i128,
    min: i64,
    max: i64,
    n: u64,
    histogram: Option<BTreeMap<i64, u64>>,
}

impl Accum {
    fn new(keep_histogram: bool) -> Accum {
        Accum {
            min: i64::MAX,
            max: i64::MIN,
            histogram: keep_histogram.then(BTreeMap::new),
            ..Accum::default()
        }
    }

    fn push(&mut self, x: i64) {
        let x1 = x as i128;
        let x2 = x1 * x1;
        self.s1 += x1;
        self.s2 += x2;
        self.s3 += x2 * x1;
        self.s4 += x2 * x2;
        self.min = self.min.min(x);
        self.max = self.max.max(x);
        self.n += 1;
        if let Some(h) = &mut self.histogram {
            *h.entry(x).or_insert(0) += 1;
        }
    }

    fn merge(mut self, other: Accum) -> Accum {
        self.s1 += other.s1;
        self.s2 += other.s2;
        self.s3 += other.s3;
        self.s4 += other.s4;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        self.n += other.n;
        if let (Some(h), Some(o)) = (&mut self.histogram, other.histogram) {
            for (k, v) in o {
                *h.entry(k).or_insert(0) += v;
            }
        }
        self
    }

    fn finish(self) -> McEstimate {
        let n = self.n.max(1) as f64;
        let mean = self.s1 as f64 / n;
        let var = if self.n > 1 {
            // Sample variance from exact sums: (S2 - S1^2/n) / (n-1).
            let num = self.s2 as f64 - (self.s1 as f64) * (self.s1 as f64) / n;
            (num / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        McEstimate {
            mean,
            stderr: (var / n).sqrt(),
            trials: self.n,
            min: if self.n == 0 { 0 } else { self.min },
            max: if self.n == 0 { 0 } else { self.max },
            raw_moments: [
                self.s1 as f64 / n,
                self.s2 as f64 / n,
                self.s3 as f64 / n,
                self.s4 as f64 / n,
            ],
            histogram: self.histogram,
        }
    }
}

/// Generic trial engine: evaluates `trial(t, rng_t)` for `t` in
/// `0..cfg.trials`, where `rng_t` is the stream derived from
/// `(cfg.seed, t)`. Aggregation is over exact integers and commutative, so
/// the estimate is identical for every thread count.
pub fn mc_run<F>(cfg: &SamplingConfig, trial: F) -> Result<McEstimate>
where
    F: Fn(u64, &mut SplitMix64) -> Result<i64> + Sync,
{
    if cfg.trials == 0 {
        return Err(Error::InvalidArg("trials must be >= 1".into()));
    }
    let threads = cfg.threads.max(1).min(cfg.trials as usize);
    let run_range = |lo: u64, hi: u64| -> Result<Accum> {
        let mut acc = Accum::new(cfg.keep_histogram);
        for t in lo..hi {
            let mut rng = SplitMix64::for_stream(cfg.seed, t);
            acc.push(trial(t, &mut rng)?);
        }
        Ok(acc)
    };
    let acc = if threads <= 1 {
        run_range(0, cfg.trials)?
    } else {
        let chunk = cfg.trials.div_ceil(threads as u64);
        let results: Vec<Result<Accum>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads as u64)
                .map(|i| {
                    let lo = i * chunk;
                    let hi = ((i + 1) * chunk).min(cfg.trials);
                    let run = &run_range;
                    scope.spawn(move || {
                        if lo >= hi {
                            Ok(Accum::new(cfg.keep_histogram))
                        } else {
                            run(lo, hi)
                        }
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sampler thread panicked"))
                .collect()
        });
        let mut acc = Accum::new(cfg.keep_histogram);
        for r in results {
            acc = acc.merge(r?);
        }
        acc
    };
    Ok(acc.finish())
}

/// Runs `cfg.trials` independent uniform k-subset draws and evaluates `stat`
/// on each. Deterministic in `(seed, trials, k)`; thread count only affects
/// wall time.
pub fn mc_expected<U, F>(universe: &U, cfg: &SamplingConfig, stat: F) -> Result<McEstimate>
where
    U: SubsetUniverse + ?Sized,
    F: Fn(&U, &[u32]) -> i64 + Sync,
{
    let n = universe.size();
    if cfg.k > n {
        return Err(Error::InvalidArg(format!(
            "k={} exceeds universe size {n}",
            cfg.k
        )));
    }
    mc_run(cfg, |_t, rng| {
        let members = sample_k_subset(n, cfg.k, rng)?;
        Ok(stat(universe, &members))
    })
}

/// Exact average of `stat` over all C(n,k) subsets, enumerated in
/// lexicographic order. The anti-drift oracle for every closed formula.
pub fn brute_force_expected<U, F>(universe: &U, k: usize, stat: F) -> Result<Rat>
where
    U: SubsetUniverse + ?Sized,
    F: Fn(&U, &[u32]) -> i64,
{
    let n = universe.size();
    if k > n {
        return Err(Error::InvalidArg(format!(
            "k={k} exceeds universe size {n}"
        )));
    }
    let count = binomial(n as u64, k as u64);
    let cap = crate::caps::brute_force_cap();
    if count > BigInt::from(cap) {
        return Err(Error::CapExceeded {
            what: format!("brute force over C({n},{k}) subsets"),
            limit: cap,
            requested: u64::MAX,
        });
    }
    let mut sum: i128 = 0;
    for members in Combinations::new(n, k) {
        sum += stat(universe, &members) as i128;
    }
    Ok(Rat::new(BigInt::from(sum), count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::rat_int;

    struct Line(usize);

    impl SubsetUniverse for Line {
        fn size(&self) -> usize {
            self.0
        }
        fn describe(&self) -> String {
            format!("line:{}", self.0)
        }
        fn energy_aa(&self, members: &[u32]) -> i64 {
            members.iter().map(|&x| x as i64).sum()
        }
        fn energy_aainv(&self, members: &[u32]) -> i64 {
            self.energy_aa(members)
        }
        fn product_size_a2(&self, members: &[u32]) -> i64 {
            members.len() as i64
        }
        fn product_size_aainv(&self, members: &[u32]) -> i64 {
            members.len() as i64
        }
    }

    #[test]
    fn subset_sampling_degenerate_cases() {
        let mut rng = SplitMix64::new(1);
        assert_eq!(
            sample_k_subset(10, 10, &mut rng).unwrap(),
            (0..10).collect::<Vec<u32>>()
        );
        assert_eq!(sample_k_subset(10, 0, &mut rng).unwrap(), Vec::<u32>::new());
        assert!(sample_k_subset(3, 4, &mut rng).is_err());
    }

    #[test]
    fn subsets_are_valid_and_distinct() {
        let mut rng = SplitMix64::new(7);
        for _ in 0..1000 {
            let s = sample_k_subset(37, 5, &mut rng).unwrap();
            assert_eq!(s.len(), 5);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(*s.last().unwrap() < 37);
        }
    }

    /// Chi-square uniformity over all C(n,k) subsets at significance 1e-3.
    /// Critical values are the 0.999 chi-square quantiles for C(n,k)-1
    /// degrees of freedom.
    #[test]
    fn floyd_sampling_is_uniform() {
        for (n, k, crit) in [(5usize, 2usize, 27.877), (6, 3, 43.820), (7, 2, 45.315)] {
            let subsets: Vec<Vec<u32>> = Combinations::new(n, k).collect();
            let index: std::collections::HashMap<Vec<u32>, usize> = subsets
                .iter()
                .cloned()
                .enumerate()
                .map(|(i, s)| (s, i))
                .collect();
            let draws = 100_000u64;
            let mut counts = vec![0u64; subsets.len()];
            let mut rng = SplitMix64::for_stream(0xC0FFEE, (n * 100 + k) as u64);
            for _ in 0..draws {
                let s = sample_k_subset(n, k, &mut rng).unwrap();
                counts[index[&s]] += 1;
            }
            let expected = draws as f64 / subsets.len() as f64;
            let chi2: f64 = counts
                .iter()
                .map(|&c| (c as f64 - expected).powi(2) / expected)
                .sum();
            assert!(
                chi2 < crit,
                "chi2 {chi2} over critical {crit} for ({n},{k})"
            );
        }
    }

    #[test]
    fn combinations_lexicographic_and_complete() {
        let all: Vec<Vec<u32>> = Combinations::new(5, 2).collect();
        assert_eq!(all.len(), 10);
        assert_eq!(all[0], vec![0, 1]);
        assert_eq!(all[9], vec![3, 4]);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(Combinations::new(3, 0).count(), 1);
        assert_eq!(Combinations::new(3, 4).count(), 0);
    }

    #[test]
    fn mc_is_deterministic_across_thread_counts() {
        let u = Line(64);
        let mut cfg = SamplingConfig::new(42, 5000, 6);
        cfg.keep_histogram = true;
        let single = mc_expected(&u, &cfg.clone().with_threads(1), |u, m| u.energy_aa(m)).unwrap();
        let multi = mc_expected(&u, &cfg.with_threads(7), |u, m| u.energy_aa(m)).unwrap();
        assert_eq!(single, multi);
    }

    #[test]
    fn full_subset_draw_has_zero_variance() {
        let u = Line(12);
        let cfg = SamplingConfig::new(3, 100, 12);
        let est = mc_expected(&u, &cfg, |u, m| u.energy_aa(m)).unwrap();
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.mean, 66.0);
        assert_eq!(est.min, est.max);
    }

    #[test]
    fn brute_force_matches_direct_average() {
        let u = Line(6);
        // Mean of sum over 2-subsets of 0..6: each point appears C(5,1) times.
        let got = brute_force_expected(&u, 2, |u, m| u.energy_aa(m)).unwrap();
        assert_eq!(got, rat_int(5));
    }

    #[test]
    fn mc_matches_exact_expectation_on_sym4() {
        let g = crate::group::build_group_str("sym:4").unwrap();
        let exact = crate::expectation::expected_energy(&g, None, 3, crate::invariants::QVariant::Aa)
            .unwrap()
            .value;
        let exact = crate::rat::rat_to_f64(&exact);
        let cfg = SamplingConfig::new(4, 100_000, 3);
        let est = mc_expected(g.as_ref(), &cfg, |u, m| u.energy_aa(m)).unwrap();
        assert!(
            (est.mean - exact).abs() <= 3.0 * est.stderr,
            "mean {} vs exact {exact} (stderr {})",
            est.mean,
            est.stderr
        );
    }

    /// MC agrees with the exhaustive oracle within four standard errors on
    /// every battery group, both energy statistics.
    #[test]
    fn mc_oracle_agreement_battery() {
        for spec in [
            "cyclic:2", "cyclic:5", "cyclic:8", "ea2:3", "ea2:4", "sym:3", "sym:4", "dihedral:4",
            "dihedral:5", "gl2:2", "gl2:3",
        ] {
            let g = crate::group::build_group_str(spec).unwrap();
            let k = g.order().min(3);
            for aa in [true, false] {
                let stat = |u: &crate::group::FiniteGroup, m: &[u32]| {
                    if aa {
                        u.energy_aa(m)
                    } else {
                        u.energy_aainv(m)
                    }
                };
                let brute = brute_force_expected(g.as_ref(), k, stat).unwrap();
                let brute = crate::rat::rat_to_f64(&brute);
                let cfg = SamplingConfig::new(0xbeef, 20_000, k);
                let est = mc_expected(g.as_ref(), &cfg, stat).unwrap();
                let tol = 4.0 * est.stderr.max(1e-9);
                assert!(
                    (est.mean - brute).abs() <= tol,
                    "{spec} aa={aa}: mean {} vs brute {brute} (tol {tol})",
                    est.mean
                );
            }
        }
    }

    #[test]
    fn mc_within_four_stderr_of_exact() {
        let u = Line(30);
        let exact = brute_force_expected(&u, 4, |u, m| u.energy_aa(m)).unwrap();
        let exact = crate::rat::rat_to_f64(&exact);
        let cfg = SamplingConfig::new(11, 40_000, 4);
        let est = mc_expected(&u, &cfg, |u, m| u.energy_aa(m)).unwrap();
        assert!((est.mean - exact).abs() <= 4.0 * est.stderr.max(1e-9));
    }
}
