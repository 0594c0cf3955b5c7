//! Exact expected energies of uniform random k-subsets, closed formulas,
//! bound pairs, and asymptotic predictions — all in exact big-rational
//! arithmetic.
//!
//! The canonical method weighs the triple-class counts by binomial
//! coefficients: a class whose quadruple (a, b, c, d) has j distinct entries
//! contributes C(|F|-j, k-j) subsets per triple, so
//!
//!   E = C(|F|,k)^{-1} * sum_j C(|F|-j, k-j) * W_j .
//!
//! With the convention C(n, r) = 0 for r < 0 or r > n this is total in k and
//! |F|, unlike the falling-factorial closed forms, which divide by zero for
//! |F| <= 3.

use num_bigint::BigInt;

use crate::error::{Error, Result};
use crate::group::{FiniteGroup, GroupAction, Subset};
use crate::invariants::{compute_invariants, q_partition_closed_form, GroupInvariants, QVariant};
use crate::rat::{binomial_i, falling_int, rat_int, Rat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ExpectationMethod {
    /// Binomially weighted triple-class counts; total and oracle-exact.
    BinomialQ,
    /// Falling-factorial closed form with the equal-square class taken as
    /// epsilon|G| ordered pairs, diagonal included.
    ClosedFormUncorrected,
    /// Falling-factorial closed form with the diagonal removed from the
    /// equal-square class: (epsilon-1)|G|.
    ClosedFormCorrected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationResult {
    pub value: Rat,
    pub k: usize,
    pub universe_size: u64,
    pub variant: QVariant,
    pub method: ExpectationMethod,
}

/// E = C(n,k)^{-1} [ C(n-1,k-1) W1 + C(n-2,k-2) W2 + C(n-3,k-3) W3 + C(n-4,k-4) W4 ].
pub fn binomial_q_value(n: u64, k: usize, weights: [u64; 4]) -> Result<Rat> {
    if k < 1 || k as u64 > n {
        return Err(Error::InvalidArg(format!("k = {k} outside 1..={n}")));
    }
    let n = n as i64;
    let k = k as i64;
    let mut num = BigInt::from(0);
    for (j, w) in weights.iter().enumerate() {
        let j = j as i64 + 1;
        num += binomial_i(n - j, k - j) * BigInt::from(*w);
    }
    Ok(Rat::new(num, binomial_i(n, k)))
}

/// Triple-class weight sums over an arbitrary universe with explicit
/// multiplication, filtered by membership of the derived fourth element.
///
/// For a proper subset F the quadruple (a, b, c, d) can only sit inside a
/// k-subset of F if d itself lies in F; triples whose fourth coordinate
/// escapes contribute nothing. For F = G the filter never fires and the
/// sums agree with the full class partition.
pub fn q_weight_counts<T, M, V, C>(
    elems: &[T],
    mul: M,
    inv: V,
    contains: C,
    variant: QVariant,
) -> Result<[u64; 4]>
where
    T: Clone + Eq,
    M: Fn(&T, &T) -> T,
    V: Fn(&T) -> T,
    C: Fn(&T) -> bool,
{
    let m = elems.len() as u64;
    let cap = crate::caps::triple_enum_cap();
    if m * m * m > cap {
        return Err(Error::CapExceeded {
            what: "triple enumeration |F|^3".into(),
            limit: cap,
            requested: m * m * m,
        });
    }
    let inverses: Vec<T> = elems.iter().map(&inv).collect();
    let mut weights = [0u64; 4];
    match variant {
        QVariant::Aa => {
            for a in elems {
                for b in elems {
                    let ab = mul(a, b);
                    for (c, ci) in elems.iter().zip(&inverses) {
                        let d = mul(ci, &ab);
                        if !contains(&d) {
                            continue;
                        }
                        weights[count_distinct(a, b, c, &d) - 1] += 1;
                    }
                }
            }
        }
        QVariant::AaInv => {
            for (a, ai) in elems.iter().zip(&inverses) {
                for b in elems {
                    let bai = mul(b, ai);
                    for c in elems {
                        let d = mul(&bai, c);
                        if !contains(&d) {
                            continue;
                        }
                        weights[count_distinct(a, b, c, &d) - 1] += 1;
                    }
                }
            }
        }
    }
    Ok(weights)
}

fn count_distinct<T: Eq>(a: &T, b: &T, c: &T, d: &T) -> usize {
    let mut n = 1;
    if b != a {
        n += 1;
    }
    if c != a && c != b {
        n += 1;
    }
    if d != a && d != b && d != c {
        n += 1;
    }
    n
}

/// Exact E[E(A_k, A_k)] (or the inverse-pair variant) for uniform k-subsets
/// of F. For the full group the class counts come from the closed-form
/// identities; proper subsets are enumerated with the membership filter.
pub fn expected_energy(
    g: &FiniteGroup,
    f: Option<&Subset>,
    k: usize,
    variant: QVariant,
) -> Result<ExpectationResult> {
    let full = Subset::full(g.order());
    let f = f.unwrap_or(&full);
    f.check_universe(g.order())?;
    let m = f.len() as u64;
    let weights = if f.is_full() {
        let inv = compute_invariants(g)?;
        q_partition_closed_form(g, &inv, variant).weight_sums()
    } else {
        let mut membership = vec![false; g.order()];
        for &x in f.members() {
            membership[x as usize] = true;
        }
        q_weight_counts(
            f.members(),
            |&a, &b| g.mul(a, b),
            |&a| g.inv(a),
            |&d| membership[d as usize],
            variant,
        )?
    };
    Ok(ExpectationResult {
        value: binomial_q_value(m, k, weights)?,
        k,
        universe_size: m,
        variant,
        method: ExpectationMethod::BinomialQ,
    })
}

/// Falling-factorial closed form over the whole group. Defined for |G| >= 4.
///
/// The inverse-pair variant has a single correct form (both method tags give
/// the same value). For the (A, A) variant the two tags differ by exactly
/// `closed_form_discrepancy`, and only the corrected one matches the
/// enumeration oracle.
pub fn closed_form_expectation(
    g: &FiniteGroup,
    inv: &GroupInvariants,
    k: usize,
    variant: QVariant,
    method: ExpectationMethod,
) -> Result<ExpectationResult> {
    let n = g.order() as i64;
    if n < 4 {
        return Err(Error::InvalidArg(format!(
            "closed forms divide by (|G|-1)(|G|-2)(|G|-3); |G| = {n} is too small"
        )));
    }
    if k < 1 || k as i64 > n {
        return Err(Error::InvalidArg(format!("k = {k} outside 1..={n}")));
    }
    if method == ExpectationMethod::BinomialQ {
        return Err(Error::InvalidArg(
            "use expected_energy for the binomial method".into(),
        ));
    }
    let corrected = method == ExpectationMethod::ClosedFormCorrected;
    let ki = k as i64;
    let k4 = falling_int(ki, 4);
    let k3 = falling_int(ki, 3);
    let k2 = falling_int(ki, 2);
    let ksq = rat_int(ki * ki);
    let d3 = falling_int(n - 1, 3);
    let d2 = falling_int(n - 1, 2);
    let d1 = rat_int(n - 1);
    let value = match variant {
        QVariant::Aa => {
            let (eps, kap) = (inv.epsilon as i64, inv.kappa as i64);
            if corrected {
                k4 / d3 * rat_int(n * n - 5 * n + 2 + eps + kap)
                    + k3 / d2 * rat_int(2 * (2 * n - eps - kap))
                    + k2 / d1 * rat_int(eps + kap - 2)
                    + ksq
            } else {
                k4 / d3 * rat_int(n * n - 5 * n + eps + kap + 3)
                    + k3 / d2 * rat_int(2 * (2 * n - eps - kap - 1))
                    + k2 / d1 * rat_int(eps + kap - 1)
                    + ksq
            }
        }
        QVariant::AaInv => {
            let iota = inv.iota as i64;
            k4 / d3 * rat_int(n * n - 4 * n + 2 + iota)
                + k3 / d2 * rat_int(2 * (n - iota))
                + k2 / d1 * rat_int(iota - 1)
                + rat_int(2 * ki * ki - ki)
        }
    };
    Ok(ExpectationResult {
        value,
        k,
        universe_size: n as u64,
        variant,
        method,
    })
}

/// Exact difference (uncorrected minus corrected) of the (A, A) closed
/// forms: the weight of |G| diagonal triples shifted between the
/// three-distinct and two-distinct tiers.
pub fn closed_form_discrepancy(n: u64, k: usize) -> Rat {
    let n = n as i64;
    let k = k as i64;
    falling_int(k, 4) / falling_int(n - 1, 3)
        - rat_int(2) * falling_int(k, 3) / falling_int(n - 1, 2)
        + falling_int(k, 2) / rat_int(n - 1)
}

/// Which pairing count enters the upper-bound constant of the independent
/// action-pair expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ConstantMode {
    /// Unordered-pair constant 2(|Phi|-1); inconsistent with the exact
    /// finite-domain expectation.
    Halved,
    /// Ordered-pair constant (|Phi|-1); attained exactly on finite domains.
    Ordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum BoundSource {
    ActionPair,
    MultiplicativeAa,
    MultiplicativeAaInv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundPair {
    pub lower: Rat,
    pub upper: Rat,
    pub source: BoundSource,
    pub constant_mode: Option<ConstantMode>,
}

/// kh <= E <= kh (1 + (k-1)(h-1) / (c (|Phi|-1))) with c = 2 or 1.
pub fn action_expectation_bounds(
    k: u64,
    h: u64,
    phi_size: u64,
    mode: ConstantMode,
) -> Result<BoundPair> {
    if phi_size < 2 {
        return Err(Error::InvalidArg(
            "domain filtration must have size >= 2".into(),
        ));
    }
    let lower = rat_int((k * h) as i64);
    let c = match mode {
        ConstantMode::Halved => 2,
        ConstantMode::Ordered => 1,
    };
    let corr = Rat::new(
        BigInt::from(k.saturating_sub(1) as i64 * h.saturating_sub(1) as i64),
        BigInt::from(c * (phi_size as i64 - 1)),
    );
    let upper = &lower * (rat_int(1) + corr);
    Ok(BoundPair {
        lower,
        upper,
        source: BoundSource::ActionPair,
        constant_mode: Some(mode),
    })
}

/// Exact E[E(A_k, D_h)] for independent uniform k- and h-subsets of F and
/// Phi under an arbitrary action, by splitting tuples on a = b and counting
/// the indicator of the derived point landing back in Phi.
pub fn action_independent_expectation(
    act: &GroupAction,
    f: &Subset,
    phi: &Subset,
    k: usize,
    h: usize,
) -> Result<Rat> {
    f.check_universe(act.group().order())?;
    phi.check_universe(act.domain_size())?;
    let (fs, ps) = (f.len() as u64, phi.len() as u64);
    if k as u64 > fs || h as u64 > ps {
        return Err(Error::InvalidArg("k or h exceeds its universe".into()));
    }
    let cap = crate::caps::independent_pair_cap();
    if fs * fs * ps > cap {
        return Err(Error::CapExceeded {
            what: "independent-pair enumeration |F|^2 |Phi|".into(),
            limit: cap,
            requested: fs * fs * ps,
        });
    }
    let g = act.group();
    let mut phi_member = vec![false; act.domain_size()];
    for &w in phi.members() {
        phi_member[w as usize] = true;
    }
    // Tuples with a != b, by whether the forced fourth point is a fresh
    // element of Phi or collides with the third.
    let mut fresh: u64 = 0;
    let mut collide: u64 = 0;
    for &a in f.members() {
        for &b in f.members() {
            if a == b {
                continue;
            }
            let shift = g.mul(a, g.inv(b));
            for &w in phi.members() {
                let d = act.act(w, shift);
                if !phi_member[d as usize] {
                    continue;
                }
                if d == w {
                    collide += 1;
                } else {
                    fresh += 1;
                }
            }
        }
    }
    let (fi, pi, ki, hi) = (fs as i64, ps as i64, k as i64, h as i64);
    let denom = Rat::from_integer(binomial_i(fi, ki) * binomial_i(pi, hi));
    let s0 = rat_int((k * h) as i64) * &denom;
    let s1 = Rat::from_integer(
        binomial_i(fi - 2, ki - 2)
            * (binomial_i(pi - 2, hi - 2) * BigInt::from(fresh)
                + binomial_i(pi - 1, hi - 1) * BigInt::from(collide)),
    );
    Ok((s0 + s1) / denom)
}

/// Monte Carlo counterpart of `action_independent_expectation`: per trial,
/// A and D are drawn independently from one trial stream.
pub fn mc_action_expected(
    act: &GroupAction,
    f: &Subset,
    phi: &Subset,
    k: usize,
    h: usize,
    cfg: &crate::sampler::SamplingConfig,
) -> Result<crate::sampler::McEstimate> {
    f.check_universe(act.group().order())?;
    phi.check_universe(act.domain_size())?;
    if k > f.len() || h > phi.len() {
        return Err(Error::InvalidArg("k or h exceeds its universe".into()));
    }
    crate::sampler::mc_run(cfg, |_t, rng| {
        let a_idx = crate::sampler::sample_k_subset(f.len(), k, rng)?;
        let d_idx = crate::sampler::sample_k_subset(phi.len(), h, rng)?;
        let mut products: Vec<u32> = Vec::with_capacity(k * h);
        for &wi in &d_idx {
            let w = phi.members()[wi as usize];
            for &gi in &a_idx {
                products.push(act.act(w, f.members()[gi as usize]));
            }
        }
        Ok(crate::energy::energy_of_products(products).0 as i64)
    })
}

/// Upper/lower bound displays for the expected multiplicative energy of a
/// k-subset of a symmetric F with itself or with its inverses.
pub fn multiplicative_bounds(
    k: usize,
    f_size: u64,
    max_centralizer: u64,
    variant: QVariant,
) -> Result<BoundPair> {
    if f_size < 5 {
        return Err(Error::InvalidArg("bounds need |F| >= 5".into()));
    }
    let n = f_size as i64;
    let ki = k as i64;
    let k4 = falling_int(ki, 4);
    let k3 = falling_int(ki, 3);
    let k2 = falling_int(ki, 2);
    let d3 = falling_int(n - 1, 3);
    let d2 = falling_int(n - 1, 2);
    let maxc = max_centralizer as i64;
    let pair = match variant {
        QVariant::Aa => {
            let upper = &k4 / rat_int(n - 3)
                + &k3 / &d2 * rat_int(4 * n - 2)
                + &k2 * (rat_int(2) + Rat::new(BigInt::from(maxc - 1), BigInt::from(n - 1)))
                + rat_int(ki);
            let lower = &k4 / &d3 * rat_int(n * n - 5 * n + 2)
                + &k3 / &d2 * rat_int(n - maxc)
                + rat_int(ki * ki);
            BoundPair {
                lower,
                upper,
                source: BoundSource::MultiplicativeAa,
                constant_mode: None,
            }
        }
        QVariant::AaInv => {
            let upper = &k4 / rat_int(n - 3)
                + &k3 / &d2 * rat_int(2 * n - 1)
                + rat_int(3 * ki * ki - 2 * ki);
            let lower = &k4 / &d3 * rat_int(n * n - 4 * n + 2) + rat_int(2 * ki * ki - ki);
            BoundPair {
                lower,
                upper,
                source: BoundSource::MultiplicativeAaInv,
                constant_mode: None,
            }
        }
    };
    Ok(pair)
}

/// Leading-order prediction from density invariants:
/// (1 + cp + sq) k^2 - (cp + sq) k for the (A, A) pair,
/// (2 + iota) k^2 - (1 + iota) k for the (A, A^{-1}) pair.
pub fn asymptotic_prediction(cp_plus_sq_or_iota: &Rat, k: u64, variant: QVariant) -> Result<Rat> {
    let d = cp_plus_sq_or_iota;
    if d < &rat_int(0) || d > &rat_int(2) {
        return Err(Error::InvalidArg("density must lie in [0, 2]".into()));
    }
    let k2 = rat_int((k * k) as i64);
    let k1 = rat_int(k as i64);
    Ok(match variant {
        QVariant::Aa => (rat_int(1) + d) * k2 - d * k1,
        QVariant::AaInv => (rat_int(2) + d) * k2 - (rat_int(1) + d) * k1,
    })
}
