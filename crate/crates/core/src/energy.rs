//! Action and multiplicative energies of concrete subsets, product sets,
//! normalized energies, and the Cauchy-Schwarz growth bound.
//!
//! The energy of a pair (A, D) under an action is the number of quadruples
//! (a, b, g, d) in A^2 x D^2 with g.a = d.b. It is always computed through
//! the representation histogram r(w) = #{(a, g) : g.a = w} as sum r(w)^2;
//! for small inputs the quartic definition is re-counted as a self-check.

use std::collections::BTreeMap;

use num_bigint::BigInt;

use crate::error::{Error, Result};
use crate::group::{Elem, FiniteGroup, GroupAction, Subset};
use crate::rat::{rat_int, Rat};
use crate::sampler::SubsetUniverse;

/// Inputs at or below this |A|*|D| size are cross-checked against the
/// definitional quadruple loop.
pub const QUARTIC_SELF_CHECK_CAP: usize = 1000;

/// Energy of a subset pair together with its representation histogram.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EnergyReport {
    pub energy: u64,
    /// |D . A|, the number of distinct images.
    pub image_size: u64,
    pub a_size: u64,
    pub d_size: u64,
    /// r(w) for each attained image point w.
    pub representation_histogram: BTreeMap<Elem, u64>,
    /// |A|^2 |D|^2 / |D.A| as `"p/q"`; energy can never fall below it.
    pub cs_lower_bound: String,
}

impl EnergyReport {
    pub fn cs_lower_bound_rat(&self) -> Rat {
        crate::rat::rat_parse(&self.cs_lower_bound).expect("report stores a valid rational")
    }
}

fn report_from_histogram(a_size: usize, d_size: usize, hist: BTreeMap<Elem, u64>) -> EnergyReport {
    let energy: u64 = hist.values().map(|&r| r * r).sum();
    let image_size = hist.len() as u64;
    let cs = if image_size == 0 {
        rat_int(0)
    } else {
        Rat::new(
            BigInt::from(a_size as u64 * a_size as u64)
                * BigInt::from(d_size as u64 * d_size as u64),
            BigInt::from(image_size),
        )
    };
    EnergyReport {
        energy,
        image_size,
        a_size: a_size as u64,
        d_size: d_size as u64,
        representation_histogram: hist,
        cs_lower_bound: crate::rat::rat_to_string(&cs),
    }
}

/// E(A, D) for a subset A of the acting group and D of the domain.
pub fn action_energy(a: &Subset, d: &Subset, act: &GroupAction) -> Result<EnergyReport> {
    a.check_universe(act.group().order())?;
    d.check_universe(act.domain_size())?;
    let mut hist: BTreeMap<Elem, u64> = BTreeMap::new();
    for &point in d.members() {
        for &g in a.members() {
            *hist.entry(act.act(point, g)).or_insert(0) += 1;
        }
    }
    let report = report_from_histogram(a.len(), d.len(), hist);
    if a.len() * d.len() <= QUARTIC_SELF_CHECK_CAP {
        let mut quartic = 0u64;
        for &ga in a.members() {
            for &gb in a.members() {
                for &pg in d.members() {
                    for &pd in d.members() {
                        if act.act(pg, ga) == act.act(pd, gb) {
                            quartic += 1;
                        }
                    }
                }
            }
        }
        if quartic != report.energy {
            return Err(Error::InternalInvariant(format!(
                "histogram energy {} disagrees with quadruple count {quartic}",
                report.energy
            )));
        }
    }
    Ok(report)
}

/// Multiplicative energy E(A, B): the regular action specialization.
pub fn multiplicative_energy(a: &Subset, b: &Subset, g: &FiniteGroup) -> Result<EnergyReport> {
    a.check_universe(g.order())?;
    b.check_universe(g.order())?;
    let mut hist: BTreeMap<Elem, u64> = BTreeMap::new();
    for &x in b.members() {
        for &y in a.members() {
            *hist.entry(g.mul(x, y)).or_insert(0) += 1;
        }
    }
    Ok(report_from_histogram(a.len(), b.len(), hist))
}

/// Exact product set AB = {ab : a in A, b in B}.
pub fn product_set(a: &Subset, b: &Subset, g: &FiniteGroup) -> Result<Subset> {
    a.check_universe(g.order())?;
    b.check_universe(g.order())?;
    let mut out: Vec<Elem> = Vec::with_capacity(a.len() * b.len());
    for &x in a.members() {
        for &y in b.members() {
            out.push(g.mul(x, y));
        }
    }
    Subset::new(g.order(), out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenominatorMode {
    /// E / (|G|^2 |Omega|): the whole-space normalization.
    Global,
    /// E / (|A|^2 |D|): the per-pair normalization.
    Local,
}

/// Normalized energy in either convention; both appear in practice and
/// neither is canonical here.
pub fn normalized_energy(
    a: &Subset,
    d: &Subset,
    act: &GroupAction,
    mode: DenominatorMode,
) -> Result<Rat> {
    let report = action_energy(a, d, act)?;
    let energy = rat_int(report.energy as i64);
    match mode {
        DenominatorMode::Global => {
            let g2 = BigInt::from(act.group().order() as u64).pow(2);
            Ok(energy / Rat::from_integer(g2 * BigInt::from(act.domain_size() as u64)))
        }
        DenominatorMode::Local => {
            if a.is_empty() || d.is_empty() {
                return Err(Error::InvalidArg(
                    "local normalization needs nonempty A and D".into(),
                ));
            }
            let den = BigInt::from(a.len() as u64).pow(2) * BigInt::from(d.len() as u64);
            Ok(energy / Rat::from_integer(den))
        }
    }
}

/// |A|^2 |D|^2 / E: the guaranteed lower bound on |D . A|.
pub fn cs_growth_bound(report: &EnergyReport) -> Result<Rat> {
    if report.energy == 0 {
        return Err(Error::InvalidArg(
            "growth bound undefined for zero energy".into(),
        ));
    }
    Ok(Rat::new(
        BigInt::from(report.a_size * report.a_size) * BigInt::from(report.d_size * report.d_size),
        BigInt::from(report.energy),
    ))
}

/// Energy and image size from a multiset of products, for callers that build
/// the products themselves (infinite-group models).
pub fn energy_of_products<P: Ord>(mut products: Vec<P>) -> (u64, u64) {
    products.sort_unstable();
    let mut energy = 0u64;
    let mut image = 0u64;
    let mut i = 0;
    while i < products.len() {
        let mut j = i + 1;
        while j < products.len() && products[j] == products[i] {
            j += 1;
        }
        let run = (j - i) as u64;
        energy += run * run;
        image += 1;
        i = j;
    }
    (energy, image)
}

impl SubsetUniverse for FiniteGroup {
    fn size(&self) -> usize {
        self.order()
    }

    fn describe(&self) -> String {
        self.family().to_string()
    }

    fn energy_aa(&self, members: &[u32]) -> i64 {
        let mut products = Vec::with_capacity(members.len() * members.len());
        for &x in members {
            for &y in members {
                products.push(self.mul(x, y));
            }
        }
        energy_of_products(products).0 as i64
    }

    fn energy_aainv(&self, members: &[u32]) -> i64 {
        let mut products = Vec::with_capacity(members.len() * members.len());
        for &c in members {
            let ci = self.inv(c);
            for &a in members {
                products.push(self.mul(ci, a));
            }
        }
        energy_of_products(products).0 as i64
    }

    fn product_size_a2(&self, members: &[u32]) -> i64 {
        let mut products = Vec::with_capacity(members.len() * members.len());
        for &x in members {
            for &y in members {
                products.push(self.mul(x, y));
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
                products.push(self.mul(x, self.inv(y)));
            }
        }
        products.sort_unstable();
        products.dedup();
        products.len() as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::build_group_str;
    use crate::rat::{rat, rat_to_string};
    use crate::sampler::SplitMix64;

    #[test]
    fn c2_full_pair_energy() {
        let c2 = build_group_str("cyclic:2").unwrap();
        let act = GroupAction::regular(c2.clone());
        let a = Subset::full(2);
        let rep = action_energy(&a, &a, &act).unwrap();
        assert_eq!(rep.energy, 8);
        assert_eq!(rep.image_size, 2);
        assert_eq!(cs_growth_bound(&rep).unwrap(), rat(2, 1));
    }

    #[test]
    fn singleton_pair_energy_is_one() {
        let s4 = build_group_str("sym:4").unwrap();
        let act = GroupAction::regular(s4.clone());
        let a = Subset::new(24, vec![5]).unwrap();
        let d = Subset::new(24, vec![17]).unwrap();
        assert_eq!(action_energy(&a, &d, &act).unwrap().energy, 1);
    }

    /// Sidon set in C100: all pairwise sums distinct. The definitional
    /// quadruple count still picks up the (a,b,g,d) = (x,y,y,x) swaps, which
    /// exist in any abelian group, so the energy is 2k^2 - k, not k^2; the
    /// Cauchy-Schwarz inequality pins this down (k^4/k^2 = 16 would exceed
    /// |A+A| = 10).
    #[test]
    fn sidon_energy_and_growth() {
        let c100 = build_group_str("cyclic:100").unwrap();
        let a = Subset::new(100, vec![0, 1, 3, 7]).unwrap();
        let rep = multiplicative_energy(&a, &a, &c100).unwrap();
        assert_eq!(rep.energy, 28); // 2*16 - 4
        let sumset = product_set(&a, &a, &c100).unwrap();
        assert_eq!(sumset.len(), 10);
        let bound = cs_growth_bound(&rep).unwrap();
        assert_eq!(bound, rat(256, 28));
        assert!(rat_int(sumset.len() as i64) >= bound);
        // Histogram identities.
        let total: u64 = rep.representation_histogram.values().sum();
        assert_eq!(total, 16);
    }

    #[test]
    fn subgroup_energy_is_cubed_order() {
        let s3 = build_group_str("sym:3").unwrap();
        let t = s3
            .elements()
            .find(|&x| x != s3.identity() && s3.square(x) == s3.identity())
            .unwrap();
        let h = Subset::new(6, vec![s3.identity(), t]).unwrap();
        let rep = multiplicative_energy(&h, &h, &s3).unwrap();
        assert_eq!(rep.energy, 8);
        let hinv = h.inverse_image(&s3).unwrap();
        assert_eq!(hinv, h);
        assert_eq!(product_set(&h, &h, &s3).unwrap().len(), 2);
    }

    #[test]
    fn product_set_examples() {
        let c10 = build_group_str("cyclic:10").unwrap();
        let a = Subset::new(10, vec![0, 1]).unwrap();
        let aa = product_set(&a, &a, &c10).unwrap();
        assert_eq!(aa.members(), &[0, 1, 2]);

        let s3 = build_group_str("sym:3").unwrap();
        // {e, a transposition, a 3-cycle}
        let t = s3
            .elements()
            .find(|&x| x != s3.identity() && s3.square(x) == s3.identity())
            .unwrap();
        let c = s3
            .elements()
            .find(|&x| s3.square(x) != s3.identity() && x != s3.identity())
            .unwrap();
        let a = Subset::new(6, vec![s3.identity(), t, c]).unwrap();
        let sq = product_set(&a, &a, &s3).unwrap();
        let mut direct: Vec<u32> = Vec::new();
        for &x in a.members() {
            for &y in a.members() {
                direct.push(s3.mul(x, y));
            }
        }
        direct.sort_unstable();
        direct.dedup();
        assert_eq!(sq.members(), &direct[..]);
    }

    #[test]
    fn normalization_modes() {
        let c2 = build_group_str("cyclic:2").unwrap();
        let act = GroupAction::regular(c2.clone());
        let full = Subset::full(2);
        assert_eq!(
            normalized_energy(&full, &full, &act, DenominatorMode::Global).unwrap(),
            rat(1, 1)
        );
        let e = Subset::new(2, vec![0]).unwrap();
        assert_eq!(
            normalized_energy(&e, &e, &act, DenominatorMode::Global).unwrap(),
            rat(1, 8)
        );
        assert_eq!(
            normalized_energy(&e, &e, &act, DenominatorMode::Local).unwrap(),
            rat(1, 1)
        );
        let s3 = build_group_str("sym:3").unwrap();
        let act3 = GroupAction::regular(s3.clone());
        let t = s3
            .elements()
            .find(|&x| x != s3.identity() && s3.square(x) == s3.identity())
            .unwrap();
        let h = Subset::new(6, vec![s3.identity(), t]).unwrap();
        // Subgroups are exactly the local-normalization-1 case.
        assert_eq!(
            normalized_energy(&h, &h, &act3, DenominatorMode::Local).unwrap(),
            rat(1, 1)
        );
        let empty = Subset::new(6, vec![]).unwrap();
        assert!(normalized_energy(&empty, &h, &act3, DenominatorMode::Local).is_err());
    }

    #[test]
    fn histogram_identities_and_sandwich_random() {
        let groups: Vec<_> = ["cyclic:8", "sym:3", "dihedral:4", "gl2:2"]
            .iter()
            .map(|s| build_group_str(s).unwrap())
            .collect();
        let mut rng = SplitMix64::new(99);
        for g in &groups {
            let act = GroupAction::regular(g.clone());
            let n = g.order();
            for _ in 0..50 {
                let ka = 1 + rng.below(n as u64 - 1) as usize;
                let kd = 1 + rng.below(n as u64 - 1) as usize;
                let a = Subset::new(n, crate::sampler::sample_k_subset(n, ka, &mut rng).unwrap())
                    .unwrap();
                let d = Subset::new(n, crate::sampler::sample_k_subset(n, kd, &mut rng).unwrap())
                    .unwrap();
                let rep = action_energy(&a, &d, &act).unwrap();
                let ssum: u64 = rep.representation_histogram.values().sum();
                assert_eq!(ssum as usize, ka * kd);
                let e = rep.energy;
                assert!(e >= (ka * kd) as u64);
                assert!(e <= (ka * ka * kd) as u64);
                assert!(e <= (ka * kd * kd) as u64, "semiregular bound");
                assert!(
                    rat_int(e as i64) * rat_int(rep.image_size as i64)
                        >= rat_int((ka * kd) as i64) * rat_int((ka * kd) as i64)
                );
            }
        }
    }

    #[test]
    fn translation_invariance_regular_action() {
        let g = build_group_str("dihedral:5").unwrap();
        let n = g.order();
        let mut rng = SplitMix64::new(5);
        for _ in 0..100 {
            let a =
                Subset::new(n, crate::sampler::sample_k_subset(n, 3, &mut rng).unwrap()).unwrap();
            let d =
                Subset::new(n, crate::sampler::sample_k_subset(n, 4, &mut rng).unwrap()).unwrap();
            let t = rng.below(n as u64) as Elem;
            let base = multiplicative_energy(&a, &d, &g).unwrap().energy;
            let a_right =
                Subset::new(n, a.members().iter().map(|&x| g.mul(x, t)).collect()).unwrap();
            let d_left =
                Subset::new(n, d.members().iter().map(|&x| g.mul(t, x)).collect()).unwrap();
            assert_eq!(
                multiplicative_energy(&a_right, &d, &g).unwrap().energy,
                base
            );
            assert_eq!(multiplicative_energy(&a, &d_left, &g).unwrap().energy, base);
        }
    }

    #[test]
    fn zero_energy_rejected_by_growth_bound() {
        let rep = report_from_histogram(0, 0, BTreeMap::new());
        assert_eq!(rep.energy, 0);
        assert_eq!(rat_to_string(&rep.cs_lower_bound_rat()), "0/1");
        assert!(cs_growth_bound(&rep).is_err());
    }

    #[test]
    fn universe_mismatch_is_reported() {
        let s3 = build_group_str("sym:3").unwrap();
        let wrong = Subset::full(5);
        assert!(multiplicative_energy(&wrong, &wrong, &s3).is_err());
    }
}
