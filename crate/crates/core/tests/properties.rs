//! Property tests over randomly generated groups, subsets, and parameters.

use proptest::prelude::*;

use genergy_core::cayley::{interval_expectation, interval_q_weights};
use genergy_core::expectation::{expected_energy, q_weight_counts};
use genergy_core::invariants::QVariant;
use genergy_core::rat::{rat_parse, rat_to_string, Rat};
use genergy_core::sampler::{sample_k_subset, SplitMix64, SubsetUniverse};
use genergy_core::{build_group_str, multiplicative_energy, product_set, Subset};

fn group_spec() -> impl Strategy<Value = String> {
    prop_oneof![
        (1u64..=12).prop_map(|n| format!("cyclic:{n}")),
        (1u32..=4).prop_map(|m| format!("ea2:{m}")),
        (2u64..=6).prop_map(|n| format!("dihedral:{n}")),
        (2u32..=4).prop_map(|n| format!("sym:{n}")),
        Just("gl2:2".to_string()),
        (2u64..=3, 2u64..=3).prop_map(|(a, b)| format!("prod(cyclic:{a},dihedral:{b})")),
    ]
}

proptest! {
    /// Group axioms hold for every spec the mini-language accepts.
    #[test]
    fn group_axioms(spec in group_spec(), seed in any::<u64>()) {
        let g = build_group_str(&spec).unwrap();
        let n = g.order() as u64;
        let mut rng = SplitMix64::new(seed);
        for _ in 0..32 {
            let a = rng.below(n) as u32;
            let b = rng.below(n) as u32;
            let c = rng.below(n) as u32;
            prop_assert_eq!(g.mul(g.mul(a, b), c), g.mul(a, g.mul(b, c)));
            prop_assert_eq!(g.mul(a, g.inv(a)), g.identity());
            prop_assert_eq!(g.mul(g.identity(), a), a);
            prop_assert_eq!(g.inv(g.inv(b)), b);
        }
    }

    /// Histogram identities and the sandwich bounds for random pairs.
    #[test]
    fn energy_identities(spec in group_spec(), seed in any::<u64>()) {
        let g = build_group_str(&spec).unwrap();
        let n = g.order();
        let mut rng = SplitMix64::new(seed);
        let ka = 1 + rng.below(n as u64) as usize;
        let kb = 1 + rng.below(n as u64) as usize;
        let a = Subset::new(n, sample_k_subset(n, ka, &mut rng).unwrap()).unwrap();
        let b = Subset::new(n, sample_k_subset(n, kb, &mut rng).unwrap()).unwrap();
        let rep = multiplicative_energy(&a, &b, &g).unwrap();
        let rsum: u64 = rep.representation_histogram.values().sum();
        prop_assert_eq!(rsum as usize, ka * kb);
        let rsq: u64 = rep.representation_histogram.values().map(|&r| r * r).sum();
        prop_assert_eq!(rsq, rep.energy);
        prop_assert!((ka * kb) as u64 <= rep.energy);
        prop_assert!(rep.energy <= (ka * ka * kb) as u64);
        prop_assert!(rep.energy <= (ka * kb * kb) as u64);
        // Product set size equals the histogram support.
        let prod = product_set(&b, &a, &g).unwrap();
        prop_assert_eq!(prod.len() as u64, rep.image_size);
    }

    /// The sampler returns sorted, distinct, in-range subsets of the right
    /// size, for every (n, k, seed).
    #[test]
    fn sampler_shape(n in 1usize..200, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let k = ((n as f64) * frac) as usize;
        let mut rng = SplitMix64::new(seed);
        let s = sample_k_subset(n, k, &mut rng).unwrap();
        prop_assert_eq!(s.len(), k);
        prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(s.iter().all(|&x| (x as usize) < n));
    }

    /// `p/q` strings round-trip through the parser.
    #[test]
    fn rational_string_round_trip(p in -1_000_000i64..1_000_000, q in 1i64..1_000_000) {
        let r = Rat::new(p.into(), q.into());
        prop_assert_eq!(rat_parse(&rat_to_string(&r)).unwrap(), r);
    }

    /// The closed-form interval weights agree with generic enumeration at
    /// every small radius, and the expectation is monotone in k.
    #[test]
    fn interval_weights_and_monotonicity(radius in 1u64..=4, variant_aa in any::<bool>()) {
        let variant = if variant_aa { QVariant::Aa } else { QVariant::AaInv };
        let m = genergy_core::cayley::LatticeModel { dim: 1 };
        let b = genergy_core::cayley::ball(&m, radius as usize).unwrap();
        let membership: std::collections::HashSet<&Vec<i32>> = b.elems.iter().collect();
        let generic = q_weight_counts(
            &b.elems,
            |x, y| genergy_core::cayley::GroupModel::mul(&m, x, y),
            |x| genergy_core::cayley::GroupModel::inv(&m, x),
            |d| membership.contains(d),
            variant,
        )
        .unwrap();
        prop_assert_eq!(generic, interval_q_weights(radius, variant));
        let size = 2 * radius + 1;
        let mut prev: Option<Rat> = None;
        for k in 1..=size as usize {
            let v = interval_expectation(radius, k, variant).unwrap();
            if let Some(p) = prev {
                prop_assert!(v > p);
            }
            prev = Some(v);
        }
    }

    /// Exact expectation sits between the trivial bounds k^2 <= E <= k^3
    /// on full groups, for both pair variants.
    #[test]
    fn expectation_trivial_bounds(spec in group_spec(), variant_aa in any::<bool>()) {
        let g = build_group_str(&spec).unwrap();
        let variant = if variant_aa { QVariant::Aa } else { QVariant::AaInv };
        for k in 1..=g.order().min(5) {
            let v = expected_energy(&g, None, k, variant).unwrap().value;
            let k = k as i64;
            prop_assert!(v >= Rat::new((k * k).into(), 1.into()), "{spec} k={k}");
            prop_assert!(v <= Rat::new((k * k * k).into(), 1.into()), "{spec} k={k}");
        }
    }

    /// Energies computed through the universe trait match the report path.
    #[test]
    fn universe_energy_matches_report(seed in any::<u64>()) {
        let g = build_group_str("dihedral:5").unwrap();
        let mut rng = SplitMix64::new(seed);
        let k = 1 + rng.below(10) as usize;
        let members = sample_k_subset(10, k, &mut rng).unwrap();
        let a = Subset::new(10, members.clone()).unwrap();
        let aa = multiplicative_energy(&a, &a, &g).unwrap().energy;
        prop_assert_eq!(g.energy_aa(&members) as u64, aa);
        let ainv = a.inverse_image(&g).unwrap();
        let inv_e = multiplicative_energy(&a, &ainv, &g).unwrap().energy;
        prop_assert_eq!(g.energy_aainv(&members) as u64, inv_e);
    }
}
