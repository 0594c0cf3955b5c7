//! Expected-energy statistics for random subsets of groups.
//!
//! The crate computes action and multiplicative energies of concrete
//! subsets, exact expected energies of uniform random k-subsets (with the
//! combinatorial invariant counts driving the closed formulas), Monte Carlo
//! estimators over finite groups and word-metric balls of infinite-group
//! models, and a set of growth experiments built on top. Every closed
//! formula is cross-validated against an independent brute-force oracle in
//! the test suite.

pub mod caps;
pub mod cayley;
pub mod energy;
pub mod error;
pub mod expectation;
pub mod experiments;
pub mod group;
pub mod invariants;
pub mod rat;
pub mod sampler;

pub use energy::{
    action_energy, cs_growth_bound, multiplicative_energy, normalized_energy, product_set,
    DenominatorMode, EnergyReport,
};
pub use error::{Error, Result};
pub use expectation::{
    action_expectation_bounds, action_independent_expectation, asymptotic_prediction,
    closed_form_discrepancy, closed_form_expectation, expected_energy, multiplicative_bounds,
    BoundPair, BoundSource, ConstantMode, ExpectationMethod, ExpectationResult,
};
pub use group::{
    build_group, build_group_str, parse_group_spec, Elem, FiniteGroup, GroupAction, GroupSpec,
    Subset,
};
pub use invariants::{
    compute_invariants, fn_overlap_sum, max_centralizer_in_subset, q_partition,
    q_partition_closed_form, GroupInvariants, QCounts, QPartitionCounts, QVariant,
};
pub use rat::{rat_parse, rat_to_f64, rat_to_string, Rat};
pub use sampler::{
    brute_force_expected, mc_expected, sample_k_subset, McEstimate, SamplingConfig, SplitMix64,
    Statistic, SubsetUniverse,
};
