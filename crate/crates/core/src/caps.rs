//! Process-wide enumeration caps. Every exhaustive path checks its cap
//! before running; the defaults keep any single call sub-minute on
//! commodity hardware, and callers (the CLI's `--cap-*` flags) may raise or
//! lower them.

use std::sync::atomic::{AtomicU64, Ordering};

pub const DEFAULT_TRIPLE_ENUM_CAP: u64 = 30_000_000;
pub const DEFAULT_BRUTE_FORCE_CAP: u64 = 10_000_000;
pub const DEFAULT_BALL_CAP: u64 = 5_000_000;
pub const DEFAULT_INDEPENDENT_PAIR_CAP: u64 = 100_000_000;
pub const DEFAULT_THIN_BASIS_CAP: u64 = 100_000_000;

static TRIPLE_ENUM: AtomicU64 = AtomicU64::new(DEFAULT_TRIPLE_ENUM_CAP);
static BRUTE_FORCE: AtomicU64 = AtomicU64::new(DEFAULT_BRUTE_FORCE_CAP);
static BALL: AtomicU64 = AtomicU64::new(DEFAULT_BALL_CAP);
static INDEPENDENT_PAIR: AtomicU64 = AtomicU64::new(DEFAULT_INDEPENDENT_PAIR_CAP);
static THIN_BASIS: AtomicU64 = AtomicU64::new(DEFAULT_THIN_BASIS_CAP);

/// |F|^3 limit for triple-class enumerations.
pub fn triple_enum_cap() -> u64 {
    TRIPLE_ENUM.load(Ordering::Relaxed)
}

/// C(n, k) limit for exhaustive subset averages.
pub fn brute_force_cap() -> u64 {
    BRUTE_FORCE.load(Ordering::Relaxed)
}

/// Element limit for word-metric balls.
pub fn ball_cap() -> u64 {
    BALL.load(Ordering::Relaxed)
}

/// |F|^2 |Phi| limit for the exact independent-pair expectation.
pub fn independent_pair_cap() -> u64 {
    INDEPENDENT_PAIR.load(Ordering::Relaxed)
}

/// Window limit for the thin-basis demo.
pub fn thin_basis_cap() -> u64 {
    THIN_BASIS.load(Ordering::Relaxed)
}

pub fn set_triple_enum_cap(v: u64) {
    TRIPLE_ENUM.store(v, Ordering::Relaxed);
}

pub fn set_brute_force_cap(v: u64) {
    BRUTE_FORCE.store(v, Ordering::Relaxed);
}

pub fn set_ball_cap(v: u64) {
    BALL.store(v, Ordering::Relaxed);
}

pub fn set_independent_pair_cap(v: u64) {
    INDEPENDENT_PAIR.store(v, Ordering::Relaxed);
}

pub fn set_thin_basis_cap(v: u64) {
    THIN_BASIS.store(v, Ordering::Relaxed);
}
