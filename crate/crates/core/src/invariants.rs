//! Group-statistical quantities behind every expectation formula: conjugacy
//! counts, square-root profiles, involution counts, centralizers, commuting
//! probability, and the triple-class partitions used by the exact expected
//! energy weights.

use crate::error::{Error, Result};
use crate::group::{Elem, FiniteGroup, Subset};
use crate::rat::Rat;

pub use crate::caps::DEFAULT_TRIPLE_ENUM_CAP;

#[derive(Debug, Clone)]
pub struct GroupInvariants {
    pub order: u64,
    /// Number of conjugacy classes.
    pub kappa: u64,
    /// Square-incidence count: #{(x,y) : x^2 = y^2} / |G|.
    pub epsilon: u64,
    /// Involutions including the identity; equals r(identity).
    pub iota: u64,
    /// r(g): number of square roots of each element.
    pub r_profile: Vec<u64>,
    pub centralizer_sizes: Vec<u64>,
    /// max over x != 1 of |C_G(x)|; 0 for the trivial group.
    pub max_centralizer_nontrivial: u64,
    /// kappa / |G|, the commuting probability.
    pub cp: Rat,
    /// epsilon / |G|, the square-incidence probability.
    pub sq: Rat,
    pub class_sizes: Vec<u64>,
}

/// Conjugacy classes by orbit decomposition, square-root profile by direct
/// counting, epsilon from sum r(g)^2 (integrality asserted).
pub fn compute_invariants(g: &FiniteGroup) -> Result<GroupInvariants> {
    let n = g.order();
    let e = g.identity();

    // Conjugacy classes by orbit decomposition. Abelian groups
    // short-circuit to singletons; groups with a known generating set use
    // the fact that a class is already the orbit under conjugation by
    // generators, which costs O(|G| * #gens) instead of O(|G|^2).
    let mut class_of: Vec<u32> = vec![u32::MAX; n];
    let mut class_sizes: Vec<u64> = Vec::new();
    if g.is_abelian() {
        for (x, slot) in class_of.iter_mut().enumerate() {
            *slot = x as u32;
        }
        class_sizes = vec![1; n];
    } else if let Some(gens) = g.known_generators() {
        let mut stack: Vec<Elem> = Vec::new();
        for start in g.elements() {
            if class_of[start as usize] != u32::MAX {
                continue;
            }
            let id = class_sizes.len() as u32;
            class_of[start as usize] = id;
            let mut size = 1u64;
            stack.push(start);
            while let Some(x) = stack.pop() {
                for &t in &gens {
                    let c = g.conjugate(x, t);
                    if class_of[c as usize] == u32::MAX {
                        class_of[c as usize] = id;
                        size += 1;
                        stack.push(c);
                    }
                }
            }
            class_sizes.push(size);
        }
    } else {
        for start in g.elements() {
            if class_of[start as usize] != u32::MAX {
                continue;
            }
            let id = class_sizes.len() as u32;
            let mut size = 0u64;
            for x in g.elements() {
                let c = g.conjugate(start, x);
                if class_of[c as usize] == u32::MAX {
                    class_of[c as usize] = id;
                    size += 1;
                }
            }
            class_sizes.push(size);
        }
    }
    let kappa = class_sizes.len() as u64;

    // Centralizers via orbit-stabilizer, cross-checked by a direct scan on
    // one representative per class.
    let centralizer_sizes: Vec<u64> = (0..n)
        .map(|x| n as u64 / class_sizes[class_of[x] as usize])
        .collect();
    if !g.is_abelian() {
        let mut checked = vec![false; class_sizes.len()];
        for x in g.elements() {
            let cls = class_of[x as usize] as usize;
            if checked[cls] {
                continue;
            }
            checked[cls] = true;
            let direct = g.elements().filter(|&y| g.commute(x, y)).count() as u64;
            if direct != centralizer_sizes[x as usize] {
                return Err(Error::InternalInvariant(format!(
                    "centralizer of {x}: orbit-stabilizer {} vs direct {direct}",
                    centralizer_sizes[x as usize]
                )));
            }
        }
    }

    let mut r_profile = vec![0u64; n];
    for x in g.elements() {
        r_profile[g.square(x) as usize] += 1;
    }
    let iota = r_profile[e as usize];
    let sum_r_sq: u64 = r_profile.iter().map(|&r| r * r).sum();
    if !sum_r_sq.is_multiple_of(n as u64) {
        return Err(Error::InternalInvariant(format!(
            "sum r(g)^2 = {sum_r_sq} not divisible by |G| = {n}"
        )));
    }
    let epsilon = sum_r_sq / n as u64;

    let max_centralizer_nontrivial = g
        .elements()
        .filter(|&x| x != e)
        .map(|x| centralizer_sizes[x as usize])
        .max()
        .unwrap_or(0);

    Ok(GroupInvariants {
        order: n as u64,
        kappa,
        epsilon,
        iota,
        r_profile,
        centralizer_sizes,
        max_centralizer_nontrivial,
        cp: Rat::new(kappa.into(), (n as u64).into()),
        sq: Rat::new(epsilon.into(), (n as u64).into()),
        class_sizes,
    })
}

/// max over x in F \ {1} of |C_G(x) /\ F|; 0 when F has no nontrivial element.
pub fn max_centralizer_in_subset(g: &FiniteGroup, f: &Subset) -> Result<u64> {
    f.check_universe(g.order())?;
    let mut best = 0u64;
    for &x in f.members() {
        if x == g.identity() {
            continue;
        }
        let c = f.members().iter().filter(|&&y| g.commute(x, y)).count() as u64;
        best = best.max(c);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum QVariant {
    /// Pair (A, A): quadruple (a, b, c, c^{-1}ab).
    Aa,
    /// Pair (A, A^{-1}): quadruple (a, b, c, ba^{-1}c).
    AaInv,
}

/// Triple-class cardinalities. Classes are defined by the coincidence
/// pattern among (a, b, c) and the derived fourth coordinate; within each
/// class the quadruple has a fixed number of distinct entries.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub enum QCounts {
    Aa {
        /// distinct a,b,c with ab = ca (fourth = a)
        q1_1: u64,
        /// distinct a,b,c with ab = c^2 (fourth = c)
        q1_2: u64,
        /// distinct a,b,c, fourth distinct from all
        q1_3: u64,
        /// (a,b,a), a != b
        q2: u64,
        /// (a,b,b), a != b, commuting
        q3_1: u64,
        /// (a,b,b), a != b, non-commuting
        q3_2: u64,
        /// (a,a,c), a != c, a^2 = c^2
        q4_1: u64,
        /// (a,a,c), a^2 != c^2
        q4_2: u64,
        /// (a,a,a)
        q5: u64,
    },
    AaInv {
        /// distinct a,b,c with ba^{-1}c = a
        q1_1: u64,
        /// distinct a,b,c with ba^{-1}c != a
        q1_2: u64,
        /// (a,b,a), a != b
        q2: u64,
        /// (a,b,b), a != b, ba^{-1}b = a
        q3_1: u64,
        /// (a,b,b), a != b, ba^{-1}b != a
        q3_2: u64,
        /// (a,a,c), a != c
        q4: u64,
        /// (a,a,a)
        q5: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct QPartitionCounts {
    pub variant: QVariant,
    pub universe_size: u64,
    pub counts: QCounts,
}

impl QPartitionCounts {
    pub fn total(&self) -> u64 {
        match &self.counts {
            QCounts::Aa {
                q1_1,
                q1_2,
                q1_3,
                q2,
                q3_1,
                q3_2,
                q4_1,
                q4_2,
                q5,
            } => q1_1 + q1_2 + q1_3 + q2 + q3_1 + q3_2 + q4_1 + q4_2 + q5,
            QCounts::AaInv {
                q1_1,
                q1_2,
                q2,
                q3_1,
                q3_2,
                q4,
                q5,
            } => q1_1 + q1_2 + q2 + q3_1 + q3_2 + q4 + q5,
        }
    }

    /// Class totals grouped by how many distinct elements the quadruple
    /// (a, b, c, fourth) has: `[W1, W2, W3, W4]`.
    pub fn weight_sums(&self) -> [u64; 4] {
        match &self.counts {
            QCounts::Aa {
                q1_1,
                q1_2,
                q1_3,
                q2,
                q3_1,
                q3_2,
                q4_1,
                q4_2,
                q5,
            } => [*q5, q2 + q3_1 + q4_1, q1_1 + q1_2 + q3_2 + q4_2, *q1_3],
            QCounts::AaInv {
                q1_1,
                q1_2,
                q2,
                q3_1,
                q3_2,
                q4,
                q5,
            } => [*q5, q2 + q3_1 + q4, q1_1 + q3_2, *q1_2],
        }
    }

    /// (class name, count) pairs in a fixed order, for reports.
    pub fn named(&self) -> Vec<(&'static str, u64)> {
        match &self.counts {
            QCounts::Aa {
                q1_1,
                q1_2,
                q1_3,
                q2,
                q3_1,
                q3_2,
                q4_1,
                q4_2,
                q5,
            } => vec![
                ("Q1_1", *q1_1),
                ("Q1_2", *q1_2),
                ("Q1_3", *q1_3),
                ("Q2", *q2),
                ("Q3_1", *q3_1),
                ("Q3_2", *q3_2),
                ("Q4_1", *q4_1),
                ("Q4_2", *q4_2),
                ("Q5", *q5),
            ],
            QCounts::AaInv {
                q1_1,
                q1_2,
                q2,
                q3_1,
                q3_2,
                q4,
                q5,
            } => vec![
                ("Q1_1", *q1_1),
                ("Q1_2", *q1_2),
                ("Q2", *q2),
                ("Q3_1", *q3_1),
                ("Q3_2", *q3_2),
                ("Q4", *q4),
                ("Q5", *q5),
            ],
        }
    }
}

/// Classifies every triple (a, b, c) in F^3 by exhaustive enumeration.
/// Classification uses full group multiplication; whether the derived fourth
/// element lies in F is irrelevant here (the expectation weights handle
/// that separately).
pub fn q_partition(g: &FiniteGroup, f: &Subset, variant: QVariant) -> Result<QPartitionCounts> {
    f.check_universe(g.order())?;
    let m = f.len() as u64;
    let cap = crate::caps::triple_enum_cap();
    if m * m * m > cap {
        return Err(Error::CapExceeded {
            what: "triple enumeration |F|^3".into(),
            limit: cap,
            requested: m * m * m,
        });
    }
    let mem = f.members();
    Ok(match variant {
        QVariant::Aa => {
            let (
                mut q1_1,
                mut q1_2,
                mut q1_3,
                mut q2,
                mut q3_1,
                mut q3_2,
                mut q4_1,
                mut q4_2,
                mut q5,
            ) = (0u64, 0, 0, 0, 0, 0, 0, 0, 0);
            for &a in mem {
                for &b in mem {
                    let ab = g.mul(a, b);
                    for &c in mem {
                        if a == b && b == c {
                            q5 += 1;
                        } else if a == c {
                            q2 += 1;
                        } else if b == c {
                            if g.commute(a, b) {
                                q3_1 += 1;
                            } else {
                                q3_2 += 1;
                            }
                        } else if a == b {
                            if g.square(a) == g.square(c) {
                                q4_1 += 1;
                            } else {
                                q4_2 += 1;
                            }
                        } else if ab == g.mul(c, a) {
                            q1_1 += 1;
                        } else if ab == g.square(c) {
                            q1_2 += 1;
                        } else {
                            q1_3 += 1;
                        }
                    }
                }
            }
            QPartitionCounts {
                variant,
                universe_size: m,
                counts: QCounts::Aa {
                    q1_1,
                    q1_2,
                    q1_3,
                    q2,
                    q3_1,
                    q3_2,
                    q4_1,
                    q4_2,
                    q5,
                },
            }
        }
        QVariant::AaInv => {
            let (mut q1_1, mut q1_2, mut q2, mut q3_1, mut q3_2, mut q4, mut q5) =
                (0u64, 0, 0, 0, 0, 0, 0);
            for &a in mem {
                let ainv = g.inv(a);
                for &b in mem {
                    let ba_inv = g.mul(b, ainv);
                    for &c in mem {
                        if a == b && b == c {
                            q5 += 1;
                        } else if a == c {
                            q2 += 1;
                        } else if b == c {
                            if g.mul(ba_inv, b) == a {
                                q3_1 += 1;
                            } else {
                                q3_2 += 1;
                            }
                        } else if a == b {
                            q4 += 1;
                        } else if g.mul(ba_inv, c) == a {
                            q1_1 += 1;
                        } else {
                            q1_2 += 1;
                        }
                    }
                }
            }
            QPartitionCounts {
                variant,
                universe_size: m,
                counts: QCounts::AaInv {
                    q1_1,
                    q1_2,
                    q2,
                    q3_1,
                    q3_2,
                    q4,
                    q5,
                },
            }
        }
    })
}

/// Class cardinalities for F = G from |G|, kappa, epsilon, iota alone.
///
/// The equal-square class {(a,a,c) : a != c, a^2 = c^2} has (epsilon-1)|G|
/// triples, not epsilon|G|: the ordered-pair count sum r(g)^2 = epsilon|G|
/// includes the |G| diagonal pairs x = y that the class excludes. The
/// companion identities absorb that shift. Exhaustive enumeration is the
/// ground truth these are tested against.
pub fn q_partition_closed_form(
    g: &FiniteGroup,
    inv: &GroupInvariants,
    variant: QVariant,
) -> QPartitionCounts {
    let n = g.order() as u64;
    let (kappa, eps, iota) = (inv.kappa, inv.epsilon, inv.iota);
    match variant {
        QVariant::Aa => QPartitionCounts {
            variant,
            universe_size: n,
            counts: QCounts::Aa {
                q1_1: n * (n - kappa),
                q1_2: n * (n - eps),
                // n^2 - 5n + 2 + eps + kappa can be negative only for n <= 4
                // abelian-like cases where the additive terms compensate;
                // compute in i128 and assert nonnegative.
                q1_3: nonneg(
                    n as i128
                        * (n as i128 * n as i128 - 5 * n as i128 + 2 + eps as i128 + kappa as i128),
                ),
                q2: n * (n - 1),
                q3_1: n * (kappa - 1),
                q3_2: n * (n - kappa),
                q4_1: n * (eps - 1),
                q4_2: n * (n - eps),
                q5: n,
            },
        },
        QVariant::AaInv => QPartitionCounts {
            variant,
            universe_size: n,
            counts: QCounts::AaInv {
                q1_1: n * (n - iota),
                q1_2: nonneg(
                    n as i128 * (n as i128 * n as i128 - 4 * n as i128 + 2 + iota as i128),
                ),
                q2: n * (n - 1),
                q3_1: n * (iota - 1),
                q3_2: n * (n - iota),
                q4: n * (n - 1),
                q5: n,
            },
        },
    }
}

fn nonneg(x: i128) -> u64 {
    debug_assert!(x >= 0, "closed-form class count went negative: {x}");
    x.max(0) as u64
}

/// For symmetric F: sum over y in F^{*2} of |F /\ yF|. Always |F|^2.
pub fn fn_overlap_sum(g: &FiniteGroup, f: &Subset) -> Result<u64> {
    f.check_universe(g.order())?;
    if !f.is_symmetric(g)? {
        return Err(Error::InvalidArg(
            "overlap sum requires a symmetric subset".into(),
        ));
    }
    let fsq = crate::energy::product_set(f, f, g)?;
    let mut membership = vec![false; g.order()];
    for &x in f.members() {
        membership[x as usize] = true;
    }
    let mut total = 0u64;
    for &y in fsq.members() {
        for &x in f.members() {
            if membership[g.mul(y, x) as usize] {
                total += 1;
            }
        }
    }
    Ok(total)
}
