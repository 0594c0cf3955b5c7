//! Exact rational arithmetic: big-integer binomials, falling factorials,
//! and the `"p/q"` string form used in machine-readable payloads.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact rational used by every closed formula in this crate.
pub type Rat = BigRational;

pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(n: impl Into<BigInt>) -> Rat {
    Rat::from_integer(n.into())
}

pub fn rat_zero() -> Rat {
    Rat::zero()
}

pub fn rat_one() -> Rat {
    Rat::one()
}

/// Binomial coefficient C(n, k) with the convention C(n, k) = 0 for k > n.
pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// Binomial coefficient over signed arguments: zero whenever n < 0, k < 0 or
/// k > n. Degenerate triples in the expectation weights rely on this.
pub fn binomial_i(n: i64, k: i64) -> BigInt {
    if n < 0 || k < 0 || k > n {
        BigInt::zero()
    } else {
        binomial(n as u64, k as u64)
    }
}

/// C(n, k) > cap, without handing the big integer back.
pub fn binomial_exceeds(n: u64, k: u64, cap: u64) -> bool {
    binomial(n, k) > BigInt::from(cap)
}

/// Falling factorial x(x-1)...(x-l+1) over exact rationals.
pub fn falling(x: &Rat, l: u32) -> Rat {
    let mut acc = Rat::one();
    for i in 0..l {
        acc *= x - rat_int(i as i64);
    }
    acc
}

/// Falling factorial over integers, as an exact rational.
pub fn falling_int(x: i64, l: u32) -> Rat {
    falling(&rat_int(x), l)
}

/// Renders a rational as `"p/q"` with the denominator always explicit, so
/// downstream parsers never need a special integer case.
pub fn rat_to_string(r: &Rat) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn rat_parse(s: &str) -> Option<Rat> {
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (
            n.trim().parse::<BigInt>().ok()?,
            d.trim().parse::<BigInt>().ok()?,
        ),
        None => (s.trim().parse::<BigInt>().ok()?, BigInt::one()),
    };
    if den.is_zero() {
        return None;
    }
    Some(Rat::new(num, den))
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Fall back to a scaled division for magnitudes outside f64 integer range.
        let scale = BigInt::from(1u64 << 53);
        let scaled = (r * Rat::from_integer(scale.clone())).round().to_integer();
        scaled.to_f64().unwrap_or(if r.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }) / scale.to_f64().unwrap()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_edge_conventions() {
        assert_eq!(binomial(5, 2), BigInt::from(10));
        assert_eq!(binomial(5, 0), BigInt::one());
        assert_eq!(binomial(5, 6), BigInt::zero());
        assert_eq!(binomial_i(-1, 0), BigInt::zero());
        assert_eq!(binomial_i(4, -1), BigInt::zero());
        assert_eq!(binomial_i(48, 6), BigInt::from(12_271_512u64));
    }

    #[test]
    fn falling_matches_product() {
        assert_eq!(falling_int(6, 3), rat_int(120));
        assert_eq!(falling_int(2, 4), rat_zero());
        assert_eq!(falling_int(5, 0), rat_one());
    }

    #[test]
    fn string_round_trip() {
        let r = rat(36, 5);
        assert_eq!(rat_to_string(&r), "36/5");
        assert_eq!(rat_parse("36/5").unwrap(), r);
        assert_eq!(rat_parse("8").unwrap(), rat_int(8));
        assert_eq!(rat_to_string(&rat_int(8)), "8/1");
        assert!(rat_parse("1/0").is_none());
    }
}
