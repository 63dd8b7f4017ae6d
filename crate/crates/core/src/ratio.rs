//! Helpers for exact rationals: parsing/printing in `p/q` form and outward
//! square-root enclosures (the only place an irrational ever appears).

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

/// Shorthand for a rational from machine integers.
pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Parses `p/q` or a bare integer. Whitespace around the slash is rejected.
pub fn parse_ratio(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let make = |txt: &str| -> Result<BigInt> {
        txt.parse::<BigInt>()
            .map_err(|_| Error::Parse(format!("invalid integer `{txt}` in rational `{s}`")))
    };
    if let Some((num, den)) = s.split_once('/') {
        let d = make(den)?;
        if d.is_zero() {
            return Err(Error::Parse(format!("zero denominator in `{s}`")));
        }
        Ok(BigRational::new(make(num)?, d))
    } else {
        Ok(BigRational::from_integer(make(s)?))
    }
}

/// Always renders as `p/q`, even for integers, so outputs stay exact and
/// byte-stable.
pub fn format_ratio(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Floor of the integer square root.
fn isqrt(n: &BigInt) -> BigInt {
    debug_assert!(!n.is_negative());
    n.sqrt()
}

/// Outward rational enclosure of sqrt(x) for x >= 0.
///
/// Endpoints are exact rationals with `lo^2 <= x <= hi^2` and width at most
/// `1/(denom(x) * 2^extra_bits)`.
pub fn sqrt_enclosure(x: &BigRational, extra_bits: u32) -> Result<(BigRational, BigRational)> {
    if x.is_negative() {
        return Err(Error::InvalidArgument(
            "square root of a negative rational".into(),
        ));
    }
    let scale = BigInt::one() << extra_bits;
    // sqrt(p/q) = sqrt(p*q)/q; work with N = p*q*4^k so the root scales by 2^k.
    let n = x.numer() * x.denom() * (&scale * &scale);
    let root = isqrt(&n);
    let denom = x.denom() * &scale;
    let lo = BigRational::new(root.clone(), denom.clone());
    let hi = BigRational::new(root + BigInt::one(), denom);
    Ok((lo, hi))
}

/// ceil(a / b) for b > 0.
pub fn div_ceil(a: &BigInt, b: &BigInt) -> BigInt {
    let (q, r) = a.div_rem(b);
    if r.is_zero() || a.is_negative() != b.is_negative() {
        q
    } else {
        q + BigInt::one()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        let r = parse_ratio("3/4").unwrap();
        assert_eq!(format_ratio(&r), "3/4");
        assert_eq!(format_ratio(&parse_ratio("5").unwrap()), "5/1");
        assert_eq!(format_ratio(&parse_ratio("-2/6").unwrap()), "-1/3");
        assert!(parse_ratio("1/0").is_err());
        assert!(parse_ratio("x/2").is_err());
    }

    #[test]
    fn sqrt_enclosure_brackets() {
        let x = rat(2, 1);
        let (lo, hi) = sqrt_enclosure(&x, 32).unwrap();
        assert!(&lo * &lo <= x && x <= &hi * &hi);
        assert!(&hi - &lo <= rat(1, 1 << 30));
        let (lo0, hi0) = sqrt_enclosure(&rat(0, 1), 8).unwrap();
        assert!(lo0.is_zero());
        assert!(hi0 > BigRational::zero());
        // Exact square: lower endpoint is exact.
        let (lo4, _) = sqrt_enclosure(&rat(9, 4), 16).unwrap();
        assert_eq!(lo4, rat(3, 2));
    }

    #[test]
    fn div_ceil_matches_definition() {
        assert_eq!(div_ceil(&BigInt::from(4), &BigInt::from(3)), BigInt::from(2));
        assert_eq!(div_ceil(&BigInt::from(6), &BigInt::from(3)), BigInt::from(2));
        assert_eq!(div_ceil(&BigInt::from(0), &BigInt::from(5)), BigInt::from(0));
    }
}
