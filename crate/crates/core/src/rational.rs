//! Small helpers around [`BigRational`]; every persisted number in this crate
//! is written as `p/q`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rat = BigRational;

pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Always `p/q`, including integers (`3/1`).
pub fn fmt_rat(q: &Rat) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

pub fn parse_rat(s: &str) -> Result<Rat> {
    let s = s.trim();
    let bad = || Error::parse(0, format!("bad rational `{s}`"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(Rat::new(n, d))
        }
        None => {
            let n: BigInt = s.parse().map_err(|_| bad())?;
            Ok(Rat::from_integer(n))
        }
    }
}

/// Lossy conversion for display; exact values stay rational.
pub fn to_f64(q: &Rat) -> f64 {
    if let Some(v) = q.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    // ratio of huge integers: shift both down to a comparable size
    let nb = q.numer().bits() as i64;
    let db = q.denom().bits() as i64;
    let shift_n = (nb - 900).max(0) as usize;
    let shift_d = (db - 900).max(0) as usize;
    let n = (q.numer() >> shift_n).to_f64().unwrap_or(0.0);
    let d = (q.denom() >> shift_d).to_f64().unwrap_or(1.0);
    n / d * 2f64.powi((shift_n as i64 - shift_d as i64) as i32)
}

pub fn fmt_decimal(q: &Rat, digits: usize) -> String {
    format!("{:.*}", digits, to_f64(q))
}

/// Largest multiple of `2^-bits` that is `<= q`.
pub fn round_down_dyadic(q: &Rat, bits: u32) -> Rat {
    let scale = BigInt::one() << bits;
    let scaled = q * Rat::from_integer(scale.clone());
    Rat::new(scaled.floor().to_integer(), scale)
}

/// Smallest multiple of `2^-bits` that is `>= q`.
pub fn round_up_dyadic(q: &Rat, bits: u32) -> Rat {
    let scale = BigInt::one() << bits;
    let scaled = q * Rat::from_integer(scale.clone());
    Rat::new(scaled.ceil().to_integer(), scale)
}

pub fn pow2(e: i32) -> Rat {
    if e >= 0 {
        Rat::from_integer(BigInt::one() << e as u32)
    } else {
        Rat::new(BigInt::one(), BigInt::one() << (-e) as u32)
    }
}

pub fn abs(q: &Rat) -> Rat {
    q.abs()
}

/// A dyadic rational close to `x`, for turning float estimates into exact data.
pub fn from_f64_dyadic(x: f64, bits: u32) -> Rat {
    let scaled = (x * 2f64.powi(bits as i32)).round();
    Rat::new(
        BigInt::from(scaled as i128),
        BigInt::one() << bits,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        assert_eq!(parse_rat("3/6").unwrap(), rat(1, 2));
        assert_eq!(parse_rat("-4").unwrap(), int(-4));
        assert_eq!(fmt_rat(&int(3)), "3/1");
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("x").is_err());
    }

    #[test]
    fn dyadic_rounding_is_directed() {
        let third = rat(1, 3);
        let lo = round_down_dyadic(&third, 10);
        let hi = round_up_dyadic(&third, 10);
        assert!(lo <= third && third <= hi);
        assert_eq!(&hi - &lo, pow2(-10));
        assert_eq!(round_up_dyadic(&rat(-1, 3), 4), rat(-5, 16));
    }

    #[test]
    fn huge_ratio_to_f64() {
        let big = Rat::new(BigInt::one() << 2000u32, (BigInt::one() << 1999u32) * 3);
        assert!((to_f64(&big) - 2.0 / 3.0).abs() < 1e-12);
    }
}
