//! Exact rational helpers: strict string grammar, serde adapters, and a small
//! scalar abstraction shared by exact and floating-point evaluations.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid rational {input:?}: {reason}")]
pub struct ParseRationalError {
    pub input: String,
    pub reason: &'static str,
}

fn parse_err(input: &str, reason: &'static str) -> ParseRationalError {
    ParseRationalError {
        input: input.to_string(),
        reason,
    }
}

fn parse_integer(s: &str, full: &str, allow_sign: bool) -> Result<BigInt, ParseRationalError> {
    let digits = match s.strip_prefix('-') {
        Some(rest) if allow_sign => rest,
        Some(_) => return Err(parse_err(full, "sign only allowed on the numerator")),
        None => s,
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(parse_err(full, "expected decimal digits"));
    }
    let value = BigInt::from_str_radix(digits, 10).map_err(|_| parse_err(full, "bad integer"))?;
    Ok(if s.starts_with('-') { -value } else { value })
}

/// Parses `"n"` or `"n/d"` with an optional leading minus on the numerator and
/// a strictly positive denominator.
pub fn parse_rational(input: &str) -> Result<BigRational, ParseRationalError> {
    let s = input.trim();
    match s.split_once('/') {
        None => Ok(BigRational::from_integer(parse_integer(s, input, true)?)),
        Some((num, den)) => {
            let num = parse_integer(num, input, true)?;
            let den = parse_integer(den, input, false)?;
            if den.is_zero() {
                return Err(parse_err(input, "zero denominator"));
            }
            Ok(BigRational::new(num, den))
        }
    }
}

/// Like [`parse_rational`] but also accepts a finite decimal such as `2.5`,
/// converted exactly.
pub fn parse_rational_or_decimal(input: &str) -> Result<BigRational, ParseRationalError> {
    let s = input.trim();
    let Some((int_part, frac_part)) = s.split_once('.') else {
        return parse_rational(input);
    };
    if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(parse_err(input, "expected decimal digits after '.'"));
    }
    let negative = int_part.starts_with('-');
    let int_digits = int_part.strip_prefix('-').unwrap_or(int_part);
    let whole = if int_digits.is_empty() {
        BigInt::zero()
    } else {
        parse_integer(int_digits, input, false)?
    };
    let frac = parse_integer(frac_part, input, false)?;
    let scale = num_traits::pow(BigInt::from(10), frac_part.len());
    let magnitude = BigRational::from_integer(whole) + BigRational::new(frac, scale);
    Ok(if negative { -magnitude } else { magnitude })
}

/// Canonical text form: `"n"` for integers, `"n/d"` otherwise.
pub fn format_rational(value: &BigRational) -> String {
    value.to_string()
}

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(value: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(value))
}

pub fn to_f64(value: &BigRational) -> f64 {
    ToPrimitive::to_f64(value).unwrap_or(f64::NAN)
}

/// Smallest integer not below `value`.
pub fn ceil_to_i64(value: &BigRational) -> Option<i64> {
    value.ceil().to_integer().to_i64()
}

/// `base^exp` for a possibly negative integer exponent.
pub fn powi(base: &BigRational, exp: i64) -> BigRational {
    if exp >= 0 {
        num_traits::pow(base.clone(), exp as usize)
    } else {
        num_traits::pow(base.recip(), exp.unsigned_abs() as usize)
    }
}

/// Values that can populate difference-equation grids: exact rationals or
/// binary floats.
pub trait Scalar: Clone + PartialOrd + Num + Signed + fmt::Debug {
    fn from_ratio(value: &BigRational) -> Self;
    fn to_f64(&self) -> f64;
}

impl Scalar for f64 {
    fn from_ratio(value: &BigRational) -> Self {
        to_f64(value)
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for BigRational {
    fn from_ratio(value: &BigRational) -> Self {
        value.clone()
    }

    fn to_f64(&self) -> f64 {
        to_f64(self)
    }
}

pub fn half<V: Scalar>() -> V {
    V::one() / (V::one() + V::one())
}

/// A rational that (de)serializes as its canonical string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalText(pub BigRational);

impl serde::Serialize for RationalText {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(&self.0))
    }
}

impl<'de> serde::Deserialize<'de> for RationalText {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        serde_rational::deserialize(d).map(RationalText)
    }
}

/// Serde adapter storing a `BigRational` as its canonical string.
pub mod serde_rational {
    use super::*;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let raw = String::deserialize(d)?;
        parse_rational(&raw).map_err(de::Error::custom)
    }
}

/// Serde adapter for `Vec<BigRational>`.
pub mod serde_rational_vec {
    use super::*;
    use serde::{de, ser::SerializeSeq, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(values: &[BigRational], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&format_rational(v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigRational>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|s| parse_rational(s).map_err(de::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_integers() {
        assert_eq!(parse_rational("1/3").unwrap(), ratio(1, 3));
        assert_eq!(parse_rational("-2/4").unwrap(), ratio(-1, 2));
        assert_eq!(parse_rational("0").unwrap(), int(0));
        assert_eq!(parse_rational(" 7 ").unwrap(), int(7));
    }

    #[test]
    fn rejects_malformed_rationals() {
        for bad in ["", "1/", "/2", "1/0", "1/-2", "0.5", "a/b", "1//2", "+1", "1/2/3"] {
            assert!(parse_rational(bad).is_err(), "{bad:?} should be rejected");
        }
    }

    #[test]
    fn decimals_convert_exactly() {
        assert_eq!(parse_rational_or_decimal("2.5").unwrap(), ratio(5, 2));
        assert_eq!(parse_rational_or_decimal("-0.125").unwrap(), ratio(-1, 8));
        assert_eq!(parse_rational_or_decimal("3/2").unwrap(), ratio(3, 2));
        assert!(parse_rational_or_decimal("1.").is_err());
    }

    #[test]
    fn canonical_format_round_trips() {
        for v in [ratio(1, 3), ratio(-7, 2), int(0), int(12)] {
            assert_eq!(parse_rational(&format_rational(&v)).unwrap(), v);
        }
        assert_eq!(format_rational(&ratio(2, 4)), "1/2");
    }

    #[test]
    fn ceiling_and_powers() {
        assert_eq!(ceil_to_i64(&ratio(3, 2)), Some(2));
        assert_eq!(ceil_to_i64(&int(3)), Some(3));
        assert_eq!(powi(&ratio(2, 3), -2), ratio(9, 4));
        assert_eq!(powi(&ratio(2, 3), 0), int(1));
    }
}
