//! Money arithmetic shared by the market and mechanism code.
//!
//! Everything that touches agent values is generic over [`Money`], which is
//! implemented for `f64` (Monte Carlo) and for [`Rational`] (exact checks of
//! the worked examples).

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Arbitrary precision rational in lowest terms with a positive denominator.
pub type Rational = BigRational;

pub trait Money: Clone + PartialOrd + Signed + Debug + Send + Sync + 'static {
    fn is_finite_value(&self) -> bool;

    fn half(&self) -> Self {
        self.clone() / (Self::one() + Self::one())
    }

    fn to_f64_lossy(&self) -> f64;

    /// JSON rendering: numbers for floats, `"p/q"` strings for rationals.
    fn to_json(&self) -> serde_json::Value;
}

impl Money for f64 {
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }

    fn half(&self) -> Self {
        0.5 * self
    }

    fn to_f64_lossy(&self) -> f64 {
        *self
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::Value::from(*self)
    }
}

impl Money for Rational {
    fn is_finite_value(&self) -> bool {
        true
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::Value::String(rational_string(self))
    }
}

/// `"p/q"`, or just `"p"` for integers.
pub fn rational_string(x: &Rational) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Serde adapter writing a [`Rational`] as its `"p/q"` string.
pub fn serialize_rational<S: serde::Serializer>(x: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&rational_string(x))
}

/// Parses `"3"`, `"-2.15"`, `"1e-3"` or `"21/10"` into an exact rational.
///
/// Decimal input is read digit by digit, so `"2.1"` is exactly `21/10` rather
/// than the nearest binary double.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let err = || Error::ParseNumber(s.to_string());
    let t = s.trim();
    if t.is_empty() {
        return Err(err());
    }
    if let Some((num, den)) = t.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| err())?;
        let den: BigInt = den.trim().parse().map_err(|_| err())?;
        if den.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(num, den));
    }

    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(pos) => {
            let e: i32 = t[pos + 1..].parse().map_err(|_| err())?;
            (&t[..pos], e)
        }
        None => (t, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut value = Rational::from_integer(all_digits.parse::<BigInt>().map_err(|_| err())?);
    let scale = exponent - frac_part.len() as i32;
    let ten = Rational::from_integer(BigInt::from(10));
    if scale >= 0 {
        value *= num_traits::pow(ten, scale as usize);
    } else {
        value /= num_traits::pow(ten, (-scale) as usize);
    }
    Ok(if negative { -value } else { value })
}

/// Exact conversion of a finite double (every finite `f64` is a dyadic rational).
pub fn rational_from_f64(x: f64) -> Result<Rational> {
    Rational::from_float(x).ok_or_else(|| Error::ParseNumber(x.to_string()))
}

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}
