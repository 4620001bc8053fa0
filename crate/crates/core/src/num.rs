//! Small helpers around [`rug::Float`] used throughout the crate.
//!
//! Every quantity is carried at an explicit working precision (in bits). The
//! helpers here keep construction and decimal conversion in one place so the
//! numerical modules read as arithmetic rather than precision bookkeeping.

use rug::float::Constant;
use rug::ops::Pow;
use rug::Float;

use crate::error::{Error, Result};

/// Bits needed to carry `digits` significant decimal digits.
pub fn digits_to_bits(digits: u32) -> u32 {
    (f64::from(digits) * std::f64::consts::LOG2_10).ceil() as u32
}

/// Decimal digits carried by `bits` of mantissa.
pub fn bits_to_digits(bits: u32) -> f64 {
    f64::from(bits) * std::f64::consts::LOG10_2
}

pub fn int(prec: u32, v: i64) -> Float {
    Float::with_val(prec, v)
}

pub fn float(prec: u32, v: f64) -> Float {
    Float::with_val(prec, v)
}

pub fn zero(prec: u32) -> Float {
    Float::new(prec)
}

pub fn one(prec: u32) -> Float {
    Float::with_val(prec, 1)
}

pub fn pi(prec: u32) -> Float {
    Float::with_val(prec, Constant::Pi)
}

/// `10^exponent` at the given precision.
pub fn pow10(prec: u32, exponent: i32) -> Float {
    let ten = Float::with_val(prec, 10);
    ten.pow(exponent)
}

/// Parses a decimal string (e.g. `"0.7"`, `"1e-30"`) exactly rounded to `prec` bits.
pub fn parse(prec: u32, s: &str) -> Result<Float> {
    let parsed = Float::parse(s.trim())
        .map_err(|e| Error::Parameter(format!("cannot parse decimal '{s}': {e}")))?;
    Ok(Float::with_val(prec, parsed))
}

/// Decimal rendering with enough digits to round-trip at the value's precision.
pub fn to_decimal(x: &Float) -> String {
    x.to_string_radix(10, None)
}

/// Decimal rendering with a fixed number of significant digits.
pub fn to_decimal_digits(x: &Float, digits: usize) -> String {
    x.to_string_radix(10, Some(digits))
}

pub fn abs(x: &Float) -> Float {
    x.clone().abs()
}

/// Largest absolute value of the inputs (zero for an empty input).
pub fn max_abs<'a, I>(prec: u32, values: I) -> Float
where
    I: IntoIterator<Item = &'a Float>,
{
    let mut best = zero(prec);
    for v in values {
        let a = Float::with_val(prec, v.abs_ref());
        if a > best {
            best = a;
        }
    }
    best
}

pub fn sum<'a, I>(prec: u32, values: I) -> Float
where
    I: IntoIterator<Item = &'a Float>,
{
    let mut acc = zero(prec);
    for v in values {
        acc += v;
    }
    acc
}

/// Sign of `x` as -1, 0 or 1.
pub fn signum(x: &Float) -> i32 {
    if x.is_zero() {
        0
    } else if x.is_sign_negative() {
        -1
    } else {
        1
    }
}

/// True when `x` is an exact (non-negative) integer value.
pub fn is_nonneg_integer(x: &Float) -> bool {
    x.is_integer() && !x.is_sign_negative()
}
