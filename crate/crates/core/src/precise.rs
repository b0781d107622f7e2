//! Multi-precision helpers for building probability tables.
//!
//! Everything here runs at [`PREC`] bits, well above the 128-bit ceiling on
//! stored probabilities, with round-toward-zero arithmetic.

use std::str::FromStr;

use dashu_float::round::mode::Zero;
use dashu_float::{Context, FBig};
use dashu_int::IBig;

pub type Float = FBig<Zero, 2>;

pub const PREC: usize = 256;

/// Exact binary value of an `f64`, widened to the working precision.
pub fn from_f64(x: f64) -> Float {
    Float::try_from(x)
        .expect("finite f64")
        .with_precision(PREC)
        .value()
}

/// The decimal number an `f64` prints as (its shortest round-trip form),
/// rounded to the working precision. `3.33` becomes 3.33, not the nearest double.
pub fn from_decimal_f64(x: f64) -> Float {
    let text = format!("{x:?}");
    let dec = dashu_float::DBig::from_str(&text).expect("decimal rendering of f64");
    dec.with_base_and_precision::<2>(PREC)
        .value()
        .with_rounding::<Zero>()
}

pub fn from_int(x: i128) -> Float {
    Float::from(IBig::from(x)).with_precision(PREC).value()
}

fn pin(x: Float) -> Float {
    x.with_precision(PREC).value()
}

pub fn exp(x: &Float) -> Float {
    pin(pin(x.clone()).exp())
}

pub fn ln(x: &Float) -> Float {
    pin(pin(x.clone()).ln())
}

pub fn sqrt(x: &Float) -> Float {
    Context::<Zero>::new(PREC).sqrt(x.repr()).value()
}

/// `exp(-x^2 / (2 sigma^2))`.
pub fn gaussian_rho(x: i64, sigma: &Float) -> Float {
    let xf = from_int(x as i128);
    let two = from_int(2);
    let arg = -(&xf * &xf) / (two * sigma * sigma);
    exp(&arg)
}

/// `x * 2^bits`.
pub fn scale_pow2(x: &Float, bits: u32) -> Float {
    x.clone() << bits as isize
}

/// `floor(x)` for `0 <= x < 2^128`.
pub fn floor_u128(x: &Float) -> u128 {
    let int: IBig = x.floor().to_int().value();
    u128::try_from(int).expect("value fits in u128")
}

/// `floor(x * 2^bits)`.
pub fn floor_scaled(x: &Float, bits: u32) -> u128 {
    floor_u128(&scale_pow2(x, bits))
}

pub fn to_f64(x: &Float) -> f64 {
    x.to_f64().value()
}
