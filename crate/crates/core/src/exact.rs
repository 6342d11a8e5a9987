//! Exact sums of `f64` values as fixed-point big integers.
//!
//! Every finite `f64` is an integer multiple of `2^-1074`, so scaling by
//! `2^1074` turns sums and integer multiples into exact integer arithmetic.
//! Results are rounded once, to nearest, on the way back to `f64`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

const SCALE_BITS: usize = 1074;

/// `v · 2^1074` as an integer. `v` must be finite.
pub(crate) fn fixed(v: f64) -> BigInt {
    debug_assert!(v.is_finite());
    let bits = v.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as usize;
    let frac = bits & ((1u64 << 52) - 1);
    // subnormals share the smallest exponent without the implicit bit
    let (mantissa, shift) = if biased == 0 { (frac, 0) } else { (frac | (1u64 << 52), biased - 1) };
    let m = BigInt::from(mantissa) << shift;
    if v.is_sign_negative() {
        -m
    } else {
        m
    }
}

pub(crate) fn fixed_sum(values: &[f64]) -> BigInt {
    values.iter().fold(BigInt::zero(), |acc, &v| acc + fixed(v))
}

/// Nearest `f64` to `numer / (denom · 2^1074)`; `denom` must be positive.
pub(crate) fn round_scaled(numer: BigInt, denom: BigInt) -> f64 {
    let r = BigRational::new(numer, denom << SCALE_BITS);
    r.to_f64().unwrap_or(f64::NAN)
}
