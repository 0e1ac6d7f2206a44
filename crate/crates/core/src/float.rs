//! IEEE-754 single-precision decomposition.
//!
//! Zero and subnormals report the exponent [`ZERO_EXPONENT`] (`-127`), the
//! class the quantizer folds into its zero bucket.

use crate::{Error, Result};

pub const ZERO_EXPONENT: i16 = -127;
const EXPONENT_BIAS: i16 = 127;
const MANTISSA_BITS: u32 = 23;
const EXPONENT_MASK: u32 = 0xff;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn of(v: f32) -> Self {
        if v.is_sign_negative() {
            Sign::Negative
        } else {
            Sign::Positive
        }
    }

    pub fn factor(self) -> f32 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

/// `v = sign * mantissa * 2^exponent`.
///
/// For normal numbers `mantissa` lies in `[1, 2)`. Subnormals and zero carry
/// `exponent == -127` and `mantissa = |v| * 2^127`, which lies in `[0, 2)`
/// and still recomposes exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloatDecomposition {
    pub sign: Sign,
    pub exponent: i16,
    pub mantissa: f32,
}

impl FloatDecomposition {
    pub fn recompose(&self) -> f32 {
        // Two steps so neither power of two overflows or underflows f32.
        let half = self.exponent / 2;
        let rest = self.exponent - half;
        self.sign.factor() * self.mantissa * pow2(half) * pow2(rest)
    }
}

/// Raw biased exponent field of `v`.
pub fn biased_exponent(v: f32) -> u32 {
    (v.to_bits() >> MANTISSA_BITS) & EXPONENT_MASK
}

/// Unbiased exponent with zero and subnormals mapped to `-127`.
pub fn unbiased_exponent(v: f32) -> i16 {
    let biased = biased_exponent(v);
    if biased == 0 {
        ZERO_EXPONENT
    } else {
        biased as i16 - EXPONENT_BIAS
    }
}

pub fn decompose(v: f32) -> Result<FloatDecomposition> {
    if !v.is_finite() {
        return Err(Error::Domain("cannot decompose NaN or infinity"));
    }
    let sign = Sign::of(v);
    let exponent = unbiased_exponent(v);
    let magnitude = v.abs();
    let mantissa = if exponent == ZERO_EXPONENT {
        magnitude * pow2(64) * pow2(63)
    } else {
        // Keep the fraction bits, force the exponent field to 0 (biased 127).
        f32::from_bits((magnitude.to_bits() & 0x007f_ffff) | 0x3f80_0000)
    };
    Ok(FloatDecomposition { sign, exponent, mantissa })
}

/// `2^e` for `e` in the normal f32 range.
fn pow2(e: i16) -> f32 {
    debug_assert!((-126..=127).contains(&e));
    f32::from_bits(((e + EXPONENT_BIAS) as u32) << MANTISSA_BITS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let d = decompose(1.5).unwrap();
        assert_eq!((d.sign, d.exponent, d.mantissa), (Sign::Positive, 0, 1.5));
        let d = decompose(-0.25).unwrap();
        assert_eq!((d.sign, d.exponent, d.mantissa), (Sign::Negative, -2, 1.0));
        let d = decompose(0.0).unwrap();
        assert_eq!((d.sign, d.exponent), (Sign::Positive, -127));
    }

    #[test]
    fn subnormals_join_zero_class() {
        let tiny = f32::from_bits(1);
        assert_eq!(decompose(tiny).unwrap().exponent, ZERO_EXPONENT);
        assert_eq!(decompose(f32::MIN_POSITIVE).unwrap().exponent, -126);
        assert_eq!(decompose(f32::MAX).unwrap().exponent, 127);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(decompose(f32::NAN).is_err());
        assert!(decompose(f32::NEG_INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn recomposes_every_finite_float(bits in any::<u32>()) {
            let v = f32::from_bits(bits);
            prop_assume!(v.is_finite());
            let d = decompose(v).unwrap();
            prop_assert!((-127..=127).contains(&d.exponent));
            prop_assert_eq!(d.recompose().to_bits(), v.to_bits());
            if d.exponent > ZERO_EXPONENT {
                prop_assert!((1.0..2.0).contains(&d.mantissa));
            }
        }
    }
}
