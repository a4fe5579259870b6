//! Minifloat to binary16 dequantization.
//!
//! Two scalar paths produce bit-identical binary16 results:
//!
//! * **naive**: rebuild the binary16 exponent as `E + 12` (subnormal codes
//!   keep a zero exponent and are scaled by `2^12` afterwards), then multiply
//!   by the block scale `S`;
//! * **bias shift**: place the code's fields straight into binary16 bit
//!   positions, reading the exponent under bias 15, and multiply by the
//!   folded scale `S * 2^12` computed once at quantization time.
//!
//! Both paths round the final product to binary16 exactly once, which is why
//! they agree for every code and every scale whose folded value is finite.

use std::ops::Range;

use half::f16;

use crate::codec::{Code, MiniFloatFormat};
use crate::error::{Error, Result};
use crate::packing::PackedSegments;

const F16_EXP_BIAS: i32 = 15;
const F16_MANTISSA_BITS: u32 = 10;

/// Power of two separating the minifloat bias from the binary16 bias.
pub const fn bias_shift_exponent(format: MiniFloatFormat) -> i32 {
    F16_EXP_BIAS - format.stored_bias()
}

/// Which scalar routine turns codes into binary16.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DequantPath {
    Naive,
    BiasShift,
}

/// A block scale pre-multiplied by `2^bias_shift_exponent`.
#[derive(Debug, Clone, Copy)]
pub struct FoldedScale(f16);

impl PartialEq for FoldedScale {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for FoldedScale {}

impl FoldedScale {
    pub fn value(self) -> f16 {
        self.0
    }

    pub fn to_bits(self) -> u16 {
        self.0.to_bits()
    }
}

/// Fold the bias-shift constant into `scale`.
///
/// The shift is exact: any finite positive binary16 times a power of two
/// that stays below `f16::MAX` is representable.
pub fn fold_scale(format: MiniFloatFormat, scale: f16) -> Result<FoldedScale> {
    if !scale.is_finite() || scale <= f16::ZERO {
        return Err(Error::InvalidInput(format!("scale must be positive and finite, got {scale}")));
    }
    let folded = scale.to_f64() * 2f64.powi(bias_shift_exponent(format));
    if folded > f16::MAX.to_f64() {
        return Err(Error::ScaleOverflow(format!(
            "{scale} * 2^{} = {folded} exceeds binary16 range",
            bias_shift_exponent(format)
        )));
    }
    let out = f16::from_f64(folded);
    debug_assert_eq!(out.to_f64(), folded);
    Ok(FoldedScale(out))
}

fn field_bits(format: MiniFloatFormat, code: Code) -> (u16, u16, u16) {
    let sign = (code.sign(format) as u16) << 15;
    let exponent = code.exponent(format) as u16;
    let mantissa = (code.mantissa(format) as u16) << (F16_MANTISSA_BITS - format.mantissa_bits());
    (sign, exponent, mantissa)
}

/// Step one of the naive path: the code's exact value as binary16.
#[inline]
pub fn naive_cast(format: MiniFloatFormat, code: Code) -> f16 {
    let (sign, exponent, mantissa) = field_bits(format, code);
    if exponent == 0 {
        // Subnormal: keep the zero exponent, then undo the bias gap.
        let sub = f16::from_bits(sign | mantissa);
        mul_f16(sub, f16::from_f32(2f32.powi(bias_shift_exponent(format))))
    } else {
        let e = exponent + bias_shift_exponent(format) as u16;
        f16::from_bits(sign | (e << F16_MANTISSA_BITS) | mantissa)
    }
}

/// Bit-level placement of the code fields; equals `value * 2^-12`.
#[inline]
pub fn bias_shift_cast(format: MiniFloatFormat, code: Code) -> f16 {
    let (sign, exponent, mantissa) = field_bits(format, code);
    f16::from_bits(sign | (exponent << F16_MANTISSA_BITS) | mantissa)
}

/// binary16 product with a single round-to-nearest-even.
///
/// The f32 product of two binary16 values is exact (22 significand bits,
/// exponents well inside f32 range), so only the final narrowing rounds.
#[inline]
pub fn mul_f16(a: f16, b: f16) -> f16 {
    f16::from_f32(a.to_f32() * b.to_f32())
}

/// Cast then scale.
pub fn dequant_naive(format: MiniFloatFormat, code: Code, scale: f16) -> f16 {
    mul_f16(naive_cast(format, code), scale)
}

/// Bit placement then multiply by the folded scale.
pub fn dequant_bias_shift(format: MiniFloatFormat, code: Code, folded: FoldedScale) -> f16 {
    mul_f16(bias_shift_cast(format, code), folded.0)
}

/// Scale material for one block, which also selects the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockScale {
    Naive(f16),
    BiasShift(FoldedScale),
}

impl BlockScale {
    pub fn path(self) -> DequantPath {
        match self {
            BlockScale::Naive(_) => DequantPath::Naive,
            BlockScale::BiasShift(_) => DequantPath::BiasShift,
        }
    }

    #[inline]
    pub fn apply(self, format: MiniFloatFormat, code: Code) -> f16 {
        match self {
            BlockScale::Naive(s) => dequant_naive(format, code, s),
            BlockScale::BiasShift(f) => dequant_bias_shift(format, code, f),
        }
    }
}

/// Dequantize the codes at `range` of a packed payload.
pub fn dequant_block(
    format: MiniFloatFormat,
    segments: &PackedSegments,
    range: Range<usize>,
    scale: BlockScale,
) -> Result<Vec<f16>> {
    if range.start > range.end || range.end > segments.code_count() {
        return Err(Error::PayloadMismatch(format!(
            "block {range:?} outside payload of {} codes",
            segments.code_count()
        )));
    }
    Ok(range.map(|i| scale.apply(format, segments.code(format, i))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{codebook, decode};
    use crate::packing::pack;

    const FP6: MiniFloatFormat = MiniFloatFormat::Fp6E3M2;
    const FP5: MiniFloatFormat = MiniFloatFormat::Fp5E3M1;

    fn h(x: f64) -> f16 {
        f16::from_f64(x)
    }

    #[test]
    fn casts_are_exact() {
        for f in MiniFloatFormat::ALL {
            for (code, v) in codebook(f) {
                assert_eq!(naive_cast(f, code).to_f64(), v, "{f} {code:?}");
                assert_eq!(bias_shift_cast(f, code).to_f64(), v * 2f64.powi(-12), "{f} {code:?}");
            }
        }
    }

    #[test]
    fn fold_examples() {
        assert_eq!(fold_scale(FP6, h(2f64.powi(-5))).unwrap().value(), h(128.0));
        assert_eq!(fold_scale(FP6, h(1.0)).unwrap().value(), h(4096.0));
        assert!(matches!(fold_scale(FP6, h(32.0)), Err(Error::ScaleOverflow(_))));
        assert!(matches!(fold_scale(FP6, h(16.0)), Err(Error::ScaleOverflow(_))));
        assert!(fold_scale(FP6, f16::from_bits(0x4BFF)).is_ok());
        // Smallest subnormal scale becomes a normal number.
        let tiny = fold_scale(FP6, f16::from_bits(1)).unwrap().value();
        assert!(tiny.is_normal());
        assert_eq!(tiny.to_f64(), 2f64.powi(-12));
        assert!(matches!(fold_scale(FP6, h(0.0)), Err(Error::InvalidInput(_))));
        assert!(matches!(fold_scale(FP6, h(-1.0)), Err(Error::InvalidInput(_))));
        assert!(matches!(fold_scale(FP6, f16::NAN), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn naive_examples() {
        assert_eq!(dequant_naive(FP6, Code(0b011111), h(2f64.powi(-5))), h(0.875));
        assert_eq!(dequant_naive(FP6, Code(0), h(3.5)).to_bits(), 0);
        assert_eq!(dequant_naive(FP6, Code(0b000001), h(1.0)), h(0.0625));
    }

    #[test]
    fn bias_shift_examples() {
        assert_eq!(bias_shift_cast(FP6, Code(0b011111)).to_bits(), 0x1F00);
        assert_eq!(bias_shift_cast(FP6, Code(0b011111)).to_f64(), 0.0068359375);
        let folded = fold_scale(FP6, h(2f64.powi(-5))).unwrap();
        assert_eq!(folded.value(), h(128.0));
        assert_eq!(dequant_bias_shift(FP6, Code(0b011111), folded), h(0.875));
        let unit = fold_scale(FP6, h(1.0)).unwrap();
        assert_eq!(dequant_bias_shift(FP6, Code(0b000001), unit), h(0.0625));
        let neg_zero = dequant_bias_shift(FP6, Code(0b100000), unit);
        assert_eq!(neg_zero.to_bits(), 0x8000);
    }

    #[test]
    fn block_examples() {
        let codes = [Code(0b011111), Code(0b001100), Code(0b000000), Code(0b100001)];
        let p = pack(FP6, &codes).unwrap();
        let s = h(1.0);
        let naive = dequant_block(FP6, &p, 0..4, BlockScale::Naive(s)).unwrap();
        let want: Vec<f16> = [28.0, 1.0, 0.0, -0.0625].into_iter().map(h).collect();
        assert_eq!(naive, want);
        let shifted = dequant_block(FP6, &p, 0..4, BlockScale::BiasShift(fold_scale(FP6, s).unwrap())).unwrap();
        assert_eq!(shifted, want);

        let zeros = pack(FP6, &[Code::ZERO; 7]).unwrap();
        let z = dequant_block(FP6, &zeros, 0..7, BlockScale::Naive(h(0.3))).unwrap();
        assert!(z.iter().all(|v| v.to_bits() == 0));

        assert!(matches!(
            dequant_block(FP6, &p, 2..5, BlockScale::Naive(s)),
            Err(Error::PayloadMismatch(_))
        ));
    }

    #[test]
    fn power_of_two_scales_are_exact() {
        for f in MiniFloatFormat::ALL {
            for e in -20..=3 {
                let s = h(2f64.powi(e));
                let folded = fold_scale(f, s).unwrap();
                for (code, v) in codebook(f) {
                    let want = v * 2f64.powi(e);
                    assert_eq!(dequant_naive(f, code, s).to_f64(), want);
                    assert_eq!(dequant_bias_shift(f, code, folded).to_f64(), want);
                }
            }
        }
    }

    #[test]
    fn fp5_paths_agree_on_dense_scales() {
        for bits in (1u16..0x4C00).step_by(7) {
            let s = f16::from_bits(bits);
            let folded = fold_scale(FP5, s).unwrap();
            for bits in 0..32u8 {
                let c = Code(bits);
                assert_eq!(
                    dequant_naive(FP5, c, s).to_bits(),
                    dequant_bias_shift(FP5, c, folded).to_bits()
                );
            }
        }
    }

    #[test]
    fn naive_matches_rounded_exact_product() {
        // Independent route: f64 product of exact values, rounded once.
        for bits in (1u16..0x4C00).step_by(13) {
            let s = f16::from_bits(bits);
            for (code, v) in codebook(FP6) {
                let want = h(v * s.to_f64());
                assert_eq!(dequant_naive(FP6, code, s).to_bits(), want.to_bits());
                assert_eq!(decode(FP6, code), v);
            }
        }
    }
}
