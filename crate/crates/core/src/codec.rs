//! Scalar codec for the 6-bit (E3M2) and 5-bit (E3M1) minifloat formats.
//!
//! Codes are laid out MSB to LSB as `sign | exponent | mantissa`. There are
//! no NaN or infinity encodings: every bit pattern is a finite value. A
//! zero exponent field marks a subnormal with value `M_frac * 2^(1 - bias)`.

use std::fmt;

use crate::error::{Error, Result};

/// A low-bit floating point layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MiniFloatFormat {
    /// 1 sign, 3 exponent, 2 mantissa bits. Range ±28.
    Fp6E3M2,
    /// 1 sign, 3 exponent, 1 mantissa bit. Range ±24.
    Fp5E3M1,
}

impl MiniFloatFormat {
    pub const ALL: [MiniFloatFormat; 2] = [MiniFloatFormat::Fp6E3M2, MiniFloatFormat::Fp5E3M1];

    pub const fn exponent_bits(self) -> u32 {
        3
    }

    pub const fn mantissa_bits(self) -> u32 {
        match self {
            MiniFloatFormat::Fp6E3M2 => 2,
            MiniFloatFormat::Fp5E3M1 => 1,
        }
    }

    /// The standard `2^(e-1) - 1` exponent bias.
    pub const fn stored_bias(self) -> i32 {
        (1 << (self.exponent_bits() - 1)) - 1
    }

    pub const fn total_bits(self) -> u32 {
        1 + self.exponent_bits() + self.mantissa_bits()
    }

    /// Number of distinct codes, `2^total_bits`.
    pub const fn code_count(self) -> usize {
        1 << self.total_bits()
    }

    pub const fn sign_mask(self) -> u8 {
        1 << (self.total_bits() - 1)
    }

    const fn mantissa_mask(self) -> u8 {
        (1 << self.mantissa_bits()) - 1
    }

    const fn exponent_mask(self) -> u8 {
        (1 << self.exponent_bits()) - 1
    }

    /// Largest finite magnitude, `(2 - 2^-m) * 2^(2^e - 1 - bias)`.
    pub fn max_value(self) -> f64 {
        let m = self.mantissa_bits() as i32;
        let top_exp = (1 << self.exponent_bits()) - 1 - self.stored_bias();
        (2.0 - 2f64.powi(-m)) * 2f64.powi(top_exp)
    }

    /// The code with the largest positive value.
    pub const fn max_code(self) -> Code {
        Code((1 << (self.total_bits() - 1)) - 1)
    }

    pub fn name(self) -> &'static str {
        match self {
            MiniFloatFormat::Fp6E3M2 => "fp6_e3m2",
            MiniFloatFormat::Fp5E3M1 => "fp5_e3m1",
        }
    }
}

impl fmt::Display for MiniFloatFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A raw minifloat bit pattern. Validity depends on the format it is read in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Code(pub u8);

impl Code {
    pub const ZERO: Code = Code(0);

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub fn is_valid(self, format: MiniFloatFormat) -> bool {
        (self.0 as usize) < format.code_count()
    }

    pub fn validate(self, format: MiniFloatFormat) -> Result<Code> {
        if self.is_valid(format) {
            Ok(self)
        } else {
            Err(Error::InvalidCode(format!(
                "{:#b} does not fit in {} bits",
                self.0,
                format.total_bits()
            )))
        }
    }

    pub fn sign(self, format: MiniFloatFormat) -> bool {
        self.0 & format.sign_mask() != 0
    }

    pub fn exponent(self, format: MiniFloatFormat) -> u8 {
        (self.0 >> format.mantissa_bits()) & format.exponent_mask()
    }

    pub fn mantissa(self, format: MiniFloatFormat) -> u8 {
        self.0 & format.mantissa_mask()
    }

    /// Same magnitude, opposite sign bit.
    pub fn negate(self, format: MiniFloatFormat) -> Code {
        Code(self.0 ^ format.sign_mask())
    }

    fn from_fields(format: MiniFloatFormat, sign: bool, exponent: u8, mantissa: u8) -> Code {
        let s = if sign { format.sign_mask() } else { 0 };
        Code(s | (exponent << format.mantissa_bits()) | mantissa)
    }
}

/// Exact value of `code`. Every value fits in 11 significand bits, so the
/// result is exact in binary16 and wider.
///
/// `code` must be valid for `format`; extra high bits are ignored.
pub fn decode(format: MiniFloatFormat, code: Code) -> f64 {
    let m_bits = format.mantissa_bits() as i32;
    let e = code.exponent(format) as i32;
    let m = code.mantissa(format) as f64;
    let bias = format.stored_bias();
    let magnitude = if e == 0 {
        m * 2f64.powi(1 - bias - m_bits)
    } else {
        (m + 2f64.powi(m_bits)) * 2f64.powi(e - bias - m_bits)
    };
    if code.sign(format) {
        -magnitude
    } else {
        magnitude
    }
}

/// Round-to-nearest encode with ties to an even mantissa LSB.
///
/// Magnitudes beyond `max_value` saturate. Both `+0.0` and `-0.0` map to the
/// `+0` code; nonzero values that round to zero keep their sign.
pub fn encode_rtn(format: MiniFloatFormat, x: f64) -> Result<Code> {
    if !x.is_finite() {
        return Err(Error::InvalidInput(format!("cannot encode non-finite value {x}")));
    }
    if x == 0.0 {
        return Ok(Code::ZERO);
    }
    let sign = x.is_sign_negative();
    let a = x.abs();
    if a >= format.max_value() {
        let max = format.max_code();
        return Ok(if sign { max.negate(format) } else { max });
    }

    let m_bits = format.mantissa_bits() as i32;
    let bias = format.stored_bias();
    let min_normal_exp = 1 - bias;
    // Unbiased exponent of the binade holding `a`, floored at the subnormal range.
    let binade = unbiased_exponent(a).max(min_normal_exp);
    let quantum = 2f64.powi(binade - m_bits);
    // `a / quantum` is exact: division by a power of two.
    let significand = (a / quantum).round_ties_even() as u32;

    let implicit_one = 1u32 << m_bits;
    let (exponent, mantissa) = if significand < implicit_one {
        debug_assert_eq!(binade, min_normal_exp);
        (0, significand)
    } else if significand == 2 * implicit_one {
        // Rounded up into the next binade.
        (binade + 1 + bias, 0)
    } else {
        (binade + bias, significand - implicit_one)
    };
    let max_exp = (1 << format.exponent_bits()) - 1;
    if exponent > max_exp {
        let max = format.max_code();
        return Ok(if sign { max.negate(format) } else { max });
    }
    Ok(Code::from_fields(format, sign, exponent as u8, mantissa as u8))
}

/// `floor(log2(a))` for positive finite `a`.
fn unbiased_exponent(a: f64) -> i32 {
    let bits = a.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        // f64 subnormal; far below any minifloat subnormal.
        -1075
    } else {
        biased - 1023
    }
}

/// Every code of `format` with its decoded value, ordered by code bits.
pub fn codebook(format: MiniFloatFormat) -> Vec<(Code, f64)> {
    (0..format.code_count())
        .map(|bits| {
            let code = Code(bits as u8);
            (code, decode(format, code))
        })
        .collect()
}
