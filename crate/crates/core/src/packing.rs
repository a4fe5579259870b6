//! Segmented bit packing for minifloat codes and nibble packing for INT4.
//!
//! Each minifloat code is split into a 4-bit head (sign and exponent) and a
//! tail holding the mantissa bits (2 for FP6, 1 for FP5). Heads and tails
//! live in two separate arrays so both can be loaded with aligned word reads.
//!
//! Byte layout (normative for the `.lpqt` container):
//! - heads: two per byte, even index in the low nibble;
//! - FP6 tails: four per byte, code `i` at bits `2*(i%4)+1 ..= 2*(i%4)`;
//! - FP5 tails: eight per byte, code `i` at bit `i%8`;
//! - both arrays are zero padded to a multiple of 4 bytes.
//!
//! INT4 levels pack two per byte, even index in the low nibble, without
//! alignment padding.

use crate::codec::{Code, MiniFloatFormat};
use crate::error::{Error, Result};

/// Alignment, in bytes, of both segment arrays.
pub const SEGMENT_ALIGN: usize = 4;

fn align4(n: usize) -> usize {
    n.div_ceil(SEGMENT_ALIGN) * SEGMENT_ALIGN
}

/// Width of the tail segment for `format`.
pub const fn tail_bits(format: MiniFloatFormat) -> u32 {
    format.total_bits() - 4
}

/// Byte length of the head array for `code_count` codes.
pub fn head_len(code_count: usize) -> usize {
    align4(code_count.div_ceil(2))
}

/// Byte length of the tail array for `code_count` codes.
pub fn tail_len(format: MiniFloatFormat, code_count: usize) -> usize {
    align4((code_count * tail_bits(format) as usize).div_ceil(8))
}

/// Total packed size in bytes for `code_count` codes.
pub fn packed_len(format: MiniFloatFormat, code_count: usize) -> usize {
    head_len(code_count) + tail_len(format, code_count)
}

/// Split a code into its 4-bit head (sign, exponent) and mantissa tail.
pub fn split_code(format: MiniFloatFormat, code: Code) -> (u8, u8) {
    let t = tail_bits(format);
    (code.bits() >> t, code.bits() & ((1 << t) - 1))
}

/// Inverse of [`split_code`].
pub fn join_code(format: MiniFloatFormat, head: u8, tail: u8) -> Code {
    Code((head << tail_bits(format)) | tail)
}

/// The two segment arrays of a packed minifloat payload.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PackedSegments {
    pub(crate) heads: Vec<u8>,
    pub(crate) tails: Vec<u8>,
    pub(crate) code_count: usize,
}

impl PackedSegments {
    /// Wrap raw arrays after checking their lengths against `code_count`.
    pub fn from_parts(
        format: MiniFloatFormat,
        heads: Vec<u8>,
        tails: Vec<u8>,
        code_count: usize,
    ) -> Result<Self> {
        let (h, t) = (head_len(code_count), tail_len(format, code_count));
        if heads.len() != h || tails.len() != t {
            return Err(Error::PayloadMismatch(format!(
                "{code_count} codes need {h}+{t} segment bytes, got {}+{}",
                heads.len(),
                tails.len()
            )));
        }
        Ok(PackedSegments { heads, tails, code_count })
    }

    pub fn heads(&self) -> &[u8] {
        &self.heads
    }

    pub fn tails(&self) -> &[u8] {
        &self.tails
    }

    pub fn code_count(&self) -> usize {
        self.code_count
    }

    pub fn byte_len(&self) -> usize {
        self.heads.len() + self.tails.len()
    }

    /// Mutable access to the raw arrays, mainly for corruption tests.
    pub fn raw_mut(&mut self) -> (&mut [u8], &mut [u8]) {
        (&mut self.heads, &mut self.tails)
    }

    /// Code at index `i`. Panics if `i >= code_count`.
    #[inline]
    pub fn code(&self, format: MiniFloatFormat, i: usize) -> Code {
        assert!(i < self.code_count, "code index {i} out of range");
        let head = (self.heads[i / 2] >> ((i & 1) * 4)) & 0xF;
        let tail = match format {
            MiniFloatFormat::Fp6E3M2 => (self.tails[i / 4] >> ((i % 4) * 2)) & 0b11,
            MiniFloatFormat::Fp5E3M1 => (self.tails[i / 8] >> (i % 8)) & 1,
        };
        join_code(format, head, tail)
    }

    /// Decode codes `start..start + out.len()` into `out`.
    pub fn unpack_into(&self, format: MiniFloatFormat, start: usize, out: &mut [Code]) {
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = self.code(format, start + j);
        }
    }
}

/// Pack `codes` into head and tail segments.
pub fn pack(format: MiniFloatFormat, codes: &[Code]) -> Result<PackedSegments> {
    let n = codes.len();
    let mut heads = vec![0u8; head_len(n)];
    let mut tails = vec![0u8; tail_len(format, n)];
    for (i, &code) in codes.iter().enumerate() {
        code.validate(format)?;
        let (head, tail) = split_code(format, code);
        heads[i / 2] |= head << ((i & 1) * 4);
        match format {
            MiniFloatFormat::Fp6E3M2 => tails[i / 4] |= tail << ((i % 4) * 2),
            MiniFloatFormat::Fp5E3M1 => tails[i / 8] |= tail << (i % 8),
        }
    }
    Ok(PackedSegments { heads, tails, code_count: n })
}

/// Unpack every code. Pad bits are ignored.
pub fn unpack(format: MiniFloatFormat, segments: &PackedSegments) -> Result<Vec<Code>> {
    let n = segments.code_count;
    if segments.heads.len() != head_len(n) || segments.tails.len() != tail_len(format, n) {
        return Err(Error::PayloadMismatch(format!(
            "segment lengths {}+{} inconsistent with {n} {format} codes",
            segments.heads.len(),
            segments.tails.len()
        )));
    }
    let mut out = vec![Code::ZERO; n];
    segments.unpack_into(format, 0, &mut out);
    Ok(out)
}

/// Byte length of an INT4 payload holding `count` levels.
pub fn int4_len(count: usize) -> usize {
    count.div_ceil(2)
}

/// Pack 4-bit levels two per byte.
pub fn pack_int4(levels: &[u8]) -> Result<Vec<u8>> {
    let mut out = vec![0u8; int4_len(levels.len())];
    for (i, &level) in levels.iter().enumerate() {
        if level > 15 {
            return Err(Error::InvalidCode(format!("INT4 level {level} exceeds 15")));
        }
        out[i / 2] |= level << ((i & 1) * 4);
    }
    Ok(out)
}

#[inline]
pub(crate) fn int4_at(bytes: &[u8], i: usize) -> u8 {
    (bytes[i / 2] >> ((i & 1) * 4)) & 0xF
}

/// Unpack `count` levels from a nibble payload.
pub fn unpack_int4(bytes: &[u8], count: usize) -> Result<Vec<u8>> {
    if bytes.len() != int4_len(count) {
        return Err(Error::PayloadMismatch(format!(
            "{count} INT4 levels need {} bytes, got {}",
            int4_len(count),
            bytes.len()
        )));
    }
    Ok((0..count).map(|i| int4_at(bytes, i)).collect())
}
