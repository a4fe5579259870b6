//! `.lpqt` serialization of [`QuantizedTensor`] and raw dense tensor I/O.
//!
//! Layout, little-endian throughout, every section padded with zeros to an
//! 8-byte boundary:
//!
//! ```text
//! offset size  field
//!      0    4  magic "LPQT"
//!      4    2  version (1)
//!      6    1  format (0 = FP6_E3M2, 1 = FP5_E3M1, 2 = INT4_ASYM)
//!      7    1  granularity (0 = CGQ, 1 = FGQ)
//!      8    4  block size (0 for CGQ)
//!     12    8  rows
//!     20    8  cols
//!     28    1  bias-shift flag
//!     29    7  reserved, zero
//!     36    4  padding
//! scales          binary16 x blocks
//! zero points     binary16 x blocks        (INT4 only)
//! folded scales   binary16 x blocks        (bias shift only)
//! minifloat:  u64 head length, head bytes, u64 tail length, tail bytes
//! INT4:       u64 payload length, nibble bytes
//! ```

use std::io::{Read, Write};

use half::f16;

use crate::codec::MiniFloatFormat;
use crate::dequant::fold_scale;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::packing::PackedSegments;
use crate::quant::{BlockParams, Granularity, Payload, QuantScheme, QuantizedTensor, WeightFormat};

pub const MAGIC: [u8; 4] = *b"LPQT";
pub const VERSION: u16 = 1;
/// Header fields before alignment padding.
pub const HEADER_LEN: usize = 36;
pub const SECTION_ALIGN: usize = 8;

fn format_tag(f: WeightFormat) -> u8 {
    match f {
        WeightFormat::Fp6E3M2 => 0,
        WeightFormat::Fp5E3M1 => 1,
        WeightFormat::Int4Asym => 2,
    }
}

fn format_from_tag(tag: u8) -> Result<WeightFormat> {
    match tag {
        0 => Ok(WeightFormat::Fp6E3M2),
        1 => Ok(WeightFormat::Fp5E3M1),
        2 => Ok(WeightFormat::Int4Asym),
        t => Err(Error::InvariantViolation(format!("unknown format tag {t}"))),
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn pad(&mut self) {
        let len = self.buf.len().div_ceil(SECTION_ALIGN) * SECTION_ALIGN;
        self.buf.resize(len, 0);
    }

    fn f16s(&mut self, values: impl Iterator<Item = f16>) {
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self.pad();
    }

    fn blob(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
        self.buf.extend_from_slice(bytes);
        self.pad();
    }
}

/// Serialize `q` into a new buffer.
pub fn to_bytes(q: &QuantizedTensor) -> Vec<u8> {
    let mut w = Writer { buf: Vec::with_capacity(HEADER_LEN + q.payload().byte_len() + 4 * q.block_count() + 64) };
    let scheme = q.scheme();
    w.buf.extend_from_slice(&MAGIC);
    w.buf.extend_from_slice(&VERSION.to_le_bytes());
    w.buf.push(format_tag(scheme.format));
    w.buf.push(match scheme.granularity {
        Granularity::Cgq => 0,
        Granularity::Fgq { .. } => 1,
    });
    w.buf.extend_from_slice(&(scheme.block_size() as u32).to_le_bytes());
    w.buf.extend_from_slice(&(q.rows() as u64).to_le_bytes());
    w.buf.extend_from_slice(&(q.cols() as u64).to_le_bytes());
    w.buf.push(q.bias_shift() as u8);
    w.buf.extend_from_slice(&[0; 7]);
    debug_assert_eq!(w.buf.len(), HEADER_LEN);
    w.pad();

    w.f16s(q.block_params().iter().map(|p| p.scale));
    if scheme.format == WeightFormat::Int4Asym {
        w.f16s(q.block_params().iter().map(|p| p.zero_point.unwrap_or(f16::ZERO)));
    }
    if let Some(folded) = q.folded_scales() {
        w.f16s(folded.iter().map(|f| f.value()));
    }
    match q.payload() {
        Payload::MiniFloat(seg) => {
            w.blob(seg.heads());
            w.blob(seg.tails());
        }
        Payload::Int4(bytes) => w.blob(bytes),
    }
    w.buf
}

/// Write `q` to `out`.
pub fn write_lpqt(q: &QuantizedTensor, mut out: impl Write) -> Result<()> {
    out.write_all(&to_bytes(q))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::TruncatedPayload(format!("{what}: need {n} bytes at offset {}, have {}", self.pos, self.buf.len() - self.pos))
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn align(&mut self) -> Result<()> {
        let target = self.pos.div_ceil(SECTION_ALIGN) * SECTION_ALIGN;
        let pad = self.take(target - self.pos, "section padding")?;
        if pad.iter().any(|&b| b != 0) {
            return Err(Error::InvariantViolation(format!("nonzero padding before offset {target}")));
        }
        Ok(())
    }

    fn f16s(&mut self, count: usize, what: &str) -> Result<Vec<f16>> {
        let len = count.checked_mul(2).ok_or_else(|| Error::InvariantViolation(format!("{what} count overflows")))?;
        let bytes = self.take(len, what)?;
        let out = bytes.chunks_exact(2).map(|c| f16::from_le_bytes([c[0], c[1]])).collect();
        self.align()?;
        Ok(out)
    }

    fn blob(&mut self, expected: usize, what: &str) -> Result<Vec<u8>> {
        let len = self.u64(what)?;
        if len != expected as u64 {
            return Err(Error::InvariantViolation(format!("{what} length {len}, shape requires {expected}")));
        }
        let out = self.take(expected, what)?.to_vec();
        self.align()?;
        Ok(out)
    }
}

fn to_usize(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::InvariantViolation(format!("{what} {v} does not fit in memory")))
}

/// Parse a complete `.lpqt` image.
pub fn from_bytes(bytes: &[u8]) -> Result<QuantizedTensor> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let format = format_from_tag(r.u8("format")?)?;
    let granularity_tag = r.u8("granularity")?;
    let block_size = r.u32("block size")? as usize;
    let rows = to_usize(r.u64("rows")?, "rows")?;
    let cols = to_usize(r.u64("cols")?, "cols")?;
    let bias_shift = match r.u8("bias shift")? {
        0 => false,
        1 => true,
        b => return Err(Error::InvariantViolation(format!("bias shift flag {b}"))),
    };
    if r.take(7, "reserved")?.iter().any(|&b| b != 0) {
        return Err(Error::InvariantViolation("reserved header bytes are not zero".into()));
    }
    r.align()?;

    let granularity = match (granularity_tag, block_size) {
        (0, 0) => Granularity::Cgq,
        (0, d) => return Err(Error::InvariantViolation(format!("CGQ header with block size {d}"))),
        (1, 0) => return Err(Error::InvariantViolation("FGQ header with block size 0".into())),
        (1, d) => Granularity::Fgq { block_size: d },
        (t, _) => return Err(Error::InvariantViolation(format!("unknown granularity tag {t}"))),
    };
    let scheme = QuantScheme { granularity, format };
    if bias_shift && format == WeightFormat::Int4Asym {
        return Err(Error::InvariantViolation("bias shift set on an INT4 tensor".into()));
    }
    let n = rows.checked_mul(cols).ok_or_else(|| Error::InvariantViolation(format!("{rows}x{cols} overflows")))?;
    let blocks = rows
        .checked_mul(scheme.blocks_per_row(cols))
        .ok_or_else(|| Error::InvariantViolation("block count overflows".into()))?;

    let scales = r.f16s(blocks, "scales")?;
    let zero_points = match format {
        WeightFormat::Int4Asym => Some(r.f16s(blocks, "zero points")?),
        _ => None,
    };
    let folded_raw = if bias_shift { Some(r.f16s(blocks, "folded scales")?) } else { None };

    let payload = match format.minifloat() {
        Some(f) => {
            let heads = r.blob(crate::packing::head_len(n), "head segments")?;
            let tails = r.blob(crate::packing::tail_len(f, n), "tail segments")?;
            Payload::MiniFloat(
                PackedSegments::from_parts(f, heads, tails, n).map_err(|e| Error::InvariantViolation(e.to_string()))?,
            )
        }
        None => Payload::Int4(r.blob(crate::packing::int4_len(n), "INT4 payload")?),
    };
    if r.pos != bytes.len() {
        return Err(Error::InvariantViolation(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let block_params: Vec<BlockParams> = match &zero_points {
        Some(z) => scales.iter().zip(z).map(|(&scale, &z)| BlockParams { scale, zero_point: Some(z) }).collect(),
        None => scales.iter().map(|&scale| BlockParams { scale, zero_point: None }).collect(),
    };
    let folded = match (folded_raw, format.minifloat()) {
        (Some(raw), Some(f)) => Some(check_folded(f, &block_params, &raw)?),
        _ => None,
    };
    QuantizedTensor::from_parts(rows, cols, scheme, block_params, payload, folded)
}

fn check_folded(
    format: MiniFloatFormat,
    params: &[BlockParams],
    raw: &[f16],
) -> Result<Vec<crate::dequant::FoldedScale>> {
    params
        .iter()
        .zip(raw)
        .enumerate()
        .map(|(i, (p, stored))| {
            let want = fold_scale(format, p.scale).map_err(|e| Error::InvariantViolation(format!("block {i}: {e}")))?;
            if want.to_bits() != stored.to_bits() {
                return Err(Error::InvariantViolation(format!(
                    "block {i}: folded scale {stored} does not match scale {}",
                    p.scale
                )));
            }
            Ok(want)
        })
        .collect()
}

/// Read a complete `.lpqt` stream.
pub fn read_lpqt(mut input: impl Read) -> Result<QuantizedTensor> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

/// Element type of a headerless raw tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawDtype {
    F32Le,
    F16Le,
}

impl RawDtype {
    pub fn width(self) -> usize {
        match self {
            RawDtype::F32Le => 4,
            RawDtype::F16Le => 2,
        }
    }
}

/// Interpret `bytes` as a row-major `rows x cols` tensor.
pub fn read_raw(bytes: &[u8], rows: usize, cols: usize, dtype: RawDtype) -> Result<Matrix<f32>> {
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.width()))
        .ok_or_else(|| Error::ShapeError(format!("{rows}x{cols} overflows")))?;
    if bytes.len() != expected {
        return Err(Error::LengthMismatch { expected, found: bytes.len() });
    }
    let data = match dtype {
        RawDtype::F32Le => bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
        RawDtype::F16Le => bytes.chunks_exact(2).map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32()).collect(),
    };
    Matrix::new(rows, cols, data)
}

/// Row-major raw dump of `m`.
pub fn write_raw(m: &Matrix<f32>, dtype: RawDtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(m.len() * dtype.width());
    for &v in m.as_slice() {
        match dtype {
            RawDtype::F32Le => out.extend_from_slice(&v.to_le_bytes()),
            RawDtype::F16Le => out.extend_from_slice(&f16::from_f32(v).to_le_bytes()),
        }
    }
    out
}
