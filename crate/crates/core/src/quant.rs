//! Block partitioning, scale selection, and whole-tensor quantization.
//!
//! A tensor is split into blocks that never cross a row: one block per row
//! for coarse-grain quantization (CGQ), or `ceil(cols / d)` blocks of `d`
//! columns for fine-grain quantization (FGQ), the last one possibly short.
//!
//! Minifloat blocks use a symmetric scale `S = max|w| / max_value` and map
//! `w / S` to the nearest code. INT4 blocks are asymmetric:
//! `x_zero = min(w)`, `S = (max - min) / 15`, `q = clamp(round((w - x_zero) / S), 0, 15)`.
//! Scales and zero points are stored as binary16, and every computation uses
//! those rounded values.

use std::fmt;

use half::f16;

use crate::codec::{decode, encode_rtn, Code, MiniFloatFormat};
use crate::dequant::{fold_scale, BlockScale, DequantPath, FoldedScale};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::matrix::Matrix;
use crate::packing::{self, int4_at, PackedSegments};

/// Highest INT4 level.
pub const INT4_MAX_LEVEL: u8 = 15;

/// Block size used by FGQ when none is given.
pub const DEFAULT_BLOCK_SIZE: usize = 256;

/// Numeric format of the stored weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightFormat {
    Fp6E3M2,
    Fp5E3M1,
    /// Asymmetric 4-bit integers with a per-block zero point.
    Int4Asym,
}

impl WeightFormat {
    pub const ALL: [WeightFormat; 3] = [WeightFormat::Fp6E3M2, WeightFormat::Fp5E3M1, WeightFormat::Int4Asym];

    pub fn minifloat(self) -> Option<MiniFloatFormat> {
        match self {
            WeightFormat::Fp6E3M2 => Some(MiniFloatFormat::Fp6E3M2),
            WeightFormat::Fp5E3M1 => Some(MiniFloatFormat::Fp5E3M1),
            WeightFormat::Int4Asym => None,
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            WeightFormat::Fp6E3M2 => 6,
            WeightFormat::Fp5E3M1 => 5,
            WeightFormat::Int4Asym => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WeightFormat::Fp6E3M2 => "fp6_e3m2",
            WeightFormat::Fp5E3M1 => "fp5_e3m1",
            WeightFormat::Int4Asym => "int4_asym",
        }
    }
}

impl From<MiniFloatFormat> for WeightFormat {
    fn from(f: MiniFloatFormat) -> Self {
        match f {
            MiniFloatFormat::Fp6E3M2 => WeightFormat::Fp6E3M2,
            MiniFloatFormat::Fp5E3M1 => WeightFormat::Fp5E3M1,
        }
    }
}

impl fmt::Display for WeightFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    /// One block per row.
    Cgq,
    /// Blocks of `block_size` consecutive elements within a row.
    Fgq { block_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantScheme {
    pub granularity: Granularity,
    pub format: WeightFormat,
}

impl QuantScheme {
    pub fn cgq(format: WeightFormat) -> Self {
        QuantScheme { granularity: Granularity::Cgq, format }
    }

    pub fn fgq(format: WeightFormat, block_size: usize) -> Self {
        QuantScheme { granularity: Granularity::Fgq { block_size }, format }
    }

    /// Stored block-size field: 0 for CGQ.
    pub fn block_size(&self) -> usize {
        match self.granularity {
            Granularity::Cgq => 0,
            Granularity::Fgq { block_size } => block_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.granularity {
            Granularity::Fgq { block_size: 0 } => Err(Error::InvalidScheme("FGQ block size must be at least 1".into())),
            _ => Ok(()),
        }
    }

    /// Width of a full block in a row of `cols` elements.
    pub fn effective_block_size(&self, cols: usize) -> usize {
        match self.granularity {
            Granularity::Cgq => cols,
            Granularity::Fgq { block_size } => block_size,
        }
    }

    pub fn blocks_per_row(&self, cols: usize) -> usize {
        match self.effective_block_size(cols) {
            0 => 0,
            d => cols.div_ceil(d),
        }
    }

    pub fn block_count(&self, rows: usize, cols: usize) -> usize {
        rows * self.blocks_per_row(cols)
    }
}

/// One block: columns `col_start..col_end` of `row`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockDesc {
    pub row: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl BlockDesc {
    pub fn width(&self) -> usize {
        self.col_end - self.col_start
    }
}

/// Row-major list of blocks for a `rows x cols` tensor.
pub fn partition_blocks(rows: usize, cols: usize, scheme: &QuantScheme) -> Result<Vec<BlockDesc>> {
    scheme.validate()?;
    let d = scheme.effective_block_size(cols);
    let mut out = Vec::with_capacity(scheme.block_count(rows, cols));
    for row in 0..rows {
        for j in 0..scheme.blocks_per_row(cols) {
            let col_start = j * d;
            out.push(BlockDesc { row, col_start, col_end: (col_start + d).min(cols) });
        }
    }
    Ok(out)
}

/// Per-block dequantization parameters. Equality is bitwise.
#[derive(Debug, Clone, Copy)]
pub struct BlockParams {
    pub scale: f16,
    /// Present only for INT4.
    pub zero_point: Option<f16>,
}

impl PartialEq for BlockParams {
    fn eq(&self, other: &Self) -> bool {
        self.scale.to_bits() == other.scale.to_bits()
            && self.zero_point.map(f16::to_bits) == other.zero_point.map(f16::to_bits)
    }
}

impl Eq for BlockParams {}

fn check_finite(values: &[f32]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(Error::InvalidInput(format!("non-finite weight {v}"))),
        None => Ok(()),
    }
}

fn check_non_empty(values: &[f32]) -> Result<()> {
    if values.is_empty() {
        Err(Error::InvalidInput("empty block".into()))
    } else {
        Ok(())
    }
}

/// Round a positive scale to binary16. Values that would flush to zero
/// become the smallest subnormal; overflow is an error.
fn scale_to_f16(scale: f64) -> Result<f16> {
    let s = f16::from_f64(scale);
    if s.is_infinite() {
        return Err(Error::ScaleOverflow(format!("scale {scale} exceeds binary16 range")));
    }
    Ok(if s == f16::ZERO { f16::from_bits(1) } else { s })
}

/// Symmetric max-abs scale for a minifloat block.
pub fn compute_scale_fp(values: &[f32], format: MiniFloatFormat) -> Result<BlockParams> {
    check_non_empty(values)?;
    check_finite(values)?;
    let max_abs = values.iter().fold(0.0f64, |m, &v| m.max((v as f64).abs()));
    let scale = if max_abs == 0.0 { f16::ONE } else { scale_to_f16(max_abs / format.max_value())? };
    Ok(BlockParams { scale, zero_point: None })
}

/// Min-max affine parameters for an INT4 block.
pub fn compute_affine_params_int4(values: &[f32]) -> Result<BlockParams> {
    check_non_empty(values)?;
    check_finite(values)?;
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v as f64), hi.max(v as f64)));
    let zero = f16::from_f64(min);
    if zero.is_infinite() {
        return Err(Error::ScaleOverflow(format!("zero point {min} exceeds binary16 range")));
    }
    let scale = if max == min { f16::ONE } else { scale_to_f16((max - min) / INT4_MAX_LEVEL as f64)? };
    Ok(BlockParams { scale, zero_point: Some(zero) })
}

/// INT4 level for `w` under `params`.
fn int4_level(w: f32, scale: f16, zero: f16) -> u8 {
    let q = ((w as f64 - zero.to_f64()) / scale.to_f64()).round_ties_even();
    q.clamp(0.0, INT4_MAX_LEVEL as f64) as u8
}

/// Code storage of a quantized tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    MiniFloat(PackedSegments),
    /// Two levels per byte, even index in the low nibble.
    Int4(Vec<u8>),
}

impl Payload {
    pub fn byte_len(&self) -> usize {
        match self {
            Payload::MiniFloat(p) => p.byte_len(),
            Payload::Int4(b) => b.len(),
        }
    }
}

/// A quantized weight matrix. Immutable once built; all constructors
/// check the full set of structural invariants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedTensor {
    rows: usize,
    cols: usize,
    scheme: QuantScheme,
    block_params: Vec<BlockParams>,
    payload: Payload,
    folded_scales: Option<Vec<FoldedScale>>,
}

impl QuantizedTensor {
    /// Assemble a tensor from stored parts, rejecting any inconsistency.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        scheme: QuantScheme,
        block_params: Vec<BlockParams>,
        payload: Payload,
        folded_scales: Option<Vec<FoldedScale>>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvariantViolation(msg));
        scheme.validate().map_err(|e| Error::InvariantViolation(e.to_string()))?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::InvariantViolation(format!("{rows}x{cols} overflows")))?;
        let blocks = scheme.block_count(rows, cols);
        if block_params.len() != blocks {
            return bad(format!("expected {blocks} block parameters, got {}", block_params.len()));
        }
        let is_int4 = scheme.format == WeightFormat::Int4Asym;
        for (i, p) in block_params.iter().enumerate() {
            if !p.scale.is_finite() || p.scale <= f16::ZERO {
                return bad(format!("block {i} scale {} is not positive and finite", p.scale));
            }
            match p.zero_point {
                Some(z) if !is_int4 => return bad(format!("block {i} has a zero point {z} in a minifloat tensor")),
                Some(z) if !z.is_finite() => return bad(format!("block {i} zero point is not finite")),
                None if is_int4 => return bad(format!("INT4 block {i} lacks a zero point")),
                _ => {}
            }
        }
        match (&payload, scheme.format.minifloat()) {
            (Payload::MiniFloat(p), Some(f)) => {
                if p.code_count() != n
                    || p.heads().len() != packing::head_len(n)
                    || p.tails().len() != packing::tail_len(f, n)
                {
                    return bad(format!("packed payload does not hold {n} {f} codes"));
                }
            }
            (Payload::Int4(b), None) => {
                if b.len() != packing::int4_len(n) {
                    return bad(format!("INT4 payload of {} bytes does not hold {n} levels", b.len()));
                }
            }
            _ => return bad("payload kind does not match format".into()),
        }
        if let Some(folded) = &folded_scales {
            let Some(f) = scheme.format.minifloat() else {
                return bad("folded scales on an INT4 tensor".into());
            };
            if folded.len() != blocks {
                return bad(format!("expected {blocks} folded scales, got {}", folded.len()));
            }
            for (i, (p, fs)) in block_params.iter().zip(folded).enumerate() {
                match fold_scale(f, p.scale) {
                    Ok(want) if want == *fs => {}
                    _ => return bad(format!("folded scale of block {i} does not match its scale")),
                }
            }
        }
        Ok(QuantizedTensor { rows, cols, scheme, block_params, payload, folded_scales })
    }

    /// Precompute folded scales so the bias-shift path is available.
    pub fn with_bias_shift(mut self) -> Result<Self> {
        let Some(f) = self.scheme.format.minifloat() else {
            return Err(Error::InvalidScheme("bias shift applies to minifloat formats only".into()));
        };
        let folded = self.block_params.iter().map(|p| fold_scale(f, p.scale)).collect::<Result<Vec<_>>>()?;
        self.folded_scales = Some(folded);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn scheme(&self) -> &QuantScheme {
        &self.scheme
    }

    pub fn block_params(&self) -> &[BlockParams] {
        &self.block_params
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn folded_scales(&self) -> Option<&[FoldedScale]> {
        self.folded_scales.as_deref()
    }

    pub fn bias_shift(&self) -> bool {
        self.folded_scales.is_some()
    }

    pub fn block_count(&self) -> usize {
        self.block_params.len()
    }

    pub fn blocks_per_row(&self) -> usize {
        self.scheme.blocks_per_row(self.cols)
    }

    pub fn block_width(&self) -> usize {
        self.scheme.effective_block_size(self.cols)
    }

    /// Scale material for `block` on `path`.
    pub fn block_scale(&self, block: usize, path: DequantPath) -> Result<BlockScale> {
        if self.scheme.format == WeightFormat::Int4Asym {
            return Err(Error::PathUnavailable("INT4 tensors have no minifloat dequantization path".into()));
        }
        match path {
            DequantPath::Naive => Ok(BlockScale::Naive(self.block_params[block].scale)),
            DequantPath::BiasShift => match &self.folded_scales {
                Some(f) => Ok(BlockScale::BiasShift(f[block])),
                None => Err(Error::PathUnavailable("tensor was quantized without bias shift".into())),
            },
        }
    }

    /// Bytes of per-block metadata (scales and zero points).
    pub fn param_bytes(&self) -> usize {
        let per_block = if self.scheme.format == WeightFormat::Int4Asym { 4 } else { 2 };
        self.block_params.len() * per_block
    }

    /// Weight bytes read by a kernel: payload plus per-block metadata.
    pub fn weight_bytes(&self) -> usize {
        self.payload.byte_len() + self.param_bytes()
    }
}

/// Quantize `w` under `scheme`.
pub fn quantize_tensor(w: &Matrix<f32>, scheme: &QuantScheme) -> Result<QuantizedTensor> {
    quantize_tensor_with(w, scheme, Execution::default())
}

/// [`quantize_tensor`] with explicit scheduling.
pub fn quantize_tensor_with(w: &Matrix<f32>, scheme: &QuantScheme, exec: Execution) -> Result<QuantizedTensor> {
    scheme.validate()?;
    let (rows, cols) = w.shape();
    let d = scheme.effective_block_size(cols);
    let format = scheme.format;

    let per_row = exec::map_indices(exec, rows, |r| -> Result<(Vec<BlockParams>, Vec<u8>)> {
        let row = w.row(r);
        let mut params = Vec::with_capacity(scheme.blocks_per_row(cols));
        let mut codes = Vec::with_capacity(cols);
        if d == 0 {
            return Ok((params, codes));
        }
        for block in row.chunks(d) {
            match format.minifloat() {
                Some(f) => {
                    let p = compute_scale_fp(block, f)?;
                    let s = p.scale.to_f64();
                    for &x in block {
                        codes.push(encode_rtn(f, x as f64 / s)?.bits());
                    }
                    params.push(p);
                }
                None => {
                    let p = compute_affine_params_int4(block)?;
                    let z = p.zero_point.expect("INT4 params carry a zero point");
                    codes.extend(block.iter().map(|&x| int4_level(x, p.scale, z)));
                    params.push(p);
                }
            }
        }
        Ok((params, codes))
    });

    let mut block_params = Vec::with_capacity(scheme.block_count(rows, cols));
    let mut codes = Vec::with_capacity(rows * cols);
    for row in per_row {
        let (p, c) = row?;
        block_params.extend(p);
        codes.extend(c);
    }
    let payload = match format.minifloat() {
        Some(f) => {
            let codes: Vec<Code> = codes.into_iter().map(Code).collect();
            Payload::MiniFloat(packing::pack(f, &codes)?)
        }
        None => Payload::Int4(packing::pack_int4(&codes)?),
    };
    QuantizedTensor::from_parts(rows, cols, *scheme, block_params, payload, None)
}

/// Exact reconstruction `S * v` (minifloat) or `S * q + x_zero` (INT4).
///
/// Each product and sum fits in an f64 significand, so no rounding occurs.
pub fn dequantize_tensor(q: &QuantizedTensor) -> Result<Matrix<f64>> {
    dequantize_tensor_with(q, Execution::default())
}

pub fn dequantize_tensor_with(q: &QuantizedTensor, exec: Execution) -> Result<Matrix<f64>> {
    check_payload(q)?;
    let (rows, cols) = (q.rows, q.cols);
    let mut out = Matrix::<f64>::zeros(rows, cols);
    let d = q.block_width();
    let bpr = q.blocks_per_row();
    exec::for_each_row(exec, out.as_mut_slice(), cols, |r, row| {
        for (j, chunk) in row.chunks_mut(d).enumerate() {
            let p = q.block_params[r * bpr + j];
            let s = p.scale.to_f64();
            let base = r * cols + j * d;
            match (&q.payload, q.scheme.format.minifloat()) {
                (Payload::MiniFloat(seg), Some(f)) => {
                    for (k, o) in chunk.iter_mut().enumerate() {
                        *o = s * decode(f, seg.code(f, base + k));
                    }
                }
                (Payload::Int4(bytes), _) => {
                    let z = p.zero_point.map_or(0.0, f16::to_f64);
                    for (k, o) in chunk.iter_mut().enumerate() {
                        *o = s * int4_at(bytes, base + k) as f64 + z;
                    }
                }
                _ => unreachable!("payload kind checked at construction"),
            }
        }
    });
    Ok(out)
}

/// binary16 reconstruction through one of the dequantization paths.
///
/// INT4 tensors support only [`DequantPath::Naive`], computed as the
/// binary16 rounding of the exact affine value.
pub fn dequantize_tensor_f16(q: &QuantizedTensor, path: DequantPath) -> Result<Matrix<f16>> {
    check_payload(q)?;
    let (rows, cols) = (q.rows, q.cols);
    if q.scheme.format == WeightFormat::Int4Asym {
        if path == DequantPath::BiasShift {
            return Err(Error::PathUnavailable("bias shift applies to minifloat formats only".into()));
        }
        let exact = dequantize_tensor(q)?;
        return Ok(exact.map(|&v| f16::from_f64(v)));
    }
    let scales = (0..q.block_count()).map(|b| q.block_scale(b, path)).collect::<Result<Vec<_>>>()?;
    let Payload::MiniFloat(seg) = &q.payload else { unreachable!("payload kind checked at construction") };
    let f = q.scheme.format.minifloat().expect("minifloat format");
    let mut out = Matrix::<f16>::zeros(rows, cols);
    let d = q.block_width();
    let bpr = q.blocks_per_row();
    exec::for_each_row(Execution::default(), out.as_mut_slice(), cols, |r, row| {
        for (j, chunk) in row.chunks_mut(d).enumerate() {
            let scale = scales[r * bpr + j];
            let base = r * cols + j * d;
            for (k, o) in chunk.iter_mut().enumerate() {
                *o = scale.apply(f, seg.code(f, base + k));
            }
        }
    });
    Ok(out)
}

fn check_payload(q: &QuantizedTensor) -> Result<()> {
    let n = q.rows * q.cols;
    let ok = match &q.payload {
        Payload::MiniFloat(p) => p.code_count() == n,
        Payload::Int4(b) => b.len() == packing::int4_len(n),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::PayloadMismatch(format!("payload does not cover {}x{}", q.rows, q.cols)))
    }
}

/// Reconstruction error statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub mse: f64,
    pub max_abs_error: f64,
    /// `10 log10(signal power / error power)`; `+inf` for exact reconstruction.
    pub sqnr_db: f64,
}

impl fmt::Display for ErrorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mse={:e}", self.mse)?;
        writeln!(f, "max_abs={:e}", self.max_abs_error)?;
        write!(f, "sqnr_db={:.4}", self.sqnr_db)
    }
}

/// Compare a tensor with its reconstruction element by element.
pub fn error_report<A, B>(w: &Matrix<A>, w_hat: &Matrix<B>) -> Result<ErrorReport>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    if w.shape() != w_hat.shape() {
        return Err(Error::ShapeError(format!(
            "{}x{} vs {}x{}",
            w.rows(),
            w.cols(),
            w_hat.rows(),
            w_hat.cols()
        )));
    }
    let (mut signal, mut noise, mut max_abs) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in w.as_slice().iter().zip(w_hat.as_slice()) {
        let (a, b): (f64, f64) = (a.into(), b.into());
        let e = (a - b).abs();
        signal += a * a;
        noise += e * e;
        max_abs = max_abs.max(e);
    }
    let n = w.len();
    let mse = if n == 0 { 0.0 } else { noise / n as f64 };
    let sqnr_db = if noise == 0.0 { f64::INFINITY } else { 10.0 * (signal / noise).log10() };
    Ok(ErrorReport { mse, max_abs_error: max_abs, sqnr_db })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FP6: WeightFormat = WeightFormat::Fp6E3M2;
    const INT4: WeightFormat = WeightFormat::Int4Asym;

    fn m(rows: usize, cols: usize, data: &[f32]) -> Matrix<f32> {
        Matrix::new(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn partition_examples() {
        let b = partition_blocks(2, 8, &QuantScheme::cgq(FP6)).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.iter().all(|b| b.width() == 8));
        assert_eq!(partition_blocks(1, 1024, &QuantScheme::fgq(FP6, 256)).unwrap().len(), 4);
        let widths: Vec<usize> =
            partition_blocks(1, 300, &QuantScheme::fgq(FP6, 128)).unwrap().iter().map(BlockDesc::width).collect();
        assert_eq!(widths, [128, 128, 44]);
        assert!(matches!(partition_blocks(1, 4, &QuantScheme::fgq(FP6, 0)), Err(Error::InvalidScheme(_))));
    }

    #[test]
    fn blocks_stay_within_rows() {
        let blocks = partition_blocks(3, 10, &QuantScheme::fgq(INT4, 4)).unwrap();
        assert_eq!(blocks.len(), 9);
        for (i, b) in blocks.iter().enumerate() {
            assert_eq!(b.row, i / 3);
            assert!(b.col_end <= 10 && b.col_start < b.col_end);
        }
    }

    #[test]
    fn fp_scale_examples() {
        let f = MiniFloatFormat::Fp6E3M2;
        assert_eq!(compute_scale_fp(&[1.0, -14.0], f).unwrap().scale, f16::from_f32(0.5));
        assert_eq!(compute_scale_fp(&[28.0], f).unwrap().scale, f16::ONE);
        assert_eq!(compute_scale_fp(&[0.0, 0.0], f).unwrap().scale, f16::ONE);
        assert_eq!(compute_scale_fp(&[24.0], MiniFloatFormat::Fp5E3M1).unwrap().scale, f16::ONE);
        assert!(matches!(compute_scale_fp(&[f32::NAN], f), Err(Error::InvalidInput(_))));
        assert!(matches!(compute_scale_fp(&[], f), Err(Error::InvalidInput(_))));
        // Flush-to-zero is replaced by the smallest subnormal.
        assert_eq!(compute_scale_fp(&[1e-12], f).unwrap().scale.to_bits(), 1);
        assert!(matches!(compute_scale_fp(&[1e30], f), Err(Error::ScaleOverflow(_))));
    }

    #[test]
    fn int4_param_examples() {
        let p = compute_affine_params_int4(&[-1.0, 0.0, 3.0]).unwrap();
        assert_eq!(p.scale, f16::from_f64(4.0 / 15.0));
        assert!((p.scale.to_f64() - 0.2667).abs() < 1e-3);
        assert_eq!(p.zero_point, Some(f16::from_f32(-1.0)));
        let p = compute_affine_params_int4(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!((p.scale, p.zero_point), (f16::ONE, Some(f16::from_f32(5.0))));
        let p = compute_affine_params_int4(&[0.0, 15.0]).unwrap();
        assert_eq!((p.scale, p.zero_point), (f16::ONE, Some(f16::ZERO)));
        assert!(compute_affine_params_int4(&[f32::INFINITY]).is_err());
    }

    #[test]
    fn fp6_quantize_example() {
        let w = m(1, 3, &[0.5, -1.0, 14.0]);
        let q = quantize_tensor(&w, &QuantScheme::cgq(FP6)).unwrap();
        assert_eq!(q.block_params()[0].scale, f16::from_f32(0.5));
        let Payload::MiniFloat(seg) = q.payload() else { panic!() };
        let f = MiniFloatFormat::Fp6E3M2;
        let raw: Vec<f64> = (0..3).map(|i| decode(f, seg.code(f, i))).collect();
        assert_eq!(raw, [1.0, -2.0, 28.0]);
        let back = dequantize_tensor(&q).unwrap();
        assert_eq!(back.as_slice(), &[0.5, -1.0, 14.0]);
    }

    #[test]
    fn zeros_quantize_to_zero_codes() {
        for format in WeightFormat::ALL {
            let w = Matrix::<f32>::zeros(3, 5);
            let q = quantize_tensor(&w, &QuantScheme::fgq(format, 2)).unwrap();
            let back = dequantize_tensor(&q).unwrap();
            assert!(back.as_slice().iter().all(|&v| v == 0.0), "{format}");
            match q.payload() {
                Payload::MiniFloat(p) => assert!(p.heads().iter().chain(p.tails()).all(|&b| b == 0)),
                Payload::Int4(b) => assert!(b.iter().all(|&b| b == 0)),
            }
        }
    }

    #[test]
    fn int4_quantize_example() {
        let w = m(1, 3, &[-1.0, 0.0, 3.0]);
        let q = quantize_tensor(&w, &QuantScheme::cgq(INT4)).unwrap();
        let Payload::Int4(bytes) = q.payload() else { panic!() };
        assert_eq!(packing::unpack_int4(bytes, 3).unwrap(), [0, 4, 15]);
        let back = dequantize_tensor(&q).unwrap();
        let s = f16::from_f64(4.0 / 15.0).to_f64();
        assert_eq!(back.as_slice(), &[-1.0, -1.0 + 4.0 * s, -1.0 + 15.0 * s]);
        assert!((back.as_slice()[1] - 0.0667).abs() < 1e-3);
        assert!((back.as_slice()[2] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn empty_tensor() {
        let w = Matrix::<f32>::zeros(0, 0);
        for format in WeightFormat::ALL {
            let q = quantize_tensor(&w, &QuantScheme::cgq(format)).unwrap();
            assert_eq!(q.block_count(), 0);
            assert!(dequantize_tensor(&q).unwrap().is_empty());
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let w = m(1, 2, &[1.0, f32::NAN]);
        assert!(matches!(quantize_tensor(&w, &QuantScheme::cgq(FP6)), Err(Error::InvalidInput(_))));
        assert!(matches!(quantize_tensor(&w, &QuantScheme::cgq(INT4)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn f16_paths_agree() {
        let w = Matrix::from_fn(5, 37, |r, c| ((r * 37 + c) as f32 * 0.731).sin() * 3.0);
        let q = quantize_tensor(&w, &QuantScheme::fgq(FP6, 8)).unwrap().with_bias_shift().unwrap();
        let a = dequantize_tensor_f16(&q, DequantPath::Naive).unwrap();
        let b = dequantize_tensor_f16(&q, DequantPath::BiasShift).unwrap();
        assert_eq!(a.map(|v| v.to_bits()), b.map(|v| v.to_bits()));
        let exact = dequantize_tensor(&q).unwrap();
        for (x, y) in a.as_slice().iter().zip(exact.as_slice()) {
            assert_eq!(*x, f16::from_f64(*y));
        }
    }

    #[test]
    fn path_availability() {
        let w = m(1, 2, &[1.0, 2.0]);
        let q = quantize_tensor(&w, &QuantScheme::cgq(FP6)).unwrap();
        assert!(matches!(dequantize_tensor_f16(&q, DequantPath::BiasShift), Err(Error::PathUnavailable(_))));
        let q4 = quantize_tensor(&w, &QuantScheme::cgq(INT4)).unwrap();
        assert!(matches!(q4.clone().with_bias_shift(), Err(Error::InvalidScheme(_))));
        assert!(matches!(dequantize_tensor_f16(&q4, DequantPath::BiasShift), Err(Error::PathUnavailable(_))));
        assert!(dequantize_tensor_f16(&q4, DequantPath::Naive).is_ok());
    }

    #[test]
    fn from_parts_rejects_inconsistency() {
        let w = m(2, 4, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let q = quantize_tensor(&w, &QuantScheme::cgq(FP6)).unwrap().with_bias_shift().unwrap();
        let rebuild = |params: Vec<BlockParams>, payload: Payload, folded: Option<Vec<FoldedScale>>| {
            QuantizedTensor::from_parts(2, 4, *q.scheme(), params, payload, folded)
        };
        let ok = rebuild(q.block_params().to_vec(), q.payload().clone(), q.folded_scales().map(<[_]>::to_vec));
        assert_eq!(ok.unwrap(), q);
        let few = rebuild(q.block_params()[..1].to_vec(), q.payload().clone(), None);
        assert!(matches!(few, Err(Error::InvariantViolation(_))));
        let mut params = q.block_params().to_vec();
        params[0].zero_point = Some(f16::ZERO);
        assert!(rebuild(params, q.payload().clone(), None).is_err());
        let wrong_payload = rebuild(q.block_params().to_vec(), Payload::Int4(vec![0; 4]), None);
        assert!(wrong_payload.is_err());
        let mut folded = q.folded_scales().unwrap().to_vec();
        folded.swap(0, 1);
        assert!(rebuild(q.block_params().to_vec(), q.payload().clone(), Some(folded)).is_err());
    }

    #[test]
    fn error_report_examples() {
        let a = m(1, 2, &[3.0, 4.0]);
        let r = error_report(&a, &a).unwrap();
        assert_eq!((r.mse, r.max_abs_error, r.sqnr_db), (0.0, 0.0, f64::INFINITY));
        let r = error_report(&m(1, 1, &[1.0]), &m(1, 1, &[0.5])).unwrap();
        assert_eq!((r.mse, r.max_abs_error), (0.25, 0.5));
        let w_hat = Matrix::new(1, 2, vec![3.3f64, 3.6]).unwrap();
        let a64 = Matrix::new(1, 2, vec![3.0f64, 4.0]).unwrap();
        let r = error_report(&a64, &w_hat).unwrap();
        assert!((r.max_abs_error - 0.4).abs() < 1e-12);
        assert!((r.mse - 0.125).abs() < 1e-12);
        assert!((r.sqnr_db - 10.0 * (25.0f64 / 0.25).log10()).abs() < 1e-9);
        assert!(matches!(error_report(&a, &m(2, 1, &[3.0, 4.0])), Err(Error::ShapeError(_))));
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let w = Matrix::from_fn(33, 70, |r, c| ((r * 70 + c) as f32 * 1.37).cos() * 5.0);
        for format in WeightFormat::ALL {
            let scheme = QuantScheme::fgq(format, 16);
            let a = quantize_tensor_with(&w, &scheme, Execution::Sequential).unwrap();
            let b = quantize_tensor_with(&w, &scheme, Execution::Parallel).unwrap();
            assert_eq!(a, b);
            assert_eq!(
                dequantize_tensor_with(&a, Execution::Sequential).unwrap(),
                dequantize_tensor_with(&a, Execution::Parallel).unwrap()
            );
        }
    }
}
