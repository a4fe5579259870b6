//! Dequantize-on-the-fly matrix multiplication `Y = W_hat * X`.
//!
//! Weights stay in code space during accumulation. For every output element,
//! each block's partial dot product of raw code values is accumulated in f32
//! (ascending `k`), then multiplied by that block's scale and added to the
//! row accumulator. Under CGQ the row is one block, so the scale is applied
//! once after the full accumulation. INT4 blocks add `x_zero * sum(x)`.
//!
//! Parallelism is over output rows only; each row's arithmetic order is
//! fixed, so results are bit-identical for every thread count.

use half::f16;

use crate::codec::MiniFloatFormat;
use crate::dequant::{bias_shift_cast, naive_cast, BlockScale, DequantPath};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::matrix::Matrix;
use crate::packing::int4_at;
use crate::quant::{error_report, ErrorReport, Payload, QuantizedTensor};

fn check_inner(k_w: usize, x: &Matrix<f32>) -> Result<()> {
    if k_w != x.rows() {
        return Err(Error::ShapeError(format!("weights have {k_w} columns but activations have {} rows", x.rows())));
    }
    if let Some(v) = x.as_slice().iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite activation {v}")));
    }
    Ok(())
}

/// Quantized GEMM with the default execution mode.
pub fn gemm_quantized(wq: &QuantizedTensor, x: &Matrix<f32>, path: DequantPath) -> Result<Matrix<f32>> {
    gemm_quantized_with(wq, x, path, Execution::default())
}

/// Quantized GEMM: `wq` is `N x K`, `x` is `K x M`, result is `N x M`.
///
/// `path` picks how codes become binary16 before accumulation: the naive
/// cast paired with `S`, or the bias-shift cast paired with the folded
/// scale. Both yield identical outputs.
pub fn gemm_quantized_with(
    wq: &QuantizedTensor,
    x: &Matrix<f32>,
    path: DequantPath,
    exec: Execution,
) -> Result<Matrix<f32>> {
    let (n, k) = (wq.rows(), wq.cols());
    check_inner(k, x)?;
    let m = x.cols();
    let minifloat = wq.scheme().format.minifloat();

    // Resolve per-block scales up front so path errors surface before work starts.
    let scales: Vec<f32> = match minifloat {
        Some(_) => (0..wq.block_count())
            .map(|b| {
                wq.block_scale(b, path).map(|s| match s {
                    BlockScale::Naive(s) => s.to_f32(),
                    BlockScale::BiasShift(f) => f.value().to_f32(),
                })
            })
            .collect::<Result<_>>()?,
        None => {
            if path == DequantPath::BiasShift {
                return Err(Error::PathUnavailable("bias shift applies to minifloat formats only".into()));
            }
            wq.block_params().iter().map(|p| p.scale.to_f32()).collect()
        }
    };
    let zeros: Vec<f32> =
        wq.block_params().iter().map(|p| p.zero_point.map_or(0.0, f16::to_f32)).collect();
    match wq.payload() {
        Payload::MiniFloat(p) if p.code_count() == n * k => {}
        Payload::Int4(b) if b.len() == n * k / 2 + (n * k) % 2 => {}
        _ => return Err(Error::PayloadMismatch("payload does not cover the weight shape".into())),
    }

    let d = wq.block_width();
    let bpr = wq.blocks_per_row();
    let xs = x.as_slice();
    let mut y = Matrix::<f32>::zeros(n, m);
    exec::for_each_row(exec, y.as_mut_slice(), m, |r, acc| {
        let mut vals = vec![0f32; k];
        decode_row(wq, minifloat, path, r, &mut vals);
        let mut partial = vec![0f32; m];
        let mut xsum = vec![0f32; m];
        for j in 0..bpr {
            let (start, end) = (j * d, ((j + 1) * d).min(k));
            partial.fill(0.0);
            xsum.fill(0.0);
            for kk in start..end {
                let v = vals[kk];
                let xrow = &xs[kk * m..(kk + 1) * m];
                for (p, &xv) in partial.iter_mut().zip(xrow) {
                    *p += v * xv;
                }
                if minifloat.is_none() {
                    for (s, &xv) in xsum.iter_mut().zip(xrow) {
                        *s += xv;
                    }
                }
            }
            let s = scales[r * bpr + j];
            if minifloat.is_some() {
                for (a, &p) in acc.iter_mut().zip(&partial) {
                    *a += s * p;
                }
            } else {
                let z = zeros[r * bpr + j];
                for ((a, &p), &sx) in acc.iter_mut().zip(&partial).zip(&xsum) {
                    *a += s * p + z * sx;
                }
            }
        }
    });
    Ok(y)
}

fn decode_row(wq: &QuantizedTensor, minifloat: Option<MiniFloatFormat>, path: DequantPath, r: usize, out: &mut [f32]) {
    let base = r * wq.cols();
    match (wq.payload(), minifloat) {
        (Payload::MiniFloat(seg), Some(f)) => {
            for (i, o) in out.iter_mut().enumerate() {
                let code = seg.code(f, base + i);
                let h = match path {
                    DequantPath::Naive => naive_cast(f, code),
                    DequantPath::BiasShift => bias_shift_cast(f, code),
                };
                *o = h.to_f32();
            }
        }
        (Payload::Int4(bytes), _) => {
            for (i, o) in out.iter_mut().enumerate() {
                *o = int4_at(bytes, base + i) as f32;
            }
        }
        _ => unreachable!("payload kind checked at construction"),
    }
}

/// Dense binary16 weights with f32 accumulation, ascending `k`.
pub fn gemm_f16(w: &Matrix<f16>, x: &Matrix<f32>, exec: Execution) -> Result<Matrix<f32>> {
    check_inner(w.cols(), x)?;
    let (k, m) = (w.cols(), x.cols());
    let xs = x.as_slice();
    let mut y = Matrix::<f32>::zeros(w.rows(), m);
    exec::for_each_row(exec, y.as_mut_slice(), m, |r, acc| {
        for (kk, wv) in w.row(r).iter().enumerate().take(k) {
            let v = wv.to_f32();
            for (a, &xv) in acc.iter_mut().zip(&xs[kk * m..(kk + 1) * m]) {
                *a += v * xv;
            }
        }
    });
    Ok(y)
}

/// Double-precision oracle: `W * X` with ascending-`k` f64 accumulation.
pub fn gemm_reference(w: &Matrix<f64>, x: &Matrix<f32>) -> Result<Matrix<f64>> {
    if w.cols() != x.rows() {
        return Err(Error::ShapeError(format!("weights have {} columns but activations have {} rows", w.cols(), x.rows())));
    }
    let (n, k, m) = (w.rows(), w.cols(), x.cols());
    Ok(Matrix::from_fn(n, m, |r, c| {
        let mut acc = 0.0f64;
        for kk in 0..k {
            acc += *w.get(r, kk) * *x.get(kk, c) as f64;
        }
        acc
    }))
}

/// Element-wise comparison of a GEMM result against the oracle.
pub fn compare_outputs(y: &Matrix<f32>, y_ref: &Matrix<f64>) -> Result<ErrorReport> {
    error_report(y_ref, y)
}

/// Element-wise tolerance `4 * eps_f32 * K * max|W_hat| * max|X|` for f32 accumulation.
pub fn oracle_tolerance(w_hat: &Matrix<f64>, x: &Matrix<f32>) -> f64 {
    let max_w = w_hat.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let max_x = x.as_slice().iter().fold(0.0f64, |a, v| a.max((*v as f64).abs()));
    4.0 * f32::EPSILON as f64 * w_hat.cols() as f64 * max_w * max_x
}
