//! Weight-only low-bit quantization.
//!
//! Round-to-nearest quantization of dense weight matrices to FP6 (E3M2),
//! FP5 (E3M1), or asymmetric INT4, with per-row (CGQ) or per-block (FGQ)
//! scales. Minifloat codes are stored in a 4+2 (or 4+1) segmented layout and
//! dequantized to binary16 either through a naive exponent rebuild or
//! through the bias-shift path that folds the exponent correction into the
//! scale. A reference dequantize-on-the-fly GEMM and the `.lpqt` container
//! round out the pipeline.
//!
//! ```
//! use lpq::{quantize_tensor, dequantize_tensor, Matrix, QuantScheme, WeightFormat};
//!
//! let w = Matrix::new(1, 3, vec![0.5f32, -1.0, 14.0]).unwrap();
//! let q = quantize_tensor(&w, &QuantScheme::cgq(WeightFormat::Fp6E3M2)).unwrap();
//! let back = dequantize_tensor(&q).unwrap();
//! assert_eq!(back.as_slice(), &[0.5, -1.0, 14.0]);
//! ```

pub mod codec;
pub mod container;
pub mod dequant;
pub mod error;
pub mod exec;
pub mod gemm;
pub mod matrix;
pub mod packing;
pub mod quant;

pub use half::f16;

pub use codec::{codebook, decode, encode_rtn, Code, MiniFloatFormat};
pub use container::{from_bytes, read_lpqt, read_raw, to_bytes, write_lpqt, write_raw, RawDtype};
pub use dequant::{
    dequant_bias_shift, dequant_block, dequant_naive, fold_scale, BlockScale, DequantPath, FoldedScale,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use gemm::{compare_outputs, gemm_f16, gemm_quantized, gemm_quantized_with, gemm_reference, oracle_tolerance};
pub use matrix::Matrix;
pub use packing::{pack, pack_int4, split_code, unpack, unpack_int4, PackedSegments};
pub use quant::{
    compute_affine_params_int4, compute_scale_fp, dequantize_tensor, dequantize_tensor_f16, dequantize_tensor_with,
    error_report, partition_blocks, quantize_tensor, quantize_tensor_with, BlockDesc, BlockParams, ErrorReport,
    Granularity, Payload, QuantScheme, QuantizedTensor, WeightFormat,
};
