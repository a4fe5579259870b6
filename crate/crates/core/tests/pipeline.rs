use lpq::{
    dequantize_tensor, dequantize_tensor_f16, dequantize_tensor_with, from_bytes, gemm_quantized_with,
    gemm_reference, oracle_tolerance, quantize_tensor_with, read_lpqt, read_raw, to_bytes, write_lpqt, write_raw,
    DequantPath, Error, Execution, Matrix, QuantScheme, RawDtype, WeightFormat,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0f32, 0.05).unwrap();
    Matrix::from_fn(rows, cols, |_, _| n.sample(&mut rng))
}

fn schemes() -> Vec<QuantScheme> {
    let mut out = Vec::new();
    for f in WeightFormat::ALL {
        out.push(QuantScheme::cgq(f));
        out.push(QuantScheme::fgq(f, 64));
        out.push(QuantScheme::fgq(f, 50));
    }
    out
}

#[test]
fn raw_file_to_gemm() {
    let w = gaussian(48, 200, 1);
    let x = gaussian(200, 5, 2);
    let w = read_raw(&write_raw(&w, RawDtype::F32Le), 48, 200, RawDtype::F32Le).unwrap();
    for scheme in schemes() {
        let mut q = quantize_tensor_with(&w, &scheme, Execution::default()).unwrap();
        if scheme.format.minifloat().is_some() {
            q = q.with_bias_shift().unwrap();
        }
        let q = from_bytes(&to_bytes(&q)).unwrap();
        let w_hat = dequantize_tensor(&q).unwrap();
        let y_ref = gemm_reference(&w_hat, &x).unwrap();
        let tol = oracle_tolerance(&w_hat, &x);
        let paths: &[DequantPath] = if q.bias_shift() {
            &[DequantPath::Naive, DequantPath::BiasShift]
        } else {
            &[DequantPath::Naive]
        };
        for &path in paths {
            let y = gemm_quantized_with(&q, &x, path, Execution::default()).unwrap();
            for (a, b) in y.as_slice().iter().zip(y_ref.as_slice()) {
                assert!((*a as f64 - b).abs() <= tol, "{scheme:?} {path:?}: {a} vs {b} tol {tol}");
            }
        }
    }
}

#[test]
fn schedules_agree_bitwise() {
    let w = gaussian(33, 97, 3);
    let x = gaussian(97, 4, 4);
    for scheme in schemes() {
        let seq = quantize_tensor_with(&w, &scheme, Execution::Sequential).unwrap();
        let par = quantize_tensor_with(&w, &scheme, Execution::Parallel).unwrap();
        assert_eq!(to_bytes(&seq), to_bytes(&par));
        let a = dequantize_tensor_with(&seq, Execution::Sequential).unwrap();
        let b = dequantize_tensor_with(&par, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        let ya = gemm_quantized_with(&seq, &x, DequantPath::Naive, Execution::Sequential).unwrap();
        let yb = gemm_quantized_with(&par, &x, DequantPath::Naive, Execution::Parallel).unwrap();
        let bits = |m: &Matrix<f32>| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&ya), bits(&yb));
    }
}

#[test]
fn f16_paths_agree_and_round_exact_values() {
    let w = gaussian(16, 130, 5);
    for f in [WeightFormat::Fp6E3M2, WeightFormat::Fp5E3M1] {
        let q = quantize_tensor_with(&w, &QuantScheme::fgq(f, 32), Execution::default())
            .unwrap()
            .with_bias_shift()
            .unwrap();
        let exact = dequantize_tensor(&q).unwrap();
        let naive = dequantize_tensor_f16(&q, DequantPath::Naive).unwrap();
        let shifted = dequantize_tensor_f16(&q, DequantPath::BiasShift).unwrap();
        for ((e, n), s) in exact.as_slice().iter().zip(naive.as_slice()).zip(shifted.as_slice()) {
            assert_eq!(n.to_bits(), s.to_bits());
            assert_eq!(n.to_bits(), lpq::f16::from_f64(*e).to_bits());
        }
    }
}

#[test]
fn bias_shift_needs_folded_scales() {
    let w = gaussian(4, 16, 6);
    let q = quantize_tensor_with(&w, &QuantScheme::cgq(WeightFormat::Fp6E3M2), Execution::default()).unwrap();
    assert!(matches!(dequantize_tensor_f16(&q, DequantPath::BiasShift), Err(Error::PathUnavailable(_))));
    let int4 = quantize_tensor_with(&w, &QuantScheme::cgq(WeightFormat::Int4Asym), Execution::default()).unwrap();
    assert!(matches!(int4.with_bias_shift(), Err(Error::InvalidScheme(_))));
}

#[test]
fn streaming_io_matches_buffers() {
    let w = gaussian(7, 21, 7);
    let q = quantize_tensor_with(&w, &QuantScheme::fgq(WeightFormat::Fp5E3M1, 8), Execution::default()).unwrap();
    let mut buf = Vec::new();
    write_lpqt(&q, &mut buf).unwrap();
    assert_eq!(buf, to_bytes(&q));
    let back = read_lpqt(buf.as_slice()).unwrap();
    assert_eq!(to_bytes(&back), buf);
}

#[test]
fn f16_raw_input_is_exact_when_representable() {
    let w = Matrix::new(1, 4, vec![0.5f32, -1.0, 14.0, 0.25]).unwrap();
    let bytes = write_raw(&w, RawDtype::F16Le);
    assert_eq!(bytes.len(), 8);
    assert_eq!(read_raw(&bytes, 1, 4, RawDtype::F16Le).unwrap(), w);
}
