//! `lpq bench`: wall-clock medians for the CPU reference paths.

use std::time::{Duration, Instant};

use clap::{Args, ValueEnum};
use lpq::{
    f16, gemm_f16, gemm_quantized_with, quantize_tensor_with, DequantPath, Execution, Matrix, QuantScheme,
    QuantizedTensor, WeightFormat,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{CliError, CliResult, Shape};

#[derive(Clone, Copy, ValueEnum)]
pub enum Preset {
    #[value(name = "ffn1-1b")]
    Ffn1_1b,
    #[value(name = "ffn2-1b")]
    Ffn2_1b,
    #[value(name = "ffn1-13b")]
    Ffn1_13b,
    #[value(name = "ffn2-13b")]
    Ffn2_13b,
    #[value(name = "ffn1-65b")]
    Ffn1_65b,
    #[value(name = "ffn2-65b")]
    Ffn2_65b,
}

impl Preset {
    fn shape(self) -> Shape {
        let (rows, cols) = match self {
            Preset::Ffn1_1b => (5504, 2048),
            Preset::Ffn2_1b => (2048, 5504),
            Preset::Ffn1_13b => (13824, 5120),
            Preset::Ffn2_13b => (5120, 13824),
            Preset::Ffn1_65b => (22016, 8192),
            Preset::Ffn2_65b => (8192, 22016),
        };
        Shape { rows, cols }
    }

    fn name(self) -> String {
        self.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default()
    }
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, conflicts_with = "shape")]
    preset: Option<Preset>,
    /// Weight shape N x K
    #[arg(long)]
    shape: Option<Shape>,
    /// Activation columns M
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 5)]
    repeat: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run every kernel on one thread
    #[arg(long)]
    sequential: bool,
}

fn median(mut samples: Vec<Duration>) -> Duration {
    samples.sort();
    samples[samples.len() / 2]
}

fn time<T>(repeat: usize, mut f: impl FnMut() -> lpq::Result<T>) -> CliResult<(Duration, T)> {
    let mut samples = Vec::with_capacity(repeat);
    let mut last = None;
    for _ in 0..repeat {
        let t = Instant::now();
        let out = f()?;
        samples.push(t.elapsed());
        last = Some(out);
    }
    Ok((median(samples), last.expect("repeat >= 1")))
}

fn report(name: &str, elapsed: Duration, weight_bytes: usize, y: &Matrix<f32>) {
    let checksum: f64 = y.as_slice().iter().map(|&v| v as f64).sum();
    println!(
        "path={name} median_ms={:.3} weight_bytes={weight_bytes} checksum={checksum:.6e}",
        elapsed.as_secs_f64() * 1e3
    );
}

pub fn run(a: BenchArgs) -> CliResult<()> {
    let shape = match (a.preset, a.shape) {
        (Some(p), _) => p.shape(),
        (None, Some(s)) => s,
        (None, None) => return Err(CliError::new("usage", "one of --preset or --shape is required")),
    };
    if shape.rows == 0 || shape.cols == 0 || a.batch == 0 || a.repeat == 0 {
        return Err(CliError::new("invalid_input", "shape, batch and repeat must be positive"));
    }
    let exec = if a.sequential { Execution::Sequential } else { Execution::default() };

    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let normal = Normal::new(0.0f32, 0.02).expect("valid normal");
    let w = Matrix::from_fn(shape.rows, shape.cols, |_, _| normal.sample(&mut rng));
    let x = Matrix::from_fn(shape.cols, a.batch, |_, _| normal.sample(&mut rng) * 50.0);

    if let Some(p) = a.preset {
        println!("preset={}", p.name());
    }
    println!("shape={shape}");
    println!("batch={}", a.batch);
    println!("repeat={}", a.repeat);
    println!("parallel={}", exec.is_parallel());

    let w16 = w.map(|&v| f16::from_f32(v));
    let dense_bytes = w16.len() * 2;
    let (t, y) = time(a.repeat, || gemm_f16(&w16, &x, exec))?;
    report("f16_dense", t, dense_bytes, &y);
    drop(w16);

    let fp6: QuantizedTensor =
        quantize_tensor_with(&w, &QuantScheme::cgq(WeightFormat::Fp6E3M2), exec)?.with_bias_shift()?;
    let (t, y) = time(a.repeat, || gemm_quantized_with(&fp6, &x, DequantPath::Naive, exec))?;
    report("fp6_naive", t, fp6.weight_bytes(), &y);
    let (t, y) = time(a.repeat, || gemm_quantized_with(&fp6, &x, DequantPath::BiasShift, exec))?;
    report("fp6_bias_shift", t, fp6.weight_bytes(), &y);
    println!("fp6_ratio={:.6}", fp6.weight_bytes() as f64 / dense_bytes as f64);
    drop(fp6);

    let int4 = quantize_tensor_with(&w, &QuantScheme::fgq(WeightFormat::Int4Asym, 128), exec)?;
    let (t, y) = time(a.repeat, || gemm_quantized_with(&int4, &x, DequantPath::Naive, exec))?;
    report("int4_fgq128", t, int4.weight_bytes(), &y);
    Ok(())
}
