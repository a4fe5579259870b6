//! `lpq` command-line front end.
//!
//! Every report line on stdout is `key=value`. Failures print a single
//! `error=<kind> message="..."` line on stderr and exit with status 1.

mod bench;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lpq::container::MAGIC;
use lpq::{
    codebook, compare_outputs, dequantize_tensor, dequantize_tensor_f16, error_report, from_bytes,
    gemm_quantized, gemm_reference, oracle_tolerance, quantize_tensor, read_raw, split_code, to_bytes,
    write_raw, DequantPath, Granularity, Matrix, MiniFloatFormat, Payload, QuantScheme, QuantizedTensor,
    RawDtype, WeightFormat,
};

#[derive(Parser)]
#[command(name = "lpq", version, about = "Weight-only FP6/FP5/INT4 quantization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantize a raw tensor into an .lpqt file
    Quantize(QuantizeArgs),
    /// Dequantize an .lpqt file into a raw f32le tensor
    Dequantize(DequantizeArgs),
    /// Error statistics between a tensor and a reference
    Stats(StatsArgs),
    /// Dump the header and payload sizes of an .lpqt file
    Inspect(InspectArgs),
    /// Multiply quantized weights by activations
    Gemm(GemmArgs),
    /// Time the CPU reference paths on FFN-shaped weights
    Bench(bench::BenchArgs),
    /// Print every code of a minifloat format
    Codebook(CodebookArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Fp6,
    Fp5,
    Int4,
}

impl From<FormatArg> for WeightFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Fp6 => WeightFormat::Fp6E3M2,
            FormatArg::Fp5 => WeightFormat::Fp5E3M1,
            FormatArg::Int4 => WeightFormat::Int4Asym,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MiniFloatArg {
    Fp6,
    Fp5,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Cgq,
    Fgq,
}

#[derive(Clone, Copy, ValueEnum)]
enum DtypeArg {
    F32,
    F16,
}

impl From<DtypeArg> for RawDtype {
    fn from(d: DtypeArg) -> Self {
        match d {
            DtypeArg::F32 => RawDtype::F32Le,
            DtypeArg::F16 => RawDtype::F16Le,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PathArg {
    Naive,
    BiasShift,
}

impl From<PathArg> for DequantPath {
    fn from(p: PathArg) -> Self {
        match p {
            PathArg::Naive => DequantPath::Naive,
            PathArg::BiasShift => DequantPath::BiasShift,
        }
    }
}

/// `ROWSxCOLS`.
#[derive(Clone, Copy, Debug)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl std::str::FromStr for Shape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (r, c) = s
            .split_once(['x', 'X', '*'])
            .ok_or_else(|| format!("shape {s:?} is not ROWSxCOLS"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("shape {s:?}: {e}"));
        Ok(Shape { rows: parse(r)?, cols: parse(c)? })
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

#[derive(Args)]
struct QuantizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    shape: Shape,
    #[arg(long, value_enum)]
    dtype: DtypeArg,
    #[arg(long, value_enum)]
    format: FormatArg,
    #[arg(long, value_enum, default_value = "cgq")]
    scheme: SchemeArg,
    /// FGQ block size (ignored for CGQ)
    #[arg(long, default_value_t = lpq::quant::DEFAULT_BLOCK_SIZE)]
    block_size: usize,
    /// Store folded scales for the bias-shift path (minifloat formats only)
    #[arg(long)]
    bias_shift: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct DequantizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "naive")]
    path: PathArg,
}

#[derive(Args)]
struct StatsArgs {
    /// An .lpqt file (detected by magic) or a raw tensor
    #[arg(long)]
    input: PathBuf,
    /// Raw reference tensor
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    shape: Shape,
    /// Element type of the raw files
    #[arg(long, value_enum, default_value = "f32")]
    dtype: DtypeArg,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct GemmArgs {
    #[arg(long)]
    weights: PathBuf,
    /// Raw K x M activation tensor
    #[arg(long)]
    activations: PathBuf,
    #[arg(long)]
    m: usize,
    #[arg(long, value_enum, default_value = "f32")]
    dtype: DtypeArg,
    #[arg(long, value_enum, default_value = "naive")]
    path: PathArg,
    /// Write Y as a raw f32le N x M tensor
    #[arg(long)]
    output: Option<PathBuf>,
    /// Compare against the double-precision oracle; fail if out of tolerance
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct CodebookArgs {
    #[arg(long, value_enum)]
    format: MiniFloatArg,
}

/// A failure with a machine-readable kind.
#[derive(Debug)]
pub struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        CliError { kind, message: message.into() }
    }
}

impl From<lpq::Error> for CliError {
    fn from(e: lpq::Error) -> Self {
        CliError::new(e.kind(), e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

fn load_lpqt(path: &Path) -> CliResult<QuantizedTensor> {
    Ok(from_bytes(&read_file(path)?)?)
}

fn granularity_name(g: Granularity) -> &'static str {
    match g {
        Granularity::Cgq => "cgq",
        Granularity::Fgq { .. } => "fgq",
    }
}

fn cmd_quantize(a: QuantizeArgs) -> CliResult<()> {
    let format: WeightFormat = a.format.into();
    if a.bias_shift && format.minifloat().is_none() {
        return Err(CliError::new("invalid_scheme", "--bias-shift applies to fp6 and fp5 only"));
    }
    let w = read_raw(&read_file(&a.input)?, a.shape.rows, a.shape.cols, a.dtype.into())?;
    let scheme = match a.scheme {
        SchemeArg::Cgq => QuantScheme::cgq(format),
        SchemeArg::Fgq => QuantScheme::fgq(format, a.block_size),
    };
    let mut q = quantize_tensor(&w, &scheme)?;
    if a.bias_shift {
        q = q.with_bias_shift()?;
    }
    write_file(&a.output, &to_bytes(&q))?;
    let baseline = q.rows() * q.cols() * 2;
    let stored = q.weight_bytes();
    println!("rows={}", q.rows());
    println!("cols={}", q.cols());
    println!("format={format}");
    println!("scheme={}", granularity_name(scheme.granularity));
    println!("block_size={}", scheme.block_size());
    println!("blocks={}", q.block_count());
    println!("bias_shift={}", q.bias_shift());
    println!("payload_bytes={}", q.payload().byte_len());
    println!("param_bytes={}", q.param_bytes());
    println!("baseline_bytes={baseline}");
    println!("ratio={:.6}", if baseline == 0 { 0.0 } else { stored as f64 / baseline as f64 });
    Ok(())
}

fn cmd_dequantize(a: DequantizeArgs) -> CliResult<()> {
    let q = load_lpqt(&a.input)?;
    let path: DequantPath = a.path.into();
    let out = dequantize_tensor_f16(&q, path)?.map(|v| v.to_f32());
    write_file(&a.output, &write_raw(&out, RawDtype::F32Le))?;
    println!("rows={}", out.rows());
    println!("cols={}", out.cols());
    println!("path={}", path_name(path));
    println!("bytes={}", out.len() * 4);
    Ok(())
}

fn path_name(p: DequantPath) -> &'static str {
    match p {
        DequantPath::Naive => "naive",
        DequantPath::BiasShift => "bias-shift",
    }
}

fn cmd_stats(a: StatsArgs) -> CliResult<()> {
    let dtype: RawDtype = a.dtype.into();
    let input = read_file(&a.input)?;
    let candidate: Matrix<f64> = if input.starts_with(&MAGIC) {
        let q = from_bytes(&input)?;
        if (q.rows(), q.cols()) != (a.shape.rows, a.shape.cols) {
            return Err(CliError::new(
                "shape_error",
                format!("{} holds {}x{}, --shape is {}", a.input.display(), q.rows(), q.cols(), a.shape),
            ));
        }
        dequantize_tensor(&q)?
    } else {
        read_raw(&input, a.shape.rows, a.shape.cols, dtype)?.map(|&v| v as f64)
    };
    let reference = read_raw(&read_file(&a.reference)?, a.shape.rows, a.shape.cols, dtype)?;
    let report = error_report(&reference, &candidate)?;
    println!("{report}");
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> CliResult<()> {
    let bytes = read_file(&a.input)?;
    let q = from_bytes(&bytes)?;
    let scheme = q.scheme();
    println!("magic=LPQT");
    println!("version={}", lpq::container::VERSION);
    println!("format={}", scheme.format);
    println!("granularity={}", granularity_name(scheme.granularity));
    println!("block_size={}", scheme.block_size());
    println!("rows={}", q.rows());
    println!("cols={}", q.cols());
    println!("bias_shift={}", q.bias_shift());
    println!("blocks={}", q.block_count());
    let head: Vec<String> = q.block_params().iter().take(8).map(|p| p.scale.to_string()).collect();
    println!("scales={}", head.join(","));
    if scheme.format == WeightFormat::Int4Asym {
        let z: Vec<String> =
            q.block_params().iter().take(8).map(|p| p.zero_point.unwrap_or_default().to_string()).collect();
        println!("zero_points={}", z.join(","));
    }
    if let Some(folded) = q.folded_scales() {
        let f: Vec<String> = folded.iter().take(8).map(|f| f.value().to_string()).collect();
        println!("folded_scales={}", f.join(","));
    }
    match q.payload() {
        Payload::MiniFloat(seg) => {
            println!("head_bytes={}", seg.heads().len());
            println!("tail_bytes={}", seg.tails().len());
        }
        Payload::Int4(b) => println!("nibble_bytes={}", b.len()),
    }
    println!("payload_bytes={}", q.payload().byte_len());
    println!("file_bytes={}", bytes.len());
    Ok(())
}

fn cmd_gemm(a: GemmArgs) -> CliResult<()> {
    let q = load_lpqt(&a.weights)?;
    let raw = read_file(&a.activations)?;
    let width = RawDtype::from(a.dtype).width();
    let k = q.cols();
    if raw.len() != k * a.m * width {
        return Err(CliError::new(
            "shape_error",
            format!("activations hold {} bytes; weights need K={k} x M={} of width {width}", raw.len(), a.m),
        ));
    }
    let x = read_raw(&raw, k, a.m, a.dtype.into())?;
    let path: DequantPath = a.path.into();
    let y = gemm_quantized(&q, &x, path)?;
    if let Some(out) = &a.output {
        write_file(out, &write_raw(&y, RawDtype::F32Le))?;
    }
    println!("rows={}", y.rows());
    println!("cols={}", y.cols());
    println!("path={}", path_name(path));
    if a.check {
        let w_hat = dequantize_tensor(&q)?;
        let reference = gemm_reference(&w_hat, &x)?;
        let report = compare_outputs(&y, &reference)?;
        let tol = oracle_tolerance(&w_hat, &x);
        println!("{report}");
        println!("tolerance={tol:e}");
        let pass = report.max_abs_error <= tol;
        println!("check={}", if pass { "pass" } else { "fail" });
        if !pass {
            return Err(CliError::new(
                "tolerance_exceeded",
                format!("max abs error {:e} exceeds {tol:e}", report.max_abs_error),
            ));
        }
    }
    Ok(())
}

fn cmd_codebook(a: CodebookArgs) -> CliResult<()> {
    let f = match a.format {
        MiniFloatArg::Fp6 => MiniFloatFormat::Fp6E3M2,
        MiniFloatArg::Fp5 => MiniFloatFormat::Fp5E3M1,
    };
    let width = f.total_bits() as usize;
    let tail = width - 4;
    let mut rows = codebook(f);
    rows.sort_by(|a, b| a.1.total_cmp(&b.1));
    for (code, value) in rows {
        let (head, low) = split_code(f, code);
        println!(
            "code=0b{:0width$b} value={value} seg4=0b{head:04b} tail=0b{low:0tail$b}",
            code.bits()
        );
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Quantize(a) => cmd_quantize(a),
        Command::Dequantize(a) => cmd_dequantize(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Gemm(a) => cmd_gemm(a),
        Command::Bench(a) => bench::run(a),
        Command::Codebook(a) => cmd_codebook(a),
    }
}

fn fail(kind: &str, message: &str) -> ExitCode {
    let one_line = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error={kind} message={one_line:?}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return fail("usage", first.trim_start_matches("error: "));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind, &e.message),
    }
}
