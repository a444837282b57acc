use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tuckzip::container::DataType;
use tuckzip::corecodec::CodecParams;
use tuckzip::entropy::CoderKind;
use tuckzip::errormodel::{ErrorTarget, DEFAULT_RTMSS};
use tuckzip::factorcodec::FactorWeighting;
use tuckzip::pipeline::CompressOptions;
use tuckzip::sthosvd::ModeOrder;
use tuckzip::vectorize::VectorizationMethod;
use tuckzip::ModePermutation;

#[derive(Parser, Debug)]
#[command(name = "tuckzip", version, about = "Lossy compression of dense arrays by truncated Tucker decomposition")]
pub struct Cli {
    /// Worker threads for every internal pool (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compress a raw array file into a container.
    Compress(CompressArgs),
    /// Reconstruct a raw array file from a container.
    Decompress(DecompressArgs),
    /// Print a container's header.
    Info(InfoArgs),
    /// Compress one input over a grid of targets and RTMSS values, writing CSV.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Raw little-endian array file.
    pub input: PathBuf,
    /// Mode sizes, last index fastest, e.g. 64x48x40 or 64,48,40.
    #[arg(long, value_parser = parse_shape)]
    pub shape: Shape,
    /// Element type of the input file.
    #[arg(long, default_value = "float64", value_parser = parse_dtype)]
    pub dtype: DataType,
    /// Header bytes to skip at the start of the input file.
    #[arg(long, default_value_t = 0)]
    pub skip_bytes: usize,
}

#[derive(Args, Debug, Clone)]
pub struct CodecArgs {
    /// Share of the SSE budget given to rank truncation, in [0, 1].
    #[arg(long, default_value_t = DEFAULT_RTMSS)]
    pub rtmss: f64,
    #[arg(long, value_enum, default_value_t = Vectorization::Lex)]
    pub vectorization: Vectorization,
    /// Core storage order as one-based modes, e.g. 3,1,2 (default: shortest first).
    #[arg(long)]
    pub storage_order: Option<String>,
    /// ST-HOSVD mode processing order as one-based modes (default: cheapest).
    #[arg(long)]
    pub mode_order: Option<String>,
    #[arg(long, value_enum, default_value_t = Coder::Ac)]
    pub coder: Coder,
    /// Use a single final-plane breakpoint for all bit categories.
    #[arg(long)]
    pub no_split_planes: bool,
    /// Weight factor columns by core slice norms instead of the error model.
    #[arg(long)]
    pub simple_factor_weights: bool,
    /// Internal floating-point width.
    #[arg(long, default_value_t = 64, value_parser = parse_precision)]
    pub precision: u8,
}

#[derive(Args, Debug)]
pub struct CompressArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Output container path (default: input path with .tkz appended).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Target relative error ‖A − Ã‖ / ‖A‖.
    #[arg(long, conflicts_with = "target_sse", required_unless_present = "target_sse")]
    pub target_re: Option<f64>,
    /// Target sum of squared errors.
    #[arg(long)]
    pub target_sse: Option<f64>,
    #[command(flatten)]
    pub codec: CodecArgs,
    /// Skip decompressing to measure the achieved error; report the recorded estimate.
    #[arg(long)]
    pub no_verify: bool,
    /// Also print the report as key=value lines.
    #[arg(long)]
    pub machine: bool,
}

#[derive(Args, Debug)]
pub struct DecompressArgs {
    pub input: PathBuf,
    /// Output raw array path (default: input path with .raw appended).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Original raw array, to measure the achieved error.
    #[arg(long)]
    pub original: Option<PathBuf>,
    /// Header bytes to skip in the original file.
    #[arg(long, default_value_t = 0)]
    pub skip_bytes: usize,
}

#[derive(Args, Debug)]
pub struct InfoArgs {
    pub input: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Target relative errors, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1e-1,1e-2,1e-3,1e-4")]
    pub target_re: Vec<f64>,
    /// RTMSS values, comma separated; overrides --rtmss.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7,0.9")]
    pub rtmss_grid: Vec<f64>,
    #[command(flatten)]
    pub codec: CodecArgs,
    /// CSV output path (default: stdout).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Vectorization {
    Lex,
    Zigzag,
    Zorder,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coder {
    Ac,
    Rans,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shape(pub Vec<usize>);

fn parse_shape(s: &str) -> Result<Shape> {
    let sizes = s
        .split(['x', 'X', ','])
        .map(|p| p.trim().parse::<usize>().with_context(|| format!("bad mode size '{p}'")))
        .collect::<Result<Vec<_>>>()?;
    if sizes.is_empty() || sizes.contains(&0) {
        bail!("shape needs at least one mode and no zero sizes");
    }
    Ok(Shape(sizes))
}

fn parse_precision(s: &str) -> Result<u8> {
    match s {
        "32" => Ok(32),
        "64" => Ok(64),
        _ => bail!("precision is 32 or 64"),
    }
}

fn parse_dtype(s: &str) -> Result<DataType> {
    Ok(s.parse::<DataType>()?)
}

/// One-based comma list to a zero-based permutation.
pub fn parse_modes(s: &str, order: usize) -> Result<ModePermutation> {
    let modes = s
        .split(',')
        .map(|p| {
            let m: usize = p.trim().parse().with_context(|| format!("bad mode '{p}'"))?;
            if m == 0 {
                bail!("modes are numbered from 1");
            }
            Ok(m - 1)
        })
        .collect::<Result<Vec<_>>>()?;
    if modes.len() != order {
        bail!("mode list '{s}' has {} entries, the array has {order} modes", modes.len());
    }
    Ok(ModePermutation::new(modes)?)
}

pub fn target(re: Option<f64>, sse: Option<f64>) -> Result<ErrorTarget> {
    let t = match (re, sse) {
        (Some(re), None) => ErrorTarget::RelativeError(re),
        (None, Some(sse)) => ErrorTarget::Sse(sse),
        _ => bail!("give exactly one of --target-re and --target-sse"),
    };
    let v = match t {
        ErrorTarget::RelativeError(v) | ErrorTarget::Sse(v) => v,
    };
    if !v.is_finite() || v <= 0.0 {
        bail!(
            "error target must be positive and finite, got {v}; this is a lossy compressor, \
             for bit-exact integer data pick a target whose error rounds away (e.g. --target-re 1e-6)"
        );
    }
    Ok(t)
}

impl CodecArgs {
    pub fn options(&self, target: ErrorTarget, order: usize, threads: usize, dtype: DataType) -> Result<CompressOptions> {
        let mode_order = match &self.mode_order {
            Some(s) => ModeOrder::Custom(parse_modes(s, order)?),
            None => ModeOrder::Auto,
        };
        let storage_order = self.storage_order.as_deref().map(|s| parse_modes(s, order)).transpose()?;
        Ok(CompressOptions {
            target,
            rtmss: self.rtmss,
            mode_order,
            vectorization: match self.vectorization {
                Vectorization::Lex => VectorizationMethod::Lexicographic,
                Vectorization::Zigzag => VectorizationMethod::Zigzag,
                Vectorization::Zorder => VectorizationMethod::ZOrder,
            },
            storage_order,
            codec: CodecParams {
                coder: match self.coder {
                    Coder::Ac => CoderKind::Arithmetic,
                    Coder::Rans => CoderKind::Rans,
                },
                workers: threads,
                split: !self.no_split_planes,
                ..CodecParams::default()
            },
            weighting: if self.simple_factor_weights {
                FactorWeighting::SliceNorm
            } else {
                FactorWeighting::Alpha
            },
            dtype: Some(dtype),
        })
    }
}
