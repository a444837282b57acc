use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::warn;
use tuckzip::container::{ingest, read_container, ContainerHeader, SourceBuffer};
use tuckzip::pipeline::{compress, decompress_container, decompress_to_bytes, CompressOptions, Compressed};
use tuckzip::{sse_between, DenseTensor, Scalar};

use crate::args::{target, CompressArgs, DecompressArgs, InfoArgs, InputArgs, SweepArgs};
use crate::report::{modes, RunReport};

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_source(a: &InputArgs) -> Result<SourceBuffer> {
    let bytes = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    Ok(SourceBuffer {
        bytes,
        dtype: a.dtype,
        shape: a.shape.0.clone(),
        skip_bytes: a.skip_bytes,
    })
}

fn load<T: Scalar>(src: &SourceBuffer) -> Result<DenseTensor<T>> {
    let ing = ingest::<T>(src)?;
    if ing.inexact_values > 0 {
        warn!(
            "{} {} values are not exactly representable in {}-bit floating point",
            ing.inexact_values,
            src.dtype,
            T::BITS
        );
    }
    Ok(ing.tensor)
}

/// Compresses and optionally measures the achieved SSE by decompressing.
struct Run {
    compressed: Compressed,
    measured_sse: Option<f64>,
    decompress_time: Option<std::time::Duration>,
}

fn run<T: Scalar>(t: &DenseTensor<T>, opts: &CompressOptions, threads: usize, verify: bool) -> Result<Run> {
    let compressed = compress(t, opts)?;
    let (measured_sse, decompress_time) = if verify {
        let start = Instant::now();
        let back: DenseTensor<T> = decompress_container(&compressed.container, threads)?;
        let elapsed = start.elapsed();
        (Some(sse_between(t, &back)?), Some(elapsed))
    } else {
        (None, None)
    };
    Ok(Run {
        compressed,
        measured_sse,
        decompress_time,
    })
}

fn run_at_precision(src: &SourceBuffer, opts: &CompressOptions, precision: u8, threads: usize, verify: bool) -> Result<Run> {
    if precision == 32 {
        run(&load::<f32>(src)?, opts, threads, verify)
    } else {
        run(&load::<f64>(src)?, opts, threads, verify)
    }
}

pub fn cmd_compress(a: &CompressArgs, threads: usize) -> Result<RunReport> {
    let tgt = target(a.target_re, a.target_sse)?;
    let src = read_source(&a.input)?;
    let opts = a.codec.options(tgt, src.shape.len(), threads, src.dtype)?;
    let r = run_at_precision(&src, &opts, a.codec.precision, threads, !a.no_verify)?;
    let out = a.output.clone().unwrap_or_else(|| with_suffix(&a.input.input, ".tkz"));
    fs::write(&out, &r.compressed.bytes).with_context(|| format!("writing {}", out.display()))?;
    let report = RunReport::from_compression(
        &r.compressed.report,
        &r.compressed.container.header,
        r.measured_sse,
        src.bytes.len() - src.skip_bytes,
        r.decompress_time,
    );
    Ok(report)
}

fn measure_against(original: &Path, skip_bytes: usize, header: &ContainerHeader, decoded: &[u8]) -> Result<f64> {
    let src = SourceBuffer {
        bytes: fs::read(original).with_context(|| format!("reading {}", original.display()))?,
        dtype: header.dtype,
        shape: header.mode_sizes.clone(),
        skip_bytes,
    };
    let out = SourceBuffer {
        bytes: decoded.to_vec(),
        dtype: header.dtype,
        shape: header.mode_sizes.clone(),
        skip_bytes: 0,
    };
    Ok(sse_between(&ingest::<f64>(&src)?.tensor, &ingest::<f64>(&out)?.tensor)?)
}

pub fn cmd_decompress(a: &DecompressArgs, threads: usize) -> Result<RunReport> {
    let bytes = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let start = Instant::now();
    let (header, raw) = decompress_to_bytes(&bytes, threads).with_context(|| format!("decompressing {}", a.input.display()))?;
    let elapsed = start.elapsed();
    let out = a.output.clone().unwrap_or_else(|| with_suffix(&a.input, ".raw"));
    fs::write(&out, &raw).with_context(|| format!("writing {}", out.display()))?;
    let measured = a
        .original
        .as_deref()
        .map(|p| measure_against(p, a.skip_bytes, &header, &raw))
        .transpose()?;
    Ok(RunReport::from_header(&header, bytes.len(), measured, elapsed))
}

pub fn cmd_info(a: &InfoArgs) -> Result<String> {
    let bytes = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let c = read_container(&bytes).with_context(|| format!("reading container {}", a.input.display()))?;
    let h = &c.header;
    let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("x");
    let mut out = Vec::new();
    out.push(format!("file size            {} bytes", bytes.len()));
    if h.zero_flag {
        out.push("content              constant zero".to_string());
    }
    out.push(format!("shape                {}", join(&h.mode_sizes)));
    out.push(format!("dtype                {}", h.dtype));
    out.push(format!("precision            {}-bit", h.precision));
    out.push(format!("ranks                {}", join(&h.ranks)));
    out.push(format!("mode order           {}", modes(h.processing_order.as_slice())));
    out.push(format!("storage order        {}", modes(h.vectorization.storage_order.as_slice())));
    out.push(format!("vectorization        {:?}", h.vectorization.method));
    out.push(format!("coder                {:?}", h.coder));
    out.push(format!("split planes         {}", h.split));
    out.push(format!("factor weights       {:?}", h.weighting));
    out.push(format!("rtmss                {}", h.rtmss));
    out.push(format!("block size           {}", h.block_size));
    out.push(format!("scale exponent       {}", h.scale_exponent));
    out.push(format!("core last plane      {}", c.core.breakpoint.last_plane.map_or("none".to_string(), |p| p.to_string())));
    out.push(format!("target SSE           {:.6e}", h.target_sse));
    out.push(format!("estimated SSE        {:.6e}", h.achieved.estimate_total_sse));
    out.push(format!("estimated rel. error {:.6e}", h.achieved.estimated_relative_error()));
    out.push(format!("compression factor   {:.3}", h.original_bytes() as f64 / bytes.len() as f64));
    Ok(out.join("\n"))
}

/// One CSV row of a sweep.
#[derive(Debug)]
pub struct SweepRow {
    pub target_re: f64,
    pub achieved_re: f64,
    pub factor: f64,
    pub rtmss: f64,
    pub comp_ms: f64,
    pub decomp_ms: f64,
}

/// Runs the grid; failing cells are logged and skipped. Returns the number
/// of failed cells.
pub fn cmd_sweep(a: &SweepArgs, threads: usize) -> Result<usize> {
    let src = read_source(&a.input)?;
    let sink: Box<dyn std::io::Write> = match &a.output {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("writing {}", p.display()))?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["target_re", "achieved_re", "factor", "rtmss", "comp_ms", "decomp_ms"])?;
    let mut failed = 0;
    for &re in &a.target_re {
        for &rtmss in &a.rtmss_grid {
            match sweep_cell(&src, a, re, rtmss, threads) {
                Ok(row) => {
                    w.write_record([
                        row.target_re.to_string(),
                        row.achieved_re.to_string(),
                        row.factor.to_string(),
                        row.rtmss.to_string(),
                        row.comp_ms.to_string(),
                        row.decomp_ms.to_string(),
                    ])?;
                }
                Err(e) => {
                    failed += 1;
                    eprintln!("sweep cell target_re={re} rtmss={rtmss} failed: {e:#}");
                }
            }
        }
    }
    w.flush()?;
    Ok(failed)
}

fn sweep_cell(src: &SourceBuffer, a: &SweepArgs, re: f64, rtmss: f64, threads: usize) -> Result<SweepRow> {
    let mut codec = a.codec.clone();
    codec.rtmss = rtmss;
    let opts = codec.options(target(Some(re), None)?, src.shape.len(), threads, src.dtype)?;
    let r = run_at_precision(src, &opts, codec.precision, threads, true)?;
    let report = &r.compressed.report;
    let sse = r.measured_sse.expect("verified run");
    Ok(SweepRow {
        target_re: re,
        achieved_re: if report.norm_sq > 0.0 { (sse / report.norm_sq).sqrt() } else { 0.0 },
        factor: report.compression_factor(),
        rtmss,
        comp_ms: report.times.total.as_secs_f64() * 1e3,
        decomp_ms: r.decompress_time.expect("verified run").as_secs_f64() * 1e3,
    })
}

pub fn ensure_threads(threads: Option<usize>) -> Result<usize> {
    match threads {
        Some(0) => bail!("--threads must be at least 1"),
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("configuring the thread pool")?;
            Ok(n)
        }
        None => Ok(0),
    }
}
