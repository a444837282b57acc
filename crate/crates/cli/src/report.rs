use std::fmt;
use std::time::Duration;

use tuckzip::container::ContainerHeader;
use tuckzip::pipeline::CompressionReport;

/// Where the achieved error figures came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorSource {
    /// Recomputed against the original data.
    Measured,
    /// Copied from the container's record.
    Recorded,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub compression_factor: f64,
    pub achieved_re: f64,
    pub achieved_sse: f64,
    pub source: ErrorSource,
    pub estimate_sse: f64,
    pub estimate_re: f64,
    pub target_sse: f64,
    pub phases: Vec<(&'static str, Duration)>,
    pub peak_bytes_estimate: usize,
    pub parameters: Vec<(&'static str, String)>,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn join<T: fmt::Display>(v: &[T], sep: &str) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

/// One-based rendering of a zero-based mode list.
pub fn modes(v: &[usize]) -> String {
    v.iter().map(|m| (m + 1).to_string()).collect::<Vec<_>>().join(",")
}

/// Working set of a compression: the raw input, the tensor, one transposed
/// copy of it and the container.
pub fn peak_bytes_estimate(raw: usize, elements: usize, precision: u8, container: usize) -> usize {
    raw + 2 * elements * (precision as usize / 8) + container
}

impl RunReport {
    pub fn from_compression(r: &CompressionReport, header: &ContainerHeader, measured_sse: Option<f64>, raw_bytes: usize, decompress_time: Option<Duration>) -> Self {
        let (achieved_sse, source) = match measured_sse {
            Some(s) => (s, ErrorSource::Measured),
            None => (r.estimate.total(), ErrorSource::Recorded),
        };
        let mut phases = vec![
            ("st-hosvd", r.times.sthosvd),
            ("core coding", r.times.core),
            ("factor coding", r.times.factors),
            ("compress total", r.times.total),
        ];
        if let Some(d) = decompress_time {
            phases.push(("decompress", d));
        }
        Self {
            compression_factor: r.compression_factor(),
            achieved_re: relative(achieved_sse, r.norm_sq),
            achieved_sse,
            source,
            estimate_sse: r.estimate.total(),
            estimate_re: r.estimated_relative_error(),
            target_sse: r.target_sse,
            phases,
            peak_bytes_estimate: peak_bytes_estimate(raw_bytes, header.element_count(), header.precision, r.container_bytes),
            parameters: parameters(header),
        }
    }

    pub fn from_header(header: &ContainerHeader, container_bytes: usize, measured_sse: Option<f64>, decompress_time: Duration) -> Self {
        let a = &header.achieved;
        let (achieved_sse, source) = match measured_sse {
            Some(s) => (s, ErrorSource::Measured),
            None => (a.estimate_total_sse, ErrorSource::Recorded),
        };
        Self {
            compression_factor: header.original_bytes() as f64 / container_bytes.max(1) as f64,
            achieved_re: relative(achieved_sse, a.norm_sq),
            achieved_sse,
            source,
            estimate_sse: a.estimate_total_sse,
            estimate_re: a.estimated_relative_error(),
            target_sse: header.target_sse,
            phases: vec![("decompress", decompress_time)],
            peak_bytes_estimate: peak_bytes_estimate(header.original_bytes(), header.element_count(), header.precision, container_bytes),
            parameters: parameters(header),
        }
    }

    /// `key=value` lines for scripts.
    pub fn machine_lines(&self) -> String {
        let mut out = vec![
            format!("compression_factor={}", self.compression_factor),
            format!("achieved_re={}", self.achieved_re),
            format!("achieved_sse={}", self.achieved_sse),
            format!("achieved_source={}", if self.source == ErrorSource::Measured { "measured" } else { "recorded" }),
            format!("estimate_sse={}", self.estimate_sse),
            format!("estimate_re={}", self.estimate_re),
            format!("target_sse={}", self.target_sse),
            format!("peak_bytes_estimate={}", self.peak_bytes_estimate),
        ];
        for (name, d) in &self.phases {
            out.push(format!("time_ms.{}={}", name.replace(' ', "_"), ms(*d)));
        }
        for (k, v) in &self.parameters {
            out.push(format!("param.{k}={v}"));
        }
        out.join("\n")
    }
}

fn relative(sse: f64, norm_sq: f64) -> f64 {
    if norm_sq > 0.0 {
        (sse / norm_sq).sqrt()
    } else {
        0.0
    }
}

fn parameters(h: &ContainerHeader) -> Vec<(&'static str, String)> {
    vec![
        ("shape", join(&h.mode_sizes, "x")),
        ("dtype", h.dtype.to_string()),
        ("precision", h.precision.to_string()),
        ("ranks", join(&h.ranks, "x")),
        ("mode_order", modes(h.processing_order.as_slice())),
        ("storage_order", modes(h.vectorization.storage_order.as_slice())),
        ("vectorization", format!("{:?}", h.vectorization.method)),
        ("coder", format!("{:?}", h.coder)),
        ("split_planes", h.split.to_string()),
        ("factor_weights", format!("{:?}", h.weighting)),
        ("rtmss", h.rtmss.to_string()),
        ("block_size", h.block_size.to_string()),
    ]
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.source {
            ErrorSource::Measured => "measured",
            ErrorSource::Recorded => "recorded estimate, original not available",
        };
        writeln!(f, "compression factor   {:.3}", self.compression_factor)?;
        writeln!(f, "achieved rel. error  {:.6e} ({tag})", self.achieved_re)?;
        writeln!(f, "achieved SSE         {:.6e}", self.achieved_sse)?;
        writeln!(f, "estimated SSE        {:.6e} (rel. error {:.6e})", self.estimate_sse, self.estimate_re)?;
        if self.source == ErrorSource::Measured && self.achieved_sse > 0.0 {
            writeln!(f, "estimate deviation   {:+.3}%", (self.estimate_sse / self.achieved_sse - 1.0) * 100.0)?;
        }
        writeln!(f, "target SSE           {:.6e}", self.target_sse)?;
        for (name, d) in &self.phases {
            writeln!(f, "time {name:16}{:.2} ms", ms(*d))?;
        }
        writeln!(f, "peak memory (est.)   {:.1} MiB", self.peak_bytes_estimate as f64 / (1 << 20) as f64)?;
        for (k, v) in &self.parameters {
            writeln!(f, "{k:21}{v}")?;
        }
        Ok(())
    }
}
