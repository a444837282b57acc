//! End-to-end compression and decompression.

use std::time::{Duration, Instant};

use crate::container::{
    emit, read_container, write_container, AchievedRecord, Container, ContainerHeader, DataType,
};
use crate::corecodec::{
    dead_slices, decode, encode, quantize, scatter, with_workers, CodecParams, EncodedCore,
};
use crate::error::{Error, Result};
use crate::errormodel::{factor_term, make_budget, ErrorEstimate, ErrorTarget, DEFAULT_RTMSS};
use crate::factorcodec::{
    column_scales, decode_factor, encode_factor, factorize, scaled_sse, FactorPayload, FactorStop, FactorWeighting,
    HouseholderFactor,
};
use crate::scalar::Scalar;
use crate::sthosvd::{self, ModeOrder, TuckerFactorization};
use crate::tensor::{DenseTensor, Matrix, ModePermutation};
use crate::vectorize::{storage_order_heuristic, VectorizationMethod, VectorizationSpec};

/// Share of the total SSE target granted to all factor terms together.
/// When the core stops well short of its target the factors also get the
/// unused budget beyond `SLACK_RESERVE` of the target.
pub const FACTOR_SSE_SHARE: f64 = 0.004;
const SLACK_RESERVE: f64 = 0.04;
/// Fraction of the allowance aimed at when refining within a plane.
const REFINE_AIM: f64 = 0.9;
const MAX_EXTRA_FACTOR_PLANES: i32 = 48;

#[derive(Clone, Debug, PartialEq)]
pub struct CompressOptions {
    pub target: ErrorTarget,
    pub rtmss: f64,
    pub mode_order: ModeOrder,
    pub vectorization: VectorizationMethod,
    /// Core storage order; `None` picks shortest mode first.
    pub storage_order: Option<ModePermutation>,
    pub codec: CodecParams,
    pub weighting: FactorWeighting,
    /// Element type recorded for decompressed output; `None` records the
    /// working precision's float type.
    pub dtype: Option<DataType>,
}

impl CompressOptions {
    pub fn relative_error(re: f64) -> Self {
        Self {
            target: ErrorTarget::RelativeError(re),
            rtmss: DEFAULT_RTMSS,
            mode_order: ModeOrder::Auto,
            vectorization: VectorizationMethod::Lexicographic,
            storage_order: None,
            codec: CodecParams::default(),
            weighting: FactorWeighting::Alpha,
            dtype: None,
        }
    }
}

/// Wall time per compression phase.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    pub sthosvd: Duration,
    pub core: Duration,
    pub factors: Duration,
    pub total: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressionReport {
    pub ranks: Vec<usize>,
    pub processing_order: ModePermutation,
    pub target_sse: f64,
    pub norm_sq: f64,
    pub estimate: ErrorEstimate,
    /// Lowest core plane coded, if any.
    pub core_last_plane: Option<u8>,
    pub recalibrations: usize,
    pub container_bytes: usize,
    pub original_bytes: usize,
    pub times: PhaseTimes,
}

impl CompressionReport {
    pub fn compression_factor(&self) -> f64 {
        self.original_bytes as f64 / self.container_bytes.max(1) as f64
    }

    pub fn estimated_relative_error(&self) -> f64 {
        if self.norm_sq > 0.0 {
            (self.estimate.total() / self.norm_sq).sqrt()
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug)]
pub struct Compressed {
    pub container: Container,
    pub bytes: Vec<u8>,
    pub report: CompressionReport,
}

fn core_to_f64(e: &EncodedCore, shape: &[usize], spec: &VectorizationSpec, k: i32, workers: usize) -> Result<(DenseTensor<f64>, Vec<bool>)> {
    let d = decode(e, workers)?;
    let significant = d.magnitudes.iter().map(|&m| m != 0).collect();
    let t = scatter(&d.magnitudes, &d.signs, k, shape, spec)?;
    Ok((t, significant))
}

/// Dead columns, quantization scales and core slice norms of one factor.
type FactorLayout = (Vec<bool>, Vec<f64>, Vec<f64>);

/// Per natural mode: dead columns and quantization scales of the factor.
fn factor_layout(
    core: &DenseTensor<f64>,
    significant: &[bool],
    header_like: (&[usize], &ModePermutation, &VectorizationSpec, FactorWeighting),
) -> Result<Vec<FactorLayout>> {
    let (sizes, p, spec, weighting) = header_like;
    let dead = dead_slices(|i| significant[i], core.shape(), spec)?;
    (0..sizes.len())
        .map(|mode| {
            let axis = p.position_of(mode);
            let norms = core.slice_norms(axis)?;
            let scales = column_scales(&norms, sizes[mode], weighting)?;
            Ok((dead[axis].clone(), scales, norms))
        })
        .collect()
}

pub fn compress<T: Scalar>(a: &DenseTensor<T>, opts: &CompressOptions) -> Result<Compressed> {
    with_workers(opts.codec.workers, || compress_pooled(a, opts))
}

fn compress_pooled<T: Scalar>(a: &DenseTensor<T>, opts: &CompressOptions) -> Result<Compressed> {
    let start = Instant::now();
    let mut times = PhaseTimes::default();
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    let norm_sq = a.norm_sq();
    let mut budget = make_budget(opts.target, norm_sq, opts.rtmss)?;
    let f = sthosvd::compress(a, budget.sthosvd_target(), &opts.mode_order)?;
    budget.record_truncation(f.truncation_sse());
    times.sthosvd = start.elapsed();

    let t_core = Instant::now();
    let d = a.order();
    let mut core = f.core.clone();
    let mut householder = Vec::with_capacity(d);
    let mut adjusted = Vec::with_capacity(d);
    for (mode, u) in f.factors.iter().enumerate() {
        let (h, adj) = factorize(u)?;
        let flips = column_flips(u, &adj);
        core.scale_slices(f.core_axis(mode), &flips)?;
        householder.push(h);
        adjusted.push(adj);
    }
    let storage_order = match &opts.storage_order {
        Some(s) if s.len() == d => s.clone(),
        Some(s) => return Err(Error::InvalidPermutation(s.as_slice().to_vec())),
        None => storage_order_heuristic(core.shape()),
    };
    let spec = VectorizationSpec {
        method: opts.vectorization,
        storage_order,
    };
    let q = quantize(&core, &spec)?;
    let encoded = encode(&q, budget.core_quant_target_sse, &opts.codec)?;
    let (decoded_core, significant) = core_to_f64(&encoded, core.shape(), &spec, q.scale_exponent, 0)?;
    let core_f64: DenseTensor<f64> = core.cast();
    let core_sse = crate::tensor::sse_between(&decoded_core, &core_f64)?;
    times.core = t_core.elapsed();

    let t_factors = Instant::now();
    let layout = factor_layout(&decoded_core, &significant, (a.shape(), &f.processing_order, &spec, opts.weighting))?;
    let step_exponent = encoded
        .breakpoint
        .last_plane
        .map_or(0, |lp| lp as i32 - q.scale_exponent);
    let mut factors: Vec<FactorPayload> = Vec::with_capacity(d);
    let mut factor_terms = Vec::with_capacity(d);
    let slack = (budget.target_sse_total - budget.realized_truncation_sse - core_sse).max(0.0);
    let factor_allowance = (FACTOR_SSE_SHARE * budget.target_sse_total)
        .max(slack - SLACK_RESERVE * budget.target_sse_total)
        / d as f64;
    for (mode, (dead, scales, norms)) in layout.iter().enumerate() {
        let coded = FactorCoding {
            h: &householder[mode],
            adjusted: adjusted[mode].cast(),
            dead,
            scales,
            norms,
            params: &opts.codec,
        };
        let (payload, term) = coded.fit(step_exponent, factor_allowance)?;
        factor_terms.push(term);
        factors.push(payload);
    }
    times.factors = t_factors.elapsed();

    let estimate = ErrorEstimate {
        truncation_sse: budget.realized_truncation_sse,
        core_quantization_sse: core_sse,
        factor_terms,
    };
    let dtype = opts.dtype.unwrap_or(if T::BITS == 32 { DataType::F32 } else { DataType::F64 });
    let header = ContainerHeader {
        dtype,
        precision: T::BITS,
        mode_sizes: a.shape().to_vec(),
        ranks: f.ranks(),
        processing_order: f.processing_order.clone(),
        vectorization: spec,
        coder: opts.codec.coder,
        split: opts.codec.split,
        weighting: opts.weighting,
        rtmss: opts.rtmss,
        target_sse: budget.target_sse_total,
        block_size: encoded.block_size,
        scale_exponent: q.scale_exponent,
        zero_flag: q.zero_flag,
        achieved: AchievedRecord {
            truncation_sse: estimate.truncation_sse,
            core_quantization_sse: estimate.core_quantization_sse,
            factor_sse: estimate.factor_terms.iter().sum(),
            estimate_total_sse: estimate.total(),
            norm_sq,
        },
    };
    let core_last_plane = encoded.breakpoint.last_plane;
    let recalibrations = encoded.recalibrations;
    let container = Container {
        header,
        core: encoded,
        factors,
    };
    let bytes = write_container(&container)?;
    times.total = start.elapsed();
    let report = CompressionReport {
        ranks: container.header.ranks.clone(),
        processing_order: container.header.processing_order.clone(),
        target_sse: budget.target_sse_total,
        norm_sq,
        estimate,
        core_last_plane,
        recalibrations,
        container_bytes: bytes.len(),
        original_bytes: container.header.original_bytes(),
        times,
    };
    Ok(Compressed {
        container,
        bytes,
        report,
    })
}

/// One factor and everything needed to code it and measure its error term.
struct FactorCoding<'a> {
    h: &'a HouseholderFactor,
    adjusted: Matrix<f64>,
    dead: &'a [bool],
    scales: &'a [f64],
    norms: &'a [f64],
    params: &'a CodecParams,
}

impl FactorCoding<'_> {
    fn code(&self, stop: FactorStop) -> Result<(FactorPayload, f64)> {
        let payload = encode_factor(self.h, self.dead, self.scales, stop, self.params)?;
        let dec: Matrix<f64> = decode_factor(&payload, self.h.rows, self.scales, 0)?;
        let adj = &self.adjusted;
        let delta = Matrix::from_fn(dec.rows(), dec.cols(), |i, j| dec.get(i, j) - adj.get(i, j));
        let term = factor_term(&delta, self.norms);
        Ok((payload, term))
    }

    /// Starts at step `2^start` and goes one plane deeper until the term is
    /// within `allowance`. A step that crosses the allowance is then refined
    /// with an SSE stop calibrated on the coarser plane.
    fn fit(&self, start: i32, allowance: f64) -> Result<(FactorPayload, f64)> {
        let mut coarser: Option<(f64, f64)> = None;
        let mut step = start;
        loop {
            let (payload, term) = self.code(FactorStop::Step(step))?;
            let exhausted = payload.encoded.breakpoint.last_plane.is_none_or(|p| p == 0);
            if term <= allowance {
                if let Some((coarse_term, coarse_sse)) = coarser.filter(|&(t, s)| t > 0.0 && s > 0.0) {
                    let ratio = coarse_term / coarse_sse;
                    let target = REFINE_AIM * allowance / ratio;
                    if target > scaled_sse(&payload) {
                        let (refined, refined_term) = self.code(FactorStop::ScaledSse(target))?;
                        if refined_term <= allowance && refined_term > term {
                            return Ok((refined, refined_term));
                        }
                    }
                }
                return Ok((payload, term));
            }
            if exhausted || step <= start - MAX_EXTRA_FACTOR_PLANES {
                return Ok((payload, term));
            }
            coarser = Some((term, scaled_sse(&payload)));
            step -= 1;
        }
    }
}

/// `±1` per column such that `adjusted = u · diag(flips)`.
fn column_flips<T: Scalar>(u: &Matrix<T>, adjusted: &Matrix<T>) -> Vec<T> {
    (0..u.cols())
        .map(|j| {
            let i = (0..u.rows())
                .max_by(|&a, &b| u.get(a, j).abs().partial_cmp(&u.get(b, j).abs()).expect("finite"))
                .unwrap_or(0);
            if u.get(i, j) * adjusted.get(i, j) < T::zero() {
                -T::one()
            } else {
                T::one()
            }
        })
        .collect()
}

/// Rebuilds the Tucker factorization stored in a container.
pub fn decode_factorization<T: Scalar>(c: &Container, workers: usize) -> Result<TuckerFactorization<T>> {
    let h = &c.header;
    let shape = h.core_shape();
    let (core, significant) = core_to_f64(&c.core, &shape, &h.vectorization, h.scale_exponent, workers)?;
    let layout = factor_layout(&core, &significant, (&h.mode_sizes, &h.processing_order, &h.vectorization, h.weighting))?;
    let mut factors = Vec::with_capacity(h.order());
    for (mode, (dead, scales, _)) in layout.iter().enumerate() {
        let payload = &c.factors[mode];
        if payload.dead != *dead {
            return Err(Error::corrupt(
                format!("factor section {mode}"),
                "dead-column map disagrees with the decoded core",
            ));
        }
        factors.push(decode_factor::<T>(payload, h.mode_sizes[mode], scales, workers)?);
    }
    Ok(TuckerFactorization {
        core: core.cast(),
        factors,
        processing_order: h.processing_order.clone(),
        step_truncation_sse: vec![0.0; h.order()],
    })
}

pub fn decompress_container<T: Scalar>(c: &Container, workers: usize) -> Result<DenseTensor<T>> {
    with_workers(workers, || {
        if c.header.zero_flag || c.core.breakpoint.last_plane.is_none() {
            return Ok(DenseTensor::zeros(c.header.mode_sizes.clone()));
        }
        let f = decode_factorization::<T>(c, 0)?;
        sthosvd::reconstruct(&f)
    })
}

pub fn decompress<T: Scalar>(bytes: &[u8], workers: usize) -> Result<DenseTensor<T>> {
    decompress_container(&read_container(bytes)?, workers)
}

/// Decompresses and encodes the result in the recorded element type.
pub fn decompress_to_bytes(bytes: &[u8], workers: usize) -> Result<(ContainerHeader, Vec<u8>)> {
    let c = read_container(bytes)?;
    let bytes = if c.header.precision == 32 {
        emit(&decompress_container::<f32>(&c, workers)?, c.header.dtype).bytes
    } else {
        emit(&decompress_container::<f64>(&c, workers)?, c.header.dtype).bytes
    };
    Ok((c.header, bytes))
}
