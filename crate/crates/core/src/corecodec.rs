//! Core quantization and bit-plane coding.
//!
//! Coefficients are scaled by `2^k` so the largest lands in `[2^63, 2^64)`
//! and rounded to 64-bit magnitudes. The vectorized magnitudes are cut into
//! equally sized blocks and coded plane by plane from bit 63 downwards. In
//! every plane-block, bits of coefficients that are still insignificant
//! (zeros, then the first 1) go through zero-run extraction and an entropy
//! coder; bits of significant coefficients and the sign of each newly
//! significant coefficient are stored raw, interleaved in position order.
//!
//! Coding stops on the first plane whose full encoding would bring the
//! tracked SSE under the target. That plane is coded a second time with stop
//! offsets found by a scan in synchronized rounds over the blocks, so the
//! output never depends on the number of worker threads.

use rayon::prelude::*;

use crate::entropy::{decode_symbols_at_most, encode_symbols, rle_restore, BitReader, BitWriter, CoderKind, RunLengthBuilder, RunLengthStream};
use crate::error::{Error, Result};
use crate::errormodel::{recalibrate_sse, residual_sq, EncodedState, SseTracker};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;
use crate::vectorize::{gather_offsets, VectorizationSpec};

/// Smallest default block, in coefficients.
pub const MIN_BLOCK_SIZE: usize = 4096;
/// Default number of blocks for large cores.
pub const NOMINAL_BLOCKS: usize = 64;
/// Coefficients per block per round when re-coding the final plane.
pub const DEFAULT_SYNC_INTERVAL: usize = 256;
/// Marker for "no plane encoded" in the serialized breakpoint.
pub const NO_PLANE: u8 = 0xFF;

/// `x·2^e` without intermediate overflow for large `|e|`.
pub fn ldexp(x: f64, e: i32) -> f64 {
    let mut x = x;
    let mut e = e;
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e)
}

/// Exponent `k` with `2^63 ≤ 2^k·max_abs < 2^64`, or `None` for zero.
pub fn scale_exponent(max_abs: f64) -> Option<i32> {
    if max_abs == 0.0 || !max_abs.is_finite() {
        return None;
    }
    let mut k = 63 - max_abs.log2().floor() as i32;
    while ldexp(max_abs, k) >= 2f64.powi(64) {
        k -= 1;
    }
    while ldexp(max_abs, k) < 2f64.powi(63) {
        k += 1;
    }
    Some(k)
}

/// Magnitudes, signs (`true` = negative) and scale of a coefficient stream.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuantizedStream {
    pub magnitudes: Vec<u64>,
    pub signs: Vec<bool>,
    pub scale_exponent: i32,
    pub zero_flag: bool,
}

pub fn quantize_values(values: &[f64]) -> QuantizedStream {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let Some(k) = scale_exponent(max) else {
        return QuantizedStream {
            magnitudes: vec![0; values.len()],
            signs: vec![false; values.len()],
            scale_exponent: 0,
            zero_flag: true,
        };
    };
    let magnitudes = values
        .iter()
        .map(|&v| {
            let s = ldexp(v.abs(), k).round();
            if s >= 2f64.powi(64) {
                u64::MAX
            } else {
                s as u64
            }
        })
        .collect();
    QuantizedStream {
        magnitudes,
        signs: values.iter().map(|&v| v < 0.0).collect(),
        scale_exponent: k,
        zero_flag: false,
    }
}

#[inline]
pub fn dequantize(magnitude: u64, negative: bool, k: i32) -> f64 {
    let v = ldexp(magnitude as f64, -k);
    if negative {
        -v
    } else {
        v
    }
}

/// Quantized core in vectorization order.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedCore {
    /// Core shape in its own layout (processing order).
    pub shape: Vec<usize>,
    pub spec: VectorizationSpec,
    pub magnitudes: Vec<u64>,
    pub signs: Vec<bool>,
    pub scale_exponent: i32,
    /// Slice norms of the quantized core, per core axis.
    pub slice_norms: Vec<Vec<f64>>,
    pub zero_flag: bool,
}

impl QuantizedCore {
    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    /// Quantized core scattered back to its own layout.
    pub fn to_tensor<T: Scalar>(&self) -> Result<DenseTensor<T>> {
        scatter(
            &self.magnitudes,
            &self.signs,
            self.scale_exponent,
            &self.shape,
            &self.spec,
        )
    }
}

pub fn quantize<T: Scalar>(core: &DenseTensor<T>, spec: &VectorizationSpec) -> Result<QuantizedCore> {
    if !core.is_finite() {
        return Err(Error::NonFinite);
    }
    let offsets = gather_offsets(spec, core.shape())?;
    let data = core.as_slice();
    let values: Vec<f64> = offsets.iter().map(|&o| data[o].to_f64_lossy()).collect();
    let s = quantize_values(&values);
    let mut q = QuantizedCore {
        shape: core.shape().to_vec(),
        spec: spec.clone(),
        magnitudes: s.magnitudes,
        signs: s.signs,
        scale_exponent: s.scale_exponent,
        slice_norms: Vec::new(),
        zero_flag: s.zero_flag,
    };
    let t: DenseTensor<f64> = q.to_tensor()?;
    q.slice_norms = (0..t.order()).map(|a| t.slice_norms(a)).collect::<Result<_>>()?;
    Ok(q)
}

/// Places vectorized values at their core positions.
pub fn scatter<T: Scalar>(
    magnitudes: &[u64],
    signs: &[bool],
    k: i32,
    shape: &[usize],
    spec: &VectorizationSpec,
) -> Result<DenseTensor<T>> {
    let offsets = gather_offsets(spec, shape)?;
    if offsets.len() != magnitudes.len() || signs.len() != magnitudes.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} coefficients for a core of {} cells",
            magnitudes.len(),
            offsets.len()
        )));
    }
    let mut data = vec![T::zero(); offsets.len()];
    for ((&o, &m), &s) in offsets.iter().zip(magnitudes).zip(signs) {
        data[o] = T::from_f64_lossy(dequantize(m, s, k));
    }
    DenseTensor::new(shape.to_vec(), data)
}

/// `E[(a−ã)²] / E[(a−ã−2^{p−1})²]` for `a` uniform over the unknown low bits.
pub fn expected_correction_gain(p: u32) -> f64 {
    if p == 0 {
        return 1.0;
    }
    let w = 2f64.powi(2 * p as i32);
    (w / 3.0) / (w / 12.0)
}

/// Tuning knobs of the bit-plane coder.
#[derive(Clone, Debug, PartialEq)]
pub struct CodecParams {
    pub coder: CoderKind,
    /// Explicit block size; `None` selects [`default_block_size`].
    pub block_size: Option<usize>,
    /// Worker threads; 0 uses the ambient rayon pool.
    pub workers: usize,
    /// Separate final-plane breakpoints per bit category.
    pub split: bool,
    pub sync_interval: usize,
    /// Threads used when re-coding the final plane; `None` = `workers`.
    pub final_plane_workers: Option<usize>,
}

impl Default for CodecParams {
    fn default() -> Self {
        Self {
            coder: CoderKind::Arithmetic,
            block_size: None,
            workers: 0,
            split: true,
            sync_interval: DEFAULT_SYNC_INTERVAL,
            final_plane_workers: None,
        }
    }
}

/// `max(4096, ceil(n/64))`, independent of the worker count.
pub fn default_block_size(n: usize) -> usize {
    MIN_BLOCK_SIZE.max(n.div_ceil(NOMINAL_BLOCKS))
}

pub(crate) fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Final-plane stop offsets of one block, per bit category.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BlockStops {
    pub lead: usize,
    pub trail: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Breakpoint {
    /// Lowest plane coded, `None` if nothing was coded.
    pub last_plane: Option<u8>,
    pub stops: Vec<BlockStops>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BlockPayload {
    /// Framed entropy-coded run lengths; empty when the block had no
    /// leading bits on this plane.
    pub entropy: Vec<u8>,
    /// Trailing and sign bits.
    pub raw: Vec<u8>,
}

impl BlockPayload {
    pub fn len(&self) -> usize {
        self.entropy.len() + self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Bit-plane coded coefficient stream.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EncodedCore {
    pub n_coeffs: usize,
    pub block_size: usize,
    pub coder: CoderKind,
    pub breakpoint: Breakpoint,
    /// `planes[i]` holds plane `63 − i`, one payload per block.
    pub planes: Vec<Vec<BlockPayload>>,
    /// Exact quantization SSE of the coded stream, in integer units.
    pub achieved_sse: f64,
    /// Tracked SSE after each fully coded plane (not serialized).
    pub trace: Vec<(u8, f64)>,
    pub recalibrations: usize,
}

impl EncodedCore {
    pub fn n_blocks(&self) -> usize {
        block_count(self.n_coeffs, self.block_size)
    }

    pub fn payload_bytes(&self) -> usize {
        self.planes.iter().flatten().map(BlockPayload::len).sum()
    }

    /// Unknown low planes of every coefficient once decoded.
    pub fn depths(&self, magnitudes: &[u64]) -> Vec<u8> {
        coefficient_depths(&self.breakpoint, self.block_size, |i| {
            magnitudes[i] >> 1 >> self.breakpoint.last_plane.unwrap_or(63) != 0
        }, self.n_coeffs)
    }
}

fn block_count(n: usize, block_size: usize) -> usize {
    n.div_ceil(block_size.max(1))
}

fn coefficient_depths(
    bp: &Breakpoint,
    block_size: usize,
    significant_before_last: impl Fn(usize) -> bool,
    n: usize,
) -> Vec<u8> {
    let Some(lp) = bp.last_plane else {
        return vec![64; n];
    };
    (0..n)
        .map(|i| {
            let stop = bp.stops[i / block_size];
            let local = i % block_size;
            let limit = if significant_before_last(i) { stop.trail } else { stop.lead };
            if local < limit {
                lp
            } else {
                lp + 1
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default)]
struct BlockStats {
    lead_reduction: f64,
    trail_reduction: f64,
    /// Entropy bytes · 8 plus sign bits.
    lead_bits: u64,
    trail_bits: u64,
}

#[inline]
fn plane_reduction(m: u64, p: u32) -> f64 {
    residual_sq(m, p + 1) - residual_sq(m, p)
}

fn encode_plane_block(
    mags: &[u64],
    signs: &[bool],
    p: u32,
    stops: BlockStops,
    coder: CoderKind,
) -> Result<(BlockPayload, BlockStats)> {
    let mut rle = RunLengthBuilder::default();
    let mut raw = BitWriter::new();
    let mut stats = BlockStats::default();
    let mut sign_bits = 0u64;
    for (i, (&m, &neg)) in mags.iter().zip(signs).enumerate() {
        let bit = (m >> p) & 1 == 1;
        if m >> p >> 1 == 0 {
            if i < stops.lead {
                rle.push(bit);
                if bit {
                    raw.write_bit(neg);
                    sign_bits += 1;
                }
                stats.lead_reduction += plane_reduction(m, p);
            }
        } else if i < stops.trail {
            raw.write_bit(bit);
            stats.trail_bits += 1;
            stats.trail_reduction += plane_reduction(m, p);
        }
    }
    let RunLengthStream { symbols } = rle.finish();
    let entropy = if symbols.is_empty() {
        Vec::new()
    } else {
        encode_symbols(coder, &symbols)?
    };
    stats.lead_bits = entropy.len() as u64 * 8 + sign_bits;
    Ok((
        BlockPayload {
            entropy,
            raw: raw.finish(),
        },
        stats,
    ))
}

/// When to stop coding planes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Stop once the quantization SSE (integer units) reaches the target.
    TargetSse(f64),
    /// Code every plane down to and including this one.
    Plane(u8),
}

/// Codes a core so that its quantization SSE (in value units) meets
/// `quant_sse_target`.
pub fn encode(q: &QuantizedCore, quant_sse_target: f64, params: &CodecParams) -> Result<EncodedCore> {
    if quant_sse_target.is_nan() || quant_sse_target < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "quantization target must be nonnegative, got {quant_sse_target}"
        )));
    }
    let target = if q.zero_flag {
        f64::INFINITY
    } else {
        ldexp(quant_sse_target, 2 * q.scale_exponent)
    };
    encode_stream(&q.magnitudes, &q.signs, StopRule::TargetSse(target), params)
}

/// Bit-plane codes an arbitrary magnitude/sign stream.
pub fn encode_stream(
    mags: &[u64],
    signs: &[bool],
    rule: StopRule,
    params: &CodecParams,
) -> Result<EncodedCore> {
    with_workers(params.workers, || encode_stream_pooled(mags, signs, rule, params))
}

fn encode_stream_pooled(
    mags: &[u64],
    signs: &[bool],
    rule: StopRule,
    params: &CodecParams,
) -> Result<EncodedCore> {
    if mags.len() != signs.len() {
        return Err(Error::ShapeMismatch("magnitude and sign counts differ".into()));
    }
    let n = mags.len();
    let block_size = params.block_size.unwrap_or_else(|| default_block_size(n)).max(1);
    let nb = block_count(n, block_size);
    let mut out = EncodedCore {
        n_coeffs: n,
        block_size,
        coder: params.coder,
        ..Default::default()
    };
    let block_range = |b: usize| b * block_size..((b + 1) * block_size).min(n);
    let full_stops: Vec<BlockStops> = (0..nb)
        .map(|b| {
            let len = block_range(b).len();
            BlockStops { lead: len, trail: len }
        })
        .collect();

    let mut tracker = SseTracker::new(mags);
    if let StopRule::TargetSse(t) = rule {
        if n == 0 || tracker.value() <= t {
            out.achieved_sse = tracker.value();
            return Ok(out);
        }
    }

    let code_plane = |p: u32, stops: &[BlockStops]| -> Result<Vec<(BlockPayload, BlockStats)>> {
        (0..nb)
            .into_par_iter()
            .map(|b| {
                let r = block_range(b);
                encode_plane_block(&mags[r.clone()], &signs[r], p, stops[b], params.coder)
            })
            .collect()
    };

    let mut prev_stats: Option<Vec<BlockStats>> = None;
    for p in (0..64u32).rev() {
        let coded = code_plane(p, &full_stops)?;
        let reduction: f64 = coded
            .iter()
            .map(|(_, s)| s.lead_reduction + s.trail_reduction)
            .sum();
        let is_last = match rule {
            StopRule::Plane(lp) => p == lp as u32,
            StopRule::TargetSse(t) => {
                let mut last = false;
                if tracker.value() - reduction <= t {
                    tracker.set_exact(recalibrate_sse(mags, &EncodedState::Uniform(p + 1)));
                    last = tracker.value() - reduction <= t;
                }
                last
            }
        };
        if is_last || p == 0 {
            let stops = match rule {
                StopRule::TargetSse(t) if is_last => {
                    let order = category_order(params.split, prev_stats.as_deref());
                    let reductions = || {
                        (0..nb)
                            .into_par_iter()
                            .map(|b| {
                                mags[block_range(b)]
                                    .iter()
                                    .map(|&m| (plane_reduction(m, p), m >> p >> 1 == 0))
                                    .collect::<Vec<_>>()
                            })
                            .collect::<Vec<_>>()
                    };
                    let reds = match params.final_plane_workers {
                        Some(w) if w != params.workers => with_workers(w, reductions),
                        _ => reductions(),
                    };
                    final_plane_stops(&reds, tracker.value(), t, order, params.sync_interval.max(1))
                }
                _ => full_stops.clone(),
            };
            let payloads = if stops == full_stops {
                coded.into_iter().map(|(pl, _)| pl).collect()
            } else {
                code_plane(p, &stops)?.into_iter().map(|(pl, _)| pl).collect()
            };
            out.planes.push(payloads);
            out.breakpoint = Breakpoint {
                last_plane: Some(p as u8),
                stops,
            };
            break;
        }
        tracker.apply_reduction(reduction, n as u64);
        if tracker.needs_recalibration() {
            tracker.set_exact(recalibrate_sse(mags, &EncodedState::Uniform(p)));
        }
        out.trace.push((p as u8, tracker.value()));
        let (payloads, stats): (Vec<_>, Vec<_>) = coded.into_iter().unzip();
        out.planes.push(payloads);
        prev_stats = Some(stats);
    }
    let depths = out.depths(mags);
    out.achieved_sse = recalibrate_sse(mags, &EncodedState::PerCoefficient(&depths));
    out.recalibrations = tracker.recalibrations();
    Ok(out)
}

/// Bit categories in the order they consume the final plane's budget.
/// `None` means both categories stop at one shared offset.
fn category_order(split: bool, prev: Option<&[BlockStats]>) -> Option<[bool; 2]> {
    if !split {
        return None;
    }
    let Some(prev) = prev else {
        return Some([true, false]);
    };
    let eff = |red: f64, bits: u64| if bits == 0 { 0.0 } else { red / bits as f64 };
    let lead = eff(
        prev.iter().map(|s| s.lead_reduction).sum(),
        prev.iter().map(|s| s.lead_bits).sum(),
    );
    let trail = eff(
        prev.iter().map(|s| s.trail_reduction).sum(),
        prev.iter().map(|s| s.trail_bits).sum(),
    );
    if trail > lead {
        Some([false, true])
    } else {
        Some([true, false])
    }
}

/// Scans coefficients in (round, block, position) order, subtracting their
/// reductions from `start` until the target is met.
///
/// Returns the per-block stop offset and whether the target was reached.
fn scan_rounds(
    reds: &[Vec<(f64, bool)>],
    remaining: &mut f64,
    target: f64,
    category: Option<bool>,
    sync: usize,
) -> (Vec<usize>, bool) {
    let longest = reds.iter().map(Vec::len).max().unwrap_or(0);
    let rounds = longest.div_ceil(sync);
    for r in 0..rounds {
        for (b, block) in reds.iter().enumerate() {
            let lo = (r * sync).min(block.len());
            let hi = ((r + 1) * sync).min(block.len());
            for (j, &(red, lead)) in block.iter().enumerate().take(hi).skip(lo) {
                if category.is_some_and(|c| c != lead) {
                    continue;
                }
                *remaining -= red;
                if *remaining <= target {
                    let stops = reds
                        .iter()
                        .enumerate()
                        .map(|(b2, blk)| match b2.cmp(&b) {
                            std::cmp::Ordering::Less => ((r + 1) * sync).min(blk.len()),
                            std::cmp::Ordering::Equal => j + 1,
                            std::cmp::Ordering::Greater => (r * sync).min(blk.len()),
                        })
                        .collect();
                    return (stops, true);
                }
            }
        }
    }
    (reds.iter().map(Vec::len).collect(), false)
}

fn final_plane_stops(
    reds: &[Vec<(f64, bool)>],
    start: f64,
    target: f64,
    order: Option<[bool; 2]>,
    sync: usize,
) -> Vec<BlockStops> {
    let mut remaining = start;
    match order {
        None => {
            let (stops, _) = scan_rounds(reds, &mut remaining, target, None, sync);
            stops.into_iter().map(|s| BlockStops { lead: s, trail: s }).collect()
        }
        Some([first, second]) => {
            let (s1, done) = scan_rounds(reds, &mut remaining, target, Some(first), sync);
            let s2 = if done {
                vec![0; reds.len()]
            } else {
                scan_rounds(reds, &mut remaining, target, Some(second), sync).0
            };
            s1.into_iter()
                .zip(s2)
                .map(|(a, b)| if first { BlockStops { lead: a, trail: b } } else { BlockStops { lead: b, trail: a } })
                .collect()
        }
    }
}

/// Decoded magnitudes (with dequantization correction) and signs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodedStream {
    pub magnitudes: Vec<u64>,
    pub signs: Vec<bool>,
}

impl DecodedStream {
    pub fn significant(&self, i: usize) -> bool {
        self.magnitudes[i] != 0
    }
}

fn decode_block(e: &EncodedCore, b: usize, len: usize) -> Result<(Vec<u64>, Vec<bool>)> {
    let mut vals = vec![0u64; len];
    let mut neg = vec![false; len];
    let mut on_last = vec![false; len];
    let Some(lp) = e.breakpoint.last_plane else {
        return Ok((vals, neg));
    };
    for (pi, plane) in e.planes.iter().enumerate() {
        let p = 63 - pi as u32;
        let where_ = || format!("core plane {p} block {b}");
        let payload = plane
            .get(b)
            .ok_or_else(|| Error::corrupt(where_(), "missing block payload"))?;
        let stops = if p == lp as u32 {
            e.breakpoint.stops[b]
        } else {
            BlockStops { lead: len, trail: len }
        };
        let lead_count = (0..len.min(stops.lead)).filter(|&i| vals[i] == 0).count();
        let lead_bits = if lead_count > 0 {
            let (_, symbols) = decode_symbols_at_most(&payload.entropy, lead_count + 1).map_err(|err| Error::corrupt(where_(), err.to_string()))?;
            rle_restore(&RunLengthStream { symbols }, lead_count).map_err(|err| Error::corrupt(where_(), err.to_string()))?
        } else {
            if !payload.entropy.is_empty() {
                return Err(Error::corrupt(where_(), "unexpected entropy payload"));
            }
            Vec::new()
        };
        let mut raw = BitReader::new(&payload.raw);
        let mut lead_iter = lead_bits.into_iter();
        let bit_err = |err: Error| Error::corrupt(where_(), err.to_string());
        for i in 0..len {
            if vals[i] == 0 {
                if i < stops.lead {
                    let bit = lead_iter.next().expect("lead bit count matches");
                    if bit {
                        vals[i] |= 1 << p;
                        neg[i] = raw.read_bit().map_err(bit_err)?;
                    }
                    on_last[i] = true;
                }
            } else if i < stops.trail {
                if raw.read_bit().map_err(bit_err)? {
                    vals[i] |= 1 << p;
                }
                on_last[i] = true;
            }
        }
        if raw.bits_read().div_ceil(8) != payload.raw.len() {
            return Err(Error::corrupt(where_(), "raw bits left over"));
        }
        if p == lp as u32 {
            break;
        }
        on_last.iter_mut().for_each(|x| *x = false);
    }
    for i in 0..len {
        let depth = if on_last[i] { lp as u32 } else { lp as u32 + 1 };
        if vals[i] != 0 && depth > 0 {
            vals[i] += 1 << (depth - 1);
        }
    }
    Ok((vals, neg))
}

/// Decodes all blocks (in parallel) and applies the dequantization
/// correction.
pub fn decode(e: &EncodedCore, workers: usize) -> Result<DecodedStream> {
    let nb = e.n_blocks();
    if let Some(lp) = e.breakpoint.last_plane {
        if e.planes.len() != 64 - lp as usize || e.breakpoint.stops.len() != nb {
            return Err(Error::corrupt("core payload", "plane or block count inconsistent with breakpoint"));
        }
    }
    let blocks: Vec<(Vec<u64>, Vec<bool>)> = with_workers(workers, || {
        (0..nb)
            .into_par_iter()
            .map(|b| {
                let len = ((b + 1) * e.block_size).min(e.n_coeffs) - b * e.block_size;
                decode_block(e, b, len)
            })
            .collect::<Result<_>>()
    })?;
    let mut magnitudes = Vec::with_capacity(e.n_coeffs);
    let mut signs = Vec::with_capacity(e.n_coeffs);
    for (m, s) in blocks {
        magnitudes.extend(m);
        signs.extend(s);
    }
    Ok(DecodedStream { magnitudes, signs })
}

/// Core slices (per core axis) whose coefficients are all insignificant.
pub fn dead_slices(significant: impl Fn(usize) -> bool, shape: &[usize], spec: &VectorizationSpec) -> Result<Vec<Vec<bool>>> {
    let offsets = gather_offsets(spec, shape)?;
    let strides = crate::tensor::strides(shape);
    let mut alive: Vec<Vec<bool>> = shape.iter().map(|&n| vec![false; n]).collect();
    for (i, &o) in offsets.iter().enumerate() {
        if significant(i) {
            for (a, (&st, &n)) in strides.iter().zip(shape).enumerate() {
                alive[a][(o / st) % n] = true;
            }
        }
    }
    Ok(alive.into_iter().map(|v| v.into_iter().map(|x| !x).collect()).collect())
}

/// Factor columns that need not be stored: one set per core axis.
pub fn skip_dead_slices(q: &QuantizedCore, e: &EncodedCore) -> Result<Vec<Vec<bool>>> {
    if q.zero_flag || e.breakpoint.last_plane.is_none() {
        return Ok(q.shape.iter().map(|&n| vec![true; n]).collect());
    }
    let depths = e.depths(&q.magnitudes);
    dead_slices(
        |i| q.magnitudes[i] >> depths[i].min(63) != 0 && depths[i] < 64,
        &q.shape,
        &q.spec,
    )
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidArgument("payload larger than 4 GiB".into()))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

/// Serializes a coded stream in the section layout.
pub fn write_payload(e: &EncodedCore, out: &mut Vec<u8>) -> Result<()> {
    out.extend_from_slice(&(e.n_coeffs as u64).to_le_bytes());
    out.extend_from_slice(&(e.block_size as u64).to_le_bytes());
    out.push(e.coder.id());
    match e.breakpoint.last_plane {
        None => out.push(NO_PLANE),
        Some(lp) => {
            out.push(lp);
            for s in &e.breakpoint.stops {
                out.extend_from_slice(&(s.lead as u64).to_le_bytes());
                out.extend_from_slice(&(s.trail as u64).to_le_bytes());
            }
            for plane in &e.planes {
                for b in plane {
                    put_u32(out, b.len())?;
                    put_u32(out, b.entropy.len())?;
                    out.extend_from_slice(&b.entropy);
                    out.extend_from_slice(&b.raw);
                }
            }
        }
    }
    Ok(())
}

/// Byte cursor with section-named truncation errors.
pub(crate) struct Cursor<'a> {
    pub(crate) bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(what.to_string()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_bits(self.u64(what)?))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Parses a payload written by [`write_payload`]; `section` names it in
/// errors.
pub fn read_payload(bytes: &[u8], section: &str) -> Result<EncodedCore> {
    let mut c = Cursor::new(bytes);
    let name = |what: &str| format!("{section} {what}");
    let n = c.u64(&name("coefficient count"))? as usize;
    let block_size = c.u64(&name("block size"))? as usize;
    if block_size == 0 {
        return Err(Error::corrupt(section, "zero block size"));
    }
    let coder_id = c.u8(&name("coder id"))?;
    let coder = CoderKind::from_id(coder_id)
        .ok_or_else(|| Error::corrupt(section, format!("unknown coder id {coder_id}")))?;
    let lp = c.u8(&name("breakpoint"))?;
    let nb = block_count(n, block_size);
    let mut e = EncodedCore {
        n_coeffs: n,
        block_size,
        coder,
        ..Default::default()
    };
    if lp != NO_PLANE {
        if lp > 63 {
            return Err(Error::corrupt(section, format!("invalid last plane {lp}")));
        }
        if nb > c.remaining() / 16 {
            return Err(Error::Truncated(name("block stops")));
        }
        for b in 0..nb {
            let len = ((b + 1) * block_size).min(n) - b * block_size;
            let lead = c.u64(&name("block stops"))? as usize;
            let trail = c.u64(&name("block stops"))? as usize;
            if lead > len || trail > len {
                return Err(Error::corrupt(section, format!("stop offset beyond block {b}")));
            }
            e.breakpoint.stops.push(BlockStops { lead, trail });
        }
        for p in (lp as u32..64).rev() {
            let mut plane = Vec::with_capacity(nb);
            for b in 0..nb {
                let what = name(&format!("plane {p} block {b}"));
                let len = c.u32(&what)? as usize;
                let elen = c.u32(&what)? as usize;
                if elen > len {
                    return Err(Error::corrupt(what, "entropy length exceeds payload length"));
                }
                let body = c.take(len, &what)?;
                plane.push(BlockPayload {
                    entropy: body[..elen].to_vec(),
                    raw: body[elen..].to_vec(),
                });
            }
            e.planes.push(plane);
        }
        e.breakpoint.last_plane = Some(lp);
    }
    if c.remaining() != 0 {
        return Err(Error::corrupt(section, "trailing bytes"));
    }
    Ok(e)
}
