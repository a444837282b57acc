//! Error-budget algebra: splitting the SSE target between rank truncation and
//! quantization, the total-error estimate, and floating-point SSE tracking
//! for the bit-plane encoder.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Default share of the SSE budget granted to rank truncation.
pub const DEFAULT_RTMSS: f64 = 0.5;

/// Constant `c` in the summation margin `c·ε·m·S`.
pub const MARGIN_CONSTANT: f64 = 4.0;

/// Recalibrate once the margin exceeds this fraction of the running SSE.
pub const RECALIBRATION_TRIGGER: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ErrorTarget {
    /// `‖A − Ã‖ / ‖A‖`.
    RelativeError(f64),
    /// `‖A − Ã‖²`.
    Sse(f64),
}

impl ErrorTarget {
    pub fn to_sse(self, norm_sq: f64) -> f64 {
        match self {
            ErrorTarget::RelativeError(re) => re * re * norm_sq,
            ErrorTarget::Sse(s) => s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorBudget {
    pub target_sse_total: f64,
    pub rtmss: f64,
    pub realized_truncation_sse: f64,
    pub core_quant_target_sse: f64,
}

impl ErrorBudget {
    pub fn sthosvd_target(&self) -> f64 {
        self.rtmss * self.target_sse_total
    }

    /// Records the truncation SSE actually realized; the rest of the total
    /// goes to core quantization.
    pub fn record_truncation(&mut self, realized: f64) {
        self.realized_truncation_sse = realized;
        self.core_quant_target_sse = (self.target_sse_total - realized).max(0.0);
    }
}

pub fn make_budget(target: ErrorTarget, norm_sq: f64, rtmss: f64) -> Result<ErrorBudget> {
    let raw = match target {
        ErrorTarget::RelativeError(v) | ErrorTarget::Sse(v) => v,
    };
    if !raw.is_finite() || raw < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "error target must be a nonnegative number, got {raw}"
        )));
    }
    if !(0.0..=1.0).contains(&rtmss) {
        return Err(Error::InvalidArgument(format!(
            "rtmss must lie in [0, 1], got {rtmss}"
        )));
    }
    let total = target.to_sse(norm_sq);
    Ok(ErrorBudget {
        target_sse_total: total,
        rtmss,
        realized_truncation_sse: 0.0,
        core_quant_target_sse: total,
    })
}

/// Components of the predicted compression error.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorEstimate {
    pub truncation_sse: f64,
    pub core_quantization_sse: f64,
    /// `‖δU_i Σ̃_i‖²_F` per mode.
    pub factor_terms: Vec<f64>,
}

impl ErrorEstimate {
    pub fn total(&self) -> f64 {
        estimate_total_sse(self)
    }
}

/// Truncation + core quantization + factor terms; all inner products between
/// the perturbations are dropped.
pub fn estimate_total_sse(e: &ErrorEstimate) -> f64 {
    e.truncation_sse + e.core_quantization_sse + e.factor_terms.iter().sum::<f64>()
}

/// `‖δU · diag(σ̃)‖²_F`.
pub fn factor_term(delta_u: &Matrix<f64>, slice_norms: &[f64]) -> f64 {
    assert_eq!(delta_u.cols(), slice_norms.len());
    let mut total = 0.0;
    for i in 0..delta_u.rows() {
        for (j, &s) in slice_norms.iter().enumerate() {
            let v = delta_u.get(i, j) * s;
            total += v * v;
        }
    }
    total
}

/// Sum of squares accumulated from the last element to the first.
///
/// Vectorized cores start with their largest coefficients, so summing from
/// the back adds the small terms together before they meet the large ones.
pub fn backward_sum_sse(values: &[f64]) -> f64 {
    values.iter().rev().fold(0.0, |acc, &v| acc + v * v)
}

/// Conservative bound on the rounding error accumulated by `terms` floating
/// additions whose operands had magnitude up to `magnitude`.
pub fn recalibration_margin(terms: u64, magnitude: f64) -> f64 {
    MARGIN_CONSTANT * f64::EPSILON * terms as f64 * magnitude.abs()
}

/// Signed difference between a quantized magnitude and what the decoder
/// reconstructs once its `unencoded` lowest planes are unknown.
///
/// Significant values are decoded at the middle of their uncertainty interval;
/// insignificant ones decode to zero.
#[inline]
pub fn dequantization_residual(magnitude: u64, unencoded: u32) -> i128 {
    if unencoded >= 64 {
        return magnitude as i128;
    }
    let known = (magnitude >> unencoded) << unencoded;
    if known == 0 {
        return magnitude as i128;
    }
    if unencoded == 0 {
        return 0;
    }
    let low = (magnitude - known) as i128;
    low - (1i128 << (unencoded - 1))
}

#[inline]
pub fn residual_sq(magnitude: u64, unencoded: u32) -> f64 {
    let r = dequantization_residual(magnitude, unencoded) as f64;
    r * r
}

/// How far each coefficient of a vectorized core has been encoded.
#[derive(Clone, Debug)]
pub enum EncodedState<'a> {
    /// Every coefficient has the same number of unknown low planes.
    Uniform(u32),
    /// Unknown low planes per coefficient.
    PerCoefficient(&'a [u8]),
}

/// Exact quantization SSE `Σ (quantized[i] − encoded[i])²` of the current
/// encoding state, summed backward.
pub fn recalibrate_sse(magnitudes: &[u64], state: &EncodedState<'_>) -> f64 {
    match state {
        EncodedState::Uniform(u) => magnitudes
            .iter()
            .rev()
            .fold(0.0, |acc, &m| acc + residual_sq(m, *u)),
        EncodedState::PerCoefficient(depths) => {
            assert_eq!(depths.len(), magnitudes.len());
            magnitudes
                .iter()
                .zip(depths.iter())
                .rev()
                .fold(0.0, |acc, (&m, &u)| acc + residual_sq(m, u as u32))
        }
    }
}

/// Running quantization SSE, decreased plane by plane and recomputed exactly
/// whenever the accumulated rounding margin becomes significant.
#[derive(Clone, Debug)]
pub struct SseTracker {
    running: f64,
    reference: f64,
    terms: u64,
    recalibrations: usize,
}

impl SseTracker {
    /// Starts from the squared norm of the magnitudes (nothing encoded yet).
    pub fn new(magnitudes: &[u64]) -> Self {
        let running = recalibrate_sse(magnitudes, &EncodedState::Uniform(64));
        Self {
            running,
            reference: running,
            terms: magnitudes.len() as u64,
            recalibrations: 0,
        }
    }

    pub fn value(&self) -> f64 {
        self.running
    }

    pub fn recalibrations(&self) -> usize {
        self.recalibrations
    }

    pub fn margin(&self) -> f64 {
        recalibration_margin(self.terms, self.reference)
    }

    /// Applies a plane's SSE reduction computed from `terms` per-coefficient
    /// updates.
    pub fn apply_reduction(&mut self, reduction: f64, terms: u64) {
        self.running -= reduction;
        self.terms += terms;
    }

    pub fn needs_recalibration(&self) -> bool {
        self.margin() > RECALIBRATION_TRIGGER * self.running.abs()
    }

    pub fn set_exact(&mut self, exact: f64) {
        self.running = exact;
        self.reference = exact;
        self.terms = 0;
        self.recalibrations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_examples() {
        let b = make_budget(ErrorTarget::Sse(100.0), 1e6, 0.0).unwrap();
        assert_eq!(b.sthosvd_target(), 0.0);
        let b = make_budget(ErrorTarget::Sse(100.0), 1e6, 1.0).unwrap();
        assert_eq!(b.sthosvd_target(), 100.0);
        let mut b = make_budget(ErrorTarget::Sse(100.0), 1e6, 0.5).unwrap();
        b.record_truncation(42.0);
        assert_eq!(b.core_quant_target_sse, 58.0);
        assert_eq!(b.core_quant_target_sse + b.realized_truncation_sse, b.target_sse_total);
        let b = make_budget(ErrorTarget::RelativeError(0.1), 400.0, 0.5).unwrap();
        assert!((b.target_sse_total - 4.0).abs() < 1e-12);
        assert!(make_budget(ErrorTarget::Sse(-1.0), 1.0, 0.5).is_err());
        assert!(make_budget(ErrorTarget::Sse(1.0), 1.0, 1.5).is_err());
    }

    #[test]
    fn overshooting_truncation_clamps_quant_target() {
        let mut b = make_budget(ErrorTarget::Sse(10.0), 1.0, 1.0).unwrap();
        b.record_truncation(12.0);
        assert_eq!(b.core_quant_target_sse, 0.0);
    }

    #[test]
    fn estimate_examples() {
        let e = ErrorEstimate {
            truncation_sse: 3.0,
            core_quantization_sse: 0.0,
            factor_terms: vec![0.0, 0.0],
        };
        assert_eq!(estimate_total_sse(&e), 3.0);
        let e = ErrorEstimate {
            truncation_sse: 3.0,
            core_quantization_sse: 2.0,
            factor_terms: vec![0.0; 3],
        };
        assert_eq!(e.total(), 5.0);
    }

    #[test]
    fn factor_term_weights_columns() {
        let du = Matrix::new(2, 2, vec![1.0, 1.0, 0.0, 2.0]).unwrap();
        // column 0 scaled by 3, column 1 by 0.5
        assert!((factor_term(&du, &[3.0, 0.5]) - (9.0 + 0.25 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn backward_sum_examples() {
        assert_eq!(backward_sum_sse(&[]), 0.0);
        assert_eq!(backward_sum_sse(&[3.0, 4.0]), 25.0);
    }

    #[test]
    fn margin_and_recalibration() {
        assert_eq!(recalibration_margin(0, 1e10), 0.0);
        let mags = [u64::MAX, 1 << 40, 12345, 0];
        assert_eq!(recalibrate_sse(&mags, &EncodedState::Uniform(0)), 0.0);
        let exact: f64 = mags.iter().map(|&m| (m as f64) * (m as f64)).rev().sum();
        assert_eq!(recalibrate_sse(&mags, &EncodedState::Uniform(64)), exact);
    }

    #[test]
    fn residual_model() {
        // plane 4 and below unknown: correction adds 8
        assert_eq!(dequantization_residual(0b1011_0110, 4), 0b0110 - 8);
        assert_eq!(dequantization_residual(0b0000_0110, 4), 6);
        assert_eq!(dequantization_residual(0b1011_0110, 0), 0);
        assert_eq!(dequantization_residual(7, 64), 7);
    }

    #[test]
    fn tracker_triggers() {
        let mags = vec![1u64 << 60; 1000];
        let mut t = SseTracker::new(&mags);
        assert!(!t.needs_recalibration());
        let v = t.value();
        t.apply_reduction(v * (1.0 - 1e-14), 1000);
        assert!(t.needs_recalibration());
        t.set_exact(1.0);
        assert!(!t.needs_recalibration());
        assert_eq!(t.recalibrations(), 1);
    }
}
