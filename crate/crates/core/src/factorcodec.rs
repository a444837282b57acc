//! Factor matrices stored as Householder reflectors.
//!
//! An `n × r` orthonormal factor equals `H_1⋯H_r[I; 0]` up to column signs,
//! where `H_j = I − 2v_jv_jᵀ` and `v_j` vanishes above row `j`. Each `v_j`
//! is unit length with its diagonal entry the largest (and, once stored,
//! positive) component, so only the entries below the diagonal are kept:
//! `nr − r(r+1)/2` numbers per factor. These are scaled per column, quantized
//! and coded with the core's bit-plane coder.

use crate::corecodec::{
    decode, dequantize, encode_stream, quantize_values, read_payload, write_payload, CodecParams,
    EncodedCore, StopRule, ldexp,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Largest tolerated `‖UᵀU − I‖_max` for [`factorize`] in double precision.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-8;

/// Tolerance for an `n`-row factor held in `T`.
pub fn orthonormal_tolerance<T: Scalar>(n: usize) -> f64 {
    ORTHONORMAL_TOLERANCE.max(64.0 * n as f64 * T::epsilon().to_f64_lossy())
}

/// Reflectors of one factor; `reflectors[j]` has length `n − j` and
/// starts at row `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct HouseholderFactor {
    pub rows: usize,
    pub reflectors: Vec<Vec<f64>>,
}

impl HouseholderFactor {
    pub fn cols(&self) -> usize {
        self.reflectors.len()
    }

    /// Entries strictly below the diagonal, column by column.
    pub fn stored_coefficients(&self) -> Vec<f64> {
        self.reflectors.iter().flat_map(|v| v[1..].iter().copied()).collect()
    }

    /// Rebuilds reflectors from below-diagonal entries of the first
    /// `cols` columns; each diagonal is the positive root completing a unit
    /// norm.
    pub fn from_stored(rows: usize, cols: usize, coeffs: &[f64]) -> Result<Self> {
        if cols > rows || coeffs.len() != stored_count(rows, cols) {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients for {cols} reflectors of length {rows}",
                coeffs.len()
            )));
        }
        let mut reflectors = Vec::with_capacity(cols);
        let mut at = 0;
        for j in 0..cols {
            let below = &coeffs[at..at + rows - j - 1];
            at += below.len();
            let sq: f64 = below.iter().map(|x| x * x).sum();
            if sq.is_nan() || sq >= 1.0 {
                return Err(Error::InvalidReflector {
                    column: j,
                    norm: sq.sqrt(),
                });
            }
            let mut v = Vec::with_capacity(rows - j);
            v.push((1.0 - sq).sqrt());
            v.extend_from_slice(below);
            reflectors.push(v);
        }
        Ok(Self { rows, reflectors })
    }
}

/// `nr − r(r+1)/2`.
pub fn stored_count(n: usize, r: usize) -> usize {
    n * r - r * (r + 1) / 2
}

/// Householder reflectors of `u` and the column-sign-adjusted factor `Ū′`
/// they reproduce exactly.
pub fn factorize<T: Scalar>(u: &Matrix<T>) -> Result<(HouseholderFactor, Matrix<T>)> {
    let (n, r) = (u.rows(), u.cols());
    let defect = u.orthonormality_defect();
    if defect.is_nan() || defect > orthonormal_tolerance::<T>(n) || r > n {
        return Err(Error::NotOrthonormal(defect));
    }
    let mut a: Vec<f64> = u.as_slice().iter().map(|x| x.to_f64_lossy()).collect();
    let mut reflectors = Vec::with_capacity(r);
    let mut signs = Vec::with_capacity(r);
    for i in 0..r {
        let mut v: Vec<f64> = (i..n).map(|row| a[row * r + i]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let s = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += s * norm;
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vn > 0.0 {
            v.iter_mut().for_each(|x| *x /= vn);
        }
        for col in i..r {
            let dot: f64 = v.iter().enumerate().map(|(k, &vk)| vk * a[(i + k) * r + col]).sum();
            for (k, &vk) in v.iter().enumerate() {
                a[(i + k) * r + col] -= 2.0 * vk * dot;
            }
        }
        signs.push(if a[i * r + i] >= 0.0 { 1.0 } else { -1.0 });
        if v[0] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        reflectors.push(v);
    }
    let adjusted = Matrix::from_fn(n, r, |row, col| T::from_f64_lossy(signs[col]) * u.get(row, col));
    Ok((HouseholderFactor { rows: n, reflectors }, adjusted))
}

/// `H_1⋯H_c[I; 0]` for the `c` stored reflectors.
pub fn reconstruct<T: Scalar>(h: &HouseholderFactor) -> Matrix<T> {
    let (n, c) = (h.rows, h.cols());
    let mut m = vec![0.0f64; n * c];
    for j in 0..c {
        m[j * c + j] = 1.0;
    }
    for (j, v) in h.reflectors.iter().enumerate().rev() {
        // only columns ≥ j are touched by H_j
        for col in j..c {
            let dot: f64 = v.iter().enumerate().map(|(k, &vk)| vk * m[(j + k) * c + col]).sum();
            if dot != 0.0 {
                for (k, &vk) in v.iter().enumerate() {
                    m[(j + k) * c + col] -= 2.0 * vk * dot;
                }
            }
        }
    }
    Matrix::from_fn(n, c, |i, j| T::from_f64_lossy(m[i * c + j]))
}

/// How stored coefficients are weighted before quantization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FactorWeighting {
    /// `√(2α_j)` from the first-order error model.
    #[default]
    Alpha,
    /// The column's core slice norm `σ̃_j`.
    SliceNorm,
}

impl FactorWeighting {
    pub fn id(self) -> u8 {
        match self {
            FactorWeighting::Alpha => 0,
            FactorWeighting::SliceNorm => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(FactorWeighting::Alpha),
            1 => Some(FactorWeighting::SliceNorm),
            _ => None,
        }
    }
}

/// Per-column weights `α_j`; the weight of every stored entry of column
/// `j` is the same.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorWeights {
    pub alpha: Vec<f64>,
}

impl FactorWeights {
    /// `√(2α_j)`.
    pub fn scales(&self) -> Vec<f64> {
        self.alpha.iter().map(|a| (2.0 * a).sqrt()).collect()
    }
}

pub fn weights(slice_norms: &[f64], n: usize) -> Result<FactorWeights> {
    let r = slice_norms.len();
    if n < r {
        return Err(Error::InvalidArgument(format!("{r} columns exceed {n} rows")));
    }
    let sq: Vec<f64> = slice_norms.iter().map(|s| s * s).collect();
    let mut tail = 0.0;
    let mut alpha = vec![0.0; r];
    for j in (0..r).rev() {
        let nj = (n - j) as f64;
        let rt = nj.sqrt();
        let own = 1.0 + (nj + 5.0 * rt + 2.0) / ((rt + 1.0).powi(2) * rt);
        let mut a = own * sq[j];
        if tail > 0.0 {
            a += (2.0 / (nj - 1.0) + (nj + 2.0 * rt + 2.0) / ((rt + 1.0).powi(3) * rt)) * tail;
        }
        alpha[j] = a;
        tail += sq[j];
    }
    Ok(FactorWeights { alpha })
}

/// Multiplier applied to the stored entries of each column.
pub fn column_scales(slice_norms: &[f64], n: usize, weighting: FactorWeighting) -> Result<Vec<f64>> {
    match weighting {
        FactorWeighting::Alpha => Ok(weights(slice_norms, n)?.scales()),
        FactorWeighting::SliceNorm => {
            // a dead column borrows the largest later norm so it keeps a
            // usable step
            let mut out = vec![0.0; slice_norms.len()];
            let mut best = 0.0f64;
            for j in (0..slice_norms.len()).rev() {
                best = best.max(slice_norms[j]);
                out[j] = best;
            }
            Ok(out)
        }
    }
}

/// Coded reflectors of one factor.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorPayload {
    /// Columns decoded as zero.
    pub dead: Vec<bool>,
    pub scale_exponent: i32,
    pub zero_flag: bool,
    pub encoded: EncodedCore,
}

impl FactorPayload {
    /// Reflectors kept: up to the last live column.
    pub fn stored_columns(&self) -> usize {
        self.dead.iter().rposition(|&d| !d).map_or(0, |j| j + 1)
    }
}

/// Plane of a stream with scale exponent `k` whose step is `2^step_exponent`.
pub fn plane_for_step(step_exponent: i32, k: i32) -> u8 {
    (step_exponent as i64 + k as i64).clamp(0, 63) as u8
}

/// Where the coded reflector stream stops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FactorStop {
    /// Every plane down to quantization step `2^e` in scaled units.
    Step(i32),
    /// Quantization SSE of the scaled coefficients.
    ScaledSse(f64),
}

/// Quantization SSE of a coded factor stream in scaled units.
pub fn scaled_sse(p: &FactorPayload) -> f64 {
    ldexp(p.encoded.achieved_sse, -2 * p.scale_exponent)
}

/// Codes the reflectors of `h`, each column scaled by `scales`.
pub fn encode_factor(
    h: &HouseholderFactor,
    dead: &[bool],
    scales: &[f64],
    stop: FactorStop,
    params: &CodecParams,
) -> Result<FactorPayload> {
    let r = h.cols();
    if dead.len() != r || scales.len() != r {
        return Err(Error::ShapeMismatch("dead-column or scale count differs from rank".into()));
    }
    let mut payload = FactorPayload {
        dead: dead.to_vec(),
        scale_exponent: 0,
        zero_flag: true,
        encoded: EncodedCore::default(),
    };
    let cols = payload.stored_columns();
    let values: Vec<f64> = h.reflectors[..cols]
        .iter()
        .zip(scales)
        .flat_map(|(v, &s)| v[1..].iter().map(move |&x| x * s))
        .collect();
    let q = quantize_values(&values);
    payload.scale_exponent = q.scale_exponent;
    payload.zero_flag = q.zero_flag;
    let rule = match stop {
        _ if q.zero_flag => StopRule::TargetSse(f64::INFINITY),
        FactorStop::Step(e) => StopRule::Plane(plane_for_step(e, q.scale_exponent)),
        FactorStop::ScaledSse(t) => StopRule::TargetSse(ldexp(t.max(0.0), 2 * q.scale_exponent)),
    };
    payload.encoded = encode_stream(&q.magnitudes, &q.signs, rule, params)?;
    Ok(payload)
}

/// Inverse of [`encode_factor`]: an `n × r` factor with dead columns zeroed.
pub fn decode_factor<T: Scalar>(
    payload: &FactorPayload,
    n: usize,
    scales: &[f64],
    workers: usize,
) -> Result<Matrix<T>> {
    let r = payload.dead.len();
    let cols = payload.stored_columns();
    if scales.len() != r || r > n {
        return Err(Error::ShapeMismatch("factor shape disagrees with its payload".into()));
    }
    let count = stored_count(n, cols);
    if payload.encoded.n_coeffs != count {
        return Err(Error::corrupt(
            "factor payload",
            format!("{} coefficients, expected {count}", payload.encoded.n_coeffs),
        ));
    }
    let d = decode(&payload.encoded, workers)?;
    let mut coeffs = Vec::with_capacity(count);
    let mut at = 0;
    for (j, &s) in scales.iter().enumerate().take(cols) {
        for _ in j + 1..n {
            let v = dequantize(d.magnitudes[at], d.signs[at], payload.scale_exponent);
            coeffs.push(if s > 0.0 { v / s } else { 0.0 });
            at += 1;
        }
    }
    let h = HouseholderFactor::from_stored(n, cols, &coeffs)?;
    let partial: Matrix<T> = reconstruct(&h);
    Ok(Matrix::from_fn(n, r, |i, j| {
        if j < cols && !payload.dead[j] {
            partial.get(i, j)
        } else {
            T::zero()
        }
    }))
}

pub fn write_factor_payload(p: &FactorPayload, out: &mut Vec<u8>) -> Result<()> {
    let mut bitmap = vec![0u8; p.dead.len().div_ceil(8)];
    for (j, &d) in p.dead.iter().enumerate() {
        if d {
            bitmap[j / 8] |= 1 << (j % 8);
        }
    }
    out.extend_from_slice(&bitmap);
    out.extend_from_slice(&p.scale_exponent.to_le_bytes());
    out.push(p.zero_flag as u8);
    write_payload(&p.encoded, out)
}

/// Parses a factor section for a factor of rank `r`.
pub fn read_factor_payload(bytes: &[u8], r: usize, section: &str) -> Result<FactorPayload> {
    let nb = r.div_ceil(8);
    if bytes.len() < nb + 5 {
        return Err(Error::Truncated(format!("{section} header")));
    }
    let dead = (0..r).map(|j| bytes[j / 8] >> (j % 8) & 1 == 1).collect();
    let scale_exponent = i32::from_le_bytes(bytes[nb..nb + 4].try_into().expect("4 bytes"));
    let zero_flag = match bytes[nb + 4] {
        0 => false,
        1 => true,
        other => return Err(Error::corrupt(section, format!("invalid zero flag {other}"))),
    };
    let encoded = read_payload(&bytes[nb + 5..], section)?;
    Ok(FactorPayload {
        dead,
        scale_exponent,
        zero_flag,
        encoded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormal(n: usize, r: usize, seed: u64) -> Matrix<f64> {
        let mut s = seed;
        let a = Matrix::from_fn(n, r, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        });
        // modified Gram-Schmidt
        let mut q = a.clone();
        for j in 0..r {
            for k in 0..j {
                let dot: f64 = (0..n).map(|i| q.get(i, j) * q.get(i, k)).sum();
                for i in 0..n {
                    q.set(i, j, q.get(i, j) - dot * q.get(i, k));
                }
            }
            let norm: f64 = (0..n).map(|i| q.get(i, j).powi(2)).sum::<f64>().sqrt();
            for i in 0..n {
                q.set(i, j, q.get(i, j) / norm);
            }
        }
        q
    }

    #[test]
    fn one_by_one() {
        let u = Matrix::new(1, 1, vec![1.0]).unwrap();
        let (h, adj) = factorize(&u).unwrap();
        assert_eq!(h.reflectors, vec![vec![1.0]]);
        assert_eq!(adj.as_slice(), &[-1.0]);
    }

    #[test]
    fn counts() {
        assert_eq!(stored_count(5, 3), 9);
        let u = orthonormal(5, 3, 1);
        let (h, _) = factorize(&u).unwrap();
        assert_eq!(h.stored_coefficients().len(), 9);
    }

    #[test]
    fn roundtrip_and_diagonal_dominance() {
        let u = orthonormal(8, 4, 7);
        let (h, adj) = factorize(&u).unwrap();
        for v in &h.reflectors {
            assert!(v[0] > 0.0);
            assert!(v.iter().all(|x| x.abs() <= v[0]));
            assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let back = HouseholderFactor::from_stored(8, 4, &h.stored_coefficients()).unwrap();
        let rec: Matrix<f64> = reconstruct(&back);
        for (a, b) in rec.as_slice().iter().zip(adj.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        for j in 0..4 {
            let s = adj.get(0, j) / u.get(0, j);
            assert!((s.abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_coefficients_give_minus_identity() {
        let h = HouseholderFactor::from_stored(4, 2, &[0.0; 5]).unwrap();
        let m: Matrix<f64> = reconstruct(&h);
        assert_eq!(m.as_slice(), &[-1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
        let empty: Matrix<f64> = reconstruct(&HouseholderFactor::from_stored(4, 0, &[]).unwrap());
        assert_eq!(empty.cols(), 0);
        assert!(HouseholderFactor::from_stored(2, 1, &[1.0]).is_err());
    }

    #[test]
    fn weight_examples() {
        let w = weights(&[2.0], 1).unwrap();
        assert!((w.alpha[0] - 12.0).abs() < 1e-12);
        let w = weights(&[3.0, 1.0, 0.5], 6).unwrap();
        for (a, s) in w.alpha.iter().zip([3.0f64, 1.0, 0.5]) {
            assert!(*a >= s * s);
        }
        assert!(weights(&[1.0, 1.0], 1).is_err());
        assert!(factorize(&Matrix::new(2, 1, vec![1.0, 1.0]).unwrap()).is_err());
    }

    #[test]
    fn coded_roundtrip_with_dead_columns() {
        let u = orthonormal(12, 5, 3);
        let (h, adj) = factorize(&u).unwrap();
        let dead = [false, true, false, true, true];
        let scales = column_scales(&[4.0, 0.0, 1.0, 0.0, 0.0], 12, FactorWeighting::Alpha).unwrap();
        let p = encode_factor(&h, &dead, &scales, FactorStop::Step(-1000), &CodecParams::default()).unwrap();
        assert_eq!(p.stored_columns(), 3);
        let mut buf = Vec::new();
        write_factor_payload(&p, &mut buf).unwrap();
        let back = read_factor_payload(&buf, 5, "factor 0").unwrap();
        assert_eq!((&back.dead, back.scale_exponent), (&p.dead, p.scale_exponent));
        assert_eq!(back.encoded.planes, p.encoded.planes);
        assert_eq!(back.encoded.breakpoint, p.encoded.breakpoint);
        let m: Matrix<f64> = decode_factor(&back, 12, &scales, 1).unwrap();
        for i in 0..12 {
            for j in 0..5 {
                if dead[j] {
                    assert_eq!(m.get(i, j), 0.0);
                } else {
                    assert!((m.get(i, j) - adj.get(i, j)).abs() < 1e-15);
                }
            }
        }
    }
}
