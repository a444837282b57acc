//! Sequentially truncated HOSVD with the circular mode shift.
//!
//! The input is transposed once into the processing order. Every step then
//! reads the current core as an `n × rest` matrix (a pure reinterpretation),
//! projects it as `Bᵀ·U` and reinterprets the `rest × r` product as a tensor
//! whose processed mode has moved to the back. After `d` steps the core is
//! stored in processing order again, with every mode truncated.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{DenseTensor, Matrix, ModePermutation};

/// Truncated Tucker decomposition.
#[derive(Clone, Debug)]
pub struct TuckerFactorization<T> {
    /// Core of shape `r[p[0]] × … × r[p[d-1]]`, modes stored in processing order.
    pub core: DenseTensor<T>,
    /// `factors[i]` is `n_i × r_i` with orthonormal columns, indexed by natural mode.
    pub factors: Vec<Matrix<T>>,
    pub processing_order: ModePermutation,
    /// Discarded `σ²` per step, in processing order.
    pub step_truncation_sse: Vec<f64>,
}

impl<T: Scalar> TuckerFactorization<T> {
    pub fn ranks(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.cols()).collect()
    }

    pub fn mode_sizes(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.rows()).collect()
    }

    pub fn truncation_sse(&self) -> f64 {
        self.step_truncation_sse.iter().sum()
    }

    /// Core axis holding natural mode `mode`.
    pub fn core_axis(&self, mode: usize) -> usize {
        self.processing_order.position_of(mode)
    }

    fn validate(&self) -> Result<()> {
        let d = self.factors.len();
        if self.core.order() != d || self.processing_order.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "core of order {} with {d} factors",
                self.core.order()
            )));
        }
        for (axis, &mode) in self.processing_order.as_slice().iter().enumerate() {
            if self.core.shape()[axis] != self.factors[mode].cols() {
                return Err(Error::ShapeMismatch(format!(
                    "core axis {axis} has size {} but factor {mode} has {} columns",
                    self.core.shape()[axis],
                    self.factors[mode].cols()
                )));
            }
        }
        Ok(())
    }
}

/// Mode processing order requested for compression.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum ModeOrder {
    /// Increasing mode size.
    #[default]
    Auto,
    Custom(ModePermutation),
}

/// Stable ascending sort of the modes by size.
pub fn compression_mode_order(mode_sizes: &[usize]) -> ModePermutation {
    let mut idx: Vec<usize> = (0..mode_sizes.len()).collect();
    idx.sort_by_key(|&i| mode_sizes[i]);
    ModePermutation::new(idx).expect("sorted indices form a permutation")
}

/// Reconstruction cost `Σ_i n_{q_1}…n_{q_i} · r_{q_i}…r_{q_d}` of processing
/// modes in order `q`.
pub fn decompression_cost(n: &[usize], r: &[usize], q: &[usize]) -> u128 {
    let d = q.len();
    let mut total: u128 = 0;
    for i in 0..d {
        let mut term: u128 = 1;
        for &m in &q[..=i] {
            term = term.saturating_mul(n[m] as u128);
        }
        for &m in &q[i..] {
            term = term.saturating_mul(r[m] as u128);
        }
        total = total.saturating_add(term);
    }
    total
}

/// Cheapest order for reconstruction, by exhaustive search. Ties go to the
/// lexicographically smallest permutation.
///
/// Beyond eight modes the search is skipped and modes are ordered by
/// increasing `r_i / n_i`.
pub fn decompression_mode_order(n: &[usize], r: &[usize]) -> ModePermutation {
    let d = n.len();
    if d > 8 {
        let mut idx: Vec<usize> = (0..d).collect();
        idx.sort_by(|&a, &b| {
            (r[a] * n[b]).cmp(&(r[b] * n[a])).then(a.cmp(&b))
        });
        return ModePermutation::new(idx).expect("permutation");
    }
    let mut perm: Vec<usize> = (0..d).collect();
    let mut best = perm.clone();
    let mut best_cost = decompression_cost(n, r, &perm);
    while next_permutation(&mut perm) {
        let cost = decompression_cost(n, r, &perm);
        if cost < best_cost {
            best_cost = cost;
            best.copy_from_slice(&perm);
        }
    }
    ModePermutation::new(best).expect("permutation")
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Smallest rank whose discarded tail of squared singular values fits the
/// budget. Returns the rank and the discarded sum.
pub fn choose_truncation_rank(squared_singular_values: &[f64], step_budget: f64) -> Result<(usize, f64)> {
    if squared_singular_values.is_empty() {
        return Err(Error::InvalidArgument(
            "no singular values to truncate".into(),
        ));
    }
    let len = squared_singular_values.len();
    let mut rank = len;
    let mut discarded = 0.0f64;
    // grow the discarded suffix while it still fits
    while rank > 0 {
        let next = discarded + squared_singular_values[rank - 1];
        if next > step_budget {
            break;
        }
        discarded = next;
        rank -= 1;
    }
    Ok((rank, discarded))
}

/// ST-HOSVD of `a` discarding at most `sse_target` (up to rounding).
pub fn compress<T: Scalar>(
    a: &DenseTensor<T>,
    sse_target: f64,
    order: &ModeOrder,
) -> Result<TuckerFactorization<T>> {
    if sse_target.is_nan() || sse_target < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "truncation target must be nonnegative, got {sse_target}"
        )));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    let d = a.order();
    let sizes = a.shape().to_vec();
    let p = match order {
        ModeOrder::Auto => compression_mode_order(&sizes),
        ModeOrder::Custom(p) => {
            if p.len() != d {
                return Err(Error::InvalidPermutation(p.as_slice().to_vec()));
            }
            p.clone()
        }
    };

    let first = a.transpose(&p)?;
    let mut shape = first.shape().to_vec();
    let mut data = first.into_vec();
    let mut factors: Vec<Option<Matrix<T>>> = vec![None; d];
    let mut step_sse = Vec::with_capacity(d);
    let mut remaining = sse_target;

    for (step, &mode) in p.as_slice().iter().enumerate() {
        let rows = shape[0];
        let cols = data.len() / rows;
        let (sq, basis, basis_cols) = left_singular_basis(&data, rows, cols);
        let budget = remaining / (d - step) as f64;
        let (chosen, _) = choose_truncation_rank(&sq, budget)?;
        // a rank of zero is never produced; the whole mode keeps one column
        let rank = chosen.max(1);
        let discarded: f64 = sq[rank..].iter().sum();
        remaining = (remaining - discarded).max(0.0);
        step_sse.push(discarded);

        let mut u = Matrix::from_fn(rows, rank, |i, j| basis[i * basis_cols + j]);
        fix_column_signs(&mut u);
        data = transposed_product(&data, rows, cols, &u);
        shape.remove(0);
        shape.push(rank);
        factors[mode] = Some(u);
    }

    let core = DenseTensor::new(shape, data)?;
    Ok(TuckerFactorization {
        core,
        factors: factors.into_iter().map(|f| f.expect("every mode processed")).collect(),
        processing_order: p,
        step_truncation_sse: step_sse,
    })
}

/// Squared singular values (descending, clamped at zero) and left singular
/// vectors of the row-major `rows × cols` matrix.
///
/// Wide matrices go through the eigen-decomposition of the `rows × rows` Gram
/// matrix; tall ones through a thin SVD.
pub(crate) fn left_singular_basis<T: Scalar>(
    data: &[T],
    rows: usize,
    cols: usize,
) -> (Vec<f64>, Vec<T>, usize) {
    if rows <= cols {
        let gram = gram_matrix(data, rows, cols);
        let (vals, vecs) = T::symmetric_eigen(&gram, rows);
        let sq = vals.iter().map(|v| v.to_f64_lossy().max(0.0)).collect();
        (sq, vecs, rows)
    } else {
        let (sv, vecs) = T::thin_svd(data, rows, cols);
        let sq = sv
            .iter()
            .map(|v| {
                let s = v.to_f64_lossy();
                s * s
            })
            .collect();
        (sq, vecs, cols)
    }
}

fn gram_matrix<T: Scalar>(data: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut gram = vec![T::zero(); rows * rows];
    gram.par_chunks_mut(rows).enumerate().for_each(|(a, out)| {
        let ra = &data[a * cols..(a + 1) * cols];
        for b in 0..=a {
            let rb = &data[b * cols..(b + 1) * cols];
            out[b] = ra.iter().zip(rb).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
        }
    });
    for a in 0..rows {
        for b in a + 1..rows {
            gram[a * rows + b] = gram[b * rows + a];
        }
    }
    gram
}

/// Makes the largest-magnitude entry of every column nonnegative.
fn fix_column_signs<T: Scalar>(u: &mut Matrix<T>) {
    for j in 0..u.cols() {
        let mut best = 0;
        for i in 1..u.rows() {
            if u.get(i, j).abs() > u.get(best, j).abs() {
                best = i;
            }
        }
        if u.get(best, j) < T::zero() {
            for i in 0..u.rows() {
                u.set(i, j, -u.get(i, j));
            }
        }
    }
}

/// `Bᵀ·W` for a row-major `rows × cols` matrix `B` and a `rows × k` matrix
/// `W`, returned row-major `cols × k`.
pub(crate) fn transposed_product<T: Scalar>(b: &[T], rows: usize, cols: usize, w: &Matrix<T>) -> Vec<T> {
    debug_assert_eq!(w.rows(), rows);
    let k = w.cols();
    let mut out = vec![T::zero(); cols * k];
    const CHUNK: usize = 256;
    out.par_chunks_mut(CHUNK * k)
        .enumerate()
        .for_each(|(chunk_idx, dst)| {
            let m0 = chunk_idx * CHUNK;
            let m_count = dst.len() / k;
            for a in 0..rows {
                let wrow = &w.as_slice()[a * k..(a + 1) * k];
                let brow = &b[a * cols + m0..a * cols + m0 + m_count];
                for (mi, &coef) in brow.iter().enumerate() {
                    if coef == T::zero() {
                        continue;
                    }
                    let o = &mut dst[mi * k..(mi + 1) * k];
                    for (x, &y) in o.iter_mut().zip(wrow) {
                        *x += coef * y;
                    }
                }
            }
        });
    out
}

/// Expands a factorization back to a full tensor in natural mode order.
///
/// Modes are processed in the cheapest order; each step shifts the processed
/// mode to the back, and a single final transposition restores `(1, …, d)`.
pub fn reconstruct<T: Scalar>(f: &TuckerFactorization<T>) -> Result<DenseTensor<T>> {
    f.validate()?;
    let n = f.mode_sizes();
    let r = f.ranks();
    let q = decompression_mode_order(&n, &r);
    reconstruct_in_order(f, &q)
}

pub fn reconstruct_in_order<T: Scalar>(
    f: &TuckerFactorization<T>,
    q: &ModePermutation,
) -> Result<DenseTensor<T>> {
    f.validate()?;
    let d = f.factors.len();
    if q.len() != d {
        return Err(Error::InvalidPermutation(q.as_slice().to_vec()));
    }
    // reorder the (small) core from processing order into order q
    let to_q = ModePermutation::new(
        q.as_slice()
            .iter()
            .map(|&m| f.processing_order.position_of(m))
            .collect(),
    )?;
    let start = f.core.transpose(&to_q)?;
    let mut shape = start.shape().to_vec();
    let mut data = start.into_vec();
    for &mode in q.as_slice() {
        let rows = shape[0];
        let cols = data.len() / rows;
        let ut = f.factors[mode].transpose();
        data = transposed_product(&data, rows, cols, &ut);
        shape.remove(0);
        shape.push(f.factors[mode].rows());
    }
    let in_q = DenseTensor::new(shape, data)?;
    let to_natural = ModePermutation::new((0..d).map(|m| q.position_of(m)).collect())?;
    in_q.transpose(&to_natural)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_choice_examples() {
        assert_eq!(choose_truncation_rank(&[5.0, 3.0, 1.0], 0.0).unwrap(), (3, 0.0));
        assert_eq!(choose_truncation_rank(&[100.0, 0.0, 0.0], 1.0).unwrap().0, 1);
        assert_eq!(
            choose_truncation_rank(&[100.0, 9.0, 4.0, 1.0], 5.0).unwrap(),
            (2, 5.0)
        );
        assert!(choose_truncation_rank(&[], 1.0).is_err());
    }

    #[test]
    fn compression_orders() {
        assert_eq!(compression_mode_order(&[256, 256, 256]).as_slice(), &[0, 1, 2]);
        assert_eq!(compression_mode_order(&[512, 1024, 224]).as_slice(), &[2, 0, 1]);
        assert_eq!(
            compression_mode_order(&[100, 128, 128, 128]).as_slice(),
            &[0, 1, 2, 3]
        );
    }

    #[test]
    fn decompression_orders() {
        assert_eq!(decompression_mode_order(&[7], &[3]).as_slice(), &[0]);
        assert_eq!(
            decompression_mode_order(&[4, 5, 6], &[4, 5, 6]).as_slice(),
            &[0, 1, 2]
        );
        let q = decompression_mode_order(&[10, 10], &[2, 9]);
        assert_eq!(q.as_slice(), &[1, 0]);
        assert_eq!(decompression_cost(&[10, 10], &[2, 9], &[1, 0]), 380);
        assert_eq!(decompression_cost(&[10, 10], &[2, 9], &[0, 1]), 1080);
    }

    #[test]
    fn zero_target_keeps_full_ranks() {
        let a = DenseTensor::from_fn(vec![3, 4, 5], |i| {
            ((i[0] * 7 + i[1] * 3 + i[2] * 11) % 13) as f64 - 6.0 + (i[0] * i[2]) as f64 * 0.1
        });
        let f = compress(&a, 0.0, &ModeOrder::Auto).unwrap();
        assert_eq!(f.ranks(), vec![3, 4, 5]);
        let b = reconstruct(&f).unwrap();
        let err = crate::tensor::sse_between(&a, &b).unwrap().sqrt() / a.norm();
        assert!(err < 1e-10, "relative error {err}");
    }

    #[test]
    fn rejects_non_finite_and_negative_target() {
        let a = DenseTensor::new(vec![2, 2], vec![1.0, f64::NAN, 0.0, 1.0]).unwrap();
        assert!(matches!(compress(&a, 1.0, &ModeOrder::Auto), Err(Error::NonFinite)));
        let b = DenseTensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(compress(&b, -1.0, &ModeOrder::Auto).is_err());
    }

    #[test]
    fn sign_convention_applied() {
        let a = DenseTensor::from_fn(vec![4, 3, 2], |i| (i[0] as f64 - 1.5) * (i[1] as f64 + 1.0) - i[2] as f64);
        let f = compress(&a, 0.0, &ModeOrder::Auto).unwrap();
        for u in &f.factors {
            for j in 0..u.cols() {
                let col = u.column(j);
                let big = col
                    .iter()
                    .cloned()
                    .fold(0.0f64, |m: f64, x| if x.abs() > m.abs() { x } else { m });
                assert!(big >= 0.0);
            }
        }
    }
}
