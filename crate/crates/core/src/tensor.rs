//! Dense tensors in lexicographic layout (last index fastest) and the
//! multilinear primitives built on them.
//!
//! Mode indices are zero-based throughout the library. A mode-`k`
//! matricization enumerates its columns lexicographically over the remaining
//! indices, so for `k = 0` it is a pure reinterpretation of the element buffer.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} elements for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                let src = &other.data[k * other.cols..(k + 1) * other.cols];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Largest absolute entry of `selfᵀ·self − I`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..self.cols {
            for b in a..self.cols {
                let mut dot = 0.0f64;
                for i in 0..self.rows {
                    dot += self.get(i, a).to_f64_lossy() * self.get(i, b).to_f64_lossy();
                }
                let expect = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - expect).abs());
            }
        }
        worst
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|&x| U::from_f64_lossy(x.to_f64_lossy()))
                .collect(),
        }
    }
}

/// A bijection of `{0, …, d−1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModePermutation(Vec<usize>);

impl ModePermutation {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::InvalidPermutation(perm));
            }
            seen[p] = true;
        }
        Ok(Self(perm))
    }

    pub fn identity(d: usize) -> Self {
        Self((0..d).collect())
    }

    /// Parses a one-based, comma separated list such as `3,1,2`.
    pub fn parse_one_based(s: &str) -> Result<Self> {
        let parsed: std::result::Result<Vec<usize>, _> = s
            .trim_matches(|c| c == '(' || c == ')')
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect();
        let values =
            parsed.map_err(|_| Error::InvalidArgument(format!("bad permutation '{s}'")))?;
        if values.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "permutation '{s}' must be one-based"
            )));
        }
        Self::new(values.into_iter().map(|v| v - 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &p) in self.0.iter().enumerate() {
            inv[p] = i;
        }
        Self(inv)
    }

    /// Position of `mode` within the permutation.
    pub fn position_of(&self, mode: usize) -> usize {
        self.0.iter().position(|&p| p == mode).expect("mode in permutation")
    }

    /// Sizes reordered so that entry `i` is `sizes[perm[i]]`.
    pub fn apply<U: Copy>(&self, sizes: &[U]) -> Vec<U> {
        self.0.iter().map(|&p| sizes[p]).collect()
    }
}

impl fmt::Display for ModePermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", p + 1)?;
        }
        write!(f, ")")
    }
}

/// Order-`d` array with lexicographic element layout.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> DenseTensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::ShapeMismatch(format!(
                "mode sizes must be positive, got {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} elements for shape {shape:?} ({n} expected)",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> T) -> Self {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..n {
            data.push(f(&idx));
            increment(&mut idx, &shape);
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape)
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(self.strides())
            .map(|(&i, s)| i * s)
            .sum()
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    /// Reinterprets the element buffer under a new shape of equal size.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data
            .iter()
            .map(|&x| {
                let v = x.to_f64_lossy();
                v * v
            })
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .fold(0.0f64, |m, &x| m.max(x.to_f64_lossy().abs()))
    }

    pub fn cast<U: Scalar>(&self) -> DenseTensor<U> {
        DenseTensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&x| U::from_f64_lossy(x.to_f64_lossy()))
                .collect(),
        }
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode: k,
                order: self.order(),
            });
        }
        Ok(())
    }

    /// Mode-`k` matricization, `n_k x N/n_k`.
    pub fn matricize(&self, k: usize) -> Result<Matrix<T>> {
        self.check_mode(k)?;
        let n_k = self.shape[k];
        let outer: usize = self.shape[..k].iter().product();
        let inner: usize = self.shape[k + 1..].iter().product();
        if outer == 1 {
            return Matrix::new(n_k, inner, self.data.clone());
        }
        let cols = outer * inner;
        let mut out = vec![T::zero(); n_k * cols];
        for o in 0..outer {
            for a in 0..n_k {
                let src = &self.data[(o * n_k + a) * inner..(o * n_k + a + 1) * inner];
                out[a * cols + o * inner..a * cols + (o + 1) * inner].copy_from_slice(src);
            }
        }
        Matrix::new(n_k, cols, out)
    }

    /// Inverse of [`matricize`](Self::matricize).
    pub fn dematricize(m: &Matrix<T>, shape: Vec<usize>, k: usize) -> Result<Self> {
        if k >= shape.len() || shape[k] != m.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} matrix is not a mode-{k} matricization of {shape:?}",
                m.rows(),
                m.cols()
            )));
        }
        let n_k = shape[k];
        let outer: usize = shape[..k].iter().product();
        let inner: usize = shape[k + 1..].iter().product();
        if outer * inner != m.cols() {
            return Err(Error::ShapeMismatch(format!(
                "{} columns for shape {shape:?}",
                m.cols()
            )));
        }
        let cols = m.cols();
        let mut data = vec![T::zero(); n_k * cols];
        let src = m.as_slice();
        for o in 0..outer {
            for a in 0..n_k {
                data[(o * n_k + a) * inner..(o * n_k + a + 1) * inner]
                    .copy_from_slice(&src[a * cols + o * inner..a * cols + (o + 1) * inner]);
            }
        }
        Self::new(shape, data)
    }

    /// `m ×_k self`: every mode-`k` fiber is multiplied by `m`.
    pub fn mode_product(&self, m: &Matrix<T>, k: usize) -> Result<Self> {
        self.check_mode(k)?;
        let n_k = self.shape[k];
        if m.cols() != n_k {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} matrix against mode {k} of size {n_k}",
                m.rows(),
                m.cols()
            )));
        }
        let rows = m.rows();
        let outer: usize = self.shape[..k].iter().product();
        let inner: usize = self.shape[k + 1..].iter().product();
        let mut data = vec![T::zero(); outer * rows * inner];
        for o in 0..outer {
            for a in 0..rows {
                let dst = &mut data[(o * rows + a) * inner..(o * rows + a + 1) * inner];
                for b in 0..n_k {
                    let w = m.get(a, b);
                    if w == T::zero() {
                        continue;
                    }
                    let src = &self.data[(o * n_k + b) * inner..(o * n_k + b + 1) * inner];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }
        let mut shape = self.shape.clone();
        shape[k] = rows;
        Self::new(shape, data)
    }

    /// Result mode `i` is source mode `perm[i]`.
    pub fn transpose(&self, perm: &ModePermutation) -> Result<Self> {
        if perm.len() != self.order() {
            return Err(Error::InvalidPermutation(perm.as_slice().to_vec()));
        }
        if perm.is_identity() {
            return Ok(self.clone());
        }
        let shape = perm.apply(&self.shape);
        let src_strides = self.strides();
        let strides_by_dst: Vec<usize> = perm.as_slice().iter().map(|&p| src_strides[p]).collect();
        let d = shape.len();
        let last = shape[d - 1];
        let last_stride = strides_by_dst[d - 1];
        let rows = self.data.len() / last;
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; d - 1];
        let head = &shape[..d - 1];
        for _ in 0..rows {
            let base: usize = idx.iter().zip(&strides_by_dst).map(|(&i, &s)| i * s).sum();
            data.extend((0..last).map(|j| self.data[base + j * last_stride]));
            increment(&mut idx, head);
        }
        Self::new(shape, data)
    }

    /// Euclidean norms of every mode-`k` slice.
    pub fn slice_norms(&self, k: usize) -> Result<Vec<f64>> {
        self.check_mode(k)?;
        let n_k = self.shape[k];
        let outer: usize = self.shape[..k].iter().product();
        let inner: usize = self.shape[k + 1..].iter().product();
        let mut sums = vec![0.0f64; n_k];
        for o in 0..outer {
            for (a, s) in sums.iter_mut().enumerate() {
                for &x in &self.data[(o * n_k + a) * inner..(o * n_k + a + 1) * inner] {
                    let v = x.to_f64_lossy();
                    *s += v * v;
                }
            }
        }
        Ok(sums.into_iter().map(f64::sqrt).collect())
    }

    /// Multiplies mode-`k` slice `j` by `factors[j]`.
    pub fn scale_slices(&mut self, k: usize, factors: &[T]) -> Result<()> {
        self.check_mode(k)?;
        let n_k = self.shape[k];
        if factors.len() != n_k {
            return Err(Error::ShapeMismatch(format!(
                "{} slice factors for mode of size {n_k}",
                factors.len()
            )));
        }
        let inner: usize = self.shape[k + 1..].iter().product();
        for (chunk_idx, chunk) in self.data.chunks_mut(inner).enumerate() {
            let f = factors[chunk_idx % n_k];
            if f != T::one() {
                chunk.iter_mut().for_each(|x| *x *= f);
            }
        }
        Ok(())
    }
}

/// `Σ (a_i − b_i)²`, accumulated in double precision.
pub fn sse_between<T: Scalar>(a: &DenseTensor<T>, b: &DenseTensor<T>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum())
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Advances a multi-index lexicographically; wraps to all zeros at the end.
pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) {
    for i in (0..idx.len()).rev() {
        idx[i] += 1;
        if idx[i] < shape[i] {
            return;
        }
        idx[i] = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(shape: &[usize]) -> DenseTensor<f64> {
        let n: usize = shape.iter().product();
        DenseTensor::new(shape.to_vec(), (1..=n).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn matricize_matrix_cases() {
        let t = seq(&[2, 2]);
        assert_eq!(t.matricize(0).unwrap().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(t.matricize(1).unwrap().as_slice(), &[1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn matricize_rejects_bad_mode() {
        let t = seq(&[2, 2]);
        assert!(matches!(
            t.matricize(2),
            Err(Error::ModeOutOfRange { mode: 2, order: 2 })
        ));
    }

    #[test]
    fn matricize_fiber_oracle() {
        let t = seq(&[2, 2, 2]);
        let m = t.matricize(1).unwrap();
        // columns enumerate (i1, i3) lexicographically
        let mut col = 0;
        for i1 in 0..2 {
            for i3 in 0..2 {
                for i2 in 0..2 {
                    assert_eq!(m.get(i2, col), t.get(&[i1, i2, i3]));
                }
                col += 1;
            }
        }
        let back = DenseTensor::dematricize(&m, vec![2, 2, 2], 1).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn mode_product_identity_and_shape() {
        let t = seq(&[2, 3, 4]);
        for k in 0..3 {
            let id = Matrix::identity(t.shape()[k]);
            assert_eq!(t.mode_product(&id, k).unwrap(), t);
        }
        let m = Matrix::<f64>::zeros(5, 3);
        assert_eq!(t.mode_product(&m, 1).unwrap().shape(), &[2, 5, 4]);
        assert!(t.mode_product(&m, 0).is_err());
    }

    #[test]
    fn transpose_matrix_and_roundtrip() {
        let t = seq(&[2, 3]);
        let p = ModePermutation::new(vec![1, 0]).unwrap();
        let tt = t.transpose(&p).unwrap();
        assert_eq!(tt.shape(), &[3, 2]);
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(tt.get(&[j, i]), t.get(&[i, j]));
            }
        }
        let t3 = seq(&[2, 3, 4]);
        let p3 = ModePermutation::new(vec![2, 0, 1]).unwrap();
        let back = t3.transpose(&p3).unwrap().transpose(&p3.inverse()).unwrap();
        assert_eq!(back, t3);
        assert_eq!(
            t3.transpose(&ModePermutation::identity(3)).unwrap().as_slice(),
            t3.as_slice()
        );
    }

    #[test]
    fn invalid_permutations() {
        assert!(ModePermutation::new(vec![0, 0]).is_err());
        assert!(ModePermutation::new(vec![0, 2]).is_err());
        assert!(ModePermutation::parse_one_based("0,1").is_err());
        assert_eq!(
            ModePermutation::parse_one_based("3,1,2").unwrap().as_slice(),
            &[2, 0, 1]
        );
        let t = seq(&[2, 2]);
        assert!(t.transpose(&ModePermutation::identity(3)).is_err());
    }

    #[test]
    fn sse_direct() {
        let a = DenseTensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let b = DenseTensor::new(vec![2], vec![0.0, 0.0]).unwrap();
        assert_eq!(sse_between(&a, &b).unwrap(), 5.0);
        assert_eq!(sse_between(&a, &a).unwrap(), 0.0);
        let c = DenseTensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
        assert!(sse_between(&a, &c).is_err());
    }

    #[test]
    fn reshape_keeps_elements() {
        let t = seq(&[2, 3, 4]);
        let flat = t.as_slice().to_vec();
        let r = t.reshape(vec![6, 4]).unwrap();
        assert_eq!(r.as_slice(), &flat[..]);
        assert!(r.reshape(vec![5, 5]).is_err());
    }

    #[test]
    fn constructor_rejects_bad_shapes() {
        assert!(DenseTensor::<f64>::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(DenseTensor::<f64>::new(vec![0, 2], vec![]).is_err());
    }
}
