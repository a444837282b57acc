//! Floating-point element types the linear algebra runs in.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use nalgebra::{DMatrix, SymmetricEigen};
use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Internal working precision: `f32` or `f64`.
///
/// The two dense factorizations the pipeline needs are routed through this
/// trait so the generic code never has to name a concrete solver.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Width in bits, recorded in container headers.
    const BITS: u8;

    /// Eigen-decomposition of a symmetric row-major `n x n` matrix.
    ///
    /// Returns eigenvalues sorted descending and the matching eigenvectors as
    /// the columns of a row-major `n x n` matrix.
    fn symmetric_eigen(a: &[Self], n: usize) -> (Vec<Self>, Vec<Self>);

    /// Thin SVD of a row-major `rows x cols` matrix with `rows > cols`.
    ///
    /// Returns the singular values (descending) and the left singular vectors
    /// as the columns of a row-major `rows x cols` matrix.
    fn thin_svd(a: &[Self], rows: usize, cols: usize) -> (Vec<Self>, Vec<Self>);

    fn from_f64_lossy(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

macro_rules! impl_scalar {
    ($t:ty, $bits:expr) => {
        impl Scalar for $t {
            const BITS: u8 = $bits;

            fn symmetric_eigen(a: &[Self], n: usize) -> (Vec<Self>, Vec<Self>) {
                let m = DMatrix::<$t>::from_row_slice(n, n, a);
                let eig = SymmetricEigen::new(m);
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&x, &y| {
                    eig.eigenvalues[y]
                        .partial_cmp(&eig.eigenvalues[x])
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
                let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
                let mut vectors = vec![0.0 as $t; n * n];
                for (col, &src) in idx.iter().enumerate() {
                    for row in 0..n {
                        vectors[row * n + col] = eig.eigenvectors[(row, src)];
                    }
                }
                (values, vectors)
            }

            fn thin_svd(a: &[Self], rows: usize, cols: usize) -> (Vec<Self>, Vec<Self>) {
                let m = DMatrix::<$t>::from_row_slice(rows, cols, a);
                let svd = m.svd(true, false);
                let u = svd.u.expect("left singular vectors requested");
                let k = svd.singular_values.len();
                let mut idx: Vec<usize> = (0..k).collect();
                idx.sort_by(|&x, &y| {
                    svd.singular_values[y]
                        .partial_cmp(&svd.singular_values[x])
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
                let values = idx.iter().map(|&i| svd.singular_values[i]).collect();
                let mut vectors = vec![0.0 as $t; rows * k];
                for (col, &src) in idx.iter().enumerate() {
                    for row in 0..rows {
                        vectors[row * k + col] = u[(row, src)];
                    }
                }
                (values, vectors)
            }
        }
    };
}

impl_scalar!(f32, 32);
impl_scalar!(f64, 64);
