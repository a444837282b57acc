//! Lossy compression of dense multidimensional arrays.
//!
//! The pipeline truncates a Tucker decomposition computed by sequentially
//! truncated HOSVD, quantizes the core to 64-bit integers and codes it bit
//! plane by bit plane until an SSE budget is met. Factor matrices are stored
//! as Householder reflectors coded with the same bit-plane machinery.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common 64-bit case.

pub mod container;
pub mod corecodec;
pub mod entropy;
pub mod error;
pub mod errormodel;
pub mod factorcodec;
pub mod pipeline;
pub mod scalar;
pub mod sthosvd;
pub mod tensor;
pub mod vectorize;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{sse_between, DenseTensor, Matrix, ModePermutation};

pub type Tensor = DenseTensor<f64>;
pub type Tensor32 = DenseTensor<f32>;
pub type Factorization = sthosvd::TuckerFactorization<f64>;
pub type Factorization32 = sthosvd::TuckerFactorization<f32>;
