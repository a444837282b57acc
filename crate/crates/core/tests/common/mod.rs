//! Synthetic test tensors shared by the integration tests.
#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use tuckzip::{DenseTensor, Matrix};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], seed: u64) -> DenseTensor<f64> {
    let mut r = rng(seed);
    DenseTensor::from_fn(shape.to_vec(), |_| r.sample(StandardNormal))
}

/// `n × r` matrix with orthonormal columns (Gram-Schmidt of a Gaussian).
pub fn orthonormal(n: usize, r: usize, seed: u64) -> Matrix<f64> {
    let mut g = rng(seed);
    let mut q: Matrix<f64> = Matrix::from_fn(n, r, |_, _| g.sample(StandardNormal));
    for j in 0..r {
        for _ in 0..2 {
            for k in 0..j {
                let dot: f64 = (0..n).map(|i| q.get(i, j) * q.get(i, k)).sum();
                for i in 0..n {
                    q.set(i, j, q.get(i, j) - dot * q.get(i, k));
                }
            }
        }
        let norm = (0..n).map(|i| q.get(i, j).powi(2)).sum::<f64>().sqrt();
        for i in 0..n {
            q.set(i, j, q.get(i, j) / norm);
        }
    }
    q
}

fn unit(i: usize, n: usize) -> f64 {
    i as f64 / (n - 1) as f64
}

/// Products of smooth one-dimensional profiles, a coupled oscillation and a
/// radial bump.
pub fn smooth(shape: &[usize]) -> DenseTensor<f64> {
    DenseTensor::from_fn(shape.to_vec(), |idx| {
        let x: Vec<f64> = idx.iter().zip(shape).map(|(&i, &n)| unit(i, n)).collect();
        let sep = (3.0 * x[0]).sin() * (2.0 * x[1]).cos() * (-x[2]).exp()
            + 0.5 * (1.0 + x[0] * x[0]) * (5.0 * x[1]).sin() * (4.0 * x[2]).cos()
            + 0.25 * (7.0 * x[0]).cos() * x[1] * (1.0 - x[2])
            + 0.1 * (9.0 * x[0] + 6.0 * x[1]).sin() * (5.0 * x[2] * x[0]).cos();
        let r2: f64 = x.iter().map(|v| (v - 0.4) * (v - 0.4)).sum();
        sep + 1.0 / (1.0 + 10.0 * r2)
    })
}

/// Random rank-`rank` Tucker tensor plus Gaussian noise of relative size
/// `noise`.
pub fn low_rank_noise(shape: &[usize], rank: usize, noise: f64, seed: u64) -> DenseTensor<f64> {
    let core = random_tensor(&vec![rank; shape.len()], seed);
    let mut t = core;
    for (k, &n) in shape.iter().enumerate() {
        t = t.mode_product(&orthonormal(n, rank, seed + 1 + k as u64), k).unwrap();
    }
    let scale = noise * t.norm() / (t.len() as f64).sqrt();
    let mut g = rng(seed + 100);
    let data: Vec<f64> = t
        .as_slice()
        .iter()
        .map(|&v| v + scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut g))
        .collect();
    DenseTensor::new(shape.to_vec(), data).unwrap()
}

/// Constant regions separated by axis-aligned and diagonal cuts.
pub fn piecewise_constant(shape: &[usize]) -> DenseTensor<f64> {
    DenseTensor::from_fn(shape.to_vec(), |idx| {
        let x: Vec<f64> = idx.iter().zip(shape).map(|(&i, &n)| unit(i, n)).collect();
        let mut v = 1.0;
        if x[0] > 0.3 {
            v += 2.0;
        }
        if x[1] + x[2] > 1.1 {
            v -= 1.5;
        }
        if x[2] < 0.25 && x[0] < 0.6 {
            v += 4.0;
        }
        v
    })
}

/// The acceptance corpus: name and tensor.
pub fn corpus() -> Vec<(String, DenseTensor<f64>)> {
    vec![
        ("smooth-32".into(), smooth(&[32, 32, 32])),
        ("smooth-64x48x40".into(), smooth(&[64, 48, 40])),
        ("lowrank-24".into(), low_rank_noise(&[24, 24, 24], 6, 1e-4, 11)),
        ("lowrank-noisy-40x32x16".into(), low_rank_noise(&[40, 32, 16], 5, 3e-3, 12)),
        ("piecewise-32".into(), piecewise_constant(&[32, 32, 32])),
        ("piecewise-16".into(), piecewise_constant(&[16, 16, 16])),
    ]
}

/// Quantized ST-HOSVD core of `t`, truncated at half of a `re` budget.
pub fn quantized_core(t: &DenseTensor<f64>, re: f64) -> tuckzip::corecodec::QuantizedCore {
    use tuckzip::sthosvd::{compress, ModeOrder};
    use tuckzip::vectorize::VectorizationSpec;
    let f = compress(t, 0.5 * re * re * t.norm_sq(), &ModeOrder::Auto).unwrap();
    let spec = VectorizationSpec::default_for(f.core.shape());
    tuckzip::corecodec::quantize(&f.core, &spec).unwrap()
}

/// Leading-category bits of plane `p`: the plane's bit of every coefficient
/// still insignificant above it, in stream order, cut into blocks.
pub fn leading_bits(mags: &[u64], p: u32, block_size: usize) -> Vec<Vec<bool>> {
    mags.chunks(block_size)
        .map(|b| {
            b.iter()
                .filter(|&&m| p == 63 || m >> (p + 1) == 0)
                .map(|&m| (m >> p) & 1 == 1)
                .collect()
        })
        .collect()
}

/// Property-test settings without on-disk failure persistence.
pub fn prop_config(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases,
        failure_persistence: None,
        ..Default::default()
    }
}
