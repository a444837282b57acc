mod common;

use tuckzip::corecodec::CodecParams;
use tuckzip::factorcodec::{
    column_scales, decode_factor, encode_factor, factorize, read_factor_payload, reconstruct, scaled_sse,
    stored_count, weights, write_factor_payload, FactorStop, FactorWeighting, HouseholderFactor,
};
use tuckzip::pipeline::{compress, decode_factorization, CompressOptions};
use tuckzip::{sse_between, sthosvd, Matrix};

fn max_diff(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn grid() -> Vec<(usize, usize)> {
    let ns = [1, 2, 3, 5, 8, 13, 21, 32, 47, 64];
    let rs = [0, 1, 2, 3, 5, 8, 16, 31, 32];
    ns.iter()
        .flat_map(|&n| rs.iter().filter(move |&&r| r <= n).map(move |&r| (n, r)))
        .collect()
}

#[test]
fn householder_roundtrip_over_grid() {
    for (seed, (n, r)) in grid().into_iter().enumerate() {
        let u = common::orthonormal(n, r, seed as u64);
        let (h, adj) = factorize(&u).unwrap();
        assert_eq!(h.stored_coefficients().len(), n * r - r * (r + 1) / 2, "({n},{r})");
        assert_eq!(stored_count(n, r), h.stored_coefficients().len());
        for v in &h.reflectors {
            assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(v.iter().all(|x| x.abs() <= v[0]), "({n},{r}) diagonal not dominant");
        }
        let back = HouseholderFactor::from_stored(n, r, &h.stored_coefficients()).unwrap();
        let rec: Matrix<f64> = reconstruct(&back);
        assert!(max_diff(&rec, &adj) < 1e-12, "({n},{r}): {}", max_diff(&rec, &adj));
        // only column signs differ from the input
        for j in 0..r {
            let same = (0..n).all(|i| (adj.get(i, j) - u.get(i, j)).abs() < 1e-12);
            let flipped = (0..n).all(|i| (adj.get(i, j) + u.get(i, j)).abs() < 1e-12);
            assert!(same ^ flipped, "({n},{r}) column {j}");
        }
    }
}

#[test]
fn adjusted_factor_has_identity_triangle() {
    // Ū′ = H_1⋯H_r[I; 0], so undoing the reflectors leaves [I; 0]
    let u = common::orthonormal(8, 4, 3);
    let (h, adj) = factorize(&u).unwrap();
    let mut m = adj.clone();
    for (j, v) in h.reflectors.iter().enumerate() {
        for col in 0..4 {
            let dot: f64 = v.iter().enumerate().map(|(k, &vk)| vk * m.get(j + k, col)).sum();
            for (k, &vk) in v.iter().enumerate() {
                m.set(j + k, col, m.get(j + k, col) - 2.0 * vk * dot);
            }
        }
    }
    for i in 0..8 {
        for j in 0..4 {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((m.get(i, j) - expect).abs() < 1e-12, "({i},{j}) {}", m.get(i, j));
        }
    }
}

#[test]
fn small_examples() {
    let (h, adj) = factorize(&Matrix::new(1, 1, vec![1.0]).unwrap()).unwrap();
    assert_eq!(h.reflectors, vec![vec![1.0]]);
    assert_eq!(adj.as_slice(), &[-1.0]);
    assert_eq!(stored_count(5, 3), 9);

    let h = HouseholderFactor::from_stored(5, 3, &[0.0; 9]).unwrap();
    let m: Matrix<f64> = reconstruct(&h);
    for i in 0..5 {
        for j in 0..3 {
            assert_eq!(m.get(i, j), if i == j { -1.0 } else { 0.0 });
        }
    }
    let empty: Matrix<f64> = reconstruct(&HouseholderFactor::from_stored(5, 0, &[]).unwrap());
    assert_eq!((empty.rows(), empty.cols()), (5, 0));
    assert!(HouseholderFactor::from_stored(3, 1, &[0.8, 0.6]).is_err());
    assert!(factorize(&Matrix::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap()).is_err());
}

#[test]
fn weight_examples() {
    for sigma in [0.5, 1.0, 7.0] {
        let w = weights(&[sigma], 1).unwrap();
        assert!((w.alpha[0] - 3.0 * sigma * sigma).abs() < 1e-12);
        assert!((w.scales()[0] - (6.0 * sigma * sigma).sqrt()).abs() < 1e-12);
    }
    // the last column ignores every other norm
    let a = weights(&[9.0, 4.0, 2.0], 10).unwrap();
    let b = weights(&[0.0, 0.0, 2.0], 10).unwrap();
    assert_eq!(a.alpha[2], b.alpha[2]);
    let norms = [5.0, 3.0, 0.0, 2.0, 0.5];
    let w = weights(&norms, 9).unwrap();
    for (alpha, s) in w.alpha.iter().zip(norms) {
        assert!(*alpha >= s * s);
        if s > 0.0 {
            assert!(*alpha > 0.0);
        }
    }
    assert!(w.alpha[2] > 0.0, "later norms keep a dead column weighted");
    assert_eq!(weights(&[1.0, 0.0], 4).unwrap().alpha[1], 0.0);
    assert!(weights(&[1.0; 4], 3).is_err());
    assert_eq!(column_scales(&[3.0, 0.0, 1.0, 0.0], 6, FactorWeighting::SliceNorm).unwrap(), vec![3.0, 1.0, 1.0, 0.0]);
}

#[test]
fn coded_factors_stay_orthonormal() {
    let (n, r) = (40, 12);
    let u = common::orthonormal(n, r, 5);
    let (h, adj) = factorize(&u).unwrap();
    let norms: Vec<f64> = (0..r).map(|j| 10.0 / (1.0 + j as f64)).collect();
    let scales = column_scales(&norms, n, FactorWeighting::Alpha).unwrap();
    let dead = vec![false; r];
    let min_scale = scales.iter().copied().fold(f64::INFINITY, f64::min);
    for e in [-4, -10, -20, -30] {
        let p = encode_factor(&h, &dead, &scales, FactorStop::Step(e), &CodecParams::default()).unwrap();
        let m: Matrix<f64> = decode_factor(&p, n, &scales, 1).unwrap();
        let step = 2f64.powi(e) / min_scale;
        assert!(m.orthonormality_defect() < 1e-13, "step 2^{e}");
        let diff = max_diff(&m, &adj);
        assert!(diff <= 2.0 * n as f64 * step, "step 2^{e}: {diff:e}");
        let coarse = scaled_sse(&p);
        assert!(coarse <= r as f64 * n as f64 * 4f64.powi(e));
    }
}

#[test]
fn lossless_path_and_dead_columns() {
    let (n, r) = (16, 6);
    let u = common::orthonormal(n, r, 6);
    let (h, adj) = factorize(&u).unwrap();
    let norms = [4.0, 0.0, 2.0, 1.0, 0.0, 0.0];
    let dead: Vec<bool> = norms.iter().map(|&s| s == 0.0).collect();
    for weighting in [FactorWeighting::Alpha, FactorWeighting::SliceNorm] {
        let scales = column_scales(&norms, n, weighting).unwrap();
        let p = encode_factor(&h, &dead, &scales, FactorStop::ScaledSse(0.0), &CodecParams::default()).unwrap();
        assert_eq!(p.stored_columns(), 4);
        assert_eq!(p.encoded.n_coeffs, stored_count(n, 4));
        let mut buf = Vec::new();
        write_factor_payload(&p, &mut buf).unwrap();
        let back = read_factor_payload(&buf, r, "factor").unwrap();
        let m: Matrix<f64> = decode_factor(&back, n, &scales, 2).unwrap();
        for j in 0..r {
            for i in 0..n {
                if dead[j] {
                    assert_eq!(m.get(i, j), 0.0);
                } else {
                    assert!((m.get(i, j) - adj.get(i, j)).abs() < 1e-15);
                }
            }
        }
        assert!(read_factor_payload(&buf[..buf.len() - 1], r, "factor").is_err());
    }
    // every column dead: nothing stored
    let p = encode_factor(&h, &[true; 6], &[1.0; 6], FactorStop::Step(0), &CodecParams::default()).unwrap();
    assert!(p.zero_flag && p.stored_columns() == 0);
    let m: Matrix<f64> = decode_factor(&p, n, &[1.0; 6], 1).unwrap();
    assert!(m.as_slice().iter().all(|&x| x == 0.0));
}

#[test]
fn factor_terms_match_measured_perturbation() {
    let t = common::random_tensor(&[8, 8, 8], 21);
    let opts = CompressOptions::relative_error(1e-3);
    let c = compress(&t, &opts).unwrap();
    let decoded = decode_factorization::<f64>(&c.container, 1).unwrap();

    // exact sign-adjusted factors of the same decomposition
    let f = sthosvd::compress(&t, 0.5 * c.report.target_sse, &opts.mode_order).unwrap();
    let mut exact = decoded.clone();
    exact.factors = f.factors.iter().map(|u| factorize(u).unwrap().1).collect();

    // each term is the error from perturbing that mode's factor alone
    let reference = sthosvd::reconstruct(&exact).unwrap();
    let mut measured_total = 0.0;
    for mode in 0..3 {
        let mut one = exact.clone();
        one.factors[mode] = decoded.factors[mode].clone();
        let measured = sse_between(&sthosvd::reconstruct(&one).unwrap(), &reference).unwrap();
        let predicted = c.report.estimate.factor_terms[mode];
        assert!(predicted > 0.0);
        assert!((measured / predicted - 1.0).abs() < 0.02, "mode {mode}: {measured:e} vs {predicted:e}");
        measured_total += measured;
    }
    let predicted: f64 = c.report.estimate.factor_terms.iter().sum();
    assert!((measured_total / predicted - 1.0).abs() < 0.02);
}
