mod common;

use common::fd_grad;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use spdebnn_core::gmm::{EmOptions, GaussianMixture};
use spdebnn_core::{Matrix, Rng, SymMatrix};

fn random_spd(rng: &mut Rng, d: usize) -> SymMatrix {
    let a: Vec<f64> = (0..d * d).map(|_| rng.standard_normal()).collect();
    SymMatrix::from_fn(d, |i, j| {
        (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum::<f64>() / d as f64 + if i == j { 0.5 } else { 0.0 }
    })
}

fn random_mixture(rng: &mut Rng, d: usize, nc: usize) -> GaussianMixture {
    let raw: Vec<f64> = (0..nc).map(|_| 0.2 + rng.uniform()).collect();
    let s: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / s).collect();
    let means = (0..nc).map(|_| (0..d).map(|_| 2.0 * rng.standard_normal()).collect()).collect();
    let covs = (0..nc).map(|_| random_spd(rng, d)).collect();
    GaussianMixture::new(weights, means, covs).unwrap()
}

/// Mixture density through nalgebra's dense inverse and determinant.
fn oracle_log_pdf(g: &GaussianMixture, x: &[f64]) -> f64 {
    let d = g.dim();
    let xv = DVector::from_column_slice(x);
    let terms: Vec<f64> = (0..g.n_components())
        .map(|i| {
            let c = g.covariance(i);
            let m = DMatrix::from_fn(d, d, |r, s| c.get(r, s));
            let diff = &xv - DVector::from_column_slice(&g.means()[i]);
            let q = (diff.transpose() * m.clone().try_inverse().unwrap() * &diff)[(0, 0)];
            g.weights()[i].ln() - 0.5 * q - 0.5 * m.determinant().ln() - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln()
        })
        .collect();
    let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln()
}

fn column(data: &[f64]) -> Matrix {
    Matrix::from_vec(data.len(), 1, data.to_vec()).unwrap()
}

#[test]
fn log_pdf_matches_dense_oracle() {
    let mut rng = Rng::new(11);
    for _ in 0..10 {
        let g = random_mixture(&mut rng, 4, 3);
        let x: Vec<f64> = (0..4).map(|_| 2.0 * rng.standard_normal()).collect();
        let want = oracle_log_pdf(&g, &x);
        assert!((g.log_pdf(&x).unwrap() - want).abs() < 1e-10 * want.abs().max(1.0));
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = Rng::new(12);
    for _ in 0..10 {
        let g = random_mixture(&mut rng, 5, 3);
        let x: Vec<f64> = (0..5).map(|_| rng.standard_normal()).collect();
        let an = g.grad_log_pdf(&x).unwrap();
        let fd = fd_grad(|y| g.log_pdf(y).unwrap(), &x, 1e-5);
        for (a, b) in an.iter().zip(&fd) {
            assert!((a - b).abs() / b.abs().max(1.0) < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn isotropic_gradient_and_stationary_mean() {
    let m = vec![0.5, -1.0, 2.0];
    let g = GaussianMixture::new(vec![1.0], vec![m.clone()], vec![SymMatrix::identity(3)]).unwrap();
    assert!(g.grad_log_pdf(&m).unwrap().iter().all(|v| *v == 0.0));
    let x = [1.0, 1.0, 1.0];
    let gr = g.grad_log_pdf(&x).unwrap();
    for i in 0..3 {
        assert!((gr[i] - (m[i] - x[i])).abs() < 1e-14);
    }
}

#[test]
fn quadrature_normalizes_to_one() {
    let g = GaussianMixture::new(
        vec![0.3, 0.7],
        vec![vec![-1.0], vec![2.0]],
        vec![SymMatrix::diagonal(&[0.25]), SymMatrix::diagonal(&[1.5])],
    )
    .unwrap();
    let (a, b, n) = (-1.0 - 10.0 * 1.5f64.sqrt(), 2.0 + 10.0 * 1.5f64.sqrt(), 20_001);
    let h = (b - a) / (n - 1) as f64;
    let mut total = 0.0;
    for i in 0..n {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        total += w * g.log_pdf(&[a + i as f64 * h]).unwrap().exp();
    }
    assert!((total * h - 1.0).abs() < 1e-4);
}

#[test]
fn single_component_is_closed_form() {
    let mut rng = Rng::new(13);
    let rows: Vec<Vec<f64>> = (0..500)
        .map(|_| {
            let z = rng.standard_normal();
            vec![z, 0.5 * z + rng.standard_normal(), 3.0 + 0.1 * rng.standard_normal()]
        })
        .collect();
    let data = Matrix::from_rows(&rows).unwrap();
    let reg = 1e-3;
    let (g, info) = GaussianMixture::fit_em(
        &data,
        &EmOptions { reg: Some(reg), ..EmOptions::with_components(1) },
        &mut Rng::new(1),
    )
    .unwrap();
    assert!(info.iterations <= 2);
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..3).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let cov = g.covariance(0);
    for i in 0..3 {
        assert!((g.means()[0][i] - mean[i]).abs() < 1e-12);
        for j in 0..3 {
            let c = rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / n;
            let want = c + if i == j { reg } else { 0.0 };
            assert!((cov.get(i, j) - want).abs() < 1e-10, "{i}{j}");
        }
    }
}

#[test]
fn standard_normal_moments() {
    let mut rng = Rng::new(14);
    let data: Vec<f64> = (0..50_000).map(|_| rng.standard_normal()).collect();
    let (g, _) = GaussianMixture::fit_em(&column(&data), &EmOptions::with_components(1), &mut rng).unwrap();
    assert!(g.means()[0][0].abs() < 0.02);
    assert!((g.covariance(0).get(0, 0) - 1.0).abs() < 0.03);
}

#[test]
fn separated_clusters() {
    let mut rng = Rng::new(15);
    let data: Vec<f64> = (0..4000)
        .map(|i| if i % 2 == 0 { -10.0 } else { 10.0 } + rng.standard_normal())
        .collect();
    let (g, _) = GaussianMixture::fit_em(&column(&data), &EmOptions::with_components(2), &mut rng).unwrap();
    let mut means: Vec<f64> = g.means().iter().map(|m| m[0]).collect();
    means.sort_by(f64::total_cmp);
    assert!((means[0] + 10.0).abs() < 0.1 && (means[1] - 10.0).abs() < 0.1);
    assert!(g.weights().iter().all(|w| (w - 0.5).abs() < 0.02));
}

#[test]
fn em_is_monotone_and_deterministic() {
    let mut rng = Rng::new(16);
    let rows: Vec<Vec<f64>> = (0..600)
        .map(|i| {
            let c = [(-2.0, 0.0), (2.0, 1.0), (0.0, -3.0)][i % 3];
            vec![c.0 + rng.standard_normal(), c.1 + 0.5 * rng.standard_normal()]
        })
        .collect();
    let data = Matrix::from_rows(&rows).unwrap();
    let opts = EmOptions::with_components(3);
    let (a, _) = GaussianMixture::fit_em(&data, &opts, &mut Rng::new(5)).unwrap();
    let (b, _) = GaussianMixture::fit_em(&data, &opts, &mut Rng::new(5)).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let h = a.log_likelihood_history();
    assert!(h.len() > 1);
    for w in h.windows(2) {
        assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
    }
    for r in &rows {
        let s: f64 = a.responsibilities(r).unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn round_trips_through_file() {
    let g = random_mixture(&mut Rng::new(17), 3, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gmm.json");
    g.save(&path).unwrap();
    let h = GaussianMixture::load(&path).unwrap();
    let x = [0.3, -0.2, 1.0];
    assert_eq!(g.log_pdf(&x).unwrap().to_bits(), h.log_pdf(&x).unwrap().to_bits());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn responsibilities_form_a_simplex(seed in any::<u64>(), scale in 0.1f64..50.0) {
        let mut rng = Rng::new(seed);
        let g = random_mixture(&mut rng, 3, 4);
        let x: Vec<f64> = (0..3).map(|_| scale * rng.standard_normal()).collect();
        let r = g.responsibilities(&x).unwrap();
        prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(g.log_pdf(&x).unwrap().is_finite());
    }
}
