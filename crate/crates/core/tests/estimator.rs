mod common;

use common::random_arch;
use proptest::prelude::*;
use spdebnn_core::estimator::{cov_kernel, field_samples, kernel_eigenvalues, mean_std, rel_error, rel_error_matrix};
use spdebnn_core::ffn::FourierEmbedding;
use spdebnn_core::{
    Domain, FfnArch, FieldSamples, FieldSelector, GpSpec, HeadArch, Kernel, Matrix, MeanFn, Mode, OperatorId,
    PointSet, ProblemSpec, Rng, SymMatrix, Transform,
};
use std::f64::consts::PI;

fn poisson() -> ProblemSpec {
    ProblemSpec {
        operator: OperatorId::NegLaplace1D,
        mode: Mode::Forward,
        domain: Domain::Interval { a: -1.0, b: 1.0 },
        f_spec: GpSpec::new(MeanFn::Zero, Kernel::matern52(1.0, 0.3), Transform::None),
        k_spec: None,
        boundary_value: 0.0,
        noise_std: 0.01,
    }
}

fn fs(rows: Vec<Vec<f64>>) -> FieldSamples {
    FieldSamples {
        grid: PointSet::linspace(0.0, 1.0, rows[0].len()),
        values: Matrix::from_rows(&rows).unwrap(),
    }
}

#[test]
fn single_sample_is_forward_pass() {
    let mut rng = Rng::new(61);
    let (arch, p) = random_arch(&mut rng, 1, 1);
    let grid = PointSet::linspace(-1.0, 1.0, 9);
    let out = field_samples(&[p.theta.clone()], &arch, &poisson(), &grid, FieldSelector::U).unwrap();
    assert_eq!((out.values.rows(), out.values.cols()), (1, 9));
    for (i, x) in grid.iter().enumerate() {
        assert_eq!(out.values.get(0, i), arch.forward(&p, x).unwrap()[0]);
    }
    let one = field_samples(&[p.theta.clone(), p.theta], &arch, &poisson(), &PointSet::from_1d(vec![0.2]), FieldSelector::U)
        .unwrap();
    assert_eq!((one.values.rows(), one.values.cols()), (2, 1));
}

#[test]
fn source_field_of_sine_network() {
    let e = FourierEmbedding::from_matrix(1, 1, 1.0, vec![PI]).unwrap();
    let arch = FfnArch::new(1, vec![HeadArch::new(1, vec![e], vec![1]).unwrap()]).unwrap();
    let eps = 1e-6;
    let samples: Vec<Vec<f64>> = [1.0, -0.5, 2.0].iter().map(|a| vec![0.0, eps, 0.0, a / eps, 0.0]).collect();
    let grid = PointSet::linspace(-1.0, 1.0, 21);
    let out = field_samples(&samples, &arch, &poisson(), &grid, FieldSelector::F).unwrap();
    for (s, a) in [1.0, -0.5, 2.0].iter().enumerate() {
        for (i, x) in grid.iter().enumerate() {
            assert!((out.values.get(s, i) - a * PI * PI * (PI * x[0]).sin()).abs() < 1e-9);
        }
    }
}

#[test]
fn iid_standard_deviation() {
    let mut rng = Rng::new(62);
    let rows: Vec<Vec<f64>> = (0..10_000).map(|_| (0..3).map(|_| rng.standard_normal()).collect()).collect();
    let (_, s) = mean_std(&fs(rows));
    assert!(s.iter().all(|v| (v - 1.0).abs() < 0.02), "{s:?}");
}

#[test]
fn rank_one_covariance() {
    let mut rng = Rng::new(63);
    let phi: Vec<f64> = (0..12).map(|i| (0.3 * i as f64).sin() + 0.2).collect();
    let rows: Vec<Vec<f64>> = (0..3000)
        .map(|_| {
            let a = rng.standard_normal();
            phi.iter().map(|p| a * p).collect()
        })
        .collect();
    let c = cov_kernel(&fs(rows));
    let ev = kernel_eigenvalues(&c).unwrap();
    assert!(ev[1..].iter().all(|v| v.abs() < 0.05 * ev[0]));
    let pp = SymMatrix::from_fn(12, |i, j| phi[i] * phi[j]);
    assert!(rel_error_matrix(&c, &pp).unwrap() < 0.1);
}

#[test]
fn independent_columns_are_nearly_diagonal() {
    let mut rng = Rng::new(64);
    let n = 4000;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..8).map(|_| rng.standard_normal()).collect()).collect();
    let c = cov_kernel(&fs(rows));
    for i in 0..8 {
        for j in 0..8 {
            if i != j {
                assert!(c.get(i, j).abs() < 5.0 / (n as f64).sqrt());
            }
        }
    }
}

#[test]
fn relative_errors() {
    let r = [1.0, -2.0, 0.5];
    assert_eq!(rel_error(&r, &r).unwrap(), 0.0);
    let twice: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
    assert!((rel_error(&twice, &r).unwrap() - 1.0).abs() < 1e-15);
    assert!((rel_error(&[3.0, 5.0], &[3.0, 4.0]).unwrap() - 0.2).abs() < 1e-15);
}

fn rows_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..6).prop_flat_map(|g| prop::collection::vec(prop::collection::vec(-10.0f64..10.0, g), 2..40))
}

proptest! {
    #[test]
    fn covariance_diagonal_is_variance(rows in rows_strategy()) {
        let f = fs(rows);
        let (_, s) = mean_std(&f);
        let c = cov_kernel(&f);
        for (i, sd) in s.iter().enumerate() {
            prop_assert!((c.get(i, i) - sd * sd).abs() <= 1e-12 * (1.0 + sd * sd));
        }
    }

    #[test]
    fn statistics_are_permutation_invariant(rows in rows_strategy(), seed in any::<u64>()) {
        let mut shuffled = rows.clone();
        let mut rng = Rng::new(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.below(i + 1));
        }
        let (a, b) = (fs(rows), fs(shuffled));
        let (ma, sa) = mean_std(&a);
        let (mb, sb) = mean_std(&b);
        let (ca, cb) = (cov_kernel(&a), cov_kernel(&b));
        for i in 0..ma.len() {
            prop_assert!((ma[i] - mb[i]).abs() <= 1e-12 * (1.0 + ma[i].abs()));
            prop_assert!((sa[i] - sb[i]).abs() <= 1e-12 * (1.0 + sa[i]));
        }
        prop_assert!(ca.as_slice().iter().zip(cb.as_slice()).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs())));
    }
}
