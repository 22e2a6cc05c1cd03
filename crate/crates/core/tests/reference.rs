use proptest::prelude::*;
use spdebnn_core::gp::sample_gp;
use spdebnn_core::reference::{
    analytic_reference, mc_reference, solve_allen_cahn_2d, solve_divform_1d, solve_poisson_1d, Grid1D, Grid2D,
    McOptions, NewtonOptions,
};
use spdebnn_core::{Domain, Error, FdSolver, GpSpec, Kernel, MeanFn, Mode, OperatorId, PointSet, ProblemSpec, Rng, Transform};
use std::f64::consts::PI;

fn max_err(u: &[f64], exact: impl Fn(usize) -> f64) -> f64 {
    u.iter().enumerate().map(|(i, v)| (v - exact(i)).abs()).fold(0.0, f64::max)
}

fn poisson_err(n: usize) -> f64 {
    let g = Grid1D::new(-1.0, 1.0, n).unwrap();
    let f: Vec<f64> = (0..n).map(|i| PI * PI * (PI * g.x(i)).sin()).collect();
    let u = solve_poisson_1d(&f, (0.0, 0.0), &g).unwrap();
    max_err(&u, |i| (PI * g.x(i)).sin())
}

/// `k = eˣ`, `u = sin πx`: `f = −(k u′)′ = −eˣ(π cos πx − π² sin πx)`.
fn divform_err(n: usize) -> f64 {
    let g = Grid1D::new(-1.0, 1.0, n).unwrap();
    let k: Vec<f64> = (0..n).map(|i| g.x(i).exp()).collect();
    let f: Vec<f64> = (0..n)
        .map(|i| {
            let x = g.x(i);
            -x.exp() * (PI * (PI * x).cos() - PI * PI * (PI * x).sin())
        })
        .collect();
    let u = solve_divform_1d(&k, &f, (0.0, 0.0), &g).unwrap();
    max_err(&u, |i| (PI * g.x(i)).sin())
}

fn allen_cahn_case(n: usize) -> (f64, Vec<f64>) {
    let g = Grid2D::new(-1.0, 1.0, n).unwrap();
    let pts = g.points();
    let u0 = |p: &[f64]| (PI * p[0]).sin() * (PI * p[1]).sin();
    let f: Vec<f64> = pts
        .iter()
        .map(|p| {
            let u = u0(p);
            2.0 * PI * PI * u + 3.0 * u * (u * u - 1.0)
        })
        .collect();
    let sol = solve_allen_cahn_2d(&f, &g, &[3.0], &NewtonOptions::default()).unwrap();
    let e = sol.u.iter().zip(pts.iter()).map(|(v, p)| (v - u0(p)).abs()).fold(0.0, f64::max);
    (e, sol.residual_history)
}

fn order(errs: &[f64]) -> Vec<f64> {
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn quadratic_is_exact() {
    let g = Grid1D::new(-1.0, 1.0, 33).unwrap();
    let u = solve_poisson_1d(&vec![2.0; 33], (0.0, 0.0), &g).unwrap();
    assert!(max_err(&u, |i| 1.0 - g.x(i) * g.x(i)) < 1e-10);
    let z = solve_poisson_1d(&vec![0.0; 33], (0.0, 0.0), &g).unwrap();
    assert!(z.iter().all(|v| *v == 0.0));
}

#[test]
fn manufactured_solutions() {
    assert!(poisson_err(201) < 5e-4);
    assert!(divform_err(401) < 5e-4);
    let (e, hist) = allen_cahn_case(101);
    assert!(e < 2e-3, "{e}");
    assert!(hist[1..].windows(2).all(|w| w[1] < w[0]), "{hist:?}");
}

#[test]
fn allen_cahn_zero_source() {
    let g = Grid2D::new(-1.0, 1.0, 21).unwrap();
    let sol = solve_allen_cahn_2d(&vec![0.0; 441], &g, &[3.0], &NewtonOptions::default()).unwrap();
    assert!(sol.u.iter().all(|v| *v == 0.0));
}

#[test]
fn second_order_convergence() {
    let p: Vec<f64> = [21, 41, 81].iter().map(|&n| poisson_err(n)).collect();
    let d: Vec<f64> = [21, 41, 81].iter().map(|&n| divform_err(n)).collect();
    let a: Vec<f64> = [11, 21, 41].iter().map(|&n| allen_cahn_case(n).0).collect();
    for (name, errs) in [("poisson", p), ("divform", d), ("allen-cahn", a)] {
        for o in order(&errs) {
            assert!((1.8..=2.2).contains(&o), "{name}: {errs:?}");
        }
    }
}

#[test]
fn unit_coefficient_reduces_to_poisson() {
    let g = Grid1D::new(-1.0, 1.0, 57).unwrap();
    let f: Vec<f64> = (0..57).map(|i| (3.0 * g.x(i)).cos() + g.x(i)).collect();
    let a = solve_poisson_1d(&f, (0.2, -0.7), &g).unwrap();
    let b = solve_divform_1d(&vec![1.0; 57], &f, (0.2, -0.7), &g).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rejects_nonpositive_coefficient() {
    let g = Grid1D::new(-1.0, 1.0, 11).unwrap();
    let mut k = vec![1.0; 11];
    k[4] = 0.0;
    assert!(matches!(
        solve_divform_1d(&k, &[1.0; 11], (0.0, 0.0), &g),
        Err(Error::NonPositiveCoefficient { .. })
    ));
}

fn poisson_spec(sigma: f64) -> ProblemSpec {
    ProblemSpec {
        operator: OperatorId::NegLaplace1D,
        mode: Mode::Forward,
        domain: Domain::Interval { a: -1.0, b: 1.0 },
        f_spec: GpSpec::new(MeanFn::SinPi(10.0), Kernel::matern52(sigma, 0.2), Transform::None),
        k_spec: None,
        boundary_value: 0.0,
        noise_std: 0.0,
    }
}

#[test]
fn mc_mean_follows_linearity() {
    let spec = poisson_spec(1.0);
    let solver = FdSolver::for_problem(&spec, 41).unwrap();
    let n_mc = 10_000;
    let r = mc_reference(&spec, &solver, n_mc, &mut Rng::new(71), &McOptions::default()).unwrap();
    let g = Grid1D::new(-1.0, 1.0, 41).unwrap();
    let f: Vec<f64> = (0..41).map(|i| 10.0 * (PI * g.x(i)).sin()).collect();
    let det = solve_poisson_1d(&f, (0.0, 0.0), &g).unwrap();
    let se = r.std_error();
    for i in 1..40 {
        assert!((r.mean[i] - det[i]).abs() <= 2.0 * se[i], "point {i}");
    }
}

#[test]
fn vanishing_variance_is_deterministic() {
    let spec = poisson_spec(1e-200);
    let solver = FdSolver::for_problem(&spec, 41).unwrap();
    let r = mc_reference(&spec, &solver, 50, &mut Rng::new(72), &McOptions::default()).unwrap();
    let g = Grid1D::new(-1.0, 1.0, 41).unwrap();
    let f: Vec<f64> = (0..41).map(|i| 10.0 * (PI * g.x(i)).sin()).collect();
    let det = solve_poisson_1d(&f, (0.0, 0.0), &g).unwrap();
    assert!(r.std.iter().all(|v| *v < 1e-12));
    assert!(r.mean.iter().zip(&det).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn standard_error_shrinks_at_root_n() {
    let spec = poisson_spec(1.0);
    let solver = FdSolver::for_problem(&spec, 41).unwrap();
    let a = mc_reference(&spec, &solver, 2000, &mut Rng::new(73), &McOptions::default()).unwrap();
    let b = mc_reference(&spec, &solver, 4000, &mut Rng::new(74), &McOptions::default()).unwrap();
    let (sa, sb) = (a.std_error(), b.std_error());
    let ratio = (1..40).map(|i| sa[i] / sb[i]).sum::<f64>() / 39.0;
    assert!((1.2..=1.7).contains(&ratio), "{ratio}");
}

#[test]
fn mc_is_seed_deterministic() {
    let spec = poisson_spec(1.0);
    let solver = FdSolver::for_problem(&spec, 41).unwrap();
    let opts = McOptions { boundary_noise: 0.01, cov_indices: Some(vec![3, 20]) };
    let a = mc_reference(&spec, &solver, 300, &mut Rng::new(75), &opts).unwrap();
    let b = mc_reference(&spec, &solver, 300, &mut Rng::new(75), &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn lognormal_reference_matches_draws() {
    let spec = GpSpec::new(MeanFn::SinPi(1.0), Kernel::matern52(0.5, 0.3), Transform::LogShift(0.5));
    let grid = PointSet::linspace(-1.0, 1.0, 9);
    let r = analytic_reference(&spec, &grid);
    let n = 40_000;
    let m = sample_gp(&spec, &grid, &mut Rng::new(76), n).unwrap();
    for i in 0..9 {
        let col = m.column(i);
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((mean - r.mean[i]).abs() < 0.02 * r.mean[i]);
        assert!((sd - r.std[i]).abs() < 0.05 * r.std[i]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn maximum_principle(seed in any::<u64>(), n in 5usize..80) {
        let mut rng = Rng::new(seed);
        let g = Grid1D::new(-1.0, 1.0, n).unwrap();
        let f: Vec<f64> = (0..n).map(|_| rng.uniform() * 5.0).collect();
        let u = solve_poisson_1d(&f, (0.0, 0.0), &g).unwrap();
        prop_assert!(u.iter().all(|v| *v >= 0.0));
    }
}
