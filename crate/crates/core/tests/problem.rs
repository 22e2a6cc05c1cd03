use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use spdebnn_core::problem::{synthesize_forward, synthesize_inverse, FieldSolver};
use spdebnn_core::reference::Grid1D;
use spdebnn_core::{Domain, FdSolver, GpSpec, Kernel, MeanFn, Mode, OperatorId, PointSet, ProblemSpec, Result, Rng, SensorLayout, Transform};
use std::f64::consts::PI;

fn pinned_gp(mean: MeanFn) -> GpSpec {
    GpSpec::new(mean, Kernel::squared_exponential(1e-200, 0.5), Transform::None)
}

fn elliptic(noise: f64, k: GpSpec, f: GpSpec) -> ProblemSpec {
    ProblemSpec {
        operator: OperatorId::DivForm1D,
        mode: Mode::Inverse,
        domain: Domain::Interval { a: -1.0, b: 1.0 },
        f_spec: f,
        k_spec: Some(k),
        boundary_value: 0.0,
        noise_std: noise,
    }
}

fn inverse_layout() -> SensorLayout {
    SensorLayout::new(
        PointSet::linspace(-1.0, 1.0, 41),
        PointSet::empty(1),
        PointSet::empty(1),
        PointSet::linspace(-1.0, 1.0, 41),
    )
}

#[test]
fn inverse_rows_have_declared_length() {
    let spec = elliptic(
        0.01,
        GpSpec::new(MeanFn::Zero, Kernel::matern52(1.0, 0.1), Transform::LogShift(0.1)),
        GpSpec::new(MeanFn::Constant(10.0), Kernel::matern52(1.0, 0.1), Transform::None),
    );
    let solver = FdSolver::for_problem(&spec, 201).unwrap();
    let ds = synthesize_inverse(&spec, &inverse_layout(), 5, &mut Rng::new(1), &solver).unwrap();
    assert_eq!(ds.row_len(), 82);
    assert_eq!(ds.rows.cols(), 82);
}

#[test]
fn pinned_fields_give_identical_rows() {
    let spec = elliptic(0.0, pinned_gp(MeanFn::Constant(1.0)), pinned_gp(MeanFn::SinPi(PI * PI)));
    let solver = FdSolver::for_problem(&spec, 401).unwrap();
    let ds = synthesize_inverse(&spec, &inverse_layout(), 4, &mut Rng::new(2), &solver).unwrap();
    for r in ds.rows.iter_rows().skip(1) {
        assert_eq!(r, ds.rows.row(0));
    }
}

#[test]
fn u_block_matches_an_independent_fine_solve() {
    let spec = elliptic(0.0, pinned_gp(MeanFn::Constant(1.0)), pinned_gp(MeanFn::SinPi(PI * PI)));
    let n = 401;
    let solver = FdSolver::for_problem(&spec, n).unwrap();
    let ds = synthesize_inverse(&spec, &inverse_layout(), 1, &mut Rng::new(3), &solver).unwrap();

    // Dense three-point Laplacian with Dirichlet rows.
    let g = Grid1D::new(-1.0, 1.0, n).unwrap();
    let h = g.h();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    a[(0, 0)] = 1.0;
    a[(n - 1, n - 1)] = 1.0;
    for i in 1..n - 1 {
        a[(i, i - 1)] = -1.0 / (h * h);
        a[(i, i)] = 2.0 / (h * h);
        a[(i, i + 1)] = -1.0 / (h * h);
        rhs[i] = PI * PI * (PI * g.x(i)).sin();
    }
    let u = a.lu().solve(&rhs).unwrap();
    let blocks = ds.blocks();
    let off = blocks.offsets()[3];
    for (j, x) in ds.layout.u.iter().enumerate() {
        let i = ((x[0] + 1.0) / h).round() as usize;
        assert!((ds.rows.get(0, off + j) - u[i]).abs() < 1e-4);
    }
}

#[test]
fn inverse_interpolation_follows_the_solver() {
    struct Exact(PointSet);
    impl FieldSolver for Exact {
        fn grid(&self) -> &PointSet {
            &self.0
        }
        fn solve(&self, _k: Option<&[f64]>, _f: &[f64]) -> Result<Vec<f64>> {
            Ok(self.0.iter().map(|x| (PI * x[0]).sin()).collect())
        }
        fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
            Grid1D::new(-1.0, 1.0, self.0.len()).unwrap().interpolate(values, x[0])
        }
    }
    let spec = elliptic(0.0, pinned_gp(MeanFn::Constant(1.0)), pinned_gp(MeanFn::Zero));
    let layout = SensorLayout::new(
        PointSet::linspace(-1.0, 1.0, 5),
        PointSet::empty(1),
        PointSet::empty(1),
        PointSet::from_1d(vec![-0.913, -0.2718, 0.3333, 0.75]),
    );
    let solver = Exact(PointSet::linspace(-1.0, 1.0, 401));
    let ds = synthesize_inverse(&spec, &layout, 1, &mut Rng::new(4), &solver).unwrap();
    let off = ds.blocks().offsets()[3];
    for (j, x) in layout.u.iter().enumerate() {
        assert!((ds.rows.get(0, off + j) - (PI * x[0]).sin()).abs() < 1e-4);
    }
}

#[test]
fn forward_f_means_converge() {
    let spec = ProblemSpec {
        operator: OperatorId::NegLaplace1D,
        mode: Mode::Forward,
        domain: Domain::Interval { a: -1.0, b: 1.0 },
        f_spec: GpSpec::new(MeanFn::SinPi(2.0), Kernel::matern52(1.0, 0.2), Transform::None),
        k_spec: None,
        boundary_value: 0.0,
        noise_std: 0.01,
    };
    let layout = SensorLayout::new(
        PointSet::linspace(-1.0, 1.0, 9),
        PointSet::from_1d(vec![-1.0, 1.0]),
        PointSet::empty(1),
        PointSet::empty(1),
    );
    let mut worst = Vec::new();
    for n in [400, 6400] {
        let ds = synthesize_forward(&spec, &layout, n, &mut Rng::new(5)).unwrap();
        let err = layout
            .f
            .iter()
            .enumerate()
            .map(|(i, x)| (ds.rows.column(i).iter().sum::<f64>() / n as f64 - 2.0 * (PI * x[0]).sin()).abs())
            .fold(0.0, f64::max);
        assert!(err < 4.0 / (n as f64).sqrt());
        worst.push(err);
    }
    assert!(worst[1] < worst[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn forward_row_length_is_block_sum(nf in 2usize..30, ng in 0usize..3, n in 1usize..20, seed in any::<u64>()) {
        let g = [vec![], vec![-1.0], vec![-1.0, 1.0]][ng].clone();
        let spec = ProblemSpec {
            operator: OperatorId::Identity,
            mode: Mode::Forward,
            domain: Domain::Interval { a: -1.0, b: 1.0 },
            f_spec: GpSpec::new(MeanFn::Zero, Kernel::matern52(1.0, 0.3), Transform::None),
            k_spec: None,
            boundary_value: 0.0,
            noise_std: 0.1,
        };
        let layout = SensorLayout::new(PointSet::linspace(-1.0, 1.0, nf), PointSet::from_1d(g), PointSet::empty(1), PointSet::empty(1));
        let ds = synthesize_forward(&spec, &layout, n, &mut Rng::new(seed)).unwrap();
        prop_assert_eq!(ds.row_len(), nf + ng);
        prop_assert_eq!(ds.rows.rows(), n);
        prop_assert!(ds.rows.as_slice().iter().all(|v| v.is_finite()));
    }
}
