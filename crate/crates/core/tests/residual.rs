mod common;

use common::{fd_grad, random_arch, vec_rel_err};
use spdebnn_core::ffn::FourierEmbedding;
use spdebnn_core::residual::{residual_pullback, residual_vector};
use spdebnn_core::{
    DerivOrder, Domain, FfnArch, FfnParams, GpSpec, HeadArch, Kernel, MeanFn, Mode, OperatorId, PointSet,
    ProblemSpec, Rng, SensorLayout, Transform,
};
use std::f64::consts::PI;

fn gp() -> GpSpec {
    GpSpec::new(MeanFn::Zero, Kernel::matern52(1.0, 0.3), Transform::None)
}

fn spec(operator: OperatorId, mode: Mode, k: Option<GpSpec>) -> ProblemSpec {
    let domain = match operator {
        OperatorId::AllenCahn2D { .. } => Domain::Square { a: -1.0, b: 1.0 },
        _ => Domain::Interval { a: -1.0, b: 1.0 },
    };
    ProblemSpec {
        operator,
        mode,
        domain,
        f_spec: gp(),
        k_spec: k,
        boundary_value: 0.0,
        noise_std: 0.01,
    }
}

fn line_layout(with_k: bool, with_u: bool) -> SensorLayout {
    SensorLayout::new(
        PointSet::linspace(-1.0, 1.0, 7),
        if with_u { PointSet::empty(1) } else { PointSet::from_1d(vec![-1.0, 1.0]) },
        if with_k { PointSet::linspace(-0.9, 0.9, 4) } else { PointSet::empty(1) },
        if with_u { PointSet::linspace(-0.8, 0.8, 5) } else { PointSet::empty(1) },
    )
}

fn square_layout(inverse: bool) -> SensorLayout {
    SensorLayout::new(
        PointSet::tensor_grid(-0.8, 0.8, 3),
        PointSet::square_boundary(-1.0, 1.0, 2),
        PointSet::empty(2),
        if inverse { PointSet::tensor_grid(-0.5, 0.5, 2) } else { PointSet::empty(2) },
    )
}

/// Every supported (problem, layout) pair with a small random network.
fn cases() -> Vec<(ProblemSpec, SensorLayout, FfnArch, FfnParams)> {
    let logk = GpSpec::new(MeanFn::Zero, Kernel::matern52(1.0, 0.3), Transform::LogShift(0.5));
    let list = vec![
        (spec(OperatorId::Identity, Mode::Forward, None), line_layout(false, false), 1, 1),
        (spec(OperatorId::NegLaplace1D, Mode::Forward, None), line_layout(false, false), 1, 1),
        (spec(OperatorId::DivForm1D, Mode::Forward, Some(logk)), line_layout(true, false), 1, 2),
        (spec(OperatorId::DivForm1D, Mode::Inverse, Some(logk)), line_layout(false, true), 1, 2),
        (spec(OperatorId::AllenCahn2D { cubic: 3.0 }, Mode::Forward, None), square_layout(false), 2, 1),
        (
            spec(OperatorId::AllenCahn2D { cubic: 3.0 }, Mode::Inverse, Some(gp())),
            square_layout(true),
            2,
            2,
        ),
    ];
    let mut rng = Rng::new(31);
    list.into_iter()
        .map(|(s, l, dim, heads)| {
            let (a, p) = random_arch(&mut rng, dim, heads);
            (s, l, a, p)
        })
        .collect()
}

/// Residual assembled from per-point network bundles and the operator
/// formulas written out by hand.
fn oracle_residual(s: &ProblemSpec, l: &SensorLayout, a: &FfnArch, p: &FfnParams) -> Vec<f64> {
    let mut out = Vec::new();
    let t = s.k_spec.map_or(Transform::None, |k| k.transform);
    for x in l.f.iter() {
        let u = a.eval_bundle(p, 0, x).unwrap();
        let v = match s.operator {
            OperatorId::Identity => u.value,
            OperatorId::NegLaplace1D => -u.hess_diag[0],
            OperatorId::DivForm1D => {
                let z = a.eval_bundle(p, 1, x).unwrap();
                let (k, dk) = match t {
                    Transform::LogShift(sh) => (sh + z.value.exp(), z.value.exp() * z.grad_x[0]),
                    Transform::None => (z.value, z.grad_x[0]),
                };
                -(dk * u.grad_x[0] + k * u.hess_diag[0])
            }
            OperatorId::AllenCahn2D { cubic } => {
                let c = if a.n_heads() > 1 { a.forward(p, x).unwrap()[1] } else { cubic };
                -(u.hess_diag[0] + u.hess_diag[1]) + c * (u.value.powi(3) - u.value)
            }
        };
        out.push(v);
    }
    for x in l.g.iter() {
        out.push(a.forward(p, x).unwrap()[0]);
    }
    for x in l.k.iter() {
        out.push(t.apply(a.forward(p, x).unwrap()[1]));
    }
    for x in l.u.iter() {
        out.push(a.forward(p, x).unwrap()[0]);
    }
    out
}

#[test]
fn residual_matches_composed_oracle() {
    for (s, l, a, p) in cases() {
        let r = residual_vector(&s, &l, &a, &p).unwrap();
        let want = oracle_residual(&s, &l, &a, &p);
        assert_eq!(r.values.len(), want.len());
        assert_eq!(r.len(), l.blocks().total());
        for (x, y) in r.values.iter().zip(&want) {
            assert!((x - y).abs() < 1e-11 * y.abs().max(1.0), "{}: {x} vs {y}", s.operator.name());
        }
    }
}

#[test]
fn pullback_matches_finite_differences() {
    let mut rng = Rng::new(32);
    for (s, l, a, p) in cases() {
        let n = l.blocks().total();
        let adj: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let g = residual_pullback(&s, &l, &a, &p, &adj).unwrap();
        let fd = fd_grad(
            |th| {
                let r = residual_vector(&s, &l, &a, &FfnParams::new(th.to_vec())).unwrap();
                r.values.iter().zip(&adj).map(|(x, y)| x * y).sum()
            },
            &p.theta,
            1e-5,
        );
        let e = vec_rel_err(&g, &fd);
        assert!(e < 1e-5, "{}: {e}", s.operator.name());
        assert!(residual_pullback(&s, &l, &a, &p, &vec![0.0; n]).unwrap().iter().all(|v| *v == 0.0));
    }
}

#[test]
fn boundary_adjoint_is_network_gradient() {
    let (s, l, a, p) = cases().swap_remove(1);
    let nf = l.f.len();
    for (j, x) in l.g.iter().enumerate() {
        let mut adj = vec![0.0; l.blocks().total()];
        adj[nf + j] = 1.0;
        let g = residual_pullback(&s, &l, &a, &p, &adj).unwrap();
        let want = a.backprop_scalar(&p, 0, x, DerivOrder::Value, &[1.0]).unwrap();
        assert_eq!(g, want);
    }
}

#[test]
fn closed_form_sine_network() {
    // ε⁻¹ sin(ε sin πx) = sin πx + O(ε²).
    let e = FourierEmbedding::from_matrix(1, 1, 1.0, vec![PI]).unwrap();
    let arch = FfnArch::new(1, vec![HeadArch::new(1, vec![e], vec![1]).unwrap()]).unwrap();
    let eps = 1e-6;
    let p = FfnParams::new(vec![0.0, eps, 0.0, 1.0 / eps, 0.0]);
    let s = spec(OperatorId::NegLaplace1D, Mode::Forward, None);
    let l = line_layout(false, false);
    let r = residual_vector(&s, &l, &arch, &p).unwrap();
    for (v, x) in r.f().iter().zip(l.f.iter()) {
        assert!((v - PI * PI * (PI * x[0]).sin()).abs() < 1e-10, "{v}");
    }
    assert!(r.g().iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn zero_network_gives_zero_residual() {
    let (s, l, a, _) = cases().swap_remove(0);
    let r = residual_vector(&s, &l, &a, &FfnParams::zeros(&a)).unwrap();
    assert!(r.values.iter().all(|v| *v == 0.0));
}

#[test]
fn laplacian_residual_is_linear_in_output_weights() {
    let (s, l, a, p) = cases().swap_remove(1);
    let h = a.head(0);
    let w = h.output_weight_range();
    let with = |wt: &dyn Fn(usize) -> f64, bias: f64| {
        let mut q = p.clone();
        for (i, k) in w.clone().enumerate() {
            q.theta[k] = wt(i);
        }
        q.theta[h.output_bias_index()] = bias;
        residual_vector(&s, &l, &a, &q).unwrap()
    };
    let r1 = with(&|i| (i as f64).sin(), 0.3);
    let r2 = with(&|i| (i as f64 * 0.7).cos(), -0.1);
    let r12 = with(&|i| 2.0 * (i as f64).sin() - 0.5 * (i as f64 * 0.7).cos(), 2.0 * 0.3 + 0.5 * 0.1);
    for i in 0..l.f.len() {
        let want = 2.0 * r1.f()[i] - 0.5 * r2.f()[i];
        assert!((r12.f()[i] - want).abs() < 1e-10 * want.abs().max(1.0));
    }
}

#[test]
fn allen_cahn_cubic_from_values() {
    let (s, l, a, p) = cases().swap_remove(4);
    let r = residual_vector(&s, &l, &a, &p).unwrap();
    let u: Vec<f64> = l.f.iter().map(|x| a.forward(&p, x).unwrap()[0]).collect();
    for (i, x) in l.f.iter().enumerate() {
        let lap: f64 = a.eval_bundle(&p, 0, x).unwrap().hess_diag.iter().sum();
        let cubic = 3.0 * u[i] * (u[i] * u[i] - 1.0);
        assert!((r.f()[i] - (-lap + cubic)).abs() < 1e-11 * cubic.abs().max(1.0));
    }
}

#[test]
fn block_structure_matches_layout() {
    for (s, l, a, p) in cases() {
        let r = residual_vector(&s, &l, &a, &p).unwrap();
        let b = l.blocks();
        assert_eq!((r.f().len(), r.g().len(), r.k().len(), r.u().len()), (b.f, b.g, b.k, b.u));
    }
}
