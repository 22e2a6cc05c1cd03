use proptest::prelude::*;
use spdebnn_core::gp::{gram, kl_dimension, sample_gp, GpSampler};
use spdebnn_core::{GpSpec, Kernel, KernelKind, MeanFn, PointSet, Rng, Transform};

#[test]
fn kl_dimensions_of_the_matern_family() {
    let lengths = [1.0, 0.3, 0.2, 0.1, 0.03];
    let table = [4usize, 10, 14, 27, 87];
    for (l, want) in lengths.iter().zip(table) {
        let k = Kernel::new(KernelKind::MaternStandard52, 1.0, *l).unwrap();
        let got = kl_dimension(&k, (-1.0, 1.0), 2048, 0.99).unwrap();
        assert!(got.abs_diff(want) <= 1, "l = {l}: {got} vs {want}");
    }
}

#[test]
fn kl_dimension_grows_as_length_shrinks() {
    for kind in [KernelKind::SquaredExponential, KernelKind::MaternStandard52] {
        let dims: Vec<usize> = [1.0, 0.3, 0.2, 0.1, 0.03]
            .iter()
            .map(|l| kl_dimension(&Kernel::new(kind, 1.0, *l).unwrap(), (-1.0, 1.0), 512, 0.99).unwrap())
            .collect();
        assert!(dims.windows(2).all(|w| w[0] <= w[1]), "{kind:?}: {dims:?}");
    }
}

#[test]
fn sample_covariance_matches_gram() {
    let pts = PointSet::linspace(-1.0, 1.0, 11);
    let spec = GpSpec::new(MeanFn::Zero, Kernel::matern52(1.0, 0.3), Transform::None);
    let n = 20_000;
    let m = sample_gp(&spec, &pts, &mut Rng::new(21), n).unwrap();
    let g = gram(&spec.kernel, &pts);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..11 {
        for j in 0..11 {
            let c = m.iter_rows().map(|r| r[i] * r[j]).sum::<f64>() / n as f64;
            num += (c - g.get(i, j)).powi(2);
            den += g.get(i, j).powi(2);
        }
    }
    assert!((num / den).sqrt() < 0.05);
}

#[test]
fn sample_mean_within_three_standard_errors() {
    let pts = PointSet::linspace(-1.0, 1.0, 9);
    let spec = GpSpec::new(MeanFn::SinPi(2.0), Kernel::squared_exponential(0.7, 0.2), Transform::None);
    let n = 10_000;
    let m = sample_gp(&spec, &pts, &mut Rng::new(22), n).unwrap();
    for (i, x) in pts.iter().enumerate() {
        let mean = m.column(i).iter().sum::<f64>() / n as f64;
        let se = 0.7 / (n as f64).sqrt();
        assert!((mean - spec.mean.eval(x)).abs() < 3.0 * se);
    }
}

#[test]
fn lognormal_mean_identity() {
    let pts = PointSet::linspace(-1.0, 1.0, 7);
    let sigma = 0.5;
    let spec = GpSpec::new(
        MeanFn::SinPi(1.0),
        Kernel::squared_exponential(sigma, 0.3),
        Transform::LogShift(0.5),
    );
    let n = 40_000;
    let m = sample_gp(&spec, &pts, &mut Rng::new(23), n).unwrap();
    for (i, x) in pts.iter().enumerate() {
        let want = 0.5 + (f64::sin(std::f64::consts::PI * x[0]) + 0.5 * sigma * sigma).exp();
        let mean = m.column(i).iter().sum::<f64>() / n as f64;
        assert!((mean - want).abs() < 0.02 * want, "{mean} vs {want}");
    }
}

#[test]
fn tensor_sampler_has_gram_marginals() {
    let spec = GpSpec::new(MeanFn::Zero, Kernel::squared_exponential(1.0, 0.4), Transform::None);
    let s = GpSampler::tensor_grid(&spec, -1.0, 1.0, 5).unwrap();
    let mut rng = Rng::new(24);
    let n = 20_000;
    let draws: Vec<Vec<f64>> = (0..n).map(|_| s.draw(&mut rng)).collect();
    let pts = PointSet::tensor_grid(-1.0, 1.0, 5);
    let g = gram(&spec.kernel, &pts);
    for (i, j) in [(0, 0), (0, 1), (3, 17), (12, 12), (24, 6)] {
        let c = draws.iter().map(|r| r[i] * r[j]).sum::<f64>() / n as f64;
        assert!((c - g.get(i, j)).abs() < 0.04, "({i},{j}) {c} vs {}", g.get(i, j));
    }
}

fn kind() -> impl Strategy<Value = KernelKind> {
    prop_oneof![
        Just(KernelKind::SquaredExponential),
        Just(KernelKind::MaternPaperForm),
        Just(KernelKind::MaternStandard52),
    ]
}

proptest! {
    #[test]
    fn kernels_are_symmetric_and_stationary(
        kind in kind(),
        sigma in 0.1f64..3.0,
        l in 0.01f64..2.0,
        x in prop::collection::vec(-1.0f64..1.0, 2),
        y in prop::collection::vec(-1.0f64..1.0, 2),
        shift in -5.0f64..5.0,
    ) {
        let k = Kernel::new(kind, sigma, l).unwrap();
        prop_assert_eq!(k.eval(&x, &y), k.eval(&y, &x));
        let xs: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let ys: Vec<f64> = y.iter().map(|v| v + shift).collect();
        prop_assert!((k.eval(&xs, &ys) - k.eval(&x, &y)).abs() < 1e-12 * sigma * sigma);
        prop_assert_eq!(k.eval(&x, &x), sigma * sigma);
    }
}
