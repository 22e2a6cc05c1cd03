//! Fixtures shared by the benchmarks.

use spdebnn_core::gmm::GaussianMixture;
use spdebnn_core::gp::{GpSpec, Kernel, MeanFn, Transform};
use spdebnn_core::problem::{synthesize_forward, Domain, Mode, OperatorId, ProblemSpec, SensorLayout};
use spdebnn_core::{EmOptions, FfnArch, HeadSpec, PointSet, Posterior, Rng, SymMatrix};

/// A 1-d Poisson posterior with `hidden` units per layer and 41 source
/// sensors.
pub fn poisson_posterior(hidden: usize) -> Posterior {
    let spec = ProblemSpec {
        operator: OperatorId::NegLaplace1D,
        mode: Mode::Forward,
        domain: Domain::Interval { a: -1.0, b: 1.0 },
        f_spec: GpSpec::new(MeanFn::SinPi(10.0), Kernel::matern52(1.0, 0.1), Transform::None),
        k_spec: None,
        boundary_value: 0.0,
        noise_std: 0.01,
    };
    let layout = SensorLayout::new(
        PointSet::linspace(-1.0, 1.0, 41),
        PointSet::from_1d(vec![-1.0, 1.0]),
        PointSet::empty(1),
        PointSet::empty(1),
    );
    let rng = Rng::new(11);
    let data = synthesize_forward(&spec, &layout, 500, &mut rng.split("data")).expect("valid problem");
    let (gmm, _) = GaussianMixture::fit_em(&data.rows, &EmOptions::with_components(1), &mut rng.split("gmm"))
        .expect("fit succeeds");
    let head = HeadSpec {
        features: 10,
        scales: vec![1.0, 7.0],
        hidden: vec![hidden],
    };
    let arch = FfnArch::sample(1, &[head], &mut rng.split("arch")).expect("valid architecture");
    Posterior::new(gmm, &spec, &layout, arch).expect("consistent posterior")
}

/// Squared-exponential Gram matrix on `n` points of `[-1, 1]`.
pub fn se_gram(n: usize, length: f64) -> SymMatrix {
    let k = Kernel::squared_exponential(1.0, length);
    spdebnn_core::gp::gram(&k, &PointSet::linspace(-1.0, 1.0, n))
}
