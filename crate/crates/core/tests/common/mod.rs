#![allow(dead_code)]

use spdebnn_core::ffn::{FfnArch, FfnParams, HeadSpec};
use spdebnn_core::Rng;

/// Direct evaluation of one head, written from the layer equations with
/// no shared code path.
pub fn naive_head(arch: &FfnArch, theta: &[f64], head: usize, x: &[f64]) -> f64 {
    naive_head_hidden(arch, theta, head, x).0
}

/// Value plus the concatenated last hidden states.
pub fn naive_head_hidden(arch: &FfnArch, theta: &[f64], head: usize, x: &[f64]) -> (f64, Vec<f64>) {
    let h = arch.head(head);
    let th = &theta[arch.head_range(head)];
    let n = x.len();
    let mut concat = Vec::new();
    for e in h.embeddings() {
        let b = e.matrix();
        let rows = e.rows();
        let mut act: Vec<f64> = Vec::new();
        for k in 0..rows {
            let a: f64 = (0..n).map(|j| b[k * n + j] * x[j]).sum();
            act.push(a.cos());
        }
        for k in 0..rows {
            let a: f64 = (0..n).map(|j| b[k * n + j] * x[j]).sum();
            act.push(a.sin());
        }
        for t in 0..h.hidden().len() {
            let w = &th[h.weight_range(t)];
            let bias = &th[h.bias_range(t)];
            let width = act.len();
            act = (0..h.hidden()[t])
                .map(|o| {
                    let z: f64 = (0..width).map(|i| w[o * width + i] * act[i]).sum::<f64>() + bias[o];
                    z.sin()
                })
                .collect();
        }
        concat.extend(act);
    }
    let wt = &th[h.output_weight_range()];
    let v = concat.iter().zip(wt).map(|(a, b)| a * b).sum::<f64>() + th[h.output_bias_index()];
    (v, concat)
}

pub fn random_arch(rng: &mut Rng, input_dim: usize, heads: usize) -> (FfnArch, FfnParams) {
    let specs: Vec<HeadSpec> = (0..heads)
        .map(|_| HeadSpec {
            features: 1 + rng.below(4),
            scales: (0..1 + rng.below(2)).map(|_| 0.5 + 0.5 * rng.uniform()).collect(),
            hidden: (0..1 + rng.below(2)).map(|_| 2 + rng.below(5)).collect(),
        })
        .collect();
    let arch = FfnArch::sample(input_dim, &specs, rng).unwrap();
    let mut p = arch.prior_sample(rng);
    p.theta.iter_mut().for_each(|v| *v *= 0.5);
    (arch, p)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(a.abs()).max(1.0)
}

pub fn vec_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-12)
}

/// Central-difference gradient of `f` at `x`.
pub fn fd_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let fp = f(&y);
            y[i] = x[i] - h;
            let fm = f(&y);
            y[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

use spdebnn_core::gmm::{EmOptions, GaussianMixture};
use spdebnn_core::problem::synthesize_forward;
use spdebnn_core::{
    Domain, GpSpec, Kernel, MeanFn, Mode, OperatorId, PointSet, Posterior, ProblemSpec, SensorLayout, Transform,
};

/// A fitted posterior small enough for dense oracles (d ≈ 30–60).
pub fn small_posterior(seed: u64, operator: OperatorId, n_components: usize) -> (Posterior, ProblemSpec, SensorLayout) {
    let spec = ProblemSpec {
        operator,
        mode: Mode::Forward,
        domain: Domain::Interval { a: -1.0, b: 1.0 },
        f_spec: GpSpec::new(MeanFn::SinPi(1.0), Kernel::matern52(1.0, 0.5), Transform::None),
        k_spec: None,
        boundary_value: 0.0,
        noise_std: 0.1,
    };
    let layout = SensorLayout::new(
        PointSet::linspace(-0.8, 0.8, 5),
        PointSet::from_1d(vec![-1.0, 1.0]),
        PointSet::empty(1),
        PointSet::empty(1),
    );
    let rng = Rng::new(seed);
    let ds = synthesize_forward(&spec, &layout, 400, &mut rng.split("data")).unwrap();
    let (gmm, _) =
        GaussianMixture::fit_em(&ds.rows, &EmOptions::with_components(n_components), &mut rng.split("gmm")).unwrap();
    let hs = HeadSpec { features: 2, scales: vec![1.0], hidden: vec![5] };
    let arch = FfnArch::sample(1, &[hs], &mut rng.split("arch")).unwrap();
    (Posterior::new(gmm, &spec, &layout, arch).unwrap(), spec, layout)
}
