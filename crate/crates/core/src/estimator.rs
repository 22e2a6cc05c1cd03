//! Monte Carlo statistics of surrogate fields over parameter samples.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::ffn::{DerivOrder, FfnArch, FfnParams};
use crate::gp::Transform;
use crate::numerics::{eigvalsh, Matrix, PointSet, SymMatrix};
use crate::problem::ProblemSpec;
use crate::residual::{apply_operator, physical_k_bundle, transform_jet};

/// Which field to evaluate for every parameter sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSelector {
    /// Solution head.
    U,
    /// Physical parameter field `K = T(Z)`.
    K,
    /// Raw parameter head output `Z`.
    KLatent,
    /// Interior operator applied to the network, i.e. the implied source.
    F,
}

/// `N × n_grid` field values, row `i` for parameter sample `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSamples {
    pub grid: PointSet,
    pub values: Matrix,
}

/// Evaluates one field on a fixed grid, sample by sample.
#[derive(Clone, Debug)]
pub struct FieldEvaluator {
    arch: FfnArch,
    spec: ProblemSpec,
    grid: PointSet,
    selector: FieldSelector,
}

impl FieldEvaluator {
    pub fn new(arch: &FfnArch, spec: &ProblemSpec, grid: &PointSet, selector: FieldSelector) -> Result<Self> {
        check_dim(arch.input_dim(), grid.dim())?;
        if matches!(selector, FieldSelector::K | FieldSelector::KLatent) && arch.n_heads() < 2 {
            return Err(Error::MissingParameterField("network has no parameter head"));
        }
        if let Some(p) = grid.iter().find(|p| !spec.domain.contains(p)) {
            return Err(Error::invalid("grid", format!("point {p:?} outside the domain")));
        }
        Ok(Self {
            arch: arch.clone(),
            spec: spec.clone(),
            grid: grid.clone(),
            selector,
        })
    }

    pub fn grid(&self) -> &PointSet {
        &self.grid
    }

    fn k_transform(&self) -> Transform {
        self.spec.k_spec.as_ref().map_or(Transform::None, |k| k.transform)
    }

    pub fn eval(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let params = FfnParams::new(theta.to_vec());
        let coords = self.grid.coords();
        match self.selector {
            FieldSelector::U => {
                let t = self.arch.tape(&params, 0, coords, DerivOrder::Value)?;
                Ok((0..t.n_points()).map(|q| t.value(q)).collect())
            }
            FieldSelector::KLatent => {
                let t = self.arch.tape(&params, 1, coords, DerivOrder::Value)?;
                Ok((0..t.n_points()).map(|q| t.value(q)).collect())
            }
            FieldSelector::K => {
                let t = self.arch.tape(&params, 1, coords, DerivOrder::Value)?;
                Ok((0..t.n_points())
                    .map(|q| transform_jet(self.k_transform(), t.value(q)).0)
                    .collect())
            }
            FieldSelector::F => {
                let op = self.spec.operator;
                let u = self.arch.tape(&params, 0, coords, DerivOrder::from_order(op.u_order()))?;
                let k = if self.arch.n_heads() > 1 {
                    let order = DerivOrder::from_order(op.k_order().unwrap_or(0));
                    Some(self.arch.tape(&params, 1, coords, order)?)
                } else {
                    None
                };
                (0..u.n_points())
                    .map(|q| {
                        let kb = k.as_ref().map(|t| physical_k_bundle(self.k_transform(), t, q));
                        apply_operator(op, &u.bundle(q), kb.as_ref(), self.grid.point(q))
                    })
                    .collect()
            }
        }
    }
}

/// Evaluates `selector` on `grid` for every parameter sample.
pub fn field_samples(
    samples: &[Vec<f64>],
    arch: &FfnArch,
    spec: &ProblemSpec,
    grid: &PointSet,
    selector: FieldSelector,
) -> Result<FieldSamples> {
    let ev = FieldEvaluator::new(arch, spec, grid, selector)?;
    let mut data = Vec::with_capacity(samples.len() * grid.len());
    for s in samples {
        data.extend(ev.eval(s)?);
    }
    Ok(FieldSamples {
        grid: grid.clone(),
        values: Matrix::from_vec(samples.len(), grid.len(), data)?,
    })
}

/// Variance normalization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by `N`.
    #[default]
    Population,
    /// Divide by `N − 1`.
    Sample,
}

impl Normalization {
    fn divisor(self, n: usize) -> f64 {
        match self {
            Normalization::Population => n as f64,
            Normalization::Sample => (n.max(2) - 1) as f64,
        }
    }
}

fn column_means(values: &Matrix) -> Vec<f64> {
    let mut mean = vec![0.0; values.cols()];
    for r in values.iter_rows() {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
    }
    let n = values.rows() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Pointwise mean and standard deviation with `1/N` normalization.
pub fn mean_std(fs: &FieldSamples) -> (Vec<f64>, Vec<f64>) {
    mean_std_with(fs, Normalization::Population)
}

pub fn mean_std_with(fs: &FieldSamples, norm: Normalization) -> (Vec<f64>, Vec<f64>) {
    let mean = column_means(&fs.values);
    let mut var = vec![0.0; fs.values.cols()];
    for r in fs.values.iter_rows() {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let div = norm.divisor(fs.values.rows());
    let std = var.iter().map(|s| (s / div).sqrt()).collect();
    (mean, std)
}

/// Sample covariance across rows with `1/N` normalization.
pub fn cov_kernel(fs: &FieldSamples) -> SymMatrix {
    cov_kernel_with(fs, Normalization::Population)
}

pub fn cov_kernel_with(fs: &FieldSamples, norm: Normalization) -> SymMatrix {
    let mean = column_means(&fs.values);
    let g = fs.values.cols();
    let mut acc = vec![0.0; g * g];
    let mut y = vec![0.0; g];
    for r in fs.values.iter_rows() {
        for ((yi, v), m) in y.iter_mut().zip(r).zip(&mean) {
            *yi = v - m;
        }
        for i in 0..g {
            let yi = y[i];
            for (a, yj) in acc[i * g..i * g + i + 1].iter_mut().zip(&y) {
                *a += yi * yj;
            }
        }
    }
    let div = norm.divisor(fs.values.rows());
    SymMatrix::from_fn(g, |i, j| acc[i * g + j] / div)
}

/// Eigenvalues of a covariance kernel, descending.
pub fn kernel_eigenvalues(cov: &SymMatrix) -> Result<Vec<f64>> {
    eigvalsh(cov)
}

/// `‖pred − ref‖₂ / ‖ref‖₂`.
pub fn rel_error(pred: &[f64], reference: &[f64]) -> Result<f64> {
    check_dim(reference.len(), pred.len())?;
    let den = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    let num = pred
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(num / den)
}

/// Frobenius-norm relative error of two matrices of equal size.
pub fn rel_error_matrix(pred: &SymMatrix, reference: &SymMatrix) -> Result<f64> {
    rel_error(pred.as_slice(), reference.as_slice())
}

/// Relative errors of the running mean and STD after the first `n` rows,
/// for each `n` in `counts`.
pub fn running_errors(
    fs: &FieldSamples,
    mean_ref: &[f64],
    std_ref: &[f64],
    counts: &[usize],
) -> Result<Vec<(usize, f64, f64)>> {
    check_dim(fs.values.cols(), mean_ref.len())?;
    check_dim(fs.values.cols(), std_ref.len())?;
    counts
        .iter()
        .map(|&n| {
            if n == 0 || n > fs.values.rows() {
                return Err(Error::IndexOutOfRange {
                    index: n,
                    len: fs.values.rows(),
                });
            }
            let head = FieldSamples {
                grid: fs.grid.clone(),
                values: fs.values.select_rows(&(0..n).collect::<Vec<_>>()),
            };
            let (m, s) = mean_std(&head);
            Ok((n, rel_error(&m, mean_ref)?, rel_error(&s, std_ref)?))
        })
        .collect()
}

/// Writes `x…, mean, std` rows with a header line.
pub fn write_stats_csv(path: &Path, grid: &PointSet, mean: &[f64], std: &[f64]) -> Result<()> {
    check_dim(grid.len(), mean.len())?;
    check_dim(grid.len(), std.len())?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let axes = ["x", "y", "z"];
    let head: Vec<&str> = axes.iter().take(grid.dim()).copied().collect();
    writeln!(w, "{},mean,std", head.join(","))?;
    for (i, p) in grid.iter().enumerate() {
        for c in p {
            write!(w, "{c:?},")?;
        }
        writeln!(w, "{:?},{:?}", mean[i], std[i])?;
    }
    Ok(())
}

/// Writes a dense matrix, one row per line.
pub fn write_matrix_csv(path: &Path, m: &SymMatrix) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..m.n() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Writes `index,value` lines under a header.
pub fn write_vector_csv(path: &Path, header: &str, v: &[f64]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "index,{header}")?;
    for (i, x) in v.iter().enumerate() {
        writeln!(w, "{i},{x:?}")?;
    }
    Ok(())
}
