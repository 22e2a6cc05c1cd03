//! Network outputs mapped through the PDE to the sensor vector
//! `[F, G, K]` (forward) or `[F, G, U]` (inverse).
//!
//! Head 0 is always `U`. When the problem has a parameter field, head 1
//! models its latent `Z` and the field is `K = T(Z)` for the transform of
//! the parameter's data-generating process (for a log-shift `s`,
//! `K = s + e^Z`).

use crate::error::{check_dim, Error, Result};
use crate::ffn::{DerivOrder, EvalBundle, FfnArch, FfnParams, HeadTape};
use crate::gp::Transform;
use crate::problem::{BlockSizes, Mode, OperatorId, ProblemSpec, SensorLayout};

/// Residual values in dataset row order.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualVector {
    pub blocks: BlockSizes,
    pub values: Vec<f64>,
}

impl ResidualVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn f(&self) -> &[f64] {
        &self.values[..self.blocks.f]
    }

    pub fn g(&self) -> &[f64] {
        let [_, og, ok, _] = self.blocks.offsets();
        &self.values[og..ok]
    }

    pub fn k(&self) -> &[f64] {
        let [_, _, ok, ou] = self.blocks.offsets();
        &self.values[ok..ou]
    }

    pub fn u(&self) -> &[f64] {
        let [_, _, _, ou] = self.blocks.offsets();
        &self.values[ou..]
    }
}

/// Interior residual at one point from the `U` bundle and the physical
/// parameter-field bundle.
pub fn apply_operator(op: OperatorId, u: &EvalBundle, k: Option<&EvalBundle>, _x: &[f64]) -> Result<f64> {
    Ok(match op {
        OperatorId::Identity => u.value,
        OperatorId::NegLaplace1D => -u.hess_diag[0],
        OperatorId::AllenCahn2D { cubic } => {
            let c = k.map_or(cubic, |k| k.value);
            let lap: f64 = u.hess_diag.iter().sum();
            -lap + c * u.value * (u.value * u.value - 1.0)
        }
        OperatorId::DivForm1D => {
            let k = k.ok_or(Error::MissingParameterField("div_form_1d needs k"))?;
            -(k.grad_x[0] * u.grad_x[0] + k.value * u.hess_diag[0])
        }
    })
}

/// `(T(z), T'(z), T''(z))`.
pub(crate) fn transform_jet(t: Transform, z: f64) -> (f64, f64, f64) {
    match t {
        Transform::None => (z, 1.0, 0.0),
        Transform::LogShift(s) => {
            let e = z.exp();
            (s + e, e, e)
        }
    }
}

/// Physical parameter-field bundle `K = T(Z)` at tape point `q`; second
/// derivatives are not formed.
pub(crate) fn physical_k_bundle(t: Transform, kf: &HeadTape, q: usize) -> EvalBundle {
    let n = kf.input_dim();
    let (k, t1, _) = transform_jet(t, kf.value(q));
    let grad_x = if kf.order() >= DerivOrder::First {
        (0..n).map(|j| t1 * kf.grad(q, j)).collect()
    } else {
        vec![0.0; n]
    };
    EvalBundle {
        value: k,
        grad_x,
        hess_diag: vec![0.0; n],
    }
}

/// Precomputed evaluation plan for one problem and layout.
#[derive(Clone, Debug)]
pub struct ResidualMap {
    operator: OperatorId,
    input_dim: usize,
    blocks: BlockSizes,
    k_head: Option<usize>,
    k_transform: Transform,
    u_order: DerivOrder,
    /// Order of `K` needed in the F block; `None` when F ignores `K`.
    k_order: Option<DerivOrder>,
    f_coords: Vec<f64>,
    /// g sensors followed by u sensors.
    trace_coords: Vec<f64>,
    k_coords: Vec<f64>,
}

/// Forward intermediates kept for [`ResidualMap::pullback`].
#[derive(Clone, Debug)]
pub struct ResidualTapes {
    uf: HeadTape,
    trace: Option<HeadTape>,
    kf: Option<HeadTape>,
    kk: Option<HeadTape>,
}

impl ResidualMap {
    pub fn new(spec: &ProblemSpec, layout: &SensorLayout, arch: &FfnArch) -> Result<Self> {
        spec.validate()?;
        spec.check_layout(layout)?;
        let n = spec.domain.dim();
        check_dim(n, arch.input_dim())?;
        let k_head = spec.has_k_head().then_some(1);
        let want_heads = 1 + usize::from(k_head.is_some());
        if arch.n_heads() != want_heads {
            return Err(Error::invalid(
                "network",
                format!("{} needs {want_heads} heads, got {}", spec.operator.name(), arch.n_heads()),
            ));
        }
        let k_order = match (k_head, spec.operator) {
            (None, _) => None,
            (Some(_), OperatorId::DivForm1D) => Some(DerivOrder::First),
            (Some(_), OperatorId::AllenCahn2D { .. }) => Some(DerivOrder::Value),
            (Some(_), _) => None,
        };
        let k_transform = spec.k_spec.as_ref().map_or(Transform::None, |k| k.transform);
        let mut trace_coords = layout.g.coords().to_vec();
        trace_coords.extend_from_slice(layout.u.coords());
        Ok(Self {
            operator: spec.operator,
            input_dim: n,
            blocks: layout.blocks(),
            k_head,
            k_transform,
            u_order: DerivOrder::from_order(spec.operator.u_order()),
            k_order,
            f_coords: layout.f.coords().to_vec(),
            trace_coords,
            k_coords: if spec.mode == Mode::Forward {
                layout.k.coords().to_vec()
            } else {
                Vec::new()
            },
        })
    }

    pub fn len(&self) -> usize {
        self.blocks.total()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn blocks(&self) -> BlockSizes {
        self.blocks
    }

    pub fn evaluate(&self, arch: &FfnArch, params: &FfnParams) -> Result<ResidualVector> {
        Ok(self.evaluate_with_tapes(arch, params)?.0)
    }

    pub fn evaluate_with_tapes(&self, arch: &FfnArch, params: &FfnParams) -> Result<(ResidualVector, ResidualTapes)> {
        let uf = arch.tape(params, 0, &self.f_coords, self.u_order)?;
        let kf = match (self.k_head, self.k_order) {
            (Some(h), Some(o)) => Some(arch.tape(params, h, &self.f_coords, o)?),
            _ => None,
        };
        let trace = (!self.trace_coords.is_empty())
            .then(|| arch.tape(params, 0, &self.trace_coords, DerivOrder::Value))
            .transpose()?;
        let kk = match self.k_head {
            Some(h) if !self.k_coords.is_empty() => Some(arch.tape(params, h, &self.k_coords, DerivOrder::Value)?),
            _ => None,
        };

        let mut values = Vec::with_capacity(self.len());
        for q in 0..self.blocks.f {
            let u = uf.bundle(q);
            let k = kf.as_ref().map(|t| physical_k_bundle(self.k_transform, t, q));
            let x = &self.f_coords[q * self.input_dim..(q + 1) * self.input_dim];
            values.push(apply_operator(self.operator, &u, k.as_ref(), x)?);
        }
        if let Some(t) = &trace {
            values.extend((0..self.blocks.g).map(|q| t.value(q)));
        }
        if let Some(t) = &kk {
            values.extend((0..self.blocks.k).map(|q| transform_jet(self.k_transform, t.value(q)).0));
        }
        if let Some(t) = &trace {
            values.extend((self.blocks.g..self.blocks.g + self.blocks.u).map(|q| t.value(q)));
        }
        Ok((
            ResidualVector {
                blocks: self.blocks,
                values,
            },
            ResidualTapes { uf, trace, kf, kk },
        ))
    }

    /// `∇_θ ⟨adjoint, residual(θ)⟩` using the tapes of the same `θ`.
    pub fn pullback(
        &self,
        arch: &FfnArch,
        params: &FfnParams,
        tapes: &ResidualTapes,
        adjoint: &[f64],
    ) -> Result<Vec<f64>> {
        check_dim(self.len(), adjoint.len())?;
        let mut grad = vec![0.0; arch.dim_theta()];
        self.pullback_into(arch, params, tapes, adjoint, &mut grad)?;
        Ok(grad)
    }

    pub fn pullback_into(
        &self,
        arch: &FfnArch,
        params: &FfnParams,
        tapes: &ResidualTapes,
        adjoint: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        check_dim(self.len(), adjoint.len())?;
        let n = self.input_dim;
        let [_, og, ok, ou] = self.blocks.offsets();
        let uf = &tapes.uf;
        let ch_u = uf.channels();
        let mut adj_uf = vec![0.0; uf.output().len()];
        let mut adj_kf = tapes.kf.as_ref().map(|t| vec![0.0; t.output().len()]);
        let ch_k = tapes.kf.as_ref().map_or(0, |t| t.channels());
        for q in 0..self.blocks.f {
            let a = adjoint[q];
            if a == 0.0 {
                continue;
            }
            let au = &mut adj_uf[q * ch_u..(q + 1) * ch_u];
            match self.operator {
                OperatorId::Identity => au[0] += a,
                OperatorId::NegLaplace1D => au[2] -= a,
                OperatorId::AllenCahn2D { cubic } => {
                    let u = uf.value(q);
                    let (c, t1) = match &tapes.kf {
                        Some(kf) => {
                            let (k, t1, _) = transform_jet(self.k_transform, kf.value(q));
                            (k, t1)
                        }
                        None => (cubic, 0.0),
                    };
                    au[0] += a * c * (3.0 * u * u - 1.0);
                    for j in 0..n {
                        au[1 + n + j] -= a;
                    }
                    if let Some(ak) = adj_kf.as_mut() {
                        ak[q * ch_k] += a * u * (u * u - 1.0) * t1;
                    }
                }
                OperatorId::DivForm1D => {
                    let kf = tapes.kf.as_ref().ok_or(Error::MissingParameterField("div_form_1d needs k"))?;
                    let (z, dz) = (kf.value(q), kf.grad(q, 0));
                    let (k, t1, t2) = transform_jet(self.k_transform, z);
                    let kp = t1 * dz;
                    let (u1, u2) = (uf.grad(q, 0), uf.hess(q, 0));
                    au[1] -= a * kp;
                    au[2] -= a * k;
                    // F = −(K'U' + KU''), K = T(Z), K' = T'(Z) Z'.
                    let ak = adj_kf.as_mut().expect("k tape");
                    let dk = -a * u2;
                    let dkp = -a * u1;
                    ak[q * ch_k] += dk * t1 + dkp * t2 * dz;
                    ak[q * ch_k + 1] += dkp * t1;
                }
            }
        }
        uf.backprop(arch, params, &adj_uf, grad)?;
        if let (Some(kf), Some(ak)) = (&tapes.kf, &adj_kf) {
            kf.backprop(arch, params, ak, grad)?;
        }
        if let Some(t) = &tapes.trace {
            let mut adj = adjoint[og..ok].to_vec();
            adj.extend_from_slice(&adjoint[ou..]);
            t.backprop(arch, params, &adj, grad)?;
        }
        if let Some(t) = &tapes.kk {
            let adj: Vec<f64> = (0..self.blocks.k)
                .map(|q| adjoint[ok + q] * transform_jet(self.k_transform, t.value(q)).1)
                .collect();
            t.backprop(arch, params, &adj, grad)?;
        }
        Ok(())
    }
}

pub fn residual_vector(
    spec: &ProblemSpec,
    layout: &SensorLayout,
    arch: &FfnArch,
    params: &FfnParams,
) -> Result<ResidualVector> {
    ResidualMap::new(spec, layout, arch)?.evaluate(arch, params)
}

pub fn residual_pullback(
    spec: &ProblemSpec,
    layout: &SensorLayout,
    arch: &FfnArch,
    params: &FfnParams,
    adjoint: &[f64],
) -> Result<Vec<f64>> {
    let map = ResidualMap::new(spec, layout, arch)?;
    let (_, tapes) = map.evaluate_with_tapes(arch, params)?;
    map.pullback(arch, params, &tapes, adjoint)
}
