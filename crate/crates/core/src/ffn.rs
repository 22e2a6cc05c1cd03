//! Multiscale Fourier-feature networks with analytic input derivatives.
//!
//! A head maps `x ∈ ℝⁿ` to a scalar:
//!
//! ```text
//! γᵢ(x)   = [cos B⁽ⁱ⁾x; sin B⁽ⁱ⁾x]                 (frozen B⁽ⁱ⁾, b × n)
//! H₀⁽ⁱ⁾   = γᵢ(x),  H_{t+1}⁽ⁱ⁾ = sin(W_t H_t⁽ⁱ⁾ + b_t)   (weights shared over i)
//! U(x)    = W_T [H_T⁽¹⁾; …; H_T⁽ᴵ⁾] + b_T
//! ```
//!
//! Derivatives travel as jets: every activation row carries a value
//! channel, `n` first-derivative channels and `n` pure second-derivative
//! channels, depending on the requested [`DerivOrder`]. Rows of a tape are
//! ordered `point · channels + channel`.
//!
//! Parameter layout of a head, relative to its offset in `θ`: for each
//! hidden layer `t`, `W_t` (row-major, `h_{t+1} × h_t`) followed by `b_t`;
//! then `W_T` (`I·h_T` entries, embedding-major) and the scalar `b_T`.
//! Heads are concatenated in order.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::Rng;

/// Highest input-derivative order carried through a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DerivOrder {
    Value,
    First,
    Second,
}

impl DerivOrder {
    pub fn from_order(k: usize) -> Self {
        match k {
            0 => DerivOrder::Value,
            1 => DerivOrder::First,
            _ => DerivOrder::Second,
        }
    }

    /// Channels per point for an `n`-dimensional input.
    pub fn channels(self, n: usize) -> usize {
        match self {
            DerivOrder::Value => 1,
            DerivOrder::First => 1 + n,
            DerivOrder::Second => 1 + 2 * n,
        }
    }
}

/// Frozen random Fourier features `[cos Bx; sin Bx]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierEmbedding {
    rows: usize,
    input_dim: usize,
    scale: f64,
    /// Row-major `rows × input_dim`.
    b: Vec<f64>,
}

impl FourierEmbedding {
    /// Draws every entry of `B` from `N(0, scale²)`.
    pub fn sample(rows: usize, input_dim: usize, scale: f64, rng: &mut Rng) -> Result<Self> {
        let mut b = vec![0.0; rows * input_dim];
        rng.fill_standard_normal(&mut b);
        b.iter_mut().for_each(|v| *v *= scale);
        Self::from_matrix(rows, input_dim, scale, b)
    }

    pub fn from_matrix(rows: usize, input_dim: usize, scale: f64, b: Vec<f64>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::invalid("embedding", "needs at least one feature row"));
        }
        if input_dim == 0 {
            return Err(Error::invalid("embedding", "input dimension is zero"));
        }
        if !(scale > 0.0) {
            return Err(Error::invalid("embedding scale", format!("{scale} is not positive")));
        }
        check_dim(rows * input_dim, b.len())?;
        Ok(Self {
            rows,
            input_dim,
            scale,
            b,
        })
    }

    /// Number of rows `b` of `B`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Embedding width `2b`.
    pub fn features(&self) -> usize {
        2 * self.rows
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn matrix(&self) -> &[f64] {
        &self.b
    }

    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim, x.len())?;
        let a: Vec<f64> = self.b.chunks(self.input_dim).map(|r| dot(r, x)).collect();
        Ok(a.iter().map(|v| v.cos()).chain(a.iter().map(|v| v.sin())).collect())
    }

    /// Writes embedding jets of one point into `out` (`channels × 2b`).
    fn embed_jet(&self, x: &[f64], order: DerivOrder, out: &mut [f64]) {
        let (b, n) = (self.rows, self.input_dim);
        let w = 2 * b;
        for k in 0..b {
            let row = &self.b[k * n..(k + 1) * n];
            let a = dot(row, x);
            let (s, c) = a.sin_cos();
            out[k] = c;
            out[b + k] = s;
            if order >= DerivOrder::First {
                for j in 0..n {
                    let r = &mut out[(1 + j) * w..(2 + j) * w];
                    r[k] = -s * row[j];
                    r[b + k] = c * row[j];
                }
            }
            if order == DerivOrder::Second {
                for j in 0..n {
                    let bj2 = row[j] * row[j];
                    let r = &mut out[(1 + n + j) * w..(2 + n + j) * w];
                    r[k] = -c * bj2;
                    r[b + k] = -s * bj2;
                }
            }
        }
    }
}

/// Configuration of one head, before its embeddings are sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    /// Rows `b` of every `B⁽ⁱ⁾`.
    pub features: usize,
    /// One scale `σᵢ` per embedding.
    pub scales: Vec<f64>,
    /// Hidden widths `h₁ … h_T`.
    pub hidden: Vec<usize>,
}

/// One scalar-valued multiscale network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadArch {
    input_dim: usize,
    embeddings: Vec<FourierEmbedding>,
    hidden: Vec<usize>,
}

impl HeadArch {
    pub fn new(input_dim: usize, embeddings: Vec<FourierEmbedding>, hidden: Vec<usize>) -> Result<Self> {
        let first = embeddings
            .first()
            .ok_or_else(|| Error::invalid("head", "needs at least one embedding"))?;
        if embeddings
            .iter()
            .any(|e| e.rows != first.rows || e.input_dim != input_dim)
        {
            return Err(Error::invalid("head", "embeddings differ in shape"));
        }
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::invalid("head", "needs at least one non-empty hidden layer"));
        }
        Ok(Self {
            input_dim,
            embeddings,
            hidden,
        })
    }

    pub fn sample(input_dim: usize, spec: &HeadSpec, rng: &mut Rng) -> Result<Self> {
        if spec.scales.is_empty() {
            return Err(Error::invalid("head", "needs at least one embedding scale"));
        }
        let embeddings = spec
            .scales
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                FourierEmbedding::sample(spec.features, input_dim, s, &mut rng.split_index("embedding", i as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(input_dim, embeddings, spec.hidden.clone())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn embeddings(&self) -> &[FourierEmbedding] {
        &self.embeddings
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    /// Input width of hidden layer `t`.
    fn layer_in(&self, t: usize) -> usize {
        if t == 0 {
            self.embeddings[0].features()
        } else {
            self.hidden[t - 1]
        }
    }

    fn layer_offset(&self, t: usize) -> usize {
        (0..t).map(|s| (self.layer_in(s) + 1) * self.hidden[s]).sum()
    }

    /// Range of `W_t` (row-major `h_{t+1} × h_t`) within the head block.
    pub fn weight_range(&self, t: usize) -> std::ops::Range<usize> {
        let o = self.layer_offset(t);
        o..o + self.hidden[t] * self.layer_in(t)
    }

    pub fn bias_range(&self, t: usize) -> std::ops::Range<usize> {
        let o = self.weight_range(t).end;
        o..o + self.hidden[t]
    }

    /// Range of `W_T`, embedding-major.
    pub fn output_weight_range(&self) -> std::ops::Range<usize> {
        let o = self.layer_offset(self.hidden.len());
        o..o + self.embeddings.len() * self.last_width()
    }

    pub fn output_bias_index(&self) -> usize {
        self.output_weight_range().end
    }

    fn last_width(&self) -> usize {
        *self.hidden.last().expect("non-empty hidden layers")
    }

    pub fn n_params(&self) -> usize {
        self.output_bias_index() + 1
    }
}

/// Scalar heads sharing one input space, each with its own parameter block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FfnArch {
    input_dim: usize,
    heads: Vec<HeadArch>,
    offsets: Vec<usize>,
}

/// Flat parameter vector `θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FfnParams {
    pub theta: Vec<f64>,
}

impl FfnParams {
    pub fn new(theta: Vec<f64>) -> Self {
        Self { theta }
    }

    pub fn zeros(arch: &FfnArch) -> Self {
        Self::new(vec![0.0; arch.dim_theta()])
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// Value, gradient and diagonal Hessian of one head at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalBundle {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub hess_diag: Vec<f64>,
}

impl FfnArch {
    pub fn new(input_dim: usize, heads: Vec<HeadArch>) -> Result<Self> {
        if heads.is_empty() {
            return Err(Error::invalid("network", "needs at least one head"));
        }
        if let Some(h) = heads.iter().find(|h| h.input_dim != input_dim) {
            return Err(Error::DimensionMismatch {
                expected: input_dim,
                got: h.input_dim,
            });
        }
        let mut offsets = Vec::with_capacity(heads.len() + 1);
        let mut o = 0;
        for h in &heads {
            offsets.push(o);
            o += h.n_params();
        }
        offsets.push(o);
        Ok(Self {
            input_dim,
            heads,
            offsets,
        })
    }

    /// Samples every head's embeddings from independent streams.
    pub fn sample(input_dim: usize, specs: &[HeadSpec], rng: &mut Rng) -> Result<Self> {
        let heads = specs
            .iter()
            .enumerate()
            .map(|(h, s)| HeadArch::sample(input_dim, s, &mut rng.split_index("head", h as u64)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(input_dim, heads)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn head(&self, h: usize) -> &HeadArch {
        &self.heads[h]
    }

    /// Range of head `h`'s block within `θ`.
    pub fn head_range(&self, h: usize) -> std::ops::Range<usize> {
        self.offsets[h]..self.offsets[h + 1]
    }

    pub fn dim_theta(&self) -> usize {
        *self.offsets.last().expect("offsets")
    }

    /// Standard-normal prior draw.
    pub fn prior_sample(&self, rng: &mut Rng) -> FfnParams {
        let mut theta = vec![0.0; self.dim_theta()];
        rng.fill_standard_normal(&mut theta);
        FfnParams::new(theta)
    }

    pub fn embed(&self, head: usize, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        let h = self.heads.get(head).ok_or(Error::IndexOutOfRange {
            index: head,
            len: self.heads.len(),
        })?;
        let e = h.embeddings.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: h.embeddings.len(),
        })?;
        e.embed(x)
    }

    /// Values of all heads at `x`.
    pub fn forward(&self, params: &FfnParams, x: &[f64]) -> Result<Vec<f64>> {
        (0..self.n_heads())
            .map(|h| Ok(self.tape(params, h, x, DerivOrder::Value)?.value(0)))
            .collect()
    }

    pub fn eval_bundle(&self, params: &FfnParams, head: usize, x: &[f64]) -> Result<EvalBundle> {
        Ok(self.tape(params, head, x, DerivOrder::Second)?.bundle(0))
    }

    /// Evaluates head `head` at every point of the flattened coordinate
    /// list `coords`, keeping the intermediates needed by
    /// [`HeadTape::backprop`].
    pub fn tape(&self, params: &FfnParams, head: usize, coords: &[f64], order: DerivOrder) -> Result<HeadTape> {
        check_dim(self.dim_theta(), params.len())?;
        let arch = self.heads.get(head).ok_or(Error::IndexOutOfRange {
            index: head,
            len: self.heads.len(),
        })?;
        let n = self.input_dim;
        if coords.len() % n != 0 {
            return Err(Error::DimensionMismatch {
                expected: n * (coords.len() / n + 1),
                got: coords.len(),
            });
        }
        let theta = &params.theta[self.head_range(head)];
        let n_points = coords.len() / n;
        let ch = order.channels(n);
        let p = n_points * ch;
        let mut emb = Vec::with_capacity(arch.embeddings.len());
        for e in &arch.embeddings {
            let w0 = e.features();
            let mut x0 = vec![0.0; p * w0];
            for (q, x) in coords.chunks(n).enumerate() {
                e.embed_jet(x, order, &mut x0[q * ch * w0..(q + 1) * ch * w0]);
            }
            let mut acts = vec![x0];
            let mut pre = Vec::with_capacity(arch.hidden.len());
            let mut cos = Vec::with_capacity(arch.hidden.len());
            for (t, &h) in arch.hidden.iter().enumerate() {
                let w_in = arch.layer_in(t);
                let w = &theta[arch.weight_range(t)];
                let bias = &theta[arch.bias_range(t)];
                let input = acts.last().expect("embedding");
                let mut z = vec![0.0; p * h];
                gemm(p, w_in, h, input, (w_in, 1), w, (1, w_in), 0.0, &mut z, (h, 1));
                let mut out = vec![0.0; p * h];
                let mut c = vec![0.0; n_points * h];
                for q in 0..n_points {
                    let base = q * ch * h;
                    let z0 = &mut z[base..base + h];
                    z0.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
                    for k in 0..h {
                        let (s, co) = z[base + k].sin_cos();
                        c[q * h + k] = co;
                        out[base + k] = s;
                        for j in 0..n.min(ch - 1) {
                            let d1 = z[base + (1 + j) * h + k];
                            out[base + (1 + j) * h + k] = co * d1;
                            if order == DerivOrder::Second {
                                let d2 = z[base + (1 + n + j) * h + k];
                                out[base + (1 + n + j) * h + k] = co * d2 - s * d1 * d1;
                            }
                        }
                    }
                }
                pre.push(z);
                cos.push(c);
                acts.push(out);
            }
            emb.push(EmbTape { acts, pre, cos });
        }
        let wt = &theta[arch.output_weight_range()];
        let bt = theta[arch.output_bias_index()];
        let hl = arch.last_width();
        let mut output = vec![0.0; p];
        for (i, e) in emb.iter().enumerate() {
            let w = &wt[i * hl..(i + 1) * hl];
            let last = e.acts.last().expect("hidden layer");
            for (r, o) in output.iter_mut().enumerate() {
                *o += dot(&last[r * hl..(r + 1) * hl], w);
            }
        }
        for q in 0..n_points {
            output[q * ch] += bt;
        }
        Ok(HeadTape {
            head,
            input_dim: n,
            n_points,
            order,
            emb,
            output,
        })
    }

    /// `∇_θ Σ_q ⟨adjoint_q, bundle_q⟩` for head `head` over a point list;
    /// `adjoint` has the tape's channel layout.
    pub fn backprop_scalar(
        &self,
        params: &FfnParams,
        head: usize,
        coords: &[f64],
        order: DerivOrder,
        adjoint: &[f64],
    ) -> Result<Vec<f64>> {
        let tape = self.tape(params, head, coords, order)?;
        let mut grad = vec![0.0; self.dim_theta()];
        tape.backprop(self, params, adjoint, &mut grad)?;
        Ok(grad)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let a: FfnArch = serde_json::from_str(s)?;
        Self::new(a.input_dim, a.heads)
    }
}

#[derive(Clone, Debug)]
struct EmbTape {
    /// `acts[0]` embedding jets, `acts[t+1]` post-activation of layer `t`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations, all channels.
    pre: Vec<Vec<f64>>,
    /// `cos` of value-channel pre-activations, `n_points × h`.
    cos: Vec<Vec<f64>>,
}

/// Forward intermediates of one head over a point list.
#[derive(Clone, Debug)]
pub struct HeadTape {
    head: usize,
    input_dim: usize,
    n_points: usize,
    order: DerivOrder,
    emb: Vec<EmbTape>,
    output: Vec<f64>,
}

impl HeadTape {
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn channels(&self) -> usize {
        self.order.channels(self.input_dim)
    }

    pub fn order(&self) -> DerivOrder {
        self.order
    }

    /// All outputs, `point · channels + channel`.
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn value(&self, q: usize) -> f64 {
        self.output[q * self.channels()]
    }

    /// `∂U/∂x_j` at point `q`.
    pub fn grad(&self, q: usize, j: usize) -> f64 {
        debug_assert!(self.order >= DerivOrder::First);
        self.output[q * self.channels() + 1 + j]
    }

    /// `∂²U/∂x_j²` at point `q`.
    pub fn hess(&self, q: usize, j: usize) -> f64 {
        debug_assert!(self.order == DerivOrder::Second);
        self.output[q * self.channels() + 1 + self.input_dim + j]
    }

    pub fn bundle(&self, q: usize) -> EvalBundle {
        let n = self.input_dim;
        let ch = self.channels();
        let row = &self.output[q * ch..(q + 1) * ch];
        EvalBundle {
            value: row[0],
            grad_x: if ch > 1 { row[1..=n].to_vec() } else { vec![0.0; n] },
            hess_diag: if ch > 1 + n { row[1 + n..].to_vec() } else { vec![0.0; n] },
        }
    }

    /// Adds `∇_θ ⟨adjoint, output⟩` into `grad` (full `θ` length).
    pub fn backprop(&self, arch: &FfnArch, params: &FfnParams, adjoint: &[f64], grad: &mut [f64]) -> Result<()> {
        check_dim(self.output.len(), adjoint.len())?;
        check_dim(arch.dim_theta(), grad.len())?;
        check_dim(arch.dim_theta(), params.len())?;
        let range = arch.head_range(self.head);
        let head = &arch.heads[self.head];
        let theta = &params.theta[range.clone()];
        let grad = &mut grad[range];
        let n = self.input_dim;
        let ch = self.channels();
        let p = self.n_points * ch;
        let hl = head.last_width();
        let t_count = head.hidden.len();

        let bi = head.output_bias_index();
        grad[bi] += (0..self.n_points).map(|q| adjoint[q * ch]).sum::<f64>();
        let ow = head.output_weight_range();
        for (i, e) in self.emb.iter().enumerate() {
            let w = &theta[ow.clone()][i * hl..(i + 1) * hl];
            let last = e.acts.last().expect("hidden layer");
            {
                let gw = &mut grad[ow.start + i * hl..ow.start + (i + 1) * hl];
                gemm(1, p, hl, adjoint, (p, 1), last, (hl, 1), 1.0, gw, (hl, 1));
            }
            let mut h_bar = vec![0.0; p * hl];
            for (r, a) in adjoint.iter().enumerate() {
                if *a != 0.0 {
                    for (hb, wv) in h_bar[r * hl..(r + 1) * hl].iter_mut().zip(w) {
                        *hb = a * wv;
                    }
                }
            }
            for t in (0..t_count).rev() {
                let h = head.hidden[t];
                let w_in = head.layer_in(t);
                let z = &e.pre[t];
                let cos = &e.cos[t];
                let s_act = &e.acts[t + 1];
                let mut z_bar = vec![0.0; p * h];
                for q in 0..self.n_points {
                    let base = q * ch * h;
                    for k in 0..h {
                        let c = cos[q * h + k];
                        let s = s_act[base + k];
                        let mut zb0 = h_bar[base + k] * c;
                        for j in 0..n.min(ch - 1) {
                            let i1 = base + (1 + j) * h + k;
                            let d1 = z[i1];
                            let hb1 = h_bar[i1];
                            zb0 -= hb1 * s * d1;
                            let mut zb1 = hb1 * c;
                            if self.order == DerivOrder::Second {
                                let i2 = base + (1 + n + j) * h + k;
                                let hb2 = h_bar[i2];
                                zb0 -= hb2 * (s * z[i2] + c * d1 * d1);
                                zb1 -= 2.0 * hb2 * s * d1;
                                z_bar[i2] = hb2 * c;
                            }
                            z_bar[i1] = zb1;
                        }
                        z_bar[base + k] = zb0;
                    }
                }
                let wr = head.weight_range(t);
                {
                    let gw = &mut grad[wr.clone()];
                    gemm(h, p, w_in, &z_bar, (1, h), &e.acts[t], (w_in, 1), 1.0, gw, (w_in, 1));
                }
                let br = head.bias_range(t);
                for q in 0..self.n_points {
                    for (g, v) in grad[br.clone()].iter_mut().zip(&z_bar[q * ch * h..q * ch * h + h]) {
                        *g += v;
                    }
                }
                if t > 0 {
                    let mut next = vec![0.0; p * w_in];
                    gemm(p, h, w_in, &z_bar, (h, 1), &theta[wr], (w_in, 1), 0.0, &mut next, (w_in, 1));
                    h_bar = next;
                }
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `C = A·B + beta·C` for `A: m × k`, `B: k × n`, with (row, column)
/// strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rs: usize, cs: usize, r: usize, col: usize| (r - 1) * rs + (col - 1) * cs;
    if k > 0 {
        assert!(last(rsa, csa, m, k) < a.len() && last(rsb, csb, k, n) < b.len());
    }
    assert!(last(rsc, csc, m, n) < c.len());
    // SAFETY: the assertions above bound every strided access.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}
