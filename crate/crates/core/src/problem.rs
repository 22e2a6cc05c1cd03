//! Stochastic boundary-value problems, sensor layouts, and snapshot
//! datasets.
//!
//! A snapshot is one joint observation of the random fields on all sensors
//! for a single random event. Forward datasets hold `[f, g, k]` rows,
//! inverse datasets `[f, g, u]` rows.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gp::{GpSampler, GpSpec};
use crate::numerics::{Matrix, PointSet, Rng};

/// Interior differential operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorId {
    /// `u = f`; consumes the value of `U` only.
    Identity,
    /// `-u'' = f`; consumes `U''`.
    #[serde(rename = "neg_laplace_1d")]
    NegLaplace1D,
    /// `-Δu + c u(u² - 1) = f`; consumes `U`, `∂²U/∂x₁²`, `∂²U/∂x₂²`. The
    /// coefficient `c` is `cubic`, or the value of `K` when a parameter
    /// field is supplied.
    #[serde(rename = "allen_cahn_2d")]
    AllenCahn2D { cubic: f64 },
    /// `-(k u')' = f`, expanded as `-(k'u' + k u'')`; consumes `U'`, `U''`,
    /// `K` and `K'`.
    #[serde(rename = "div_form_1d")]
    DivForm1D,
}

impl OperatorId {
    pub fn name(&self) -> &'static str {
        match self {
            OperatorId::Identity => "identity",
            OperatorId::NegLaplace1D => "neg_laplace_1d",
            OperatorId::AllenCahn2D { .. } => "allen_cahn_2d",
            OperatorId::DivForm1D => "div_form_1d",
        }
    }

    /// Spatial dimension the operator is defined in; `None` for any.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            OperatorId::Identity => None,
            OperatorId::NegLaplace1D | OperatorId::DivForm1D => Some(1),
            OperatorId::AllenCahn2D { .. } => Some(2),
        }
    }

    /// Highest derivative order of `U` consumed.
    pub fn u_order(&self) -> usize {
        match self {
            OperatorId::Identity => 0,
            _ => 2,
        }
    }

    /// Highest derivative order of `K` consumed, `None` when `K` is unused.
    pub fn k_order(&self) -> Option<usize> {
        match self {
            OperatorId::DivForm1D => Some(1),
            _ => None,
        }
    }

    pub fn requires_k(&self) -> bool {
        self.k_order().is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Interval { a: f64, b: f64 },
    Square { a: f64, b: f64 },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Square { .. } => 2,
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Domain::Interval { a, b } | Domain::Square { a, b } => (a, b),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let (a, b) = self.bounds();
        let eps = 1e-12 * (b - a);
        x.len() == self.dim() && x.iter().all(|&v| v >= a - eps && v <= b + eps)
    }

    pub fn on_boundary(&self, x: &[f64]) -> bool {
        let (a, b) = self.bounds();
        let eps = 1e-12 * (b - a);
        self.contains(x) && x.iter().any(|&v| (v - a).abs() <= eps || (v - b).abs() <= eps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Forward,
    Inverse,
}

/// Sensor locations for each observed block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorLayout {
    pub f: PointSet,
    pub g: PointSet,
    /// Parameter-field sensors (forward mode only).
    pub k: PointSet,
    /// Solution sensors (inverse mode only).
    pub u: PointSet,
}

impl SensorLayout {
    pub fn new(f: PointSet, g: PointSet, k: PointSet, u: PointSet) -> Self {
        Self { f, g, k, u }
    }

    pub fn blocks(&self) -> BlockSizes {
        BlockSizes {
            f: self.f.len(),
            g: self.g.len(),
            k: self.k.len(),
            u: self.u.len(),
        }
    }
}

/// Lengths of the four row blocks `[f, g, k, u]`; one of `k`, `u` is zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSizes {
    pub f: usize,
    pub g: usize,
    pub k: usize,
    pub u: usize,
}

impl BlockSizes {
    pub fn total(&self) -> usize {
        self.f + self.g + self.k + self.u
    }

    /// Offsets of the f, g, k and u blocks in a row.
    pub fn offsets(&self) -> [usize; 4] {
        [0, self.f, self.f + self.g, self.f + self.g + self.k]
    }
}

/// A stochastic boundary-value problem with Dirichlet data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub operator: OperatorId,
    pub mode: Mode,
    pub domain: Domain,
    pub f_spec: GpSpec,
    pub k_spec: Option<GpSpec>,
    /// Exact Dirichlet trace of `u` on the boundary.
    pub boundary_value: f64,
    /// Measurement-noise STD added to the g and u blocks.
    pub noise_std: f64,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(d) = self.operator.input_dim() {
            if d != self.domain.dim() {
                return Err(Error::invalid(
                    "problem",
                    format!("{} needs a {d}-d domain", self.operator.name()),
                ));
            }
        }
        if self.operator.requires_k() && self.k_spec.is_none() {
            return Err(Error::invalid(
                "problem",
                format!("{} needs a parameter field k_spec", self.operator.name()),
            ));
        }
        if self.mode == Mode::Inverse && self.k_spec.is_none() {
            return Err(Error::invalid("problem", "inverse mode needs k_spec"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::invalid("noise_std", "must be non-negative"));
        }
        Ok(())
    }

    /// Whether the surrogate carries a parameter-field head.
    pub fn has_k_head(&self) -> bool {
        self.operator.requires_k()
            || (self.mode == Mode::Inverse && matches!(self.operator, OperatorId::AllenCahn2D { .. }))
    }

    /// Checks sensor sets against the domain and mode.
    pub fn check_layout(&self, layout: &SensorLayout) -> Result<()> {
        let dim = self.domain.dim();
        for (name, set) in [("f", &layout.f), ("g", &layout.g), ("k", &layout.k), ("u", &layout.u)] {
            if !set.is_empty() && set.dim() != dim {
                return Err(Error::invalid("sensor layout", format!("{name} sensors are not {dim}-d")));
            }
            if let Some(p) = set.iter().find(|p| !self.domain.contains(p)) {
                return Err(Error::invalid("sensor layout", format!("{name} sensor {p:?} outside domain")));
            }
        }
        if let Some(p) = layout.g.iter().find(|p| !self.domain.on_boundary(p)) {
            return Err(Error::invalid("sensor layout", format!("g sensor {p:?} not on the boundary")));
        }
        if layout.f.is_empty() {
            return Err(Error::invalid("sensor layout", "no f sensors"));
        }
        match self.mode {
            Mode::Forward if !layout.u.is_empty() => {
                Err(Error::invalid("sensor layout", "u sensors are inverse-only"))
            }
            Mode::Forward if !layout.k.is_empty() && !self.has_k_head() => Err(Error::invalid(
                "sensor layout",
                "k sensors given but the operator has no parameter field",
            )),
            Mode::Inverse if !layout.k.is_empty() => {
                Err(Error::invalid("sensor layout", "k sensors are forward-only"))
            }
            Mode::Inverse if layout.u.is_empty() => Err(Error::invalid("sensor layout", "no u sensors")),
            _ => Ok(()),
        }
    }
}

/// Per-block measurement-noise STD.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockNoise {
    pub f: f64,
    pub g: f64,
    pub k: f64,
    pub u: f64,
}

/// Snapshot rows plus the layout that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotDataset {
    pub mode: Mode,
    pub layout: SensorLayout,
    pub rows: Matrix,
    pub noise_std: BlockNoise,
    pub seed: u64,
}

impl SnapshotDataset {
    pub fn blocks(&self) -> BlockSizes {
        self.layout.blocks()
    }

    pub fn n_snapshots(&self) -> usize {
        self.rows.rows()
    }

    pub fn row_len(&self) -> usize {
        self.rows.cols()
    }
}

/// Deterministic solver used to synthesize inverse-problem data.
pub trait FieldSolver {
    /// Grid on which `k` and `f` are sampled and `u` is returned.
    fn grid(&self) -> &PointSet;

    fn solve(&self, k: Option<&[f64]>, f: &[f64]) -> Result<Vec<f64>>;

    /// Interpolates grid values at an arbitrary point of the domain.
    fn interpolate(&self, values: &[f64], x: &[f64]) -> f64;
}

/// Draws `n_snapshots` forward-problem rows `[f, g, k]`.
pub fn synthesize_forward(
    spec: &ProblemSpec,
    layout: &SensorLayout,
    n_snapshots: usize,
    rng: &mut Rng,
) -> Result<SnapshotDataset> {
    spec.validate()?;
    spec.check_layout(layout)?;
    if spec.mode != Mode::Forward {
        return Err(Error::invalid("problem", "synthesize_forward needs a forward problem"));
    }
    if n_snapshots == 0 {
        return Err(Error::EmptyData);
    }
    let seed = rng.seed();
    let blocks = layout.blocks();
    let mut rows = Matrix::zeros(n_snapshots, blocks.total());
    let [_, og, ok, _] = blocks.offsets();

    let f = GpSampler::new(&spec.f_spec, &layout.f)?.draw_many(&mut rng.split("f"), n_snapshots);
    let k = if blocks.k > 0 {
        let k_spec = spec.k_spec.as_ref().expect("checked by has_k_head");
        Some(GpSampler::new(k_spec, &layout.k)?.draw_many(&mut rng.split("k"), n_snapshots))
    } else {
        None
    };
    let noise = rng.split("noise");
    for j in 0..n_snapshots {
        let mut nrng = noise.split_index("g", j as u64);
        let row = rows.row_mut(j);
        row[..blocks.f].copy_from_slice(f.row(j));
        for v in &mut row[og..ok] {
            *v = spec.boundary_value + spec.noise_std * nrng.standard_normal();
        }
        if let Some(k) = &k {
            row[ok..ok + blocks.k].copy_from_slice(k.row(j));
        }
    }
    Ok(SnapshotDataset {
        mode: Mode::Forward,
        layout: layout.clone(),
        rows,
        noise_std: BlockNoise {
            g: spec.noise_std,
            ..BlockNoise::default()
        },
        seed,
    })
}

/// Draws `n_snapshots` inverse-problem rows `[f, g, u]`, solving the PDE
/// once per snapshot on the solver grid.
pub fn synthesize_inverse(
    spec: &ProblemSpec,
    layout: &SensorLayout,
    n_snapshots: usize,
    rng: &mut Rng,
    solver: &dyn FieldSolver,
) -> Result<SnapshotDataset> {
    spec.validate()?;
    spec.check_layout(layout)?;
    if spec.mode != Mode::Inverse {
        return Err(Error::invalid("problem", "synthesize_inverse needs an inverse problem"));
    }
    if n_snapshots == 0 {
        return Err(Error::EmptyData);
    }
    let seed = rng.seed();
    let grid = solver.grid();
    let f_sampler = GpSampler::new(&spec.f_spec, grid)?;
    let k_sampler = GpSampler::new(spec.k_spec.as_ref().expect("validated"), grid)?;
    let blocks = layout.blocks();
    let [_, og, _, ou] = blocks.offsets();
    let base = rng.split("snapshot");
    let mut rows = Matrix::zeros(n_snapshots, blocks.total());
    for j in 0..n_snapshots {
        let mut r = base.split_index("row", j as u64);
        let k = k_sampler.draw(&mut r);
        let f = f_sampler.draw(&mut r);
        let u = solver.solve(Some(&k), &f).map_err(|e| Error::SolverFailed {
            sample: j,
            source: Box::new(e),
        })?;
        let row = rows.row_mut(j);
        for (i, x) in layout.f.iter().enumerate() {
            row[i] = solver.interpolate(&f, x);
        }
        for (i, x) in layout.g.iter().enumerate() {
            row[og + i] = solver.interpolate(&u, x) + spec.noise_std * r.standard_normal();
        }
        for (i, x) in layout.u.iter().enumerate() {
            row[ou + i] = solver.interpolate(&u, x) + spec.noise_std * r.standard_normal();
        }
    }
    Ok(SnapshotDataset {
        mode: Mode::Inverse,
        layout: layout.clone(),
        rows,
        noise_std: BlockNoise {
            g: spec.noise_std,
            u: spec.noise_std,
            ..BlockNoise::default()
        },
        seed,
    })
}

const DATASET_MAGIC: &str = "# spdebnn-dataset 1";

fn join(values: impl IntoIterator<Item = f64>) -> String {
    let mut s = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{v:?}").expect("write to string");
    }
    s
}

fn parse_list(what: &str, s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::format(what, format!("{t:?}: {e}")))
        })
        .collect()
}

impl SnapshotDataset {
    /// Writes the dataset in its text format: a `#`-prefixed header, then
    /// one comma-separated row per snapshot. Header lines, in order:
    ///
    /// ```text
    /// # spdebnn-dataset 1
    /// # mode <forward|inverse>
    /// # input_dim <n>
    /// # blocks <N_f>,<N_g>,<N_k>,<N_u>
    /// # noise_std <f>,<g>,<k>,<u>
    /// # seed <u64>
    /// # sensors.f <flattened coordinates>
    /// # sensors.g <…>
    /// # sensors.k <…>
    /// # sensors.u <…>
    /// ```
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let b = self.blocks();
        let mode = match self.mode {
            Mode::Forward => "forward",
            Mode::Inverse => "inverse",
        };
        let n = &self.noise_std;
        writeln!(w, "{DATASET_MAGIC}")?;
        writeln!(w, "# mode {mode}")?;
        writeln!(w, "# input_dim {}", self.layout.f.dim())?;
        writeln!(w, "# blocks {},{},{},{}", b.f, b.g, b.k, b.u)?;
        writeln!(w, "# noise_std {}", join([n.f, n.g, n.k, n.u]))?;
        writeln!(w, "# seed {}", self.seed)?;
        for (name, set) in [
            ("f", &self.layout.f),
            ("g", &self.layout.g),
            ("k", &self.layout.k),
            ("u", &self.layout.u),
        ] {
            writeln!(w, "# sensors.{name} {}", join(set.coords().iter().copied()))?;
        }
        for row in self.rows.iter_rows() {
            writeln!(w, "{}", join(row.iter().copied()))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(f)
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let mut header = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::format("dataset", format!("missing header {key}")))??;
            let rest = line
                .strip_prefix("# ")
                .and_then(|l| l.strip_prefix(key))
                .ok_or_else(|| Error::format("dataset", format!("expected header {key}, got {line:?}")))?;
            Ok(rest.trim().to_string())
        };
        if header("spdebnn-dataset")? != "1" {
            return Err(Error::format("dataset", "unsupported version"));
        }
        let mode = match header("mode")?.as_str() {
            "forward" => Mode::Forward,
            "inverse" => Mode::Inverse,
            m => return Err(Error::format("dataset", format!("unknown mode {m}"))),
        };
        let dim: usize = header("input_dim")?
            .parse()
            .map_err(|e| Error::format("dataset input_dim", format!("{e}")))?;
        let counts = parse_list("dataset blocks", &header("blocks")?)?;
        let noise = parse_list("dataset noise_std", &header("noise_std")?)?;
        if counts.len() != 4 || noise.len() != 4 {
            return Err(Error::format("dataset", "blocks and noise_std need 4 entries"));
        }
        let seed: u64 = header("seed")?
            .parse()
            .map_err(|e| Error::format("dataset seed", format!("{e}")))?;
        let mut sets = Vec::with_capacity(4);
        for (name, &count) in ["f", "g", "k", "u"].iter().zip(&counts) {
            let coords = parse_list("dataset sensors", &header(&format!("sensors.{name}"))?)?;
            let set = PointSet::new(dim, coords)?;
            check_dim(count as usize, set.len())?;
            sets.push(set);
        }
        let u = sets.pop().expect("4 sets");
        let k = sets.pop().expect("4 sets");
        let g = sets.pop().expect("4 sets");
        let f = sets.pop().expect("4 sets");
        let layout = SensorLayout { f, g, k, u };
        let width = layout.blocks().total();
        let mut data = Vec::new();
        let mut n_rows = 0;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = parse_list("dataset row", &line)?;
            check_dim(width, row.len())?;
            data.extend(row);
            n_rows += 1;
        }
        Ok(Self {
            mode,
            layout,
            rows: Matrix::from_vec(n_rows, width, data)?,
            noise_std: BlockNoise {
                f: noise[0],
                g: noise[1],
                k: noise[2],
                u: noise[3],
            },
            seed,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
