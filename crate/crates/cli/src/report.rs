//! Cross-run comparison tables.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};
use crate::pipeline::{RunSummary, RUNNING_ERRORS_FILE};

pub const COST_FILE: &str = "cost_vs_dimension.csv";
pub const ERROR_VS_N_FILE: &str = "error_vs_n.csv";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostRow {
    pub run: PathBuf,
    pub correlation_length: f64,
    pub kl_dimension: Option<usize>,
    pub theta_dim: usize,
    pub wall_time_per_sample: f64,
    /// Wall time per sample divided by that of the first run.
    pub normalized_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorTrace {
    pub run: PathBuf,
    /// `(n, mean error, std error)` rows.
    pub rows: Vec<(usize, f64, f64)>,
    /// Fraction of consecutive steps whose mean error did not increase.
    pub monotone_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub cost: Vec<CostRow>,
    pub errors: Vec<ErrorTrace>,
}

impl Report {
    /// Plain-text cost table.
    pub fn cost_table(&self) -> String {
        let mut s = String::from("run                               length   KL-dim  s/sample    normalized\n");
        for r in &self.cost {
            let kl = r.kl_dimension.map_or("-".to_string(), |d| d.to_string());
            s.push_str(&format!(
                "{:<33} {:>7.3} {:>7} {:>10.3e} {:>10.3}\n",
                r.run.display(),
                r.correlation_length,
                kl,
                r.wall_time_per_sample,
                r.normalized_cost
            ));
        }
        s
    }
}

/// Builds the cost-vs-dimension table and error-vs-N traces from finished
/// run directories and writes both as CSV into `out_dir`.
pub fn report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<Report> {
    if run_dirs.is_empty() {
        return Err(CliError::validation("run_dirs", "name at least one run directory"));
    }
    let summaries = run_dirs
        .iter()
        .map(|d| RunSummary::load(d))
        .collect::<Result<Vec<_>>>()?;
    let base = summaries[0].timing.wall_time_per_sample;
    let cost = run_dirs
        .iter()
        .zip(&summaries)
        .map(|(d, s)| CostRow {
            run: d.clone(),
            correlation_length: s.correlation_length,
            kl_dimension: s.kl_dimension,
            theta_dim: s.dims.theta,
            wall_time_per_sample: s.timing.wall_time_per_sample,
            normalized_cost: s.timing.wall_time_per_sample / base,
        })
        .collect::<Vec<_>>();
    let errors = run_dirs
        .iter()
        .map(|d| read_trace(d))
        .collect::<Result<Vec<_>>>()?;

    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let path = out_dir.join(COST_FILE);
    let write_cost = || -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(w, "run,correlation_length,kl_dimension,theta_dim,wall_time_per_sample,normalized_cost")?;
        for r in &cost {
            let kl = r.kl_dimension.map_or(String::new(), |d| d.to_string());
            writeln!(
                w,
                "{},{:?},{kl},{},{:?},{:?}",
                r.run.display(),
                r.correlation_length,
                r.theta_dim,
                r.wall_time_per_sample,
                r.normalized_cost
            )?;
        }
        w.flush()
    };
    write_cost().map_err(|e| CliError::io(&path, e))?;
    let path = out_dir.join(ERROR_VS_N_FILE);
    let write_errors = || -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(w, "run,n,mean_error,std_error")?;
        for t in &errors {
            for (n, m, s) in &t.rows {
                writeln!(w, "{},{n},{m:?},{s:?}", t.run.display())?;
            }
        }
        w.flush()
    };
    write_errors().map_err(|e| CliError::io(&path, e))?;
    Ok(Report { cost, errors })
}

fn read_trace(dir: &Path) -> Result<ErrorTrace> {
    let path = dir.join(RUNNING_ERRORS_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingArtifacts(path.clone()),
        _ => CliError::io(&path, e),
    })?;
    let bad = |line: &str| CliError::Parse {
        path: path.clone(),
        reason: format!("bad row {line:?}"),
    };
    let mut rows = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(bad(line));
        }
        rows.push((
            f[0].parse().map_err(|_| bad(line))?,
            f[1].parse().map_err(|_| bad(line))?,
            f[2].parse().map_err(|_| bad(line))?,
        ));
    }
    let steps = rows.len().saturating_sub(1);
    let down = rows.windows(2).filter(|w| w[1].1 <= w[0].1).count();
    Ok(ErrorTrace {
        run: dir.to_path_buf(),
        monotone_fraction: if steps == 0 { 1.0 } else { down as f64 / steps as f64 },
        rows,
    })
}
