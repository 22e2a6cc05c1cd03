use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spdebnn_cli::checks::{self, EXPERIMENT_PRESETS};
use spdebnn_cli::config::{ExperimentConfig, Preset, Scale};
use spdebnn_cli::core::gp::{kl_dimension, Kernel, KernelKind};
use spdebnn_cli::error::{CliError, Result, StageExt};
use spdebnn_cli::pipeline::{self, Seeds};
use spdebnn_cli::report;

#[derive(Parser)]
#[command(name = "spdebnn", version, about = "Bayesian neural-network surrogates for stochastic PDEs")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, value_enum)]
    scale: Option<Scale>,
    #[arg(long)]
    seed: Option<u64>,
    /// TOML file layered over its preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory; defaults to `$SPDEBNN_OUTPUT_ROOT/<preset>-<scale>-seed<seed>`.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, env = "SPDEBNN_OUTPUT_ROOT", hide_env_values = true)]
    output_root: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = match (&self.config, self.preset) {
            (Some(path), _) => {
                let mut cfg = ExperimentConfig::load(path)?;
                if self.preset.is_some_and(|p| p != cfg.preset) || self.scale.is_some_and(|s| s != cfg.scale) {
                    // Flags win: rebuild from the flag preset with the file on top.
                    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                    let mut table: toml::Table =
                        toml::from_str(&text).map_err(|e| CliError::Parse { path: path.clone(), reason: e.to_string() })?;
                    if let Some(p) = self.preset {
                        table.insert("preset".into(), p.name().into());
                    }
                    if let Some(s) = self.scale {
                        table.insert("scale".into(), s.name().into());
                    }
                    cfg = ExperimentConfig::from_toml(&table.to_string(), path)?;
                }
                cfg
            }
            (None, Some(p)) => ExperimentConfig::preset(p, self.scale.unwrap_or(Scale::Desk)),
            (None, None) => return Err(CliError::validation("preset", "pass --preset or --config")),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.output {
            cfg.output_dir = Some(o.clone());
        }
        let out = cfg
            .output_dir
            .clone()
            .unwrap_or_else(|| pipeline::default_output_dir(&cfg, self.output_root.clone()));
        Ok((cfg, out))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment end to end.
    Run(ExperimentArgs),
    /// Recompute statistics of finished runs from their chain checkpoints,
    /// or compare several runs.
    Report {
        run_dirs: Vec<PathBuf>,
        /// Where the comparison CSVs go (default: the first run directory).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Re-estimate each run from its chain checkpoint first.
        #[arg(long)]
        reestimate: bool,
    },
    /// Karhunen–Loève dimensions of 1-d kernels.
    KlDim {
        #[arg(long, value_delimiter = ',', default_value = "1.0,0.3,0.2,0.1,0.03")]
        lengths: Vec<f64>,
        #[arg(long, default_value_t = 2048)]
        grid: usize,
        #[arg(long, default_value_t = 0.99)]
        energy: f64,
        #[arg(long, value_enum, default_value = "matern-standard")]
        kernel: KernelArg,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
    },
    /// Compute only the reference statistics of an experiment.
    Reference(ExperimentArgs),
    /// Finite-difference gradient and leapfrog reversibility checks.
    Check {
        /// Random parameter points per preset.
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum KernelArg {
    Se,
    MaternStandard,
    MaternPaper,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => {
            let (cfg, out) = args.resolve()?;
            cfg.validate()?;
            eprintln!("run {} ({}) into {}", cfg.preset.name(), cfg.scale.name(), out.display());
            let summary = pipeline::run_with(&cfg, &out, &mut |stage, secs| eprintln!("  {stage:<10} {secs:8.2} s"))?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            Ok(())
        }
        Command::Report {
            run_dirs,
            output,
            reestimate,
        } => {
            if reestimate {
                for d in &run_dirs {
                    pipeline::reestimate(d)?;
                }
            }
            let out = output
                .or_else(|| run_dirs.first().cloned())
                .ok_or_else(|| CliError::validation("run_dirs", "name at least one run directory"))?;
            let r = report::report(&run_dirs, &out)?;
            print!("{}", r.cost_table());
            for t in &r.errors {
                println!(
                    "{}: final mean error {:.4}, monotone steps {:.0}%",
                    t.run.display(),
                    t.rows.last().map_or(f64::NAN, |r| r.1),
                    100.0 * t.monotone_fraction
                );
            }
            Ok(())
        }
        Command::KlDim {
            lengths,
            grid,
            energy,
            kernel,
            sigma,
            a,
            b,
        } => {
            let kind = match kernel {
                KernelArg::Se => KernelKind::SquaredExponential,
                KernelArg::MaternStandard => KernelKind::MaternStandard52,
                KernelArg::MaternPaper => KernelKind::MaternPaperForm,
            };
            println!("length,dimension");
            for l in lengths {
                let k = Kernel::new(kind, sigma, l).map_err(|e| CliError::validation("lengths", e.to_string()))?;
                let d = kl_dimension(&k, (a, b), grid, energy).map_err(|e| CliError::validation("kl-dim", e.to_string()))?;
                println!("{l},{d}");
            }
            Ok(())
        }
        Command::Reference(args) => {
            let (cfg, out) = args.resolve()?;
            cfg.validate()?;
            std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
            let stats = pipeline::reference_stats(&cfg, &Seeds::new(cfg.seed))?;
            stats
                .write_csv(&out.join(pipeline::REFERENCE_FILE))
                .stage(spdebnn_cli::Stage::Write)?;
            let path = out.join(pipeline::CONFIG_FILE);
            std::fs::write(&path, cfg.to_toml()).map_err(|e| CliError::io(&path, e))?;
            println!("wrote {}", out.join(pipeline::REFERENCE_FILE).display());
            Ok(())
        }
        Command::Check { points, seed } => {
            let mut failed = Vec::new();
            for p in EXPERIMENT_PRESETS {
                let g = checks::gradient_check(p, points, seed)?;
                let verdict = if g.pass { "PASS" } else { "FAIL" };
                println!(
                    "{verdict} gradient {:<18} d={:<5} max rel error {:.2e}",
                    g.preset, g.dim, g.max_rel_error
                );
                if !g.pass {
                    failed.push(format!("gradient {}", g.preset));
                }
            }
            for p in [Preset::Process31, Preset::Poisson32, Preset::Elliptic34] {
                let r = checks::reversibility_check(p, seed)?;
                let verdict = if r.pass { "PASS" } else { "FAIL" };
                println!(
                    "{verdict} leapfrog {:<18} d={:<5} error {:.2e} (moved {:.2e})",
                    r.preset, r.dim, r.max_error, r.displacement
                );
                if !r.pass {
                    failed.push(format!("leapfrog {}", r.preset));
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::CheckFailed(format!("failed: {}", failed.join(", "))))
            }
        }
    }
}
