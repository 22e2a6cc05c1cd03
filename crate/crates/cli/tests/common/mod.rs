use spdebnn_cli::config::{ExperimentConfig, Preset, Scale};

/// A `custom` run small enough to finish in a few seconds.
pub const TINY: &str = r#"
preset = "custom"
seed = 3

[data]
n_snapshots = 200

[gmm]
max_iter = 20

[network]
heads = [{ features = 4, scales = [1.0, 3.0], hidden = [8] }]

[map]
iterations = 100

[hmc]
burn_in = 5
n_samples = 20
leapfrog_steps = 5
step_size = 1e-4

[reference]
n_mc = 200

[eval]
kl_grid = 0
"#;

#[allow(dead_code)]
pub fn tiny() -> ExperimentConfig {
    ExperimentConfig::from_toml(TINY, "tiny.toml".as_ref()).expect("tiny config parses")
}

#[allow(dead_code)]
pub fn desk(preset: Preset) -> ExperimentConfig {
    ExperimentConfig::preset(preset, Scale::Desk)
}
