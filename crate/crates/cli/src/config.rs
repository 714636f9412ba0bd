use std::fs;
use std::path::Path;

use hte_core::bench::{EstimatorSpec, Tuning};
use hte_core::synth::{benchmark_scenario, ScenarioConfig};
use hte_core::{HteError, RngSeed};
use serde::Deserialize;

use crate::CliError;

/// Experiment file: either a bare scenario, or a scenario with tuning and
/// harness defaults that command-line flags override.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub tuning: Option<Tuning>,
    #[serde(default)]
    pub estimators: Option<String>,
    #[serde(default)]
    pub replications: Option<usize>,
}

pub fn load(path: &Path) -> Result<ExperimentFile, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let parsed = if value.get("scenario").is_some() {
        serde_json::from_value::<ExperimentFile>(value)
    } else {
        serde_json::from_value::<ScenarioConfig>(value).map(|scenario| ExperimentFile {
            scenario,
            tuning: None,
            estimators: None,
            replications: None,
        })
    };
    parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Flags shared by every command that builds an experiment.
#[derive(Debug, Clone, clap::Args)]
pub struct ExperimentArgs {
    /// Scenario or experiment JSON file; the built-in benchmark scenario
    /// is used when absent.
    #[arg(long)]
    pub scenario: Option<std::path::PathBuf>,
    /// Root seed, overriding the file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Control sample size of the built-in scenario.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Dimension of the built-in scenario.
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Density-ratio bound of the built-in scenario.
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Debug, Clone, clap::Args)]
pub struct TuningArgs {
    #[arg(long)]
    pub beta_mu: Option<f64>,
    #[arg(long)]
    pub beta_tau: Option<f64>,
    /// Multiplier on every automatic bandwidth.
    #[arg(long)]
    pub bandwidth_const: Option<f64>,
    /// Multiplier on the automatic stage-one neighbor count.
    #[arg(long)]
    pub m1_const: Option<f64>,
    /// Multiplier on the automatic kept-pair count.
    #[arg(long)]
    pub m2_const: Option<f64>,
    /// Multiplier on the automatic nearest-neighbor count.
    #[arg(long)]
    pub k_const: Option<f64>,
}

impl TuningArgs {
    pub fn apply(&self, base: Tuning) -> Result<Tuning, CliError> {
        let t = Tuning {
            beta_mu: self.beta_mu.unwrap_or(base.beta_mu),
            beta_tau: self.beta_tau.unwrap_or(base.beta_tau),
            bandwidth_const: self.bandwidth_const.unwrap_or(base.bandwidth_const),
            m1_const: self.m1_const.unwrap_or(base.m1_const),
            m2_const: self.m2_const.unwrap_or(base.m2_const),
            k_const: self.k_const.unwrap_or(base.k_const),
        };
        let positive = [
            ("beta-mu", t.beta_mu),
            ("beta-tau", t.beta_tau),
            ("bandwidth-const", t.bandwidth_const),
            ("m1-const", t.m1_const),
            ("m2-const", t.m2_const),
            ("k-const", t.k_const),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!(
                    "--{name} must be positive, got {v}"
                )));
            }
        }
        if t.beta_mu > t.beta_tau {
            return Err(CliError::Config(
                "--beta-mu must not exceed --beta-tau".into(),
            ));
        }
        Ok(t)
    }
}

/// A validated experiment after file loading and flag overrides.
pub struct Experiment {
    pub scenario: ScenarioConfig,
    pub tuning: Tuning,
    pub estimators: Option<String>,
    pub replications: Option<usize>,
}

impl ExperimentArgs {
    pub fn build(&self) -> Result<Experiment, CliError> {
        let file = match &self.scenario {
            Some(path) => load(path)?,
            None => ExperimentFile {
                scenario: benchmark_scenario(self.n, self.d, self.kappa, RngSeed(0)),
                tuning: None,
                estimators: None,
                replications: None,
            },
        };
        let mut scenario = file.scenario;
        if let Some(seed) = self.seed {
            scenario.seed = RngSeed(seed);
        }
        scenario.validate().map_err(config_error)?;
        Ok(Experiment {
            scenario,
            tuning: self.tuning.apply(file.tuning.unwrap_or_default())?,
            estimators: file.estimators,
            replications: file.replications,
        })
    }
}

pub fn config_error(e: HteError) -> CliError {
    CliError::Config(e.to_string())
}

pub fn estimator_list(
    flag: Option<&str>,
    file: Option<&str>,
    default: &str,
) -> Result<Vec<EstimatorSpec>, CliError> {
    EstimatorSpec::parse_list(flag.or(file).unwrap_or(default)).map_err(config_error)
}
