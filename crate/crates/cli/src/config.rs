use std::path::{Path, PathBuf};

use bcrt::excursion::DEFAULT_RESOLUTION;
use bcrt::fixed_point::BaseLawSpec;
use bcrt::suites::{
    ConvergeConfig, CouplingConfig, DensityConfig, DepthConfig, NuConfig, OneStepConfig, ReconstructionConfig,
    SmoothingConfig, TwoPointConfig,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Default root seed when neither the config nor `--seed` gives one.
pub const DEFAULT_SEED: u64 = 1;

/// Experiment parameters. Every section falls back to its defaults, so an
/// empty object is a valid config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub two_point: TwoPointConfig,
    pub one_step: OneStepConfig,
    pub density: DensityConfig,
    pub nu: NuConfig,
    pub depth: DepthConfig,
    pub smoothing: SmoothingConfig,
    pub converge: ConvergeConfig,
    pub coupling: CouplingConfig,
    pub reconstruction: ReconstructionConfig,
    pub excursion_sample: ExcursionSampleConfig,
    pub reduced_sample: ReducedSampleConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExcursionFormat {
    Csv,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcursionSampleConfig {
    pub count: usize,
    pub resolution: usize,
    pub format: ExcursionFormat,
}

impl Default for ExcursionSampleConfig {
    fn default() -> Self {
        ExcursionSampleConfig { count: 1, resolution: DEFAULT_RESOLUTION, format: ExcursionFormat::Csv }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReducedSampleConfig {
    pub base: BaseLawSpec,
    /// Gluing levels applied to the base before sampling.
    pub depth: usize,
    pub m: usize,
    pub count: usize,
}

impl Default for ReducedSampleConfig {
    fn default() -> Self {
        ReducedSampleConfig { base: BaseLawSpec::BcrtExactReduced, depth: 0, m: 4, count: 1000 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        // relative file references are relative to the config file
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |spec: &mut BaseLawSpec| {
            if let BaseLawSpec::FiniteTree { file: Some(f), .. } = spec {
                if f.is_relative() {
                    *f = dir.join(&*f);
                }
            }
        };
        fix(&mut self.one_step.base);
        fix(&mut self.converge.base);
        fix(&mut self.coupling.base);
        fix(&mut self.coupling.tilde);
        fix(&mut self.reduced_sample.base);
    }
}
