//! Experiment configuration. One TOML file holds a section per subcommand;
//! every field has a default so an empty file is a valid config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hmc_core::model::{BuiltinTarget, MassSpec};
use hmc_core::StepRounding;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub target: TargetConfig,
    pub moments: MomentsConfig,
    pub scaling: ScalingConfig,
    pub tune: TuneConfig,
    pub sjd: SjdConfig,
    pub budget: BudgetSection,
    pub baselines: BaselinesConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            out: PathBuf::from("results"),
            threads: None,
            target: TargetConfig::default(),
            moments: MomentsConfig::default(),
            scaling: ScalingConfig::default(),
            tune: TuneConfig::default(),
            sjd: SjdConfig::default(),
            budget: BudgetSection::default(),
            baselines: BaselinesConfig::default(),
        }
    }
}

/// Single-particle target and mass matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    pub name: String,
    pub dim: usize,
    pub params: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass_diagonal: Option<Vec<f64>>,
    /// Row-major `dim × dim` SPD matrix.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass_dense: Option<Vec<f64>>,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            name: "std_gaussian".into(),
            dim: 1,
            params: BTreeMap::new(),
            mass_diagonal: None,
            mass_dense: None,
        }
    }
}

impl TargetConfig {
    pub fn build(&self) -> Result<(BuiltinTarget, MassSpec), CliError> {
        let target = BuiltinTarget::from_name(&self.name, self.dim, &self.params)?;
        let mass = match (&self.mass_diagonal, &self.mass_dense) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give at most one of mass_diagonal and mass_dense".into()));
            }
            (Some(diag), None) => {
                if diag.len() != self.dim {
                    return Err(CliError::Config(format!(
                        "mass_diagonal has {} entries, target dim is {}",
                        diag.len(),
                        self.dim
                    )));
                }
                MassSpec::diagonal(diag.clone())?
            }
            (None, Some(dense)) => MassSpec::dense(self.dim, dense)?,
            (None, None) => MassSpec::identity(self.dim),
        };
        Ok((target, mass))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsConfig {
    pub h_grid: Vec<f64>,
    pub leg_length: f64,
    pub n: usize,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self {
            h_grid: vec![0.4, 0.2, 0.1, 0.05],
            leg_length: 1.0,
            n: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub d_grid: Vec<usize>,
    pub l: f64,
    pub leg_length: f64,
    pub n_transitions: usize,
    pub burn_in: usize,
    pub replicates: usize,
    /// `"ceil"` or `"floor"` for the number of leapfrog steps.
    pub rounding: String,
    /// Draws used to estimate Σ and C_J when no closed form applies.
    pub constants_n: usize,
    /// Also run the one-step KS diagnostic at the largest `d`.
    pub diagnostic: bool,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            d_grid: vec![16, 64, 256, 1024, 4096],
            l: 1.0,
            leg_length: 1.0,
            n_transitions: 20_000,
            burn_in: 10_000,
            replicates: 16,
            rounding: "ceil".into(),
            constants_n: 100_000,
            diagnostic: false,
        }
    }
}

pub fn parse_rounding(s: &str) -> Result<StepRounding, CliError> {
    match s {
        "ceil" => Ok(StepRounding::Ceil),
        "floor" => Ok(StepRounding::Floor),
        other => Err(CliError::Config(format!("rounding must be 'ceil' or 'floor', got '{other}'"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    /// Σ for the `l` column; the standard Gaussian value when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            lo: 0.001,
            hi: 0.999,
            n: 999,
            sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SjdConfig {
    pub d: usize,
    pub l_values: Vec<f64>,
    pub delta: f64,
    pub n_transitions: usize,
    pub c_lf: f64,
    pub c_o: f64,
    pub leg_length: f64,
}

impl Default for SjdConfig {
    fn default() -> Self {
        Self {
            d: 4096,
            l_values: vec![0.5, 1.0, 2.0],
            delta: 1.0,
            n_transitions: 20_000,
            c_lf: hmc_core::tuning::DEFAULT_C_LF,
            c_o: hmc_core::tuning::DEFAULT_C_O,
            leg_length: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    pub d: usize,
    /// Force evaluations per run.
    pub budget: u64,
    pub replicates: usize,
    pub acceptance_grid: Vec<f64>,
    pub leg_length: f64,
}

impl Default for BudgetSection {
    fn default() -> Self {
        let core = hmc_core::budget::BudgetConfig::default();
        Self {
            d: core.d,
            budget: core.budget,
            replicates: core.replicates,
            acceptance_grid: core.acceptance_grid,
            leg_length: core.leg_length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselinesConfig {
    pub d_grid: Vec<usize>,
    pub n_transitions: usize,
    pub rwm_l: f64,
    pub mala_l: f64,
    pub hmc_l: f64,
    /// RWM run with the HMC exponent as a control.
    pub misscaled_l: f64,
    pub misscaled_exponent: f64,
}

impl Default for BaselinesConfig {
    fn default() -> Self {
        Self {
            d_grid: vec![64, 256, 1024, 4096],
            n_transitions: 20_000,
            rwm_l: 5.66,
            mala_l: 1.0,
            hmc_l: 1.0,
            misscaled_l: 0.1,
            misscaled_exponent: 0.25,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("malformed config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config file {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
