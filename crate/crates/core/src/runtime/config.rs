//! Scenario configuration: TOML-loaded, schema-validated.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::governor::ConstraintSet;
use crate::operator::{PlannerConfig, RewardWeights};
use crate::pump::DegradationParams;
use crate::state::VarId;

use super::RuntimeError;

/// The four timescales: base step k, assimilation (beta), setpoint (gamma),
/// planning (delta), all as step counts with optional phase offsets.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimescaleConfig {
    /// Base step [s].
    pub dt: f64,
    pub beta_steps: usize,
    /// Phase offset of measurements inside the beta interval (e.g. minute 30
    /// of each hour).
    pub beta_offset_steps: usize,
    pub gamma_steps: usize,
    pub delta_steps: usize,
}

impl Default for TimescaleConfig {
    fn default() -> Self {
        TimescaleConfig {
            dt: 5.0,
            beta_steps: 720,
            beta_offset_steps: 360,
            gamma_steps: 720,
            delta_steps: 720 * 720,
        }
    }
}

impl TimescaleConfig {
    pub fn validate(&self) -> Result<(), RuntimeError> {
        if self.dt.is_nan() || self.dt <= 0.0 {
            return Err(RuntimeError::Config("dt must be positive".into()));
        }
        if self.beta_steps == 0
            || self.beta_steps > self.gamma_steps
            || self.gamma_steps > self.delta_steps
        {
            return Err(RuntimeError::Config(
                "timescales must satisfy 1 <= beta <= gamma <= delta".into(),
            ));
        }
        if self.beta_offset_steps >= self.beta_steps {
            return Err(RuntimeError::Config(
                "beta offset must be smaller than the beta interval".into(),
            ));
        }
        Ok(())
    }

    pub fn steps_per_hour(&self) -> usize {
        (3600.0 / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum DemandConfig {
    /// Seeded hourly random-walk load-follow profile.
    Synthetic { lo_frac: f64, hi_frac: f64 },
    /// Explicit hourly power fractions, cycled over the run.
    Hourly { fracs: Vec<f64> },
}

impl Default for DemandConfig {
    fn default() -> Self {
        DemandConfig::Synthetic {
            lo_frac: 0.55,
            hi_frac: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PumpScenarioConfig {
    /// Initial loss coefficients.
    pub k0_primary: f64,
    pub k0_secondary: f64,
    pub primary: DegradationParams,
    pub secondary: DegradationParams,
}

impl Default for PumpScenarioConfig {
    fn default() -> Self {
        PumpScenarioConfig {
            k0_primary: 1.0,
            k0_secondary: 1.0,
            primary: DegradationParams::primary_demo(),
            secondary: DegradationParams::secondary_demo(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[derive(Default)]
pub enum SurrogateVariant {
    #[default]
    Original,
    Shock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateScenarioConfig {
    pub variant: SurrogateVariant,
    /// Training horizon of the self-prepared fit [hours].
    pub train_hours: usize,
    /// Load a checkpoint instead of fitting.
    pub checkpoint: Option<PathBuf>,
}

impl Default for SurrogateScenarioConfig {
    fn default() -> Self {
        SurrogateScenarioConfig {
            variant: SurrogateVariant::Original,
            train_hours: 36,
            checkpoint: None,
        }
    }
}


#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnkfScenarioConfig {
    pub n_members: usize,
    pub c0_state: f64,
    pub c0_theta: f64,
    pub sigma: f64,
    pub sigma_theta: f64,
    /// Measurement covariance diagonal, one entry per observed variable.
    pub gamma_diag: Vec<f64>,
    /// Observed variable ids.
    pub observed: Vec<String>,
    pub parallel: bool,
}

impl Default for EnkfScenarioConfig {
    fn default() -> Self {
        EnkfScenarioConfig {
            n_members: 20,
            c0_state: 1e-8,
            c0_theta: 1e-16,
            sigma: 1e-15,
            sigma_theta: 1e-30,
            gamma_diag: vec![1e-30],
            observed: vec!["q_dot_rx".into()],
            // Member propagation at n_m ~ 20 is too fine-grained to amortize
            // thread-pool overhead; large ensembles should flip this on.
            parallel: false,
        }
    }
}

impl EnkfScenarioConfig {
    pub fn observed_ids(&self) -> Result<Vec<VarId>, RuntimeError> {
        self.observed
            .iter()
            .map(|n| {
                VarId::from_name(n)
                    .ok_or_else(|| RuntimeError::Config(format!("unknown observed variable {n}")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SobolSelectionConfig {
    /// Base sample count (power of two keeps the sequence balanced).
    pub n: usize,
    pub threshold: f64,
    /// Force the input-matrix coefficients that map the target power into
    /// the core-power prediction (the shock study's forced inclusions).
    pub force_power_input_coefficients: bool,
}

impl Default for SobolSelectionConfig {
    fn default() -> Self {
        SobolSelectionConfig {
            n: 1 << 10,
            threshold: 0.10,
            force_power_input_coefficients: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintScenarioConfig {
    /// Relative buffer applied to every bound during governor prediction.
    pub buffer_fraction: f64,
}

impl Default for ConstraintScenarioConfig {
    fn default() -> Self {
        ConstraintScenarioConfig {
            buffer_fraction: 0.01,
        }
    }
}

impl ConstraintScenarioConfig {
    pub fn constraint_set(&self) -> ConstraintSet {
        ConstraintSet::defaults().with_relative_buffers(self.buffer_fraction)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct OperatorScenarioConfig {
    pub weights: RewardWeights,
    pub planner: PlannerConfig,
}


#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockEvent {
    pub at_hours: f64,
    pub delta_t_kelvin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlarmPolicy {
    Halt,
    LogAndContinue,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Log every n-th step in the state series.
    pub decimation_steps: usize,
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            decimation_steps: 1,
            formats: vec!["csv".into(), "json".into(), "svg".into()],
        }
    }
}

/// Full scenario description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration_hours: f64,
    pub seed: u64,
    /// Starting power fraction.
    pub start_frac: f64,
    pub alarm_policy: AlarmPolicy,
    pub timescales: TimescaleConfig,
    pub demand: DemandConfig,
    pub pumps: PumpScenarioConfig,
    pub surrogate: SurrogateScenarioConfig,
    pub enkf: EnkfScenarioConfig,
    pub sobol_selection: SobolSelectionConfig,
    pub constraints: ConstraintScenarioConfig,
    pub operator: OperatorScenarioConfig,
    pub shocks: Vec<ShockEvent>,
    pub output: OutputConfig,
    /// Optional plant constants file (TOML).
    pub constants_file: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "scenario".into(),
            duration_hours: 24.0,
            seed: 42,
            start_frac: 1.0,
            alarm_policy: AlarmPolicy::LogAndContinue,
            timescales: TimescaleConfig::default(),
            demand: DemandConfig::default(),
            pumps: PumpScenarioConfig::default(),
            surrogate: SurrogateScenarioConfig::default(),
            enkf: EnkfScenarioConfig::default(),
            sobol_selection: SobolSelectionConfig::default(),
            constraints: ConstraintScenarioConfig::default(),
            operator: OperatorScenarioConfig::default(),
            shocks: Vec::new(),
            output: OutputConfig::default(),
            constants_file: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self, RuntimeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RuntimeError::Config(format!("{}: {e}", path.display())))?;
        let cfg: ScenarioConfig =
            toml::from_str(&text).map_err(|e| RuntimeError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("serializable config")
    }

    pub fn duration_steps(&self) -> usize {
        (self.duration_hours * 3600.0 / self.timescales.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        self.timescales.validate()?;
        if self.duration_hours.is_nan() || self.duration_hours <= 0.0 {
            return Err(RuntimeError::Config("duration must be positive".into()));
        }
        if !(0.5..=1.0).contains(&self.start_frac) {
            return Err(RuntimeError::Config(
                "start power fraction must lie in the governed band".into(),
            ));
        }
        let observed = self.enkf.observed_ids()?;
        if observed.is_empty() {
            return Err(RuntimeError::Config("no observed variables".into()));
        }
        if self.enkf.gamma_diag.len() != observed.len() {
            return Err(RuntimeError::Config(format!(
                "gamma_diag has {} entries for {} observed variables",
                self.enkf.gamma_diag.len(),
                observed.len()
            )));
        }
        if self.enkf.n_members < 2 {
            return Err(RuntimeError::Config("need at least 2 ensemble members".into()));
        }
        self.pumps
            .primary
            .validate()
            .map_err(|e| RuntimeError::Config(e.to_string()))?;
        self.pumps
            .secondary
            .validate()
            .map_err(|e| RuntimeError::Config(e.to_string()))?;
        if let DemandConfig::Hourly { fracs } = &self.demand {
            if fracs.is_empty() {
                return Err(RuntimeError::Config("empty hourly demand".into()));
            }
        }
        if let Some(ck) = &self.surrogate.checkpoint {
            if !ck.exists() {
                return Err(RuntimeError::Config(format!(
                    "checkpoint {} does not exist",
                    ck.display()
                )));
            }
        }
        if let Some(cf) = &self.constants_file {
            if !cf.exists() {
                return Err(RuntimeError::Config(format!(
                    "constants file {} does not exist",
                    cf.display()
                )));
            }
        }
        if self.output.decimation_steps == 0 {
            return Err(RuntimeError::Config("decimation must be >= 1".into()));
        }
        for s in &self.shocks {
            if s.at_hours < 0.0 || s.at_hours * 3600.0 > self.duration_hours * 3600.0 {
                return Err(RuntimeError::Config("shock outside the run".into()));
            }
        }
        Ok(())
    }

    /// Hourly demand fractions covering the whole run.
    pub fn demand_fracs(&self, seed: &crate::seed::SeedTree) -> Vec<f64> {
        let hours = self.duration_hours.ceil() as usize;
        match &self.demand {
            DemandConfig::Synthetic { lo_frac, hi_frac } => {
                super::prep::synth_hourly_targets(&seed.child("demand"), hours, *lo_frac, *hi_frac)
                    .into_iter()
                    .map(|w| w / crate::plant::FULL_POWER)
                    .collect()
            }
            DemandConfig::Hourly { fracs } => {
                (0..hours).map(|h| fracs[h % fracs.len()]).collect()
            }
        }
    }
}

/// Hand-maintained JSON schema description of the scenario format, exported
/// on request so external tooling can validate configs.
pub fn config_schema_json() -> serde_json::Value {
    serde_json::json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "ScenarioConfig",
        "type": "object",
        "properties": {
            "name": {"type": "string"},
            "duration_hours": {"type": "number", "exclusiveMinimum": 0},
            "seed": {"type": "integer", "minimum": 0},
            "start_frac": {"type": "number", "minimum": 0.5, "maximum": 1.0},
            "alarm_policy": {"enum": ["halt", "log-and-continue"]},
            "timescales": {
                "type": "object",
                "properties": {
                    "dt": {"type": "number"},
                    "beta_steps": {"type": "integer", "minimum": 1},
                    "beta_offset_steps": {"type": "integer", "minimum": 0},
                    "gamma_steps": {"type": "integer", "minimum": 1},
                    "delta_steps": {"type": "integer", "minimum": 1}
                }
            },
            "demand": {"type": "object"},
            "pumps": {"type": "object"},
            "surrogate": {"type": "object"},
            "enkf": {"type": "object"},
            "sobol_selection": {"type": "object"},
            "constraints": {"type": "object"},
            "operator": {"type": "object"},
            "shocks": {"type": "array", "items": {
                "type": "object",
                "properties": {
                    "at_hours": {"type": "number"},
                    "delta_t_kelvin": {"type": "number"}
                },
                "required": ["at_hours", "delta_t_kelvin"]
            }},
            "output": {"type": "object"},
            "constants_file": {"type": "string"}
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = ScenarioConfig::default();
        let text = cfg.to_toml_string();
        let back: ScenarioConfig = toml::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back.enkf.n_members, cfg.enkf.n_members);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = "name = \"x\"\nnot_a_field = 3\n";
        assert!(toml::from_str::<ScenarioConfig>(text).is_err());
    }

    #[test]
    fn mismatched_gamma_diag_is_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.enkf.observed = vec!["q_dot_rx".into(), "m_dot_p_s".into()];
        cfg.enkf.gamma_diag = vec![1e-30];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn bad_timescale_ordering_is_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.timescales.gamma_steps = cfg.timescales.delta_steps * 2;
        assert!(cfg.validate().is_err());
    }
}
