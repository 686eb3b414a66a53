//! Strict scenario configuration: unknown keys are rejected, scenario
//! parameters are validated at load time, command-line flags override the
//! file values.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Integrator defaults shared by every scenario; any field may be
/// overridden in the config file or by flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    /// Constraint-projection cadence in steps (0 disables the hook).
    pub stride: usize,
    /// Finite-difference step for divergence and gradient estimates.
    pub fd_h: f64,
    /// Sample-thinning factor for recorded trajectories.
    pub sample_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: None,
            t_final: None,
            stride: 0,
            fd_h: 1e-5,
            sample_every: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub write_csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            write_csv: true,
        }
    }
}

/// The full configuration file.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub params: Option<serde_json::Value>,
    pub integrator: IntegratorConfig,
    pub output: OutputConfig,
}

/// Fully resolved settings handed to a scenario run.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub scenario: String,
    pub seed: u64,
    pub params: serde_json::Value,
    pub integrator: IntegratorConfig,
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("config error: cannot read {}", path.display()))?;
        let cfg: ScenarioConfig = serde_json::from_str(&text)
            .with_context(|| format!("config error in {}", path.display()))?;
        Ok(cfg)
    }

    /// Applies flag overrides and pins defaults.
    pub fn resolve(
        mut self,
        scenario_flag: Option<String>,
        seed_flag: Option<u64>,
        t_final_flag: Option<f64>,
        dt_flag: Option<f64>,
        output_flag: Option<String>,
    ) -> Result<ResolvedConfig> {
        let scenario = match (scenario_flag, self.scenario.take()) {
            (Some(flag), Some(file)) if flag != file => {
                bail!("config error: --scenario {flag} conflicts with config scenario {file}")
            }
            (Some(flag), _) => flag,
            (None, Some(file)) => file,
            (None, None) => bail!("config error: no scenario given (flag or config key)"),
        };
        if let Some(t) = t_final_flag {
            self.integrator.t_final = Some(t);
        }
        if let Some(dt) = dt_flag {
            self.integrator.dt = Some(dt);
        }
        if let Some(dir) = output_flag {
            self.output.dir = dir;
        }
        Ok(ResolvedConfig {
            scenario,
            seed: seed_flag.or(self.seed).unwrap_or(42),
            params: self.params.unwrap_or(serde_json::Value::Null),
            integrator: self.integrator,
            output: self.output,
        })
    }
}

impl ResolvedConfig {
    pub fn dt_or(&self, default: f64) -> f64 {
        self.integrator.dt.unwrap_or(default)
    }

    pub fn t_final_or(&self, default: f64) -> f64 {
        self.integrator.t_final.unwrap_or(default)
    }
}

/// Decodes the scenario parameter block strictly, or falls back to the
/// given default when the block is absent.
pub fn params_or_default<T: serde::de::DeserializeOwned>(
    value: &serde_json::Value,
    default: T,
) -> Result<T> {
    if value.is_null() {
        return Ok(default);
    }
    serde_json::from_value(value.clone()).context("config error in params")
}
