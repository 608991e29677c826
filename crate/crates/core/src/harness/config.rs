use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{StepperConfig, TimeScheme, VelocityNormal};

/// Experiment selector of the `converge` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Robin,
    Flow,
}

/// JSON run configuration. Every field is optional; command-line flags take
/// precedence over values given here.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct RunConfig {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub tau: Option<f64>,
    pub t_end: Option<f64>,
    pub scheme: Option<TimeScheme>,
    pub velocity_normal: Option<VelocityNormal>,
    pub solver_tolerance: Option<f64>,
    pub quality_threshold: Option<f64>,
    pub normal_drift_budget: Option<f64>,
    pub q_const: Option<f64>,
    pub degree: Option<usize>,
    pub level: Option<usize>,
    pub levels: Option<usize>,
    pub experiment: Option<ExperimentKind>,
    pub out_dir: Option<PathBuf>,
    pub vtk_every: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overridden_by(self, over: RunConfig) -> Self {
        Self {
            alpha: over.alpha.or(self.alpha),
            beta: over.beta.or(self.beta),
            tau: over.tau.or(self.tau),
            t_end: over.t_end.or(self.t_end),
            scheme: over.scheme.or(self.scheme),
            velocity_normal: over.velocity_normal.or(self.velocity_normal),
            solver_tolerance: over.solver_tolerance.or(self.solver_tolerance),
            quality_threshold: over.quality_threshold.or(self.quality_threshold),
            normal_drift_budget: over.normal_drift_budget.or(self.normal_drift_budget),
            q_const: over.q_const.or(self.q_const),
            degree: over.degree.or(self.degree),
            level: over.level.or(self.level),
            levels: over.levels.or(self.levels),
            experiment: over.experiment.or(self.experiment),
            out_dir: over.out_dir.or(self.out_dir),
            vtk_every: over.vtk_every.or(self.vtk_every),
        }
    }

    /// Stepper settings; `tau` has no default and must be given.
    pub fn stepper(&self) -> Result<StepperConfig<f64>> {
        let tau = self
            .tau
            .ok_or_else(|| Error::InvalidArgument("missing time step: pass --tau or set \"tau\" in the config".into()))?;
        let mut c = StepperConfig::new(self.alpha.unwrap_or(1.0), self.beta.unwrap_or(1.0), tau, self.t_end.unwrap_or(1.0));
        if let Some(s) = self.scheme {
            c.scheme = s;
        }
        if let Some(v) = self.velocity_normal {
            c.velocity_normal = v;
        }
        if let Some(v) = self.solver_tolerance {
            c.solver_tolerance = v;
        }
        if let Some(v) = self.quality_threshold {
            c.quality_threshold = v;
        }
        if let Some(v) = self.normal_drift_budget {
            c.normal_drift_budget = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(RunConfig::from_json(r#"{"alpha": 1.0, "gamma": 2.0}"#).is_err());
        let c = RunConfig::from_json(r#"{"alpha": 2.0, "scheme": "explicit-rk4", "experiment": "flow"}"#).unwrap();
        assert_eq!(c.alpha, Some(2.0));
        assert_eq!(c.scheme, Some(TimeScheme::ExplicitRk4));
        assert_eq!(c.experiment, Some(ExperimentKind::Flow));
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig { alpha: Some(2.0), beta: Some(3.0), ..Default::default() };
        let flags = RunConfig { alpha: Some(5.0), tau: Some(0.1), ..Default::default() };
        let c = file.overridden_by(flags);
        assert_eq!((c.alpha, c.beta, c.tau), (Some(5.0), Some(3.0), Some(0.1)));
    }

    #[test]
    fn missing_tau_names_the_flag() {
        let e = RunConfig::default().stepper().unwrap_err();
        assert!(e.to_string().contains("--tau"));
    }
}
