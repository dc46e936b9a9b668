//! Flat run configuration shared by the CLI subcommands.
//!
//! A TOML file supplies defaults and command-line flags override it key by
//! key. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::changepoint::{DetectOptions, DEFAULT_C0};
use crate::error::{KpaError, Result};
use crate::model::{theta_from_mechanistic, MechanisticParams, ModelParams};
use crate::simulator::{SimConfig, SimMode, TrialConfig};

pub const DEFAULT_N0: usize = 10;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_CI_LEVEL: f64 = 0.95;
pub const SEED_ENV: &str = "KPA_SEED";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub theta: Option<f64>,
    pub p: Option<Vec<f64>>,
    pub q: Option<f64>,
    pub n0: Option<usize>,
    #[serde(alias = "T")]
    pub horizon: Option<u64>,
    pub seed: Option<u64>,
    /// `collapsed` or `mechanistic`.
    pub mode: Option<String>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub tau: Option<u64>,
    pub theta2: Option<f64>,
    pub forbid_self_loops: Option<bool>,
    pub trials: Option<usize>,
    pub ci_level: Option<f64>,
    pub c0: Option<f64>,
    pub stride: Option<usize>,
    pub out: Option<PathBuf>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident; $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| KpaError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Fields set in `top` win.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        let base = self;
        overlay_fields!(base, top; theta, p, q, n0, horizon, seed, mode, gamma, alpha, tau, theta2,
            forbid_self_loops, trials, ci_level, c0, stride, out)
    }

    fn mechanistic(&self) -> Result<Option<MechanisticParams>> {
        let mode = self.mode.as_deref().unwrap_or(if self.gamma.is_some() { "mechanistic" } else { "collapsed" });
        match mode {
            "collapsed" => {
                if self.gamma.is_some() || self.alpha.is_some() {
                    return Err(KpaError::Config("gamma/alpha need mode = mechanistic".into()));
                }
                Ok(None)
            }
            "mechanistic" => match (self.gamma, self.alpha) {
                (Some(gamma), Some(alpha)) => Ok(Some(MechanisticParams { gamma, alpha })),
                _ => Err(KpaError::Config("mechanistic mode needs gamma and alpha".into())),
            },
            other => Err(KpaError::Config(format!("unknown mode {other:?}"))),
        }
    }

    /// Validated model parameters. In mechanistic mode `theta` is implied by
    /// `gamma` and `alpha`.
    pub fn model_params(&self) -> Result<ModelParams> {
        let theta = match self.mechanistic()? {
            Some(m) => {
                if self.theta.is_some() {
                    return Err(KpaError::Config("theta is implied by gamma and alpha; do not set both".into()));
                }
                theta_from_mechanistic(m).map_err(|e| KpaError::Config(e.to_string()))?
            }
            None => self.theta.ok_or_else(|| missing("theta"))?,
        };
        let params = ModelParams {
            theta,
            p: self.p.clone().ok_or_else(|| missing("p"))?,
            q: self.q.ok_or_else(|| missing("q"))?,
            n0: self.n0.unwrap_or(DEFAULT_N0),
        };
        params.validate()?;
        Ok(params)
    }

    /// Simulation settings with `seed` already resolved.
    pub fn sim_config(&self, seed: u64) -> Result<SimConfig> {
        let horizon = self.horizon.ok_or_else(|| missing("T"))?;
        let mode = match self.mechanistic()? {
            Some(m) => SimMode::Mechanistic(m),
            None => SimMode::Collapsed,
        };
        let changepoint = match (self.tau, self.theta2) {
            (Some(tau), Some(theta2)) => Some(crate::simulator::ChangeSpec { tau, theta2 }),
            (None, None) => None,
            _ => return Err(KpaError::Config("tau and theta2 must be given together".into())),
        };
        let cfg = SimConfig {
            horizon,
            seed,
            mode,
            changepoint,
            forbid_self_loops: self.forbid_self_loops.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn ci_level(&self) -> f64 {
        self.ci_level.unwrap_or(DEFAULT_CI_LEVEL)
    }

    pub fn detect_options(&self) -> DetectOptions {
        DetectOptions { c0: self.c0.unwrap_or(DEFAULT_C0), stride: self.stride, keep_curve: false }
    }

    /// Trial batch; change point detection runs when the simulation has one
    /// or `detect` is set.
    pub fn trial_config(&self, seed: u64, detect: bool) -> Result<TrialConfig> {
        let params = self.model_params()?;
        let sim = self.sim_config(seed)?;
        let trials = self.trials.ok_or_else(|| missing("trials"))?;
        let mut cfg = TrialConfig::new(params, sim, trials);
        cfg.ci_level = self.ci_level();
        if detect || cfg.sim.changepoint.is_some() {
            cfg.detect = Some(self.detect_options());
        }
        Ok(cfg)
    }
}

fn missing(key: &str) -> KpaError {
    KpaError::Config(format!("missing required setting {key}"))
}

/// Seed precedence: command-line flag, then the environment, then the
/// configuration file, then [`DEFAULT_SEED`].
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, file: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(raw) = env {
        return raw
            .trim()
            .parse()
            .map_err(|_| KpaError::Config(format!("{SEED_ENV} = {raw:?} is not an unsigned integer")));
    }
    Ok(file.unwrap_or(DEFAULT_SEED))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Violation;

    const BASIC: &str = "theta = 0.5\np = [0.5, 0.3, 0.2]\nq = 0.5\nT = 100\nseed = 9\n";

    #[test]
    fn parses_flat_toml() {
        let c = RunConfig::from_toml_str(BASIC).unwrap();
        assert_eq!(c.horizon, Some(100));
        let p = c.model_params().unwrap();
        assert_eq!(p.n0, DEFAULT_N0);
        assert_eq!(c.sim_config(9).unwrap().mode, SimMode::Collapsed);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_toml_str("thetta = 0.5\n"), Err(KpaError::Config(_))));
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig::from_toml_str(BASIC).unwrap();
        let merged = file.overlay(RunConfig { theta: Some(0.9), ..Default::default() });
        assert_eq!(merged.theta, Some(0.9));
        assert_eq!(merged.q, Some(0.5));
    }

    #[test]
    fn invalid_params_surface_violations() {
        let c = RunConfig::from_toml_str("theta = 0.5\np = [0.5, 0.6]\nq = 0.5\n").unwrap();
        match c.model_params() {
            Err(KpaError::InvalidParams(v)) => {
                assert!(v.iter().any(|x| matches!(x, Violation::ProbabilitiesDoNotSumToOne(_))))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mechanistic_mode() {
        let c = RunConfig::from_toml_str("gamma = 0.5\nalpha = 0.5\np = [0.5, 0.5]\nq = 0.5\nT = 10\n").unwrap();
        let p = c.model_params().unwrap();
        assert!((p.theta - 0.5 / 0.75).abs() < 1e-12);
        assert!(matches!(c.sim_config(1).unwrap().mode, SimMode::Mechanistic(_)));
        let both = c.clone().overlay(RunConfig { theta: Some(0.3), ..Default::default() });
        assert!(both.model_params().is_err());
        let cp = c.overlay(RunConfig { tau: Some(5), theta2: Some(0.9), ..Default::default() });
        assert!(cp.sim_config(1).is_err());
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(1), Some("2"), Some(3)).unwrap(), 1);
        assert_eq!(resolve_seed(None, Some("2"), Some(3)).unwrap(), 2);
        assert_eq!(resolve_seed(None, None, Some(3)).unwrap(), 3);
        assert_eq!(resolve_seed(None, None, None).unwrap(), DEFAULT_SEED);
        assert!(resolve_seed(None, Some("x"), None).is_err());
    }

    #[test]
    fn trial_config_enables_detection_for_changepoint_runs() {
        let c = RunConfig::from_toml_str(BASIC)
            .unwrap()
            .overlay(RunConfig { trials: Some(3), tau: Some(50), theta2: Some(0.9), ..Default::default() });
        assert!(c.trial_config(1, false).unwrap().detect.is_some());
        let plain = RunConfig::from_toml_str(BASIC).unwrap().overlay(RunConfig { trials: Some(3), ..Default::default() });
        assert!(plain.trial_config(1, false).unwrap().detect.is_none());
        assert!(plain.trial_config(1, true).unwrap().detect.is_some());
    }
}
