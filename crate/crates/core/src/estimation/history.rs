use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::solver::{maximize_theta, Boundary};
use super::{features_from_log, EventFeature};
use crate::error::{KpaError, Result};
use crate::events::EventLog;
use crate::model::ModelParams;
use crate::probability::plugin_fisher;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    History,
    Snapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    BoundaryLow,
    BoundaryHigh,
    QClamped,
    EmptyGroup,
    SingularInformation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StandardErrors {
    pub theta: f64,
    pub p: Vec<f64>,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Intervals {
    pub level: f64,
    pub theta: Interval,
    pub p: Vec<Interval>,
    pub q: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub method: Method,
    /// Number of steps `T` (history) or edges `E` (snapshot).
    pub sample_size: u64,
    pub theta_hat: f64,
    pub p_hat: Vec<f64>,
    pub q_hat: f64,
    /// Plug-in information entry for `theta`.
    pub sigma11_hat: Option<f64>,
    pub se: Option<StandardErrors>,
    pub ci: Option<Intervals>,
    pub flags: Vec<Flag>,
    pub warnings: Vec<String>,
}

impl EstimateReport {
    pub fn has_flag(&self, flag: Flag) -> bool {
        self.flags.contains(&flag)
    }

    /// `sqrt(T) (theta_hat - theta) sqrt(Sigma_11_hat)`.
    pub fn studentized_theta(&self, theta_true: f64) -> Option<f64> {
        self.sigma11_hat
            .map(|s| (self.sample_size as f64).sqrt() * (self.theta_hat - theta_true) * s.sqrt())
    }
}

pub fn estimate_history(log: &EventLog, ci_level: f64) -> Result<EstimateReport> {
    let features = features_from_log(log)?;
    estimate_from_features(&features, log.num_groups(), ci_level)
}

/// History estimates from precomputed features over `num_groups` groups.
pub fn estimate_from_features(
    features: &[EventFeature],
    num_groups: usize,
    ci_level: f64,
) -> Result<EstimateReport> {
    if !(ci_level > 0.0 && ci_level < 1.0) {
        return Err(KpaError::Config(format!("ci level {ci_level} outside (0,1)")));
    }
    let t = features.len();
    if t == 0 {
        return Err(KpaError::Estimation("empty history".into()));
    }
    let mut arrivals = vec![0u64; num_groups];
    for f in features.iter().filter(|f| f.vertex_step) {
        arrivals[f.group.index()] += 1;
    }
    let vertex_steps: u64 = arrivals.iter().sum();
    if vertex_steps == 0 {
        return Err(KpaError::Estimation("no vertex-steps: p_hat is undefined".into()));
    }

    let mut flags = Vec::new();
    let mut warnings = Vec::new();

    let q_hat = vertex_steps as f64 / t as f64;
    let p_hat: Vec<f64> = arrivals.iter().map(|&a| a as f64 / vertex_steps as f64).collect();
    for (k, &a) in arrivals.iter().enumerate() {
        if a == 0 {
            flags.push(Flag::EmptyGroup);
            warnings.push(format!("no arrivals observed in group {}; p_hat = 0", k + 1));
        }
    }

    let fit = maximize_theta(|| features.iter().map(|f| (f.same, 1.0 - f.share, 1.0)));
    match fit.boundary {
        Some(Boundary::Low) => {
            flags.push(Flag::BoundaryLow);
            warnings.push("no cross-group events: likelihood increases as theta -> 0".into());
        }
        Some(Boundary::High) => flags.push(Flag::BoundaryHigh),
        None => {}
    }

    let mut report = EstimateReport {
        method: Method::History,
        sample_size: t as u64,
        theta_hat: fit.theta,
        p_hat,
        q_hat,
        sigma11_hat: None,
        se: None,
        ci: None,
        flags,
        warnings,
    };
    attach_uncertainty(&mut report, ci_level);
    Ok(report)
}

fn attach_uncertainty(report: &mut EstimateReport, level: f64) {
    let plug = ModelParams {
        theta: report.theta_hat,
        p: report.p_hat.clone(),
        q: report.q_hat,
        n0: report.p_hat.len(),
    };
    let cov = plugin_fisher(&plug).and_then(|f| {
        let s11 = f.theta_entry();
        f.covariance(report.sample_size as f64).map(|c| (s11, c))
    });
    let (s11, cov) = match cov {
        Ok(v) => v,
        Err(e) => {
            report.flags.push(Flag::SingularInformation);
            report.warnings.push(format!("no standard errors: {e}"));
            return;
        }
    };
    let dim = cov.nrows();
    let k = report.p_hat.len();
    let mut p_se: Vec<f64> = (0..k - 1).map(|i| cov[(1 + i, 1 + i)].sqrt()).collect();
    // p_K = 1 - sum of the others
    let last_var: f64 = (1..dim - 1).flat_map(|i| (1..dim - 1).map(move |j| (i, j))).map(|ij| cov[ij]).sum();
    p_se.push(last_var.max(0.0).sqrt());
    let se = StandardErrors { theta: cov[(0, 0)].sqrt(), p: p_se, q: cov[(dim - 1, dim - 1)].sqrt() };

    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let iv = |x: f64, s: f64| Interval { lower: x - z * s, upper: x + z * s };
    report.ci = Some(Intervals {
        level,
        theta: iv(report.theta_hat, se.theta),
        p: report.p_hat.iter().zip(&se.p).map(|(&x, &s)| iv(x, s)).collect(),
        q: iv(report.q_hat, se.q),
    });
    report.sigma11_hat = Some(s11);
    report.se = Some(se);
}
