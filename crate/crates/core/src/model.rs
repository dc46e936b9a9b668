//! Parameter types shared by the simulator and the estimators.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{KpaError, Result};

const SUM_TOLERANCE: f64 = 1e-12;

/// 1-indexed group label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupLabel(u32);

impl GroupLabel {
    pub fn new(k: u32, num_groups: usize) -> Result<Self> {
        if k == 0 || k as usize > num_groups {
            return Err(KpaError::Domain(format!(
                "group label {k} outside 1..={num_groups}"
            )));
        }
        Ok(GroupLabel(k))
    }

    /// Label for a 0-based group index.
    pub fn from_index(idx: usize) -> Self {
        GroupLabel(idx as u32 + 1)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// 0-based index into per-group vectors.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Collapsed model parameters `(theta, p_1..p_K, q)` plus the initial node count.
///
/// `K` is `p.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta: f64,
    pub p: Vec<f64>,
    pub q: f64,
    pub n0: usize,
}

/// Uncollapsed homophily pair: cross-group acceptance `gamma` and same-group
/// redirect probability `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanisticParams {
    pub gamma: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ThetaOutOfRange(f64),
    QOutOfRange(f64),
    NoGroups,
    ProbabilityOutOfRange { group: usize, value: f64 },
    ProbabilitiesDoNotSumToOne(f64),
    TooFewInitialNodes { n0: usize, groups: usize },
    UnseededGroup(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ThetaOutOfRange(v) => write!(f, "theta out of (0,1]: {v}"),
            Violation::QOutOfRange(v) => write!(f, "q out of (0,1]: {v}"),
            Violation::NoGroups => write!(f, "p is empty"),
            Violation::ProbabilityOutOfRange { group, value } => {
                write!(f, "p_{group} out of [0,1]: {value}")
            }
            Violation::ProbabilitiesDoNotSumToOne(s) => write!(f, "p does not sum to 1 (sum = {s})"),
            Violation::TooFewInitialNodes { n0, groups } => {
                write!(f, "n0 = {n0} is smaller than the number of groups {groups}")
            }
            Violation::UnseededGroup(k) => {
                write!(f, "group {k} has p_k > 0 but receives no initial node")
            }
        }
    }
}

impl ModelParams {
    pub fn new(theta: f64, p: Vec<f64>, q: f64, n0: usize) -> Result<Self> {
        let params = ModelParams { theta, p, q, n0 };
        params.validate()?;
        Ok(params)
    }

    pub fn num_groups(&self) -> usize {
        self.p.len()
    }

    /// Every violated invariant; empty iff the parameters are usable.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            out.push(Violation::ThetaOutOfRange(self.theta));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            out.push(Violation::QOutOfRange(self.q));
        }
        if self.p.is_empty() {
            out.push(Violation::NoGroups);
            return out;
        }
        let mut probs_ok = true;
        for (i, &pk) in self.p.iter().enumerate() {
            if !(0.0..=1.0).contains(&pk) {
                out.push(Violation::ProbabilityOutOfRange { group: i + 1, value: pk });
                probs_ok = false;
            }
        }
        let sum: f64 = self.p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            out.push(Violation::ProbabilitiesDoNotSumToOne(sum));
            probs_ok = false;
        }
        if self.n0 < self.p.len() {
            out.push(Violation::TooFewInitialNodes { n0: self.n0, groups: self.p.len() });
        } else if probs_ok {
            let sizes = initial_group_sizes(&self.p, self.n0);
            for (i, (&pk, &size)) in self.p.iter().zip(&sizes).enumerate() {
                if pk > 0.0 && size == 0 {
                    out.push(Violation::UnseededGroup(i + 1));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(KpaError::InvalidParams(v))
        }
    }

    pub fn initial_group_sizes(&self) -> Vec<u64> {
        initial_group_sizes(&self.p, self.n0)
    }
}

/// Diagnostic form of [`ModelParams::violations`].
pub fn validate_params(params: &ModelParams) -> std::result::Result<(), Vec<Violation>> {
    let v = params.violations();
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// Node counts per group in `G_0`: `round(p_k * n0)`, with the rounding
/// residue (positive or negative) absorbed by the largest-`p` group.
pub fn initial_group_sizes(p: &[f64], n0: usize) -> Vec<u64> {
    let mut sizes: Vec<i64> = p.iter().map(|&pk| (pk * n0 as f64).round() as i64).collect();
    let residue = n0 as i64 - sizes.iter().sum::<i64>();
    if residue != 0 {
        // first index wins ties
        let largest = p
            .iter()
            .enumerate()
            .fold(0, |best, (i, &pk)| if pk > p[best] { i } else { best });
        sizes[largest] += residue;
    }
    sizes.into_iter().map(|s| s.max(0) as u64).collect()
}

/// `theta = gamma / (gamma + alpha (1 - gamma))`.
pub fn theta_from_mechanistic(m: MechanisticParams) -> Result<f64> {
    let MechanisticParams { gamma, alpha } = m;
    if !(gamma > 0.0 && gamma <= 1.0) || !(alpha > 0.0 && alpha <= 1.0) {
        return Err(KpaError::Domain(format!(
            "gamma and alpha must lie in (0,1], got gamma={gamma}, alpha={alpha}"
        )));
    }
    Ok(gamma / (gamma + alpha * (1.0 - gamma)))
}
