//! Likelihood-based estimation of the model parameters.
//!
//! The homophily likelihood only sees, per step, whether the new edge stayed
//! inside the initiator's group and the initiator group's degree share
//! `P = D^k_{t-1} / (2(t-1) + n0)`. Writing `c = 1 - P`, a same-group step
//! contributes `log(1 - theta c)` and a cross-group step `log(theta c)`, so the
//! score is
//!
//! ```text
//! score(theta) = -sum_same c / (1 - theta c) + n_cross / theta
//! ```
//!
//! which is strictly decreasing on `(0, 1)` and has at most one root.

mod history;
mod snapshot;
mod solver;

use serde::Serialize;

use crate::error::Result;
use crate::events::{for_each_prefix_totals, EventLog};
use crate::model::GroupLabel;

pub use history::{estimate_history, estimate_from_features, EstimateReport, Flag, Method, StandardErrors, Interval, Intervals};
pub use snapshot::{estimate_snapshot, snapshot_loglik, snapshot_score, summarize_snapshot, summarize_edge_list, SnapshotSummary};
pub use solver::{maximize_theta, ThetaFit, THETA_FLOOR};

/// One step of the history, reduced to what the likelihood needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventFeature {
    pub vertex_step: bool,
    pub same: bool,
    pub group: GroupLabel,
    /// Degree share of the initiator's group just before the step.
    pub share: f64,
}

pub fn features_from_log(log: &EventLog) -> Result<Vec<EventFeature>> {
    let mut out = Vec::with_capacity(log.len());
    let mut prev: Vec<u64> = Vec::new();
    let n0 = log.n0;
    for_each_prefix_totals(log, |t, totals| {
        if t > 0 {
            let r = &log.records[t as usize - 1];
            let denom = (2 * (t - 1) + n0) as f64;
            out.push(EventFeature {
                vertex_step: r.is_vertex_step(),
                same: r.is_same_group(),
                group: r.g_w,
                share: prev[r.g_w.index()] as f64 / denom,
            });
        }
        prev.clear();
        prev.extend_from_slice(totals);
    })?;
    Ok(out)
}

/// Full log-likelihood of the history as a function of `theta`, including the
/// `theta`-free `log P` terms of edge-steps.
pub fn loglik_theta(features: &[EventFeature], theta: f64) -> f64 {
    features
        .iter()
        .map(|f| {
            let c = 1.0 - f.share;
            let attach = if f.same {
                (1.0 - theta * c).ln()
            } else if theta <= 0.0 {
                f64::NEG_INFINITY
            } else {
                (theta * c).ln()
            };
            if f.vertex_step {
                attach
            } else {
                attach + f.share.ln()
            }
        })
        .sum()
}

/// Derivative of [`loglik_theta`] in `theta`.
pub fn score_theta(features: &[EventFeature], theta: f64) -> f64 {
    let (same, cross) = solver::score_parts(features.iter().map(|f| (f.same, 1.0 - f.share, 1.0)), theta);
    same + if cross > 0.0 { cross / theta } else { 0.0 }
}
