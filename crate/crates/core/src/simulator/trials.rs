//! Batches of independent seeded runs and their aggregate statistics.
//!
//! Trial `b` (0-based) is seeded with [`split_seed`]`(master, b)`: the
//! `(b + 1)`-th output of a SplitMix64 generator started at `master`. Results
//! are collected by trial index, so the aggregate does not depend on the
//! number of worker threads.

use rayon::prelude::*;
use serde::Serialize;

use super::{simulate, SimConfig};
use crate::changepoint::{detect, DetectOptions};
use crate::error::{KpaError, Result};
use crate::estimation::{estimate_from_features, estimate_snapshot, features_from_log, summarize_snapshot, Interval};
use crate::model::ModelParams;
use crate::probability::expected_same_group_rate;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed of trial `index` derived from `master`.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialConfig {
    pub params: ModelParams,
    /// `sim.seed` is the master seed.
    pub sim: SimConfig,
    pub trials: usize,
    /// Worker threads; `None` uses the global pool.
    #[serde(skip)]
    pub jobs: Option<usize>,
    pub ci_level: f64,
    /// Change point search, run on every trial when set.
    pub detect: Option<DetectOptions>,
}

impl TrialConfig {
    pub fn new(params: ModelParams, sim: SimConfig, trials: usize) -> Self {
        TrialConfig { params, sim, trials, jobs: None, ci_level: 0.95, detect: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangepointOutcome {
    pub tau_hat: usize,
    pub theta1_hat: f64,
    pub theta2_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub index: usize,
    pub seed: u64,
    pub group_degree_totals: Vec<u64>,
    pub same_group_edges: u64,
    pub theta_hat: Option<f64>,
    pub sigma11_hat: Option<f64>,
    pub theta_ci: Option<Interval>,
    pub theta_tilde: Option<f64>,
    pub changepoint: Option<ChangepointOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Accuracy {
    pub target: f64,
    pub mean: f64,
    pub bias: f64,
    pub mae: f64,
    pub mse: f64,
}

impl Accuracy {
    fn of(values: &[f64], target: f64) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        Some(Accuracy {
            target,
            mean,
            bias: mean - target,
            mae: values.iter().map(|v| (v - target).abs()).sum::<f64>() / n,
            mse: values.iter().map(|v| (v - target).powi(2)).sum::<f64>() / n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryThetaStats {
    pub accuracy: Accuracy,
    /// Share of trials whose interval covers the true `theta`.
    pub coverage: f64,
    pub studentized_mean: f64,
    pub studentized_variance: f64,
    pub studentized_mean_square: f64,
    /// Trials whose estimate could be formed.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangepointStats {
    pub tau_true: u64,
    pub tau_mean: f64,
    /// `mean (tau_hat - tau) / T`.
    pub relative_bias: f64,
    /// `mean |tau_hat - tau| / T`.
    pub relative_mae: f64,
    /// `mean ((tau_hat - tau) / T)^2`.
    pub relative_mse: f64,
    pub theta1: Accuracy,
    pub theta2: Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialAggregate {
    pub trials: usize,
    pub horizon: u64,
    /// `D_T^k / 2T` against `p_k`.
    pub degree_share: Vec<Accuracy>,
    /// `S_T / T` against its limit; absent for change point runs.
    pub same_group_rate: Option<Accuracy>,
    /// `max_b max_k |D_T^k - p_k (2T + n0)| / (2 sqrt(T log B))`.
    pub deviation_scale: Option<f64>,
    pub theta_history: Option<HistoryThetaStats>,
    pub theta_snapshot: Option<Accuracy>,
    /// `mean |theta_hat - theta_tilde|`.
    pub history_snapshot_gap: Option<f64>,
    pub changepoint: Option<ChangepointStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub config: TrialConfig,
    pub aggregate: TrialAggregate,
    pub summaries: Vec<TrialSummary>,
}

fn run_one(cfg: &TrialConfig, index: usize) -> Result<TrialSummary> {
    let seed = split_seed(cfg.sim.seed, index as u64);
    let sim_cfg = SimConfig { seed, ..cfg.sim.clone() };
    let (state, log) = simulate(&cfg.params, &sim_cfg)?;
    let features = features_from_log(&log)?;

    let (theta_hat, sigma11_hat, theta_ci) = match estimate_from_features(&features, log.num_groups(), cfg.ci_level) {
        Ok(r) => (Some(r.theta_hat), r.sigma11_hat, r.ci.map(|c| c.theta)),
        Err(_) => (None, None, None),
    };
    let snapshot = summarize_snapshot(&state);
    let theta_tilde = estimate_snapshot(&snapshot).ok().map(|r| r.theta_hat);
    let changepoint = match &cfg.detect {
        Some(opts) => {
            let r = detect(&features, opts)?;
            Some(ChangepointOutcome { tau_hat: r.tau_hat, theta1_hat: r.theta1_hat, theta2_hat: r.theta2_hat })
        }
        None => None,
    };
    Ok(TrialSummary {
        index,
        seed,
        group_degree_totals: state.group_degree_totals().to_vec(),
        same_group_edges: state.same_group_edges(),
        theta_hat,
        sigma11_hat,
        theta_ci,
        theta_tilde,
        changepoint,
    })
}

/// Runs `cfg.trials` independent simulations and aggregates them.
pub fn run_trials(cfg: &TrialConfig) -> Result<TrialReport> {
    if cfg.trials == 0 {
        return Err(KpaError::Config("number of trials must be at least 1".into()));
    }
    cfg.params.validate()?;
    cfg.sim.validate()?;
    let work = || -> Result<Vec<TrialSummary>> {
        (0..cfg.trials).into_par_iter().map(|b| run_one(cfg, b)).collect()
    };
    let summaries = match cfg.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| KpaError::Internal(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let aggregate = aggregate(cfg, &summaries);
    Ok(TrialReport { config: cfg.clone(), aggregate, summaries })
}

fn aggregate(cfg: &TrialConfig, summaries: &[TrialSummary]) -> TrialAggregate {
    let params = &cfg.params;
    let horizon = cfg.sim.horizon;
    let t = horizon as f64;
    let n0 = summaries
        .first()
        .map(|s| s.group_degree_totals.iter().sum::<u64>() as f64 - 2.0 * t)
        .unwrap_or(params.n0 as f64);

    let degree_share = params
        .p
        .iter()
        .enumerate()
        .filter_map(|(k, &pk)| {
            let shares: Vec<f64> = summaries.iter().map(|s| s.group_degree_totals[k] as f64 / (2.0 * t)).collect();
            Accuracy::of(&shares, pk)
        })
        .collect();

    let changepoint_run = cfg.sim.changepoint.is_some();
    let same_group_rate = (!changepoint_run && horizon > 0)
        .then(|| {
            let rates: Vec<f64> = summaries.iter().map(|s| s.same_group_edges as f64 / t).collect();
            Accuracy::of(&rates, expected_same_group_rate(params))
        })
        .flatten();

    let deviation_scale = (summaries.len() >= 2 && horizon > 0).then(|| {
        let scale = 2.0 * t.sqrt() * (summaries.len() as f64).ln().sqrt();
        summaries
            .iter()
            .flat_map(|s| {
                s.group_degree_totals
                    .iter()
                    .zip(&params.p)
                    .map(|(&d, &pk)| (d as f64 - pk * (2.0 * t + n0)).abs() / scale)
            })
            .fold(0.0, f64::max)
    });

    let theta_history = if changepoint_run {
        None
    } else {
        history_stats(summaries, params.theta, horizon)
    };

    let theta_snapshot = if changepoint_run {
        None
    } else {
        let tilde: Vec<f64> = summaries.iter().filter_map(|s| s.theta_tilde).collect();
        Accuracy::of(&tilde, params.theta)
    };
    let gaps: Vec<f64> = summaries
        .iter()
        .filter_map(|s| Some((s.theta_hat? - s.theta_tilde?).abs()))
        .collect();
    let history_snapshot_gap =
        (!changepoint_run && !gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64);

    let changepoint = match cfg.sim.changepoint {
        Some(spec) => {
            let outcomes: Vec<&ChangepointOutcome> = summaries.iter().filter_map(|s| s.changepoint.as_ref()).collect();
            if outcomes.is_empty() {
                None
            } else {
                let n = outcomes.len() as f64;
                let rel: Vec<f64> = outcomes.iter().map(|o| (o.tau_hat as f64 - spec.tau as f64) / t).collect();
                let th1: Vec<f64> = outcomes.iter().map(|o| o.theta1_hat).collect();
                let th2: Vec<f64> = outcomes.iter().map(|o| o.theta2_hat).collect();
                Some(ChangepointStats {
                    tau_true: spec.tau,
                    tau_mean: outcomes.iter().map(|o| o.tau_hat as f64).sum::<f64>() / n,
                    relative_bias: rel.iter().sum::<f64>() / n,
                    relative_mae: rel.iter().map(|r| r.abs()).sum::<f64>() / n,
                    relative_mse: rel.iter().map(|r| r * r).sum::<f64>() / n,
                    theta1: Accuracy::of(&th1, params.theta).expect("non-empty"),
                    theta2: Accuracy::of(&th2, spec.theta2).expect("non-empty"),
                })
            }
        }
        None => None,
    };

    TrialAggregate {
        trials: summaries.len(),
        horizon,
        degree_share,
        same_group_rate,
        deviation_scale,
        theta_history,
        theta_snapshot,
        history_snapshot_gap,
        changepoint,
    }
}

fn history_stats(summaries: &[TrialSummary], theta: f64, horizon: u64) -> Option<HistoryThetaStats> {
    let hats: Vec<f64> = summaries.iter().filter_map(|s| s.theta_hat).collect();
    let accuracy = Accuracy::of(&hats, theta)?;
    let with_ci: Vec<&Interval> = summaries.iter().filter_map(|s| s.theta_ci.as_ref()).collect();
    let coverage = if with_ci.is_empty() {
        f64::NAN
    } else {
        with_ci.iter().filter(|iv| iv.contains(theta)).count() as f64 / with_ci.len() as f64
    };
    let root_t = (horizon as f64).sqrt();
    let z: Vec<f64> = summaries
        .iter()
        .filter_map(|s| Some(root_t * (s.theta_hat? - theta) * s.sigma11_hat?.sqrt()))
        .collect();
    let n = z.len() as f64;
    let z_mean = z.iter().sum::<f64>() / n;
    let z_var = if z.len() > 1 { z.iter().map(|v| (v - z_mean).powi(2)).sum::<f64>() / (n - 1.0) } else { f64::NAN };
    Some(HistoryThetaStats {
        accuracy,
        coverage,
        studentized_mean: z_mean,
        studentized_variance: z_var,
        studentized_mean_square: z.iter().map(|v| v * v).sum::<f64>() / n,
        count: hats.len(),
    })
}
