//! Fast internal consistency checks behind `kpa selftest`.

use nalgebra::Cholesky;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::estimation::{
    estimate_from_features, estimate_snapshot, features_from_log, score_theta, EventFeature, SnapshotSummary,
};
use crate::graph::GraphState;
use crate::model::{theta_from_mechanistic, GroupLabel, MechanisticParams, ModelParams};
use crate::probability::{fisher_information, vertex_connect_prob};
use crate::simulator::{simulate, SimConfig, Simulator};

/// Signature of the single-node attachment kernel.
pub type Kernel = fn(&[u64], u64, u64, GroupLabel, GroupLabel, f64) -> Result<f64>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

fn outcome(name: &str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name: name.to_string(), passed, detail }
}

/// 20 nodes over 3 groups with uneven degrees.
pub fn frozen_state() -> GraphState {
    let degrees: Vec<u64> = (0..20).map(|i| 1 + (i * 7 % 11)).collect();
    let groups: Vec<GroupLabel> = (0..20).map(|i| GroupLabel::from_index([0, 0, 1, 2, 1][i % 5])).collect();
    GraphState::from_degrees(&degrees, &groups, 3).expect("fixed state is valid")
}

/// Exact target distribution of an initiator in `g_w` under `kernel`.
pub fn kernel_distribution(state: &GraphState, kernel: Kernel, g_w: GroupLabel, theta: f64) -> Result<Vec<f64>> {
    (0..state.num_nodes() as u32)
        .map(|u| {
            kernel(state.group_degree_totals(), state.total_degree(), state.degree(u), g_w, state.group(u), theta)
        })
        .collect()
}

pub fn check_normalization(kernel: Kernel) -> CheckOutcome {
    let state = frozen_state();
    let mut worst = 0.0f64;
    for theta in [0.05, 0.3, 0.5, 0.8, 1.0] {
        for g in 0..state.num_groups() {
            match kernel_distribution(&state, kernel, GroupLabel::from_index(g), theta) {
                Ok(dist) => worst = worst.max((dist.iter().sum::<f64>() - 1.0).abs()),
                Err(e) => return outcome("normalization", false, e.to_string()),
            }
        }
    }
    outcome("normalization", worst <= 1e-12, format!("max |sum - 1| = {worst:.3e}"))
}

/// Total variation between an empirical count vector and a distribution.
pub fn total_variation(counts: &[u64], dist: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    0.5 * counts.iter().zip(dist).map(|(&c, &p)| (c as f64 / n as f64 - p).abs()).sum::<f64>()
}

fn check_samplers(draws: usize) -> CheckOutcome {
    let state = frozen_state();
    let mut sim = Simulator::from_state(state.clone(), ChaCha8Rng::seed_from_u64(11));
    let mut worst = 0.0f64;
    for (gamma, alpha) in [(0.2, 0.9), (0.5, 0.5), (0.9, 0.2)] {
        let mech = MechanisticParams { gamma, alpha };
        let theta = theta_from_mechanistic(mech).expect("fixed pairs are valid");
        for g in 0..state.num_groups() {
            let g = GroupLabel::from_index(g);
            let exact = kernel_distribution(&state, vertex_connect_prob, g, theta).expect("valid state");
            let mut collapsed = vec![0u64; state.num_nodes()];
            let mut mechanistic = vec![0u64; state.num_nodes()];
            for _ in 0..draws {
                collapsed[sim.sample_target_collapsed(g, theta) as usize] += 1;
                match sim.sample_target_mechanistic(g, mech) {
                    Ok((u, _)) => mechanistic[u as usize] += 1,
                    Err(e) => return outcome("sampler_equivalence", false, e.to_string()),
                }
            }
            worst = worst.max(total_variation(&collapsed, &exact)).max(total_variation(&mechanistic, &exact));
        }
    }
    outcome("sampler_equivalence", worst < 0.03, format!("max TV to closed form = {worst:.4} ({draws} draws)"))
}

fn check_score_monotone() -> CheckOutcome {
    let params = ModelParams { theta: 0.5, p: vec![0.5, 0.3, 0.2], q: 0.5, n0: 10 };
    let features = match simulate(&params, &SimConfig::collapsed(2000, 5)).and_then(|(_, log)| features_from_log(&log)) {
        Ok(f) => f,
        Err(e) => return outcome("score_monotone", false, e.to_string()),
    };
    let grid: Vec<f64> = (1..=200).map(|i| i as f64 / 200.0).collect();
    let scores: Vec<f64> = grid.iter().map(|&t| score_theta(&features, t)).collect();
    let ok = scores.windows(2).all(|w| w[1] < w[0]);
    outcome("score_monotone", ok, format!("score({}) .. score(1) over {} points", grid[0], grid.len()))
}

fn check_fisher_pd() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..100 {
        let k = rng.random_range(2..=5);
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let params = ModelParams {
            theta: rng.random_range(0.01..=1.0),
            p: raw.iter().map(|x| x / sum).collect(),
            q: rng.random_range(0.05..0.95),
            n0: 10,
        };
        let pd = fisher_information(&params).is_ok_and(|f| Cholesky::new(f.matrix().clone()).is_some());
        if !pd {
            return outcome("fisher_positive_definite", false, format!("point {i}: {params:?}"));
        }
    }
    outcome("fisher_positive_definite", true, "100 random points".into())
}

fn check_analytic_roots() -> CheckOutcome {
    let f = |same| EventFeature { vertex_step: true, same, group: GroupLabel::from_index(0), share: 0.5 };
    let features = [f(true), f(true), f(true), f(false)];
    let history = estimate_from_features(&features, 1, 0.95).map(|r| r.theta_hat);

    let symmetric = SnapshotSummary {
        nodes: 100,
        edges: 200,
        nodes_per_group: vec![50, 50],
        degree_totals: vec![200, 200],
        same_edges: vec![60, 60],
        cross_edges: vec![40, 40],
    };
    let snapshot = estimate_snapshot(&symmetric).map(|r| r.theta_hat);

    let fisher = fisher_information(&ModelParams { theta: 0.5, p: vec![0.5, 0.5], q: 0.5, n0: 2 })
        .map(|m| [m.get(0, 0), m.get(1, 1), m.get(2, 2)]);

    match (history, snapshot, fisher) {
        (Ok(h), Ok(s), Ok(m)) => {
            let ok = (h - 0.5).abs() <= 1e-8
                && (s - 0.8).abs() <= 1e-8
                && m.iter().zip([4.0 / 3.0, 2.0, 4.0]).all(|(a, b)| (a - b).abs() <= 1e-12);
            outcome("analytic_roots", ok, format!("history {h:.10}, snapshot {s:.10}, fisher {m:?}"))
        }
        (h, s, m) => outcome("analytic_roots", false, format!("{h:?} {s:?} {m:?}")),
    }
}

pub fn run_selftest() -> SelftestReport {
    run_with_kernel(vertex_connect_prob)
}

/// The suite with the normalization check run against `kernel`.
pub fn run_with_kernel(kernel: Kernel) -> SelftestReport {
    let checks = vec![
        check_normalization(kernel),
        check_samplers(20_000),
        check_score_monotone(),
        check_fisher_pd(),
        check_analytic_roots(),
    ];
    SelftestReport { passed: checks.iter().all(|c| c.passed), checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    // homophily applied to the same-group branch instead of the cross branch
    fn faulty_kernel(totals: &[u64], total: u64, d_u: u64, g_w: GroupLabel, g_u: GroupLabel, theta: f64) -> Result<f64> {
        let pick = d_u as f64 / total as f64;
        if g_w == g_u {
            let own = totals[g_u.index()];
            let share = own as f64 / total as f64;
            Ok(theta * pick + (1.0 - theta) * (1.0 - share) * (d_u as f64 / own as f64))
        } else {
            Ok(pick)
        }
    }

    #[test]
    fn clean_build_passes() {
        let r = run_selftest();
        assert!(r.passed, "{:#?}", r.checks);
    }

    #[test]
    fn injected_fault_fails_normalization() {
        let r = run_with_kernel(faulty_kernel);
        assert!(!r.passed);
        assert!(!r.checks[0].passed);
        assert!(r.checks[1..].iter().all(|c| c.passed));
    }

    #[test]
    fn total_variation_basics() {
        assert_eq!(total_variation(&[1, 1], &[0.5, 0.5]), 0.0);
        assert!((total_variation(&[2, 0], &[0.5, 0.5]) - 0.5).abs() < 1e-15);
    }
}
