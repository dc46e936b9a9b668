use std::collections::HashMap;

use serde::Serialize;

use super::history::{EstimateReport, Flag, Method};
use super::solver::{maximize_theta, Boundary};
use crate::error::{KpaError, Result};
use crate::graph::GraphState;
use crate::model::GroupLabel;

/// Sufficient statistics of a single labeled graph.
///
/// Edges are read as ordered `(initiator, target)` pairs; `cross_edges[k]`
/// counts cross-group edges whose initiator is in group `k`, so every edge is
/// counted exactly once across `same_edges` and `cross_edges`. The homophily
/// estimate depends only on the total of `cross_edges`, so it does not depend
/// on the orientation of an undirected edge list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotSummary {
    pub nodes: u64,
    pub edges: u64,
    pub nodes_per_group: Vec<u64>,
    pub degree_totals: Vec<u64>,
    pub same_edges: Vec<u64>,
    pub cross_edges: Vec<u64>,
}

impl SnapshotSummary {
    pub fn num_groups(&self) -> usize {
        self.nodes_per_group.len()
    }

    /// Cross-group edges touching each group; a `k`-`j` edge counts for both.
    pub fn cross_edges_incident(&self) -> Vec<u64> {
        // degree not spent on same-group edges
        self.degree_totals.iter().zip(&self.same_edges).map(|(&d, &s)| d - 2 * s).collect()
    }

    fn shares(&self) -> Vec<f64> {
        let two_e = 2.0 * self.edges as f64;
        self.degree_totals.iter().map(|&d| d as f64 / two_e).collect()
    }
}

/// Summary of a simulated state. Phantom stubs of `G_0` are left out: degree
/// totals and `E` count recorded edges only.
pub fn summarize_snapshot(state: &GraphState) -> SnapshotSummary {
    let k = state.num_groups();
    let mut same = vec![0u64; k];
    let mut cross = vec![0u64; k];
    for &(w, u) in state.edges() {
        let (gw, gu) = (state.group(w), state.group(u));
        if gw == gu {
            same[gw.index()] += 1;
        } else {
            cross[gw.index()] += 1;
        }
    }
    let degree_totals = state
        .group_degree_totals()
        .iter()
        .zip(state.initial_group_sizes())
        .map(|(&d, &phantom)| d - phantom)
        .collect();
    SnapshotSummary {
        nodes: state.num_nodes() as u64,
        edges: state.real_edge_count() as u64,
        nodes_per_group: state.nodes_per_group(),
        degree_totals,
        same_edges: same,
        cross_edges: cross,
    }
}

/// Summary of an edge list over labeled nodes. Every labeled node counts
/// toward `V`, including isolated ones.
pub fn summarize_edge_list<'a>(
    edges: impl IntoIterator<Item = (&'a str, &'a str)>,
    labels: &HashMap<String, GroupLabel>,
    num_groups: usize,
) -> Result<SnapshotSummary> {
    let mut nodes_per_group = vec![0u64; num_groups];
    for g in labels.values() {
        if g.index() >= num_groups {
            return Err(KpaError::Domain(format!("group label {g} outside 1..={num_groups}")));
        }
        nodes_per_group[g.index()] += 1;
    }
    let label = |node: &str| labels.get(node).copied().ok_or_else(|| KpaError::Unlabeled(node.to_string()));
    let mut degree_totals = vec![0u64; num_groups];
    let mut same = vec![0u64; num_groups];
    let mut cross = vec![0u64; num_groups];
    let mut count = 0u64;
    for (a, b) in edges {
        let (ga, gb) = (label(a)?, label(b)?);
        degree_totals[ga.index()] += 1;
        degree_totals[gb.index()] += 1;
        if ga == gb {
            same[ga.index()] += 1;
        } else {
            cross[ga.index()] += 1;
        }
        count += 1;
    }
    Ok(SnapshotSummary {
        nodes: labels.len() as u64,
        edges: count,
        nodes_per_group,
        degree_totals,
        same_edges: same,
        cross_edges: cross,
    })
}

fn check_summary(s: &SnapshotSummary) -> Result<()> {
    if s.edges == 0 {
        return Err(KpaError::Domain("snapshot has no edges".into()));
    }
    for k in 0..s.num_groups() {
        if s.degree_totals[k] == 0 && (s.same_edges[k] > 0 || s.cross_edges[k] > 0) {
            return Err(KpaError::Domain(format!(
                "group {} has edges but zero degree total",
                k + 1
            )));
        }
    }
    Ok(())
}

/// Snapshot log-likelihood of `theta`.
pub fn snapshot_loglik(s: &SnapshotSummary, theta: f64) -> Result<f64> {
    check_summary(s)?;
    let mut ll = 0.0;
    for (k, share) in s.shares().into_iter().enumerate() {
        let (a, b) = (s.same_edges[k] as f64, s.cross_edges[k] as f64);
        if a > 0.0 {
            ll += a * (share * (share + (1.0 - theta) * (1.0 - share))).ln();
        }
        if b > 0.0 {
            ll += b * (share * theta * (1.0 - share)).ln();
        }
    }
    Ok(ll)
}

/// Derivative of [`snapshot_loglik`] in `theta`.
pub fn snapshot_score(s: &SnapshotSummary, theta: f64) -> Result<f64> {
    check_summary(s)?;
    let (same, cross) = super::solver::score_parts(snapshot_terms(s), theta);
    Ok(same + cross / theta)
}

fn snapshot_terms(s: &SnapshotSummary) -> impl Iterator<Item = (bool, f64, f64)> + '_ {
    let shares = s.shares();
    (0..s.num_groups()).flat_map(move |k| {
        let c = 1.0 - shares[k];
        [(true, c, s.same_edges[k] as f64), (false, c, s.cross_edges[k] as f64)]
    })
}

/// Parameter estimates from a single snapshot. No standard errors are
/// reported: only consistency is available for this estimator.
pub fn estimate_snapshot(s: &SnapshotSummary) -> Result<EstimateReport> {
    check_summary(s)?;
    if s.nodes == 0 {
        return Err(KpaError::Domain("snapshot has no nodes".into()));
    }
    let mut flags = Vec::new();
    let mut warnings = Vec::new();

    let p_hat: Vec<f64> = s.nodes_per_group.iter().map(|&v| v as f64 / s.nodes as f64).collect();
    let raw_q = s.nodes as f64 / s.edges as f64;
    let q_hat = if raw_q > 1.0 {
        flags.push(Flag::QClamped);
        warnings.push(format!("V/E = {raw_q:.6} exceeds 1; q clamped to 1"));
        1.0
    } else {
        raw_q
    };

    let fit = maximize_theta(|| snapshot_terms(s));
    match fit.boundary {
        Some(Boundary::Low) => {
            flags.push(Flag::BoundaryLow);
            warnings.push("no cross-group edges: likelihood increases as theta -> 0".into());
        }
        Some(Boundary::High) => flags.push(Flag::BoundaryHigh),
        None => {}
    }

    Ok(EstimateReport {
        method: Method::Snapshot,
        sample_size: s.edges,
        theta_hat: fit.theta,
        p_hat,
        q_hat,
        sigma11_hat: None,
        se: None,
        ci: None,
        flags,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric() -> SnapshotSummary {
        SnapshotSummary {
            nodes: 100,
            edges: 200,
            nodes_per_group: vec![50, 50],
            degree_totals: vec![200, 200],
            same_edges: vec![60, 60],
            cross_edges: vec![40, 40],
        }
    }

    fn labels(pairs: &[(&str, u32)]) -> HashMap<String, GroupLabel> {
        pairs.iter().map(|&(n, g)| (n.to_string(), GroupLabel::new(g, 3).unwrap())).collect()
    }

    #[test]
    fn two_node_toy() {
        let s = summarize_edge_list([("a", "b")], &labels(&[("a", 1), ("b", 2)]), 2).unwrap();
        assert_eq!((s.nodes, s.edges), (2, 1));
        assert_eq!(s.same_edges, vec![0, 0]);
        assert_eq!(s.cross_edges.iter().sum::<u64>(), 1);
        assert_eq!(s.cross_edges_incident(), vec![1, 1]);
    }

    #[test]
    fn triangle_in_one_group() {
        let s = summarize_edge_list(
            [("a", "b"), ("b", "c"), ("c", "a")],
            &labels(&[("a", 1), ("b", 1), ("c", 1)]),
            1,
        )
        .unwrap();
        assert_eq!(s.same_edges, vec![3]);
        assert_eq!(s.cross_edges, vec![0]);
        assert_eq!(s.degree_totals, vec![6]);
    }

    #[test]
    fn unlabeled_endpoint_is_named() {
        let err = summarize_edge_list([("a", "zz")], &labels(&[("a", 1)]), 1).unwrap_err();
        assert!(matches!(err, KpaError::Unlabeled(ref n) if n == "zz"));
    }

    #[test]
    fn loglik_examples() {
        let s = symmetric();
        let ll = snapshot_loglik(&s, 1.0).unwrap();
        assert!((ll - (120.0 * 0.25f64.ln() + 80.0 * 0.25f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn symmetric_root_is_point_eight() {
        let r = estimate_snapshot(&symmetric()).unwrap();
        assert!((r.theta_hat - 0.8).abs() < 1e-8);
        assert_eq!(r.q_hat, 0.5);
        assert!(r.se.is_none() && r.ci.is_none());
        assert!(snapshot_score(&symmetric(), 0.8).unwrap().abs() < 1e-9);
    }

    #[test]
    fn all_cross_is_boundary_high() {
        let mut s = symmetric();
        s.same_edges = vec![0, 0];
        s.cross_edges = vec![100, 100];
        let r = estimate_snapshot(&s).unwrap();
        assert_eq!(r.theta_hat, 1.0);
        assert!(r.has_flag(Flag::BoundaryHigh));
    }

    #[test]
    fn q_is_clamped() {
        let mut s = symmetric();
        s.nodes = 300;
        let r = estimate_snapshot(&s).unwrap();
        assert_eq!(r.q_hat, 1.0);
        assert!(r.has_flag(Flag::QClamped));
    }

    #[test]
    fn degenerate_inputs() {
        let mut s = symmetric();
        s.edges = 0;
        assert!(estimate_snapshot(&s).is_err());
        let mut s = symmetric();
        s.degree_totals = vec![0, 400];
        assert!(snapshot_loglik(&s, 0.5).is_err());
    }
}
