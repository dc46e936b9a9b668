//! Per-group degree distributions and their log-log slope.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::graph::GraphState;
use crate::model::{GroupLabel, ModelParams};
use crate::probability::expected_degree_fraction;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeRow {
    pub group: u32,
    pub degree: u64,
    pub count: u64,
    /// `count / t`, comparable to the limit `M_d`.
    pub per_step: f64,
    pub expected: Option<f64>,
}

/// Histogram rows of every group, sorted by group then degree.
pub fn degree_table(state: &GraphState, params: Option<&ModelParams>) -> Vec<DegreeRow> {
    let t = state.time().max(1) as f64;
    let mut rows = Vec::new();
    for k in 0..state.num_groups() {
        let g = GroupLabel::from_index(k);
        for (d, count) in state.degree_histogram(g) {
            rows.push(DegreeRow {
                group: g.get(),
                degree: d,
                count,
                per_step: count as f64 / t,
                expected: params.filter(|_| d >= 1).map(|p| expected_degree_fraction(d, g, p)),
            });
        }
    }
    rows
}

/// Smallest degree `d` with at least a fraction `level` of the group at or
/// below it.
pub fn degree_quantile(hist: &BTreeMap<u64, u64>, level: f64) -> Option<u64> {
    let n: u64 = hist.values().sum();
    if n == 0 {
        return None;
    }
    let need = (level * n as f64).ceil() as u64;
    let mut seen = 0;
    for (&d, &c) in hist {
        seen += c;
        if seen >= need {
            return Some(d);
        }
    }
    hist.keys().next_back().copied()
}

/// Least-squares slope of `ln m_d` against `ln d` over nonempty degrees in
/// `[d_min, d_max]`. Needs at least two points.
pub fn loglog_slope(hist: &BTreeMap<u64, u64>, d_min: u64, d_max: u64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = hist
        .range(d_min..=d_max)
        .filter(|(_, &c)| c > 0)
        .map(|(&d, &c)| ((d as f64).ln(), (c as f64).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub group: u32,
    pub d_min: u64,
    pub d_max: u64,
    pub slope: Option<f64>,
}

/// Slope of each group over `[2, 99th percentile degree]`.
pub fn group_slopes(state: &GraphState) -> Vec<SlopeFit> {
    (0..state.num_groups())
        .map(|k| {
            let g = GroupLabel::from_index(k);
            let hist = state.degree_histogram(g);
            let d_max = degree_quantile(&hist, 0.99).unwrap_or(0);
            SlopeFit { group: g.get(), d_min: 2, d_max, slope: loglog_slope(&hist, 2, d_max) }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_slope() {
        let hist: BTreeMap<u64, u64> = (1..=50u64).map(|d| (d, 1_000_000_000 / d.pow(3))).collect();
        let s = loglog_slope(&hist, 2, 50).unwrap();
        assert!((s + 3.0).abs() < 1e-3, "{s}");
        assert!(loglog_slope(&hist, 2, 2).is_none());
    }

    #[test]
    fn quantiles() {
        let hist: BTreeMap<u64, u64> = [(1, 90), (2, 9), (40, 1)].into_iter().collect();
        assert_eq!(degree_quantile(&hist, 0.5), Some(1));
        assert_eq!(degree_quantile(&hist, 0.99), Some(2));
        assert_eq!(degree_quantile(&hist, 1.0), Some(40));
        assert_eq!(degree_quantile(&BTreeMap::new(), 0.5), None);
    }

    #[test]
    fn table_counts_every_node() {
        let state = GraphState::initial(&[3, 2]);
        let rows = degree_table(&state, None);
        assert_eq!(rows.iter().map(|r| r.count).sum::<u64>(), 5);
        assert!(rows.iter().all(|r| r.degree == 1 && r.expected.is_none()));
    }
}
