//! Mutable network state of a KPA trajectory.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{KpaError, Result};
use crate::model::GroupLabel;

pub type NodeId = u32;

/// Degrees, labels and edges of `G_t`.
///
/// `G_0` uses phantom stubs: each of the `n0` initial nodes holds degree one
/// without a recorded edge, so the total degree is `2t + n0` at every `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphState {
    pub(crate) t: u64,
    pub(crate) n0: u64,
    pub(crate) degrees: Vec<u64>,
    pub(crate) groups: Vec<GroupLabel>,
    pub(crate) group_degree_totals: Vec<u64>,
    pub(crate) initial_group_sizes: Vec<u64>,
    /// Ordered as (initiator, target).
    pub(crate) edges: Vec<(NodeId, NodeId)>,
}

impl GraphState {
    /// `G_0` with `initial_group_sizes[k]` degree-one nodes in group `k + 1`.
    pub fn initial(initial_group_sizes: &[u64]) -> Self {
        let num_groups = initial_group_sizes.len();
        let n0: u64 = initial_group_sizes.iter().sum();
        let mut groups = Vec::with_capacity(n0 as usize);
        for (idx, &count) in initial_group_sizes.iter().enumerate() {
            groups.extend(std::iter::repeat_n(GroupLabel::from_index(idx), count as usize));
        }
        GraphState {
            t: 0,
            n0,
            degrees: vec![1; n0 as usize],
            groups,
            group_degree_totals: initial_group_sizes.to_vec(),
            initial_group_sizes: {
                let mut v = initial_group_sizes.to_vec();
                v.resize(num_groups, 0);
                v
            },
            edges: Vec::new(),
        }
    }

    /// A frozen state whose whole degree mass is phantom (no recorded edges,
    /// `t = 0`). Used to probe connection kernels on arbitrary degree profiles.
    pub fn from_degrees(degrees: &[u64], groups: &[GroupLabel], num_groups: usize) -> Result<Self> {
        if degrees.len() != groups.len() {
            return Err(KpaError::Domain("degrees and groups differ in length".into()));
        }
        if degrees.contains(&0) {
            return Err(KpaError::Domain("every node needs degree >= 1".into()));
        }
        let mut totals = vec![0u64; num_groups];
        let mut sizes = vec![0u64; num_groups];
        for (&d, g) in degrees.iter().zip(groups) {
            if g.index() >= num_groups {
                return Err(KpaError::Domain(format!("group label {g} outside 1..={num_groups}")));
            }
            totals[g.index()] += d;
            sizes[g.index()] += 1;
        }
        Ok(GraphState {
            t: 0,
            n0: degrees.iter().sum(),
            degrees: degrees.to_vec(),
            groups: groups.to_vec(),
            group_degree_totals: totals,
            initial_group_sizes: sizes,
            edges: Vec::new(),
        })
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn n0(&self) -> u64 {
        self.n0
    }

    pub fn num_groups(&self) -> usize {
        self.group_degree_totals.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.degrees.len()
    }

    pub fn degrees(&self) -> &[u64] {
        &self.degrees
    }

    pub fn groups(&self) -> &[GroupLabel] {
        &self.groups
    }

    pub fn degree(&self, node: NodeId) -> u64 {
        self.degrees[node as usize]
    }

    pub fn group(&self, node: NodeId) -> GroupLabel {
        self.groups[node as usize]
    }

    /// `D^k_t` for every group.
    pub fn group_degree_totals(&self) -> &[u64] {
        &self.group_degree_totals
    }

    pub fn total_degree(&self) -> u64 {
        2 * self.t + self.n0
    }

    pub fn initial_group_sizes(&self) -> &[u64] {
        &self.initial_group_sizes
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    /// Number of recorded edges `E_t` (phantom stubs excluded).
    pub fn real_edge_count(&self) -> usize {
        self.edges.len()
    }

    /// `S_t`: edges whose endpoints share a group.
    pub fn same_group_edges(&self) -> u64 {
        self.edges
            .iter()
            .filter(|&&(w, u)| self.group(w) == self.group(u))
            .count() as u64
    }

    pub fn nodes_per_group(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_groups()];
        for g in &self.groups {
            counts[g.index()] += 1;
        }
        counts
    }

    pub(crate) fn add_node(&mut self, group: GroupLabel) -> NodeId {
        let id = self.degrees.len() as NodeId;
        self.degrees.push(0);
        self.groups.push(group);
        id
    }

    pub(crate) fn add_edge(&mut self, w: NodeId, u: NodeId) {
        self.degrees[w as usize] += 1;
        self.degrees[u as usize] += 1;
        self.group_degree_totals[self.groups[w as usize].index()] += 1;
        self.group_degree_totals[self.groups[u as usize].index()] += 1;
        self.edges.push((w, u));
        self.t += 1;
    }

    /// Degree histogram `m_d^k` of one group.
    pub fn degree_histogram(&self, group: GroupLabel) -> BTreeMap<u64, u64> {
        let mut hist = BTreeMap::new();
        for (&d, &g) in self.degrees.iter().zip(&self.groups) {
            if g == group {
                *hist.entry(d).or_insert(0) += 1;
            }
        }
        hist
    }

    /// Checks every structural invariant; used by tests and the self-test.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |msg: String| Err(KpaError::Internal(msg));
        let total: u64 = self.group_degree_totals.iter().sum();
        if total != self.total_degree() {
            return fail(format!("sum D^k = {total} != 2t + n0 = {}", self.total_degree()));
        }
        let mut recomputed = vec![0u64; self.num_groups()];
        for (&d, g) in self.degrees.iter().zip(&self.groups) {
            if d == 0 {
                return fail("node with degree 0".into());
            }
            recomputed[g.index()] += d;
        }
        if recomputed != self.group_degree_totals {
            return fail("D^k disagrees with per-node degrees".into());
        }
        if self.edges.len() as u64 != self.t {
            return fail(format!("{} edges recorded at t = {}", self.edges.len(), self.t));
        }
        let n = self.degrees.len() as NodeId;
        if self.edges.iter().any(|&(w, u)| w >= n || u >= n) {
            return fail("edge endpoint out of range".into());
        }
        Ok(())
    }

    pub fn summary(&self) -> StateSummary {
        StateSummary {
            t: self.t,
            n0: self.n0,
            num_groups: self.num_groups(),
            nodes: self.num_nodes() as u64,
            edges: self.real_edge_count() as u64,
            nodes_per_group: self.nodes_per_group(),
            group_degree_totals: self.group_degree_totals.clone(),
            initial_group_sizes: self.initial_group_sizes.clone(),
            same_group_edges: self.same_group_edges(),
            max_degree: self.degrees.iter().copied().max().unwrap_or(0),
        }
    }
}

/// Compact description of a state, written next to event logs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSummary {
    pub t: u64,
    pub n0: u64,
    pub num_groups: usize,
    pub nodes: u64,
    pub edges: u64,
    pub nodes_per_group: Vec<u64>,
    pub group_degree_totals: Vec<u64>,
    pub initial_group_sizes: Vec<u64>,
    pub same_group_edges: u64,
    pub max_degree: u64,
}
