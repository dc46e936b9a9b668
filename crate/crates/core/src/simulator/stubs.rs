use rand::Rng;

use crate::graph::{GraphState, NodeId};

/// One entry per unit of degree, globally and per group, so a uniform draw
/// from a list is a degree-proportional draw of a node.
#[derive(Debug, Clone)]
pub struct StubIndex {
    global: Vec<NodeId>,
    per_group: Vec<Vec<NodeId>>,
}

impl StubIndex {
    pub fn from_state(state: &GraphState) -> Self {
        let total = state.total_degree() as usize;
        let mut global = Vec::with_capacity(total);
        let mut per_group: Vec<Vec<NodeId>> = state
            .group_degree_totals()
            .iter()
            .map(|&d| Vec::with_capacity(d as usize))
            .collect();
        for (node, (&d, g)) in state.degrees().iter().zip(state.groups()).enumerate() {
            for _ in 0..d {
                global.push(node as NodeId);
                per_group[g.index()].push(node as NodeId);
            }
        }
        StubIndex { global, per_group }
    }

    pub fn global_len(&self) -> usize {
        self.global.len()
    }

    pub fn group_len(&self, group_idx: usize) -> usize {
        self.per_group[group_idx].len()
    }

    #[inline]
    pub fn sample_global<R: Rng + ?Sized>(&self, rng: &mut R) -> NodeId {
        self.global[rng.random_range(0..self.global.len())]
    }

    /// Degree-proportional draw restricted to one group; `None` if the group
    /// holds no degree.
    #[inline]
    pub fn sample_group<R: Rng + ?Sized>(&self, group_idx: usize, rng: &mut R) -> Option<NodeId> {
        let list = &self.per_group[group_idx];
        if list.is_empty() {
            None
        } else {
            Some(list[rng.random_range(0..list.len())])
        }
    }

    pub(crate) fn push(&mut self, node: NodeId, group_idx: usize) {
        self.global.push(node);
        self.per_group[group_idx].push(node);
    }

    /// Lengths agree with the state's degree totals.
    pub fn consistent_with(&self, state: &GraphState) -> bool {
        self.global.len() as u64 == state.total_degree()
            && self
                .per_group
                .iter()
                .zip(state.group_degree_totals())
                .all(|(list, &d)| list.len() as u64 == d)
    }
}
