//! Replayable event history.
//!
//! A log keeps only `(t, v_t, g_w, g_u)` per step. Every likelihood in the
//! crate depends on the history through these records and the per-group
//! degree totals `D^k_{t-1}`, which [`replay_group_degrees`] reconstructs.

use serde::{Deserialize, Serialize};

use crate::error::{KpaError, Result};
use crate::model::{GroupLabel, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: u64,
    /// 1 for a vertex-step, 0 for an edge-step.
    pub v: u8,
    pub g_w: GroupLabel,
    pub g_u: GroupLabel,
}

impl EventRecord {
    pub fn is_vertex_step(&self) -> bool {
        self.v == 1
    }

    pub fn is_same_group(&self) -> bool {
        self.g_w == self.g_u
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    /// Parameters used at generation time. Informational only.
    pub params_hint: Option<ModelParams>,
    pub n0: u64,
    pub per_group_initial: Vec<u64>,
    pub records: Vec<EventRecord>,
}

impl EventLog {
    pub fn new(per_group_initial: Vec<u64>) -> Self {
        EventLog {
            params_hint: None,
            n0: per_group_initial.iter().sum(),
            per_group_initial,
            records: Vec::new(),
        }
    }

    pub fn num_groups(&self) -> usize {
        self.per_group_initial.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks ordering, labels and the header fields.
    pub fn validate(&self) -> Result<()> {
        let k = self.num_groups();
        if k == 0 {
            return Err(KpaError::Replay { t: 0, reason: "log declares no groups".into() });
        }
        let initial: u64 = self.per_group_initial.iter().sum();
        if initial != self.n0 {
            return Err(KpaError::Replay {
                t: 0,
                reason: format!("per-group initial counts sum to {initial}, n0 = {}", self.n0),
            });
        }
        for (i, r) in self.records.iter().enumerate() {
            check_record(r, i as u64 + 1, k)?;
        }
        Ok(())
    }

    /// Records `[start, end)` as a standalone log whose initial totals are the
    /// replayed `D^k_{start}`.
    pub fn slice(&self, start: usize, end: usize) -> Result<EventLog> {
        if start > end || end > self.records.len() {
            return Err(KpaError::Domain(format!(
                "slice {start}..{end} out of range for {} records",
                self.records.len()
            )));
        }
        let mut totals = self.per_group_initial.clone();
        for (i, r) in self.records[..start].iter().enumerate() {
            check_record(r, i as u64 + 1, totals.len())?;
            apply(&mut totals, r);
        }
        let records = self.records[start..end]
            .iter()
            .enumerate()
            .map(|(i, r)| EventRecord { t: i as u64 + 1, ..*r })
            .collect();
        // phantom mass of the sliced log is the whole degree total at `start`
        Ok(EventLog {
            params_hint: self.params_hint.clone(),
            n0: totals.iter().sum(),
            per_group_initial: totals,
            records,
        })
    }
}

fn check_record(r: &EventRecord, expected_t: u64, k: usize) -> Result<()> {
    if r.t != expected_t {
        return Err(KpaError::Replay {
            t: r.t,
            reason: format!("expected t = {expected_t} (records must be consecutive)"),
        });
    }
    if r.v > 1 {
        return Err(KpaError::Replay { t: r.t, reason: format!("v = {} is not 0 or 1", r.v) });
    }
    for g in [r.g_w, r.g_u] {
        if g.get() == 0 || g.index() >= k {
            return Err(KpaError::Replay {
                t: r.t,
                reason: format!("group label {g} outside 1..={k}"),
            });
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn apply(totals: &mut [u64], r: &EventRecord) {
    totals[r.g_w.index()] += 1;
    totals[r.g_u.index()] += 1;
}

/// Per-group degree totals `D^k_t` for `t = 0..=T`.
pub fn replay_group_degrees(log: &EventLog) -> Result<Vec<Vec<u64>>> {
    let mut out = Vec::with_capacity(log.records.len() + 1);
    for_each_prefix_totals(log, |_, totals| out.push(totals.to_vec()))?;
    let last = out.last().expect("at least D_0");
    let expected = 2 * log.records.len() as u64 + log.n0;
    if last.iter().sum::<u64>() != expected {
        return Err(KpaError::Internal("total-degree identity violated".into()));
    }
    Ok(out)
}

/// Calls `f(t, D_t)` for `t = 0..=T` without materializing the trajectory.
pub(crate) fn for_each_prefix_totals(
    log: &EventLog,
    mut f: impl FnMut(u64, &[u64]),
) -> Result<()> {
    log.validate()?;
    let mut totals = log.per_group_initial.clone();
    f(0, &totals);
    for r in &log.records {
        apply(&mut totals, r);
        f(r.t, &totals);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: u64, v: u8, w: u32, u: u32) -> EventRecord {
        EventRecord { t, v, g_w: GroupLabel::from_index(w as usize - 1), g_u: GroupLabel::from_index(u as usize - 1) }
    }

    #[test]
    fn replay_examples() {
        let log = EventLog::new(vec![5, 5]);
        assert_eq!(replay_group_degrees(&log).unwrap(), vec![vec![5, 5]]);

        let mut log = EventLog::new(vec![5, 5]);
        log.records.push(rec(1, 1, 1, 1));
        let d = replay_group_degrees(&log).unwrap();
        assert_eq!(d[1], vec![7, 5]);
        assert_eq!(d[1].iter().sum::<u64>(), 12);

        let mut log = EventLog::new(vec![5, 5]);
        log.records.push(rec(1, 0, 1, 2));
        assert_eq!(replay_group_degrees(&log).unwrap()[1], vec![6, 6]);
    }

    #[test]
    fn replay_names_offending_step() {
        let mut log = EventLog::new(vec![5, 5]);
        log.records.push(rec(1, 1, 1, 1));
        log.records.push(rec(3, 1, 1, 1));
        match replay_group_degrees(&log) {
            Err(KpaError::Replay { t: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }

        let mut log = EventLog::new(vec![5, 5]);
        log.records.push(rec(1, 1, 1, 3));
        assert!(matches!(replay_group_degrees(&log), Err(KpaError::Replay { t: 1, .. })));
    }

    #[test]
    fn slice_rebases_totals() {
        let mut log = EventLog::new(vec![5, 5]);
        log.records.push(rec(1, 1, 1, 1));
        log.records.push(rec(2, 0, 1, 2));
        log.records.push(rec(3, 0, 2, 2));
        let tail = log.slice(1, 3).unwrap();
        assert_eq!(tail.per_group_initial, vec![7, 5]);
        assert_eq!(tail.n0, 12);
        assert_eq!(tail.records[0].t, 1);
        let full = replay_group_degrees(&log).unwrap();
        let part = replay_group_degrees(&tail).unwrap();
        assert_eq!(full[3], part[2]);
    }
}
