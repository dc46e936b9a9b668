//! Trajectory generation.
//!
//! Two kernels produce the same law for the attachment target:
//!
//! * the collapsed kernel draws `u0` degree-proportionally, keeps it if it is
//!   in the initiator's group, keeps it with probability `theta` otherwise,
//!   and on rejection redirects to a degree-proportional draw inside the
//!   initiator's group;
//! * the mechanistic kernel runs the explicit `gamma`/`alpha` rejection loop.

mod stubs;
pub mod trials;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KpaError, Result};
use crate::events::{EventLog, EventRecord};
use crate::graph::{GraphState, NodeId};
use crate::model::{GroupLabel, MechanisticParams, ModelParams};

pub use stubs::StubIndex;
pub use trials::{run_trials, split_seed, TrialAggregate, TrialConfig, TrialReport, TrialSummary};

/// Cap on redirect rounds of the mechanistic loop and on self-loop resampling.
pub const MAX_REJECTION_ROUNDS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimMode {
    Collapsed,
    Mechanistic(MechanisticParams),
}

/// Switch of `theta` to `theta2` for every step `t > tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeSpec {
    pub tau: u64,
    pub theta2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: u64,
    pub seed: u64,
    pub mode: SimMode,
    pub changepoint: Option<ChangeSpec>,
    /// Resample the edge-step target when it equals the initiator.
    #[serde(default)]
    pub forbid_self_loops: bool,
}

impl SimConfig {
    pub fn collapsed(horizon: u64, seed: u64) -> Self {
        SimConfig {
            horizon,
            seed,
            mode: SimMode::Collapsed,
            changepoint: None,
            forbid_self_loops: false,
        }
    }

    pub fn with_changepoint(mut self, tau: u64, theta2: f64) -> Self {
        self.changepoint = Some(ChangeSpec { tau, theta2 });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(cp) = self.changepoint {
            if cp.tau < 1 || cp.tau > self.horizon {
                return Err(KpaError::Config(format!(
                    "changepoint tau = {} outside 1..={}",
                    cp.tau, self.horizon
                )));
            }
            if !(cp.theta2 > 0.0 && cp.theta2 <= 1.0) {
                return Err(KpaError::Config(format!("theta2 = {} outside (0,1]", cp.theta2)));
            }
            if matches!(self.mode, SimMode::Mechanistic(_)) {
                return Err(KpaError::Config(
                    "changepoint runs are only supported in collapsed mode".into(),
                ));
            }
        }
        if let SimMode::Mechanistic(m) = self.mode {
            crate::model::theta_from_mechanistic(m).map_err(|e| KpaError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Group of each arriving node, drawn from `p`.
#[derive(Debug, Clone)]
pub struct ArrivalSampler {
    dist: WeightedIndex<f64>,
}

impl ArrivalSampler {
    pub fn new(p: &[f64]) -> Result<Self> {
        let dist = WeightedIndex::new(p.iter().copied())
            .map_err(|e| KpaError::Domain(format!("invalid arrival probabilities: {e}")))?;
        Ok(ArrivalSampler { dist })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupLabel {
        GroupLabel::from_index(self.dist.sample(rng))
    }
}

/// A running trajectory: state, stub index and random stream.
#[derive(Debug, Clone)]
pub struct Simulator<R> {
    state: GraphState,
    stubs: StubIndex,
    rng: R,
    forbid_self_loops: bool,
}

impl<R: Rng> Simulator<R> {
    /// Starts from `G_0` built for `params`.
    pub fn new(params: &ModelParams, rng: R) -> Result<Self> {
        params.validate()?;
        Ok(Self::from_state(GraphState::initial(&params.initial_group_sizes()), rng))
    }

    pub fn from_state(state: GraphState, rng: R) -> Self {
        let stubs = StubIndex::from_state(&state);
        Simulator { state, stubs, rng, forbid_self_loops: false }
    }

    pub fn forbid_self_loops(mut self, forbid: bool) -> Self {
        self.forbid_self_loops = forbid;
        self
    }

    pub fn state(&self) -> &GraphState {
        &self.state
    }

    pub fn stubs(&self) -> &StubIndex {
        &self.stubs
    }

    pub fn into_state(self) -> GraphState {
        self.state
    }

    /// Draws a target for an initiator in `group` with the collapsed kernel.
    /// The state is not modified.
    pub fn sample_target_collapsed(&mut self, group: GroupLabel, theta: f64) -> NodeId {
        let u0 = self.stubs.sample_global(&mut self.rng);
        if self.state.group(u0) == group || self.rng.random::<f64>() < theta {
            return u0;
        }
        self.stubs
            .sample_group(group.index(), &mut self.rng)
            .expect("a cross-group rejection implies the initiator's group holds degree")
    }

    /// Draws a target with the explicit rejection loop. Returns the node and
    /// the number of redirect rounds taken after the first pick was refused.
    pub fn sample_target_mechanistic(
        &mut self,
        group: GroupLabel,
        mech: MechanisticParams,
    ) -> Result<(NodeId, usize)> {
        let MechanisticParams { gamma, alpha } = mech;
        let u1 = self.stubs.sample_global(&mut self.rng);
        if self.state.group(u1) == group || self.rng.random::<f64>() < gamma {
            return Ok((u1, 0));
        }
        for round in 1..=MAX_REJECTION_ROUNDS {
            if self.rng.random::<f64>() < alpha {
                let u2 = self
                    .stubs
                    .sample_group(group.index(), &mut self.rng)
                    .ok_or_else(|| KpaError::Internal("empty initiator group".into()))?;
                return Ok((u2, round));
            }
            let u2 = self.sample_outside(group)?;
            if self.rng.random::<f64>() < gamma {
                return Ok((u2, round));
            }
        }
        Err(KpaError::Internal(format!(
            "mechanistic loop exceeded {MAX_REJECTION_ROUNDS} rounds"
        )))
    }

    /// Degree-proportional draw among nodes outside `group`.
    fn sample_outside(&mut self, group: GroupLabel) -> Result<NodeId> {
        for _ in 0..MAX_REJECTION_ROUNDS {
            let u = self.stubs.sample_global(&mut self.rng);
            if self.state.group(u) != group {
                return Ok(u);
            }
        }
        Err(KpaError::Internal("no degree outside the initiator's group".into()))
    }

    /// One step of the collapsed process at homophily `theta`.
    pub fn step_collapsed(
        &mut self,
        theta: f64,
        arrivals: &ArrivalSampler,
        q: f64,
    ) -> Result<EventRecord> {
        self.step_with(arrivals, q, |sim, g| Ok(sim.sample_target_collapsed(g, theta)))
    }

    /// One step of the mechanistic process.
    pub fn step_mechanistic(
        &mut self,
        mech: MechanisticParams,
        arrivals: &ArrivalSampler,
        q: f64,
    ) -> Result<EventRecord> {
        self.step_with(arrivals, q, |sim, g| Ok(sim.sample_target_mechanistic(g, mech)?.0))
    }

    fn step_with(
        &mut self,
        arrivals: &ArrivalSampler,
        q: f64,
        mut kernel: impl FnMut(&mut Self, GroupLabel) -> Result<NodeId>,
    ) -> Result<EventRecord> {
        let vertex_step = self.rng.random::<f64>() < q;
        let t = self.state.time() + 1;
        let (w, g_w, u) = if vertex_step {
            let g_w = arrivals.sample(&mut self.rng);
            // the new node joins only after its target is resolved
            let u = kernel(self, g_w)?;
            let w = self.state.add_node(g_w);
            (w, g_w, u)
        } else {
            let w = self.stubs.sample_global(&mut self.rng);
            let g_w = self.state.group(w);
            let mut u = kernel(self, g_w)?;
            if self.forbid_self_loops {
                let mut attempts = 0;
                while u == w {
                    attempts += 1;
                    if attempts > MAX_REJECTION_ROUNDS {
                        return Err(KpaError::Internal("could not avoid a self-loop".into()));
                    }
                    u = kernel(self, g_w)?;
                }
            }
            (w, g_w, u)
        };
        let g_u = self.state.group(u);
        self.state.add_edge(w, u);
        self.stubs.push(w, g_w.index());
        self.stubs.push(u, g_u.index());
        Ok(EventRecord { t, v: vertex_step as u8, g_w, g_u })
    }
}

/// Runs `cfg.horizon` steps from `G_0`. Deterministic given `cfg.seed`.
pub fn simulate(params: &ModelParams, cfg: &SimConfig) -> Result<(GraphState, EventLog)> {
    params.validate()?;
    cfg.validate()?;
    let arrivals = ArrivalSampler::new(&params.p)?;
    let mut sim = Simulator::new(params, ChaCha8Rng::seed_from_u64(cfg.seed))?
        .forbid_self_loops(cfg.forbid_self_loops);

    let mut log = EventLog::new(sim.state().initial_group_sizes().to_vec());
    log.params_hint = Some(params.clone());
    log.records.reserve(cfg.horizon as usize);

    for t in 1..=cfg.horizon {
        let record = match cfg.mode {
            SimMode::Collapsed => {
                let theta = match cfg.changepoint {
                    Some(cp) if t > cp.tau => cp.theta2,
                    _ => params.theta,
                };
                sim.step_collapsed(theta, &arrivals, params.q)?
            }
            SimMode::Mechanistic(mech) => sim.step_mechanistic(mech, &arrivals, params.q)?,
        };
        log.records.push(record);
    }
    Ok((sim.into_state(), log))
}

/// Exact `m_d^k` counts of a state.
pub fn degree_histogram(state: &GraphState, group: GroupLabel) -> std::collections::BTreeMap<u64, u64> {
    state.degree_histogram(group)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::replay_group_degrees;
    use crate::probability::vertex_connect_prob;

    fn params(theta: f64, p: &[f64], q: f64) -> ModelParams {
        ModelParams { theta, p: p.to_vec(), q, n0: 10 }
    }

    /// 20 nodes over 3 groups with uneven degrees.
    pub(crate) fn frozen_state() -> GraphState {
        let degrees: Vec<u64> = (0..20).map(|i| 1 + (i * 7 % 11) as u64).collect();
        let groups: Vec<GroupLabel> = (0..20).map(|i| GroupLabel::from_index([0, 0, 1, 2, 1][i % 5])).collect();
        GraphState::from_degrees(&degrees, &groups, 3).unwrap()
    }

    fn closed_form(state: &GraphState, g_w: GroupLabel, theta: f64) -> Vec<f64> {
        (0..state.num_nodes() as NodeId)
            .map(|u| {
                vertex_connect_prob(
                    state.group_degree_totals(),
                    state.total_degree(),
                    state.degree(u),
                    g_w,
                    state.group(u),
                    theta,
                )
                .unwrap()
            })
            .collect()
    }

    fn empirical(counts: &[u64], n: u64) -> Vec<f64> {
        counts.iter().map(|&c| c as f64 / n as f64).collect()
    }

    fn tv(a: &[f64], b: &[f64]) -> f64 {
        0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
    }

    #[test]
    fn t_zero_is_initial_graph() {
        let p = params(0.5, &[0.5, 0.5], 0.5);
        let (state, log) = simulate(&p, &SimConfig::collapsed(0, 1)).unwrap();
        assert!(log.is_empty());
        assert_eq!(state, GraphState::initial(&[5, 5]));
    }

    #[test]
    fn same_seed_same_log() {
        let p = params(0.4, &[0.5, 0.3, 0.2], 0.6);
        let a = simulate(&p, &SimConfig::collapsed(2000, 99)).unwrap();
        let b = simulate(&p, &SimConfig::collapsed(2000, 99)).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
        let c = simulate(&p, &SimConfig::collapsed(2000, 100)).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn invariants_hold_along_a_run() {
        let p = params(0.3, &[0.5, 0.3, 0.2], 0.5);
        let arrivals = ArrivalSampler::new(&p.p).unwrap();
        let mut sim = Simulator::new(&p, ChaCha8Rng::seed_from_u64(5)).unwrap();
        for _ in 0..3000 {
            sim.step_collapsed(p.theta, &arrivals, p.q).unwrap();
            sim.state().check_invariants().unwrap();
            assert!(sim.stubs().consistent_with(sim.state()));
        }
    }

    #[test]
    fn replay_matches_simulated_totals() {
        let p = params(0.7, &[0.2, 0.4, 0.4], 0.3);
        let (state, log) = simulate(&p, &SimConfig::collapsed(5000, 3)).unwrap();
        let traj = replay_group_degrees(&log).unwrap();
        assert_eq!(traj.last().unwrap(), state.group_degree_totals());
        assert_eq!(traj.last().unwrap().iter().sum::<u64>(), 2 * 5000 + 10);
    }

    #[test]
    fn collapsed_kernel_matches_closed_form() {
        let state = frozen_state();
        let draws = 200_000u64;
        for &theta in &[0.2, 0.6, 1.0] {
            for k in 0..3 {
                let g = GroupLabel::from_index(k);
                let mut sim = Simulator::from_state(state.clone(), ChaCha8Rng::seed_from_u64(k as u64));
                let mut counts = vec![0u64; state.num_nodes()];
                for _ in 0..draws {
                    counts[sim.sample_target_collapsed(g, theta) as usize] += 1;
                }
                let d = tv(&empirical(&counts, draws), &closed_form(&state, g, theta));
                assert!(d < 0.01, "theta {theta} group {k}: tv {d}");
            }
        }
    }

    #[test]
    fn mechanistic_kernel_matches_collapsed_law() {
        let state = frozen_state();
        let mech = MechanisticParams { gamma: 0.5, alpha: 0.5 };
        let theta = crate::model::theta_from_mechanistic(mech).unwrap();
        let g = GroupLabel::from_index(1);
        let draws = 200_000u64;
        let mut sim = Simulator::from_state(state.clone(), ChaCha8Rng::seed_from_u64(11));
        let mut counts = vec![0u64; state.num_nodes()];
        for _ in 0..draws {
            counts[sim.sample_target_mechanistic(g, mech).unwrap().0 as usize] += 1;
        }
        let d = tv(&empirical(&counts, draws), &closed_form(&state, g, theta));
        assert!(d < 0.02, "tv {d}");
    }

    #[test]
    fn redirect_rounds_are_geometric() {
        // given a refused first pick, each round ends with prob 1 - (1-a)(1-g)
        let state = frozen_state();
        let mech = MechanisticParams { gamma: 0.3, alpha: 0.4 };
        let stop = 1.0 - (1.0 - mech.alpha) * (1.0 - mech.gamma);
        let mut sim = Simulator::from_state(state, ChaCha8Rng::seed_from_u64(2));
        let g = GroupLabel::from_index(0);
        let mut hist = [0u64; 8];
        let mut refused = 0u64;
        for _ in 0..200_000 {
            let (_, rounds) = sim.sample_target_mechanistic(g, mech).unwrap();
            if rounds > 0 {
                refused += 1;
                if rounds <= hist.len() {
                    hist[rounds - 1] += 1;
                }
            }
        }
        for (i, &c) in hist.iter().enumerate().take(5) {
            let want = (1.0 - stop).powi(i as i32) * stop;
            let got = c as f64 / refused as f64;
            let se = (want * (1.0 - want) / refused as f64).sqrt();
            assert!((got - want).abs() < 5.0 * se + 1e-4, "round {}: {got} vs {want}", i + 1);
        }
    }

    #[test]
    fn pure_preferential_attachment_when_homophily_off() {
        // theta = 1 and K = 1 both reduce the kernel to d_u / sum d; the share of
        // degree-one nodes then tends to M_1 / q = 2 / (4 - q)
        let q = 0.5;
        let runs = [params(1.0, &[0.5, 0.5], q), params(0.3, &[1.0], q)];
        for p in &runs {
            let state = simulate(p, &SimConfig::collapsed(40_000, 8)).unwrap().0;
            let ones = state.degrees().iter().filter(|&&d| d == 1).count() as f64;
            let share = ones / state.num_nodes() as f64;
            assert!((share - 2.0 / (4.0 - q)).abs() < 0.02, "{share}");
        }
    }

    #[test]
    fn changepoint_shifts_same_group_rate() {
        let p = params(0.1, &[0.5, 0.3, 0.2], 0.5);
        let cfg = SimConfig::collapsed(20_000, 4).with_changepoint(10_000, 0.9);
        let (_, log) = simulate(&p, &cfg).unwrap();
        let rate = |r: &[EventRecord]| r.iter().filter(|r| r.is_same_group()).count() as f64 / r.len() as f64;
        let before = rate(&log.records[..10_000]);
        let after = rate(&log.records[10_000..]);
        let sq = 0.25 + 0.09 + 0.04;
        assert!((before - (1.0 + 0.1 * (sq - 1.0))).abs() < 0.03);
        assert!((after - (1.0 + 0.9 * (sq - 1.0))).abs() < 0.03);
    }

    #[test]
    fn forbid_self_loops_flag() {
        let p = params(0.5, &[0.5, 0.5], 0.1);
        let mut cfg = SimConfig::collapsed(5000, 12);
        cfg.forbid_self_loops = true;
        let (state, _) = simulate(&p, &cfg).unwrap();
        assert!(state.edges().iter().all(|&(w, u)| w != u));
        let (state, _) = simulate(&p, &SimConfig::collapsed(5000, 12)).unwrap();
        assert!(state.edges().iter().any(|&(w, u)| w == u));
    }

    #[test]
    fn invalid_configs_rejected() {
        let p = params(0.5, &[0.5, 0.5], 0.5);
        assert!(simulate(&p, &SimConfig::collapsed(100, 1).with_changepoint(0, 0.5)).is_err());
        assert!(simulate(&p, &SimConfig::collapsed(100, 1).with_changepoint(50, 0.0)).is_err());
        let mut cfg = SimConfig::collapsed(100, 1).with_changepoint(50, 0.5);
        cfg.mode = SimMode::Mechanistic(MechanisticParams { gamma: 0.5, alpha: 0.5 });
        assert!(simulate(&p, &cfg).is_err());
    }

    #[test]
    fn vertex_step_never_self_targets() {
        let p = params(0.5, &[0.5, 0.5], 1.0);
        let (state, _) = simulate(&p, &SimConfig::collapsed(3000, 21)).unwrap();
        assert!(state.edges().iter().all(|&(w, u)| w != u && w > u));
    }
}
