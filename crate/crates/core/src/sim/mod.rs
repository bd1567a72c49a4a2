//! Mission harness: deploys robots, runs the coordinator and the robots on a
//! virtual or wall clock until coverage completes, and audits the result.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfp::{Attempt, CfpError, CfpEvent, RoundPlan};
use crate::coordinator::{CoordinatorError, DecisionRecord, RoundRecord, Scheduling};
use crate::kinematics::{Clk, Heading, Path, RobotId, RobotKind, RobotState};
use crate::workspace::{SensorModel, ViewError, Workspace};

mod metrics;
mod virtual_time;
mod wall_clock;

pub use metrics::{aggregate, classify_intervals, planning_windows, Aggregate, IntervalClasses, MetricSummary, MissionReport};

/// Virtual cost of planning work, in milliseconds of analog time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerModel {
    pub cop_ms: u64,
    pub cfp_ms: u64,
    pub cfp_per_participant_ms: u64,
    /// Extra cost of the first collision-free attempt of a round, e.g. to
    /// force a look-ahead overrun.
    pub first_attempt_extra_ms: u64,
}

impl PlannerModel {
    pub const INSTANT: PlannerModel = PlannerModel { cop_ms: 0, cfp_ms: 0, cfp_per_participant_ms: 0, first_attempt_extra_ms: 0 };
}

impl Default for PlannerModel {
    fn default() -> Self {
        Self { cop_ms: 150, cfp_ms: 200, cfp_per_participant_ms: 50, first_attempt_extra_ms: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClockMode {
    /// Deterministic event loop; planning and message delivery take modelled time.
    Virtual { planner: PlannerModel, transport_delay_ms: u64 },
    /// Real threads and real planning time.
    WallClock,
}

impl Default for ClockMode {
    fn default() -> Self {
        ClockMode::Virtual { planner: PlannerModel::default(), transport_delay_ms: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct MissionConfig {
    pub workspace: Workspace,
    pub robots: usize,
    pub kind: RobotKind,
    pub seed: u64,
    /// Fixed deployment; drawn from `seed` when absent.
    pub starts: Option<Vec<RobotState>>,
    pub sensor: SensorModel,
    pub tau_ms: u64,
    /// Slack in the look-ahead update; 50 ms on a wall clock, 0 on a virtual one by default.
    pub bias_ms: Option<u64>,
    pub clock: ClockMode,
    pub scheduling: Scheduling,
}

impl MissionConfig {
    pub fn new(workspace: Workspace, robots: usize, kind: RobotKind, seed: u64) -> Self {
        Self {
            workspace,
            robots,
            kind,
            seed,
            starts: None,
            sensor: SensorModel::default(),
            tau_ms: 1000,
            bias_ms: None,
            clock: ClockMode::default(),
            scheduling: Scheduling::Concurrent,
        }
    }

    pub fn bias(&self) -> u64 {
        self.bias_ms.unwrap_or(match self.clock {
            ClockMode::Virtual { .. } => 0,
            ClockMode::WallClock => 50,
        })
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("free space is not 4-connected")]
    Disconnected,
    #[error("{robots} robots need distinct free cells but only {free} exist")]
    TooManyRobots { robots: usize, free: usize },
    #[error("invalid deployment: {0}")]
    Deployment(String),
    #[error("tau must be positive")]
    ZeroTau,
    #[error(transparent)]
    View(#[from] ViewError),
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
    #[error(transparent)]
    Planner(#[from] CfpError),
    #[error("mission stalled at CLK {clk}: {waiting} waiting, eta {eta}")]
    Stalled { clk: Clk, waiting: usize, eta: usize },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// What one planning round decided, for inspection.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundDetail {
    pub round_id: usize,
    pub participants: Vec<RobotId>,
    pub active: Vec<RobotId>,
    /// Path length per active participant.
    pub path_lens: BTreeMap<RobotId, usize>,
    pub attempts: Vec<Attempt>,
    pub events: Vec<CfpEvent>,
}

impl RoundDetail {
    fn from_plan(round_id: usize, plan: &RoundPlan) -> Self {
        Self {
            round_id,
            participants: plan.participants.iter().map(|(id, _)| *id).collect(),
            active: plan.active().collect(),
            path_lens: plan.active().map(|id| (id, plan.sigma[&id].len())).collect(),
            attempts: plan.attempts.clone(),
            events: plan.events.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MissionOutcome {
    pub report: MissionReport,
    pub starts: Vec<RobotState>,
    /// Full path of every robot, anchored at CLK 0.
    pub full_paths: BTreeMap<RobotId, Path>,
    pub rounds: Vec<RoundRecord>,
    pub details: Vec<RoundDetail>,
    pub decisions: Vec<DecisionRecord>,
}

impl MissionOutcome {
    /// Every robot's state at each CLK up to Λ.
    pub fn trajectories(&self) -> BTreeMap<RobotId, Vec<RobotState>> {
        let lambda = self.report.lambda as usize;
        self.full_paths.iter().map(|(&id, p)| (id, (0..=lambda).map(|t| p.state_at(t)).collect())).collect()
    }

    pub fn trace_csv(&self) -> String {
        crate::kinematics::write_trace(&self.trajectories())
    }

    pub fn round_log_csv(&self) -> String {
        crate::coordinator::write_round_log(&self.rounds)
    }
}

/// Distinct random free cells, with random headings for oriented robots.
pub fn deploy(ws: &Workspace, robots: usize, kind: RobotKind, seed: u64) -> Result<Vec<RobotState>, SimError> {
    let free = ws.free_cells();
    if robots > free.len() {
        return Err(SimError::TooManyRobots { robots, free: free.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells: Vec<_> = free.choose_multiple(&mut rng, robots).copied().collect();
    Ok(cells
        .into_iter()
        .map(|c| match kind {
            RobotKind::Holonomic => RobotState::holonomic(c),
            RobotKind::DifferentialDrive => RobotState::oriented(c, Heading::ALL[rng.gen_range(0..4)]),
        })
        .collect())
}

fn preflight(cfg: &MissionConfig) -> Result<Vec<RobotState>, SimError> {
    if cfg.tau_ms == 0 {
        return Err(SimError::ZeroTau);
    }
    if !cfg.workspace.free_space_connected() {
        return Err(SimError::Disconnected);
    }
    let starts = match &cfg.starts {
        None => deploy(&cfg.workspace, cfg.robots, cfg.kind, cfg.seed)?,
        Some(s) => {
            if s.len() != cfg.robots {
                return Err(SimError::Deployment(format!("{} start states for {} robots", s.len(), cfg.robots)));
            }
            for (i, st) in s.iter().enumerate() {
                if !cfg.workspace.is_free(st.cell) {
                    return Err(SimError::Deployment(format!("robot {} starts on blocked cell {}", i + 1, st.cell)));
                }
                if st.kind() != cfg.kind {
                    return Err(SimError::Deployment(format!("robot {} start state does not match the robot kind", i + 1)));
                }
                if s[..i].iter().any(|o| o.cell == st.cell) {
                    return Err(SimError::Deployment(format!("two robots start on {}", st.cell)));
                }
            }
            s.clone()
        }
    };
    if starts.is_empty() {
        return Err(SimError::Deployment("no robots".into()));
    }
    Ok(starts)
}

/// Run one mission to completion.
pub fn run_mission(cfg: &MissionConfig) -> Result<MissionOutcome, SimError> {
    let starts = preflight(cfg)?;
    match cfg.clock {
        ClockMode::Virtual { planner, transport_delay_ms } => virtual_time::run(cfg, starts, planner, transport_delay_ms),
        ClockMode::WallClock => wall_clock::run(cfg, starts),
    }
}

/// Seed of the `k`-th repeat.
pub fn repeat_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add(k as u64)
}

/// `repeats` independent missions with seeds `seed, seed + 1, ...`, on a
/// pool of `threads` workers. Results come back in repeat order.
pub fn run_repeats(cfg: &MissionConfig, repeats: usize, threads: usize) -> Result<Vec<Result<MissionOutcome, SimError>>, SimError> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build().map_err(|e| SimError::ThreadPool(e.to_string()))?;
    Ok(pool.install(|| {
        (0..repeats)
            .into_par_iter()
            .map(|k| {
                let mut c = cfg.clone();
                c.seed = repeat_seed(cfg.seed, k);
                run_mission(&c)
            })
            .collect()
    }))
}

#[cfg(test)]
mod tests;
