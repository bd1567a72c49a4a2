//! The coverage planner's server state: request intake, the start/skip/stop
//! decision, the dynamic participant threshold η, and full-path bookkeeping.
//!
//! [`Coordinator`] is a plain state machine. Callers own the mutual
//! exclusion: every `&mut self` method is one critical section, and the
//! planning computation runs on a [`Snapshot`] outside of it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfp::{RoundInput, RoundPlan};
use crate::kinematics::{Clk, Path, RobotId, RobotState};
use crate::workspace::{unassigned_goals, Cell, CellClass, GlobalView, LocalView, View, ViewError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestMsg {
    pub id: RobotId,
    pub state: RobotState,
    pub view: LocalView,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseMsg {
    pub path: Path,
    /// CLK value at which the robot starts following `path`.
    pub ts: Clk,
}

/// When rounds may start.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheduling {
    /// Plan whenever the expected requests are in, while others keep moving.
    #[default]
    Concurrent,
    /// Plan only once every robot has requested (η fixed at R).
    Synchronous,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoordinatorError {
    #[error("request from unknown robot {0}")]
    UnknownRobot(RobotId),
    #[error("{0} requested twice without receiving a path")]
    DuplicateRequest(RobotId),
    #[error("{robot} reports {reported:?} but its full path ends at {expected:?}")]
    StateMismatch { robot: RobotId, reported: RobotState, expected: RobotState },
    #[error("{robot} stands on {cell}, which its own view does not mark covered")]
    UncoveredStart { robot: RobotId, cell: Cell },
    #[error(transparent)]
    View(#[from] ViewError),
    #[error("no planning round is in flight")]
    NoRoundInFlight,
    #[error("paths stamped {t_start} cannot be dispatched at CLK {clk}")]
    StaleTimestamp { t_start: Clk, clk: Clk },
    #[error("{0} is not a participant of the finished round")]
    NotAParticipant(RobotId),
}

/// Frozen inputs of one planning round.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub round_id: usize,
    pub clk: Clk,
    pub view: GlobalView,
    pub reserved: BTreeSet<Cell>,
    pub participants: Vec<(RobotId, RobotState)>,
    pub full_paths: BTreeMap<RobotId, Path>,
}

impl Snapshot {
    pub fn input(&self) -> RoundInput<'_> {
        RoundInput {
            view: &self.view,
            reserved: &self.reserved,
            participants: &self.participants,
            full_paths: &self.full_paths,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Decision {
    /// Not enough requests yet, or a round is running.
    Wait,
    Start(Box<Snapshot>),
    /// No unassigned goal for the current participants; η was raised.
    Skip,
    /// Every robot is waiting and no goal is left.
    Stop,
    /// The same participants just had a round with nobody active at this
    /// CLK; retry once the clock has moved.
    Defer,
}

impl Decision {
    pub fn label(&self) -> &'static str {
        match self {
            Decision::Wait => "wait",
            Decision::Start(_) => "start",
            Decision::Skip => "skip",
            Decision::Stop => "stop",
            Decision::Defer => "defer",
        }
    }
}

/// A round ending, or an evaluation of the round criteria that did not just wait.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub clk: Clk,
    pub decision: String,
    pub participants: Vec<RobotId>,
    pub reserved: Vec<Cell>,
    /// η after the decision took effect.
    pub eta: usize,
}

/// One line of the round log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_id: usize,
    pub clk_begin: Clk,
    pub clk_end: Clk,
    pub t_wall_ms: u64,
    pub r_star: usize,
    pub n_active: usize,
    pub n_inactive: usize,
    pub t_start: Clk,
    pub retries: usize,
    pub t_begin_ms: u64,
}

pub const ROUND_LOG_HEADER: &str = "round_id,clk_begin,clk_end,t_wall_ms,r_star,n_active,n_inactive,t_start,retries,t_begin_ms";

pub fn write_round_log(records: &[RoundRecord]) -> String {
    let mut out = String::from(ROUND_LOG_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.round_id, r.clk_begin, r.clk_end, r.t_wall_ms, r.r_star, r.n_active, r.n_inactive, r.t_start, r.retries, r.t_begin_ms
        );
    }
    out
}

/// Goal cells of non-participants that already have a path.
pub fn reserved_goals<'a>(nonparticipants: impl IntoIterator<Item = &'a RobotId>, pi: &BTreeMap<RobotId, Path>) -> BTreeSet<Cell> {
    nonparticipants
        .into_iter()
        .filter_map(|k| pi.get(k))
        .filter(|p| !p.is_empty())
        .map(|p| p.last().cell)
        .collect()
}

#[derive(Clone, Debug)]
pub struct Coordinator {
    robots: usize,
    scheduling: Scheduling,
    i_par: BTreeSet<RobotId>,
    s: BTreeMap<RobotId, RobotState>,
    w: GlobalView,
    eta: usize,
    t_stop: Vec<Clk>,
    pi: BTreeMap<RobotId, Path>,
    round_in_flight: bool,
    next_round: usize,
    stopped: bool,
    futile: Option<(BTreeSet<RobotId>, Clk)>,
    decisions: Vec<DecisionRecord>,
    rounds: Vec<RoundRecord>,
}

impl Coordinator {
    pub fn new(robots: usize, width: u32, height: u32, scheduling: Scheduling) -> Self {
        Self {
            robots,
            scheduling,
            i_par: BTreeSet::new(),
            s: BTreeMap::new(),
            w: View::unexplored(width, height),
            eta: robots,
            t_stop: vec![0; robots],
            pi: BTreeMap::new(),
            round_in_flight: false,
            next_round: 1,
            stopped: false,
            futile: None,
            decisions: Vec::new(),
            rounds: Vec::new(),
        }
    }

    pub fn robots(&self) -> usize {
        self.robots
    }

    pub fn participants(&self) -> &BTreeSet<RobotId> {
        &self.i_par
    }

    pub fn eta(&self) -> usize {
        self.eta
    }

    pub fn t_stop(&self, robot: RobotId) -> Clk {
        self.t_stop[robot.index()]
    }

    pub fn global_view(&self) -> &GlobalView {
        &self.w
    }

    pub fn full_paths(&self) -> &BTreeMap<RobotId, Path> {
        &self.pi
    }

    pub fn round_in_flight(&self) -> bool {
        self.round_in_flight
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    pub fn decisions(&self) -> &[DecisionRecord] {
        &self.decisions
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    fn nonparticipants(&self) -> BTreeSet<RobotId> {
        (0..self.robots).map(RobotId::from_index).filter(|r| !self.i_par.contains(r)).collect()
    }

    /// Register a robot's request and evaluate the round criteria.
    pub fn receive_local_view(&mut self, msg: RequestMsg, clk: Clk) -> Result<Decision, CoordinatorError> {
        let id = msg.id;
        if id.0 == 0 || id.index() >= self.robots {
            return Err(CoordinatorError::UnknownRobot(id));
        }
        if self.i_par.contains(&id) {
            return Err(CoordinatorError::DuplicateRequest(id));
        }
        if msg.view.class(msg.state.cell) != CellClass::Covered {
            return Err(CoordinatorError::UncoveredStart { robot: id, cell: msg.state.cell });
        }
        if let Some(pi) = self.pi.get(&id) {
            if pi.last() != msg.state {
                return Err(CoordinatorError::StateMismatch { robot: id, reported: msg.state, expected: pi.last() });
            }
        }
        self.w.fuse(&msg.view)?;
        self.pi.entry(id).or_insert_with(|| Path::singleton(msg.state));
        self.i_par.insert(id);
        self.s.insert(id, msg.state);
        Ok(self.check_cpp_criteria(clk))
    }

    /// Start, skip or stop, or wait for more requests.
    pub fn check_cpp_criteria(&mut self, clk: Clk) -> Decision {
        if self.stopped {
            return Decision::Stop;
        }
        if self.round_in_flight || self.i_par.is_empty() || self.i_par.len() < self.eta {
            return Decision::Wait;
        }
        let nonpar = self.nonparticipants();
        let reserved = reserved_goals(&nonpar, &self.pi);
        let decision = if !unassigned_goals(&self.w, &reserved).is_empty() {
            if self.futile.as_ref() == Some(&(self.i_par.clone(), clk)) {
                Decision::Defer
            } else {
                let snapshot = Snapshot {
                    round_id: self.next_round,
                    clk,
                    view: self.w.clone(),
                    reserved: reserved.clone(),
                    participants: std::mem::take(&mut self.s).into_iter().collect(),
                    full_paths: self.pi.clone(),
                };
                self.next_round += 1;
                self.i_par.clear();
                self.eta = 0;
                self.round_in_flight = true;
                Decision::Start(Box::new(snapshot))
            }
        } else if self.i_par.len() == self.robots {
            self.stopped = true;
            Decision::Stop
        } else {
            self.increment_eta(&nonpar, clk);
            Decision::Skip
        };
        let participants: Vec<RobotId> = match &decision {
            Decision::Start(s) => s.participants.iter().map(|(id, _)| *id).collect(),
            _ => self.i_par.iter().copied().collect(),
        };
        debug!("CLK {clk}: {} with {} participants, eta {}", decision.label(), participants.len(), self.eta);
        self.decisions.push(DecisionRecord {
            clk,
            decision: decision.label().to_string(),
            participants,
            reserved: reserved.into_iter().collect(),
            eta: self.eta,
        });
        decision
    }

    /// Raise η by the robots of `set` expected to request next.
    ///
    /// Robots already done by `clk` whose request has not arrived yet come
    /// first; otherwise those finishing at the earliest future CLK.
    pub fn increment_eta(&mut self, set: &BTreeSet<RobotId>, clk: Clk) {
        if self.scheduling == Scheduling::Synchronous {
            return;
        }
        let pending = set.iter().filter(|r| !self.i_par.contains(r) && self.t_stop[r.index()] <= clk).count();
        if pending > 0 {
            self.eta += pending;
            return;
        }
        let Some(t_min) = set.iter().map(|r| self.t_stop[r.index()]).filter(|&t| t > clk).min() else {
            warn!("no robot of {set:?} finishes after CLK {clk}; eta stays {}", self.eta);
            return;
        };
        self.eta += set.iter().filter(|r| self.t_stop[r.index()] == t_min).count();
    }

    /// Commit a finished round: extend full paths of active participants,
    /// re-enqueue inactive ones, and set η for the next round. Returns the
    /// responses to dispatch, in robot order. Nothing changes on error.
    pub fn finish_round(&mut self, plan: &RoundPlan, clk: Clk) -> Result<Vec<(RobotId, ResponseMsg)>, CoordinatorError> {
        if !self.round_in_flight {
            return Err(CoordinatorError::NoRoundInFlight);
        }
        if clk >= plan.t_start {
            return Err(CoordinatorError::StaleTimestamp { t_start: plan.t_start, clk });
        }
        if let Some((id, _)) = plan.participants.iter().find(|(id, _)| !self.pi.contains_key(id)) {
            return Err(CoordinatorError::NotAParticipant(*id));
        }

        self.eta = 0;
        let mut responses = Vec::new();
        let mut inactive = BTreeSet::new();
        for ((id, s0), goal) in plan.participants.iter().zip(&plan.goals) {
            let sigma = &plan.sigma[id];
            if goal.is_some() {
                let i = id.index();
                let zeta = (plan.t_start - self.t_stop[i] - 1) as usize;
                let pi = self.pi.get_mut(id).expect("checked above");
                for &s in std::iter::repeat_n(s0, zeta).chain(sigma.states()) {
                    pi.push(s);
                }
                self.t_stop[i] = plan.t_start + sigma.len() as Clk;
                debug_assert_eq!(pi.len() as Clk, self.t_stop[i]);
                responses.push((*id, ResponseMsg { path: sigma.clone(), ts: plan.t_start }));
            } else {
                inactive.insert(*id);
                self.i_par.insert(*id);
                self.s.insert(*id, *s0);
                self.eta += 1;
            }
        }
        let participants: BTreeSet<RobotId> = plan.participants.iter().map(|(id, _)| *id).collect();
        for k in (0..self.robots).map(RobotId::from_index) {
            if !participants.contains(&k) && self.t_stop[k.index()] <= clk {
                self.eta += 1;
            }
        }
        if self.eta == 0 {
            let all = (0..self.robots).map(RobotId::from_index).collect();
            self.increment_eta(&all, clk);
        }
        if self.scheduling == Scheduling::Synchronous {
            self.eta = self.robots;
        }
        self.futile = (responses.is_empty()).then_some((inactive, clk));
        self.decisions.push(DecisionRecord {
            clk,
            decision: "round-end".to_string(),
            participants: self.i_par.iter().copied().collect(),
            reserved: Vec::new(),
            eta: self.eta,
        });

        let ended = plan.ended_ms;
        self.rounds.push(RoundRecord {
            round_id: self.rounds.len() + 1,
            clk_begin: plan.clk_begin,
            clk_end: clk,
            t_wall_ms: ended - plan.began_ms,
            r_star: plan.participants.len(),
            n_active: responses.len(),
            n_inactive: plan.participants.len() - responses.len(),
            t_start: plan.t_start,
            retries: plan.retries(),
            t_begin_ms: plan.began_ms,
        });
        self.round_in_flight = false;
        Ok(responses)
    }
}
