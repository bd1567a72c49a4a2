//! Collision-free paths for a planning round's participants.
//!
//! Participants are planned against the frozen remaining paths of every
//! non-participant. The repair loop removes crossover and nested path pairs,
//! orders participants by their movement constraints, and prefixes Halt moves
//! until every path is conflict-free, inactivating participants whose
//! conflicts cannot be resolved.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cop::{self, Assignment, CopError, CostMatrix, SearchTree};
use crate::kinematics::{Clk, Path, RobotId, RobotState};
use crate::workspace::{Cell, CellClass, View};

mod offsets;
mod precedence;
mod repair;

pub use offsets::{compute_start_offsets, offset_bound, Conflict, OffsetOutcome, ReservationTable};
pub use precedence::{absolute_precedence, break_precedence_cycles, compute_precedences, AbsolutePrecedence, PrecedenceMatrix};
pub use repair::{crossover_pairs, nested_pairs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwapKind {
    Crossover,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InactivationReason {
    CrossoverFallback,
    NestedFallback,
    PrecedenceCycle { cycle: Vec<RobotId> },
    Blocked { by: RobotId },
}

/// Something the repair loop did, in order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CfpEvent {
    Swapped { a: RobotId, b: RobotId, kind: SwapKind },
    Reassigned { robots: Vec<RobotId> },
    Inactivated { robot: RobotId, reason: InactivationReason },
    /// A robot given a path that avoids every other robot after the loop
    /// left a round with all robots participating and nobody active.
    Rescued { robot: RobotId, goal: Cell },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CfpError {
    #[error(transparent)]
    Cop(#[from] CopError),
    #[error("repair loop exceeded {0} iterations")]
    IterationCap(usize),
    #[error("look-ahead loop needed {attempts} attempts, more than the allowed {limit}")]
    RetryBound { attempts: usize, limit: usize },
}

/// Remaining path of every non-participant from `t_start` on: its last
/// state if it has arrived by then, else the unexecuted suffix.
pub fn remaining_paths(full: &BTreeMap<RobotId, Path>, nonparticipants: &BTreeSet<RobotId>, t_start: Clk) -> BTreeMap<RobotId, Path> {
    nonparticipants
        .iter()
        .map(|&k| {
            let pi = &full[&k];
            let rem = if pi.len() as Clk <= t_start {
                Path::singleton(pi.last())
            } else {
                pi.slice(t_start as usize, pi.len())
            };
            (k, rem)
        })
        .collect()
}

/// Result of [`cfp_for_par`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CfpOutcome {
    pub gamma: Assignment,
    /// Repaired paths before offsetting.
    pub omega: Vec<Path>,
    pub offsets: Vec<usize>,
    /// Offset paths; inactive participants hold a single state.
    pub sigma: Vec<Path>,
    pub events: Vec<CfpEvent>,
    pub iterations: usize,
}

impl CfpOutcome {
    pub fn active_count(&self) -> usize {
        self.gamma.active_count()
    }
}

/// Repair, order and offset participants' paths until a pass leaves the
/// assignment unchanged.
pub fn cfp_for_par(
    view: &View,
    delta: &CostMatrix,
    gamma: Assignment,
    phi: Vec<Path>,
    sigma_rem: &BTreeMap<RobotId, Path>,
) -> Result<CfpOutcome, CfpError> {
    let robots = delta.participants.len() + sigma_rem.len();
    let cap = 2 * robots + 2;
    let mut gamma = gamma;
    let mut paths = phi;
    let mut events = Vec::new();
    for iteration in 1..=cap {
        let mut fix = repair::Repair::new(delta, gamma, paths);
        fix.run();
        let (g, p, ev) = fix.into_parts();
        gamma = g;
        paths = p;
        events.extend(ev);

        let theta = compute_precedences(delta, &gamma, &paths, sigma_rem);
        match absolute_precedence(&theta) {
            AbsolutePrecedence::Cycle(cycle) => {
                let victim = break_precedence_cycles(delta, &mut gamma, &cycle);
                let row = delta.row_of(victim).expect("participant");
                paths[row] = Path::singleton(delta.participants[row].1);
                events.push(CfpEvent::Inactivated { robot: victim, reason: InactivationReason::PrecedenceCycle { cycle } });
            }
            AbsolutePrecedence::Order(order) => {
                let off = compute_start_offsets(delta, &gamma, &paths, &order, sigma_rem);
                events.extend(off.events);
                if off.gamma == gamma {
                    let mut out = CfpOutcome {
                        sigma: paths.iter().zip(&off.offsets).map(|(p, &u)| p.with_halt_prefix(u)).collect(),
                        gamma,
                        omega: paths,
                        offsets: off.offsets,
                        events,
                        iterations: iteration,
                    };
                    if sigma_rem.is_empty() && out.active_count() == 0 && !delta.goals.is_empty() {
                        rescue(view, delta, &mut out);
                    }
                    return Ok(out);
                }
                for (row, g) in off.gamma.goal_of.iter().enumerate() {
                    if g.is_none() {
                        paths[row] = Path::singleton(delta.participants[row].1);
                    }
                }
                gamma = off.gamma;
            }
        }
    }
    Err(CfpError::IterationCap(cap))
}

/// Activate the single cheapest (robot, goal) pair whose path avoids every
/// other robot's cell. Everyone else stands still, so the path is safe.
fn rescue(view: &View, delta: &CostMatrix, out: &mut CfpOutcome) {
    let mut best: Option<(u32, usize, usize, Path)> = None;
    for (row, &(_, start)) in delta.participants.iter().enumerate() {
        let mut blocked = view.clone();
        for (other, &(_, s)) in delta.participants.iter().enumerate() {
            if other != row {
                blocked.set(s.cell, CellClass::Obstacle);
            }
        }
        let tree = SearchTree::build(&blocked, start);
        for (g, &goal) in delta.goals.iter().enumerate() {
            if let Some(c) = tree.cost_to(goal).finite() {
                if best.as_ref().is_none_or(|b| (c, row, g) < (b.0, b.1, b.2)) {
                    best = Some((c, row, g, tree.path_to(goal).expect("finite cost has a path")));
                }
            }
        }
    }
    if let Some((_, row, g, path)) = best {
        out.gamma.goal_of[row] = Some(g);
        out.omega[row] = path.clone();
        out.sigma[row] = path;
        out.offsets[row] = 0;
        out.events.push(CfpEvent::Rescued { robot: delta.participants[row].0, goal: delta.goals[g] });
    }
}

/// Read-only view of time for the planner. Virtual clocks also advance
/// their analog time when told how much planning work was done.
pub trait PlannerClock {
    fn clk(&self) -> Clk;
    fn now_ms(&self) -> u64;
    fn spend(&mut self, _phase: PlanPhase) {}
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanPhase {
    Cop { participants: usize },
    Cfp { participants: usize, attempt: usize },
}

/// Look-ahead after an overrun attempt that ran from `t_start_ms` to `t_end_ms`.
/// May be zero or negative when the clock is far ahead; callers clamp.
pub fn update_lookahead(t_start_ms: u64, t_end_ms: u64, bias_ms: u64, tau_ms: u64, clk: Clk) -> i64 {
    let predicted = t_end_ms + (t_end_ms - t_start_ms) + bias_ms;
    1 + (predicted / tau_ms) as i64 - clk as i64
}

/// One look-ahead attempt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub t_start: Clk,
    pub began_ms: u64,
    pub ended_ms: u64,
    pub clk_at_end: Clk,
}

/// Output of one planning round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundPlan {
    pub participants: Vec<(RobotId, RobotState)>,
    pub goals: Vec<Option<Cell>>,
    /// Timestamped paths; inactive participants hold their start state.
    pub sigma: BTreeMap<RobotId, Path>,
    pub t_start: Clk,
    pub attempts: Vec<Attempt>,
    pub events: Vec<CfpEvent>,
    pub cfp_iterations: usize,
    pub clk_begin: Clk,
    pub began_ms: u64,
    pub ended_ms: u64,
}

impl RoundPlan {
    pub fn active(&self) -> impl Iterator<Item = RobotId> + '_ {
        self.participants.iter().zip(&self.goals).filter(|(_, g)| g.is_some()).map(|((id, _), _)| *id)
    }

    pub fn is_active(&self, robot: RobotId) -> bool {
        self.active().any(|r| r == robot)
    }

    pub fn active_count(&self) -> usize {
        self.goals.iter().filter(|g| g.is_some()).count()
    }

    pub fn retries(&self) -> usize {
        self.attempts.len().saturating_sub(1)
    }
}

/// Everything a planning round reads from the coordinator.
#[derive(Clone, Debug)]
pub struct RoundInput<'a> {
    pub view: &'a View,
    pub reserved: &'a BTreeSet<Cell>,
    pub participants: &'a [(RobotId, RobotState)],
    /// Full path of every robot, anchored at CLK 0.
    pub full_paths: &'a BTreeMap<RobotId, Path>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LookAheadConfig {
    pub tau_ms: u64,
    pub bias_ms: u64,
    /// Attempts allowed before the round fails; `None` means unlimited.
    pub max_attempts: Option<usize>,
}

/// Assignment once, then collision-free planning repeated until the chosen
/// timestamp is still in the future when planning ends.
pub fn concpp_for_par(input: RoundInput<'_>, clock: &mut dyn PlannerClock, cfg: LookAheadConfig) -> Result<RoundPlan, CfpError> {
    let clk_begin = clock.clk();
    let began_ms = clock.now_ms();
    let n = input.participants.len();
    let delta = cop::compute_optimal_costs(input.view, input.reserved, input.participants)?;
    let gamma0 = cop::assign_optimal(&delta);
    let phi = cop::extract_optimal_paths(&delta, &gamma0)?;
    clock.spend(PlanPhase::Cop { participants: n });

    let par: BTreeSet<RobotId> = delta.participants.iter().map(|(id, _)| *id).collect();
    let nonpar: BTreeSet<RobotId> = input.full_paths.keys().copied().filter(|k| !par.contains(k)).collect();

    let mut la: i64 = 1;
    let mut t_start: Clk = 0;
    let mut attempts = Vec::new();
    loop {
        let attempt_began = clock.now_ms();
        let clk = clock.clk();
        t_start = t_start.max((clk as i64 + la.max(1)) as Clk);
        let sigma_rem = remaining_paths(input.full_paths, &nonpar, t_start);
        let outcome = cfp_for_par(input.view, &delta, gamma0.clone(), phi.clone(), &sigma_rem)?;
        clock.spend(PlanPhase::Cfp { participants: n, attempt: attempts.len() + 1 });
        let attempt_ended = clock.now_ms();
        let clk_now = clock.clk();
        attempts.push(Attempt { t_start, began_ms: attempt_began, ended_ms: attempt_ended, clk_at_end: clk_now });
        if clk_now < t_start {
            let goals = outcome.gamma.goal_of.iter().map(|g| g.map(|g| delta.goals[g])).collect();
            let sigma = delta.participants.iter().map(|(id, _)| *id).zip(outcome.sigma).collect();
            return Ok(RoundPlan {
                participants: delta.participants.clone(),
                goals,
                sigma,
                t_start,
                attempts,
                events: outcome.events,
                cfp_iterations: outcome.iterations,
                clk_begin,
                began_ms,
                ended_ms: attempt_ended,
            });
        }
        if let Some(limit) = cfg.max_attempts {
            if attempts.len() >= limit {
                return Err(CfpError::RetryBound { attempts: attempts.len() + 1, limit });
            }
        }
        la = update_lookahead(attempt_began, attempt_ended, cfg.bias_ms, cfg.tau_ms, clk_now);
    }
}

#[cfg(test)]
mod tests;
