//! Deterministic single-threaded event loop on a virtual clock.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use log::trace;

use crate::cfp::{concpp_for_par, LookAheadConfig, PlanPhase, PlannerClock, RoundPlan};
use crate::coordinator::{Coordinator, Decision, RequestMsg, Scheduling};
use crate::kinematics::{Clk, RobotState};
use crate::workspace::{init_local_view, sense_and_update, LocalView};

use super::metrics::build_report;
use super::{MissionConfig, MissionOutcome, PlannerModel, RoundDetail, SimError};

/// Virtual planning time. The clock is frozen at a fixed CLK while a
/// synchronous round plans.
pub(crate) struct VirtualRoundClock {
    pub now_ms: u64,
    pub paused_ms: u64,
    pub tau_ms: u64,
    pub model: PlannerModel,
    pub frozen: Option<Clk>,
}

impl PlannerClock for VirtualRoundClock {
    fn clk(&self) -> Clk {
        self.frozen.unwrap_or((self.now_ms - self.paused_ms) / self.tau_ms)
    }

    fn now_ms(&self) -> u64 {
        self.now_ms
    }

    fn spend(&mut self, phase: PlanPhase) {
        self.now_ms += match phase {
            PlanPhase::Cop { .. } => self.model.cop_ms,
            PlanPhase::Cfp { participants, attempt } => {
                let extra = if attempt == 1 { self.model.first_attempt_extra_ms } else { 0 };
                self.model.cfp_ms + self.model.cfp_per_participant_ms * participants as u64 + extra
            }
        };
    }
}

#[derive(Debug)]
enum Kind {
    Recheck,
    Arrival(Box<RequestMsg>),
    RoundDone(Box<RoundPlan>),
}

/// Ordered by time, then rank (recheck, arrival, round done), then insertion.
#[derive(Debug)]
struct Event {
    at_ms: u64,
    rank: u8,
    seq: u64,
    kind: Kind,
}

impl Event {
    fn key(&self) -> (u64, u8, u64) {
        (self.at_ms, self.rank, self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

const EVENT_LIMIT: u64 = 50_000_000;

struct Loop<'a> {
    cfg: &'a MissionConfig,
    model: PlannerModel,
    delay_ms: u64,
    coord: Coordinator,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    now_ms: u64,
    paused_ms: u64,
    views: Vec<LocalView>,
    details: Vec<RoundDetail>,
    max_attempts: usize,
    stopped_at: Option<u64>,
}

impl Loop<'_> {
    fn clk(&self) -> Clk {
        (self.now_ms - self.paused_ms) / self.cfg.tau_ms
    }

    fn push(&mut self, at_ms: u64, kind: Kind) {
        let rank = match kind {
            Kind::Recheck => 0,
            Kind::Arrival(_) => 1,
            Kind::RoundDone(_) => 2,
        };
        self.seq += 1;
        self.queue.push(Reverse(Event { at_ms, rank, seq: self.seq, kind }));
    }

    fn synchronous(&self) -> bool {
        self.cfg.scheduling == Scheduling::Synchronous
    }

    fn handle(&mut self, decision: Decision) -> Result<(), SimError> {
        match decision {
            Decision::Wait | Decision::Skip => {}
            Decision::Stop => self.stopped_at = Some(self.now_ms),
            Decision::Defer => {
                let next = (self.clk() + 1) * self.cfg.tau_ms + self.paused_ms;
                self.push(next, Kind::Recheck);
            }
            Decision::Start(snapshot) => {
                let mut clock = VirtualRoundClock {
                    now_ms: self.now_ms,
                    paused_ms: self.paused_ms,
                    tau_ms: self.cfg.tau_ms,
                    model: self.model,
                    frozen: self.synchronous().then(|| self.clk()),
                };
                let la = LookAheadConfig { tau_ms: self.cfg.tau_ms, bias_ms: self.cfg.bias(), max_attempts: Some(2) };
                let plan = concpp_for_par(snapshot.input(), &mut clock, la)?;
                self.max_attempts = self.max_attempts.max(plan.attempts.len());
                self.details.push(RoundDetail::from_plan(snapshot.round_id, &plan));
                let done = clock.now_ms;
                if self.synchronous() {
                    self.paused_ms += done - self.now_ms;
                }
                self.push(done, Kind::RoundDone(Box::new(plan)));
            }
        }
        Ok(())
    }

    fn dispatch(&mut self, plan: &RoundPlan) -> Result<(), SimError> {
        let clk = self.clk();
        let responses = self.coord.finish_round(plan, clk)?;
        let delay = if self.synchronous() { 0 } else { self.delay_ms };
        for (id, msg) in responses {
            let view = &mut self.views[id.index()];
            for s in msg.path.states() {
                sense_and_update(view, s.cell, &self.cfg.workspace, self.cfg.sensor)?;
            }
            let t_stop = msg.ts + msg.path.len() as Clk;
            let at = t_stop * self.cfg.tau_ms + self.paused_ms + delay;
            let req = RequestMsg { id, state: msg.path.last(), view: view.clone() };
            self.push(at, Kind::Arrival(Box::new(req)));
        }
        Ok(())
    }

    fn run(&mut self) -> Result<(), SimError> {
        let mut processed = 0u64;
        while let Some(Reverse(ev)) = self.queue.pop() {
            processed += 1;
            if processed > EVENT_LIMIT {
                break;
            }
            debug_assert!(ev.at_ms >= self.now_ms);
            self.now_ms = ev.at_ms;
            let clk = self.clk();
            let decision = match ev.kind {
                Kind::Recheck => self.coord.check_cpp_criteria(clk),
                Kind::Arrival(req) => {
                    trace!("CLK {clk}: request from {}", req.id);
                    self.coord.receive_local_view(*req, clk)?
                }
                Kind::RoundDone(plan) => {
                    self.dispatch(&plan)?;
                    self.coord.check_cpp_criteria(clk)
                }
            };
            self.handle(decision)?;
            if self.stopped_at.is_some() {
                return Ok(());
            }
        }
        Err(SimError::Stalled { clk: self.clk(), waiting: self.coord.participants().len(), eta: self.coord.eta() })
    }
}

pub(crate) fn run(cfg: &MissionConfig, starts: Vec<RobotState>, model: PlannerModel, delay_ms: u64) -> Result<MissionOutcome, SimError> {
    let ws = &cfg.workspace;
    let mut sim = Loop {
        cfg,
        model,
        delay_ms,
        coord: Coordinator::new(starts.len(), ws.width(), ws.height(), cfg.scheduling),
        queue: BinaryHeap::new(),
        seq: 0,
        now_ms: 0,
        paused_ms: 0,
        views: Vec::with_capacity(starts.len()),
        details: Vec::new(),
        max_attempts: 0,
        stopped_at: None,
    };
    for (i, &s) in starts.iter().enumerate() {
        let view = init_local_view(s.cell, ws, cfg.sensor)?;
        sim.views.push(view.clone());
        let delay = if sim.synchronous() { 0 } else { delay_ms };
        sim.push(delay, Kind::Arrival(Box::new(RequestMsg { id: crate::RobotId::from_index(i), state: s, view })));
    }
    sim.run()?;
    let t_m_ms = sim.stopped_at.expect("run returns Ok only after Stop");
    let report = build_report(cfg, &sim.coord, t_m_ms, sim.max_attempts, 0);
    Ok(MissionOutcome {
        report,
        starts,
        full_paths: sim.coord.full_paths().clone(),
        rounds: sim.coord.rounds().to_vec(),
        details: sim.details,
        decisions: sim.coord.decisions().to_vec(),
    })
}
