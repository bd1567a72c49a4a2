//! Real-time mission: one thread per robot, a coordinator thread, and a
//! planner thread per round. The coordinator owns all state and processes
//! one message at a time.

use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};

use crate::cfp::{concpp_for_par, CfpError, LookAheadConfig, PlannerClock, RoundPlan};
use crate::coordinator::{Coordinator, CoordinatorError, Decision, RequestMsg, ResponseMsg, Snapshot};
use crate::kinematics::{Clk, RobotId, RobotState};
use crate::workspace::{init_local_view, sense_and_update, SensorModel, Workspace};

use super::metrics::build_report;
use super::{MissionConfig, MissionOutcome, RoundDetail, SimError};

#[derive(Clone, Copy)]
struct WallClock {
    epoch: Instant,
    tau_ms: u64,
}

impl WallClock {
    fn elapsed_ms(&self) -> u64 {
        self.epoch.elapsed().as_millis() as u64
    }

    fn sleep_until_clk(&self, clk: Clk) {
        let target = self.epoch + Duration::from_millis(clk * self.tau_ms);
        let now = Instant::now();
        if target > now {
            thread::sleep(target - now);
        }
    }
}

impl PlannerClock for WallClock {
    fn clk(&self) -> Clk {
        self.elapsed_ms() / self.tau_ms
    }

    fn now_ms(&self) -> u64 {
        self.elapsed_ms()
    }
}

enum Inbox {
    Request(RequestMsg),
    Planned(Box<Snapshot>, Result<RoundPlan, CfpError>),
}

fn robot(id: RobotId, start: RobotState, ws: Workspace, sensor: SensorModel, clock: WallClock, tx: Sender<Inbox>, rx: Receiver<ResponseMsg>) {
    let Ok(mut view) = init_local_view(start.cell, &ws, sensor) else { return };
    let mut state = start;
    loop {
        if tx.send(Inbox::Request(RequestMsg { id, state, view: view.clone() })).is_err() {
            return;
        }
        let Ok(msg) = rx.recv() else { return };
        for (k, s) in msg.path.states().iter().enumerate() {
            clock.sleep_until_clk(msg.ts + k as Clk);
            if sense_and_update(&mut view, s.cell, &ws, sensor).is_err() {
                return;
            }
        }
        state = msg.path.last();
    }
}

fn spawn_planner(snapshot: Box<Snapshot>, clock: WallClock, la: LookAheadConfig, tx: Sender<Inbox>) {
    thread::spawn(move || {
        let mut clock = clock;
        let plan = concpp_for_par(snapshot.input(), &mut clock, la);
        let _ = tx.send(Inbox::Planned(snapshot, plan));
    });
}

pub(crate) fn run(cfg: &MissionConfig, starts: Vec<RobotState>) -> Result<MissionOutcome, SimError> {
    let ws = &cfg.workspace;
    let clock = WallClock { epoch: Instant::now(), tau_ms: cfg.tau_ms };
    let la = LookAheadConfig { tau_ms: cfg.tau_ms, bias_ms: cfg.bias(), max_attempts: None };
    let mut coord = Coordinator::new(starts.len(), ws.width(), ws.height(), cfg.scheduling);
    let (tx, rx) = mpsc::channel();
    let mut outboxes = Vec::new();
    let mut robots = Vec::new();
    for (i, &s) in starts.iter().enumerate() {
        let (otx, orx) = mpsc::channel();
        outboxes.push(otx);
        let (ws, tx, sensor) = (ws.clone(), tx.clone(), cfg.sensor);
        robots.push(thread::spawn(move || robot(RobotId::from_index(i), s, ws, sensor, clock, tx, orx)));
    }

    let mut details = Vec::new();
    let mut max_attempts = 0;
    let mut stale = 0;
    let mut deferred = false;
    let t_m_ms = loop {
        let decision = match rx.recv_timeout(Duration::from_millis(cfg.tau_ms)) {
            Ok(Inbox::Request(req)) => coord.receive_local_view(req, clock.clk())?,
            Ok(Inbox::Planned(snapshot, plan)) => {
                let plan = plan?;
                match coord.finish_round(&plan, clock.clk()) {
                    Ok(responses) => {
                        max_attempts = max_attempts.max(plan.attempts.len());
                        if plan.attempts.len() > 2 {
                            warn!("round {} needed {} look-ahead attempts", snapshot.round_id, plan.attempts.len());
                        }
                        details.push(RoundDetail::from_plan(snapshot.round_id, &plan));
                        for (id, msg) in responses {
                            let _ = outboxes[id.index()].send(msg);
                        }
                        coord.check_cpp_criteria(clock.clk())
                    }
                    Err(CoordinatorError::StaleTimestamp { t_start, clk }) => {
                        stale += 1;
                        warn!("round {} stamped {t_start} finished at CLK {clk}; planning again", snapshot.round_id);
                        spawn_planner(snapshot, clock, la, tx.clone());
                        Decision::Wait
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            Err(RecvTimeoutError::Timeout) if deferred => coord.check_cpp_criteria(clock.clk()),
            Err(RecvTimeoutError::Timeout) => Decision::Wait,
            Err(RecvTimeoutError::Disconnected) => unreachable!("the coordinator holds a sender"),
        };
        deferred = matches!(decision, Decision::Defer);
        match decision {
            Decision::Start(snapshot) => {
                debug!("round {} starts with {} participants", snapshot.round_id, snapshot.participants.len());
                spawn_planner(snapshot, clock, la, tx.clone());
            }
            Decision::Stop => break clock.elapsed_ms(),
            _ => {}
        }
    };
    drop(outboxes);
    for r in robots {
        let _ = r.join();
    }
    let report = build_report(cfg, &coord, t_m_ms, max_attempts, stale);
    Ok(MissionOutcome {
        report,
        starts,
        full_paths: coord.full_paths().clone(),
        rounds: coord.rounds().to_vec(),
        details,
        decisions: coord.decisions().to_vec(),
    })
}
