//! Mission metrics and the planning/following interval classification.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::coordinator::{Coordinator, RoundRecord, Scheduling};
use crate::kinematics::{path_cost, validate_path_set, Clk, Path, RobotId, TimedPath};

use super::MissionConfig;

/// Interval counts by activity. Intervals with neither are `idle`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalClasses {
    pub plan_and_follow: u64,
    pub follow: u64,
    pub plan: u64,
    pub idle: u64,
}

impl IntervalClasses {
    pub fn total(&self) -> u64 {
        self.plan_and_follow + self.follow + self.plan + self.idle
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissionReport {
    pub seed: u64,
    pub robots: usize,
    pub scheduling: Scheduling,
    pub tau_ms: u64,
    /// Mission time.
    pub t_m_ms: u64,
    /// Total planning time.
    pub t_c_ms: u64,
    /// Planning time during which at least one robot was following a path.
    pub t_c_ol_ms: u64,
    /// Path-following time, Λ·τ.
    pub t_p_ms: u64,
    /// CLK at which the last robot finished its last path.
    pub lambda: Clk,
    pub r_star_mean: f64,
    pub intervals: IntervalClasses,
    pub rounds: usize,
    /// Per-robot mean time spent on moves other than Halt, out of `t_p_ms`.
    pub t_non_halt_ms: f64,
    pub t_halt_ms: f64,
    pub covered: usize,
    pub free_cells: usize,
    pub collisions: usize,
    /// Most look-ahead attempts any round needed.
    pub max_attempts: usize,
    /// Rounds whose paths were already stale at dispatch and were planned again.
    pub stale_dispatches: usize,
}

impl MissionReport {
    pub fn is_complete(&self) -> bool {
        self.covered == self.free_cells
    }

    /// Numeric fields, by name, for aggregation.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("t_m_ms", self.t_m_ms as f64),
            ("t_c_ms", self.t_c_ms as f64),
            ("t_c_ol_ms", self.t_c_ol_ms as f64),
            ("t_p_ms", self.t_p_ms as f64),
            ("lambda", self.lambda as f64),
            ("r_star_mean", self.r_star_mean),
            ("intervals_pf", self.intervals.plan_and_follow as f64),
            ("intervals_f", self.intervals.follow as f64),
            ("intervals_p", self.intervals.plan as f64),
            ("intervals_idle", self.intervals.idle as f64),
            ("rounds", self.rounds as f64),
            ("t_non_halt_ms", self.t_non_halt_ms),
            ("t_halt_ms", self.t_halt_ms),
            ("covered", self.covered as f64),
            ("free_cells", self.free_cells as f64),
            ("collisions", self.collisions as f64),
            ("max_attempts", self.max_attempts as f64),
            ("stale_dispatches", self.stale_dispatches as f64),
        ]
    }
}

/// Planning spans in CLK-aligned milliseconds. Synchronous rounds run while
/// the clock is paused and occupy no interval.
pub fn planning_windows(rounds: &[RoundRecord], scheduling: Scheduling) -> Vec<(u64, u64)> {
    match scheduling {
        Scheduling::Concurrent => rounds.iter().map(|r| (r.t_begin_ms, r.t_begin_ms + r.t_wall_ms)).collect(),
        Scheduling::Synchronous => Vec::new(),
    }
}

fn lambda_of(paths: &BTreeMap<RobotId, Path>) -> Clk {
    paths.values().map(|p| p.len() as Clk).max().unwrap_or(0)
}

/// Classify every interval `t < Λ`. Planning is active if a planning window
/// overlaps the interval; following is active if some robot still has a
/// step of its full path to execute.
pub fn classify_intervals(windows: &[(u64, u64)], paths: &BTreeMap<RobotId, Path>, tau_ms: u64) -> IntervalClasses {
    let lambda = lambda_of(paths);
    let mut out = IntervalClasses::default();
    for t in 0..lambda {
        let (lo, hi) = (t * tau_ms, (t + 1) * tau_ms);
        let plan = windows.iter().any(|&(b, e)| b < hi && e > lo);
        let follow = paths.values().any(|p| p.len() as Clk > t);
        match (plan, follow) {
            (true, true) => out.plan_and_follow += 1,
            (false, true) => out.follow += 1,
            (true, false) => out.plan += 1,
            (false, false) => out.idle += 1,
        }
    }
    out
}

/// Planning time that falls into intervals where some robot is moving along its path.
fn overlapped_planning(windows: &[(u64, u64)], paths: &BTreeMap<RobotId, Path>, tau_ms: u64) -> u64 {
    let lambda = lambda_of(paths);
    let mut total = 0;
    for &(b, e) in windows {
        if e <= b {
            continue;
        }
        for t in b / tau_ms..=(e - 1) / tau_ms {
            if t >= lambda || !paths.values().any(|p| p.len() as Clk > t) {
                continue;
            }
            let (lo, hi) = (t * tau_ms, (t + 1) * tau_ms);
            total += e.min(hi) - b.max(lo);
        }
    }
    total
}

pub(crate) fn build_report(cfg: &MissionConfig, coord: &Coordinator, t_m_ms: u64, max_attempts: usize, stale_dispatches: usize) -> MissionReport {
    let paths = coord.full_paths();
    let rounds = coord.rounds();
    let tau = cfg.tau_ms;
    let lambda = lambda_of(paths);
    let timed: BTreeMap<RobotId, TimedPath> = paths.iter().map(|(&id, p)| (id, TimedPath::new(p.clone(), 0))).collect();
    let audit = validate_path_set(&timed, &cfg.workspace, lambda);
    let covered: BTreeSet<_> = paths.values().flat_map(|p| p.cells()).collect();
    let windows = planning_windows(rounds, cfg.scheduling);
    let t_p_ms = lambda * tau;
    let moves: usize = paths.values().map(path_cost).sum();
    let t_non_halt_ms = if paths.is_empty() { 0.0 } else { moves as f64 * tau as f64 / paths.len() as f64 };
    let r_star_mean = if rounds.is_empty() { 0.0 } else { rounds.iter().map(|r| r.r_star).sum::<usize>() as f64 / rounds.len() as f64 };
    MissionReport {
        seed: cfg.seed,
        robots: cfg.robots,
        scheduling: cfg.scheduling,
        tau_ms: tau,
        t_m_ms,
        t_c_ms: rounds.iter().map(|r| r.t_wall_ms).sum(),
        t_c_ol_ms: overlapped_planning(&windows, paths, tau),
        t_p_ms,
        lambda,
        r_star_mean,
        intervals: classify_intervals(&windows, paths, tau),
        rounds: rounds.len(),
        t_non_halt_ms,
        t_halt_ms: t_p_ms as f64 - t_non_halt_ms,
        covered: covered.len(),
        free_cells: cfg.workspace.free_count(),
        collisions: audit.violations.len(),
        max_attempts,
        stale_dispatches,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub stddev: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub metrics: BTreeMap<String, MetricSummary>,
}

pub fn aggregate(reports: &[MissionReport]) -> Aggregate {
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in reports {
        for (name, v) in r.metrics() {
            columns.entry(name.to_string()).or_default().push(v);
        }
    }
    let metrics = columns
        .into_iter()
        .map(|(name, xs)| {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let stddev = if xs.len() < 2 { 0.0 } else { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() };
            (name, MetricSummary { mean, stddev })
        })
        .collect();
    Aggregate { runs: reports.len(), metrics }
}
