use std::collections::BTreeSet;

use super::*;
use crate::workspace::{generate_random_map, parse_map, Cell};

fn map(rows: &[&str]) -> Workspace {
    let text = format!("type octile\nheight {}\nwidth {}\nmap\n{}\n", rows.len(), rows[0].len(), rows.join("\n"));
    parse_map(&text).unwrap()
}

fn virtual_cfg(ws: Workspace, robots: usize, seed: u64, planner: PlannerModel) -> MissionConfig {
    let mut cfg = MissionConfig::new(ws, robots, RobotKind::DifferentialDrive, seed);
    cfg.clock = ClockMode::Virtual { planner, transport_delay_ms: 0 };
    cfg
}

#[test]
fn single_robot_covers_a_corridor() {
    let cfg = virtual_cfg(map(&["..."]), 1, 3, PlannerModel::default());
    let out = run_mission(&cfg).unwrap();
    assert_eq!(out.report.covered, 3);
    assert_eq!(out.report.collisions, 0);
    assert!(out.report.is_complete());
}

#[test]
fn deployment_is_distinct_and_seeded() {
    let ws = generate_random_map(10, 10, 0.2, 4).unwrap();
    let a = deploy(&ws, 12, RobotKind::DifferentialDrive, 9).unwrap();
    let cells: BTreeSet<Cell> = a.iter().map(|s| s.cell).collect();
    assert_eq!(cells.len(), 12);
    assert!(cells.iter().all(|&c| ws.is_free(c)));
    assert_eq!(a, deploy(&ws, 12, RobotKind::DifferentialDrive, 9).unwrap());
    assert!(matches!(deploy(&map(&[".."]), 3, RobotKind::Holonomic, 0), Err(SimError::TooManyRobots { .. })));
}

#[test]
fn disconnected_maps_are_rejected() {
    let cfg = virtual_cfg(map(&[".@."]), 1, 0, PlannerModel::INSTANT);
    assert!(matches!(run_mission(&cfg), Err(SimError::Disconnected)));
}

#[test]
fn fixed_starts_are_checked() {
    let mut cfg = virtual_cfg(map(&["...", ".@."]), 2, 0, PlannerModel::INSTANT);
    cfg.starts = Some(vec![RobotState::oriented(Cell::new(1, 1), Heading::East), RobotState::oriented(Cell::new(1, 1), Heading::North)]);
    assert!(matches!(run_mission(&cfg), Err(SimError::Deployment(_))));
    cfg.starts = Some(vec![RobotState::oriented(Cell::new(1, 1), Heading::East), RobotState::oriented(Cell::new(2, 2), Heading::North)]);
    assert!(matches!(run_mission(&cfg), Err(SimError::Deployment(_))));
}

#[test]
fn virtual_runs_are_reproducible() {
    let ws = generate_random_map(12, 12, 0.2675, 21).unwrap();
    let cfg = virtual_cfg(ws, 4, 5, PlannerModel::default());
    let a = run_mission(&cfg).unwrap();
    let b = run_mission(&cfg).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.trace_csv(), b.trace_csv());
    assert_eq!(a.round_log_csv(), b.round_log_csv());
}

#[test]
fn synchronous_time_splits_into_planning_and_following() {
    let ws = generate_random_map(10, 10, 0.2675, 2).unwrap();
    let mut cfg = virtual_cfg(ws, 4, 8, PlannerModel::default());
    cfg.scheduling = Scheduling::Synchronous;
    let r = run_mission(&cfg).unwrap().report;
    assert!(r.is_complete());
    assert_eq!(r.t_c_ol_ms, 0);
    assert_eq!(r.t_m_ms, r.t_c_ms + r.t_p_ms);
    assert_eq!(r.r_star_mean, 4.0);
}

#[test]
fn instant_synchronous_planning_leaves_only_following_intervals() {
    let ws = generate_random_map(8, 8, 0.2, 6).unwrap();
    let mut cfg = virtual_cfg(ws, 3, 1, PlannerModel::INSTANT);
    cfg.scheduling = Scheduling::Synchronous;
    let r = run_mission(&cfg).unwrap().report;
    assert_eq!(r.intervals, IntervalClasses { follow: r.lambda, ..Default::default() });
}

#[test]
fn forced_overrun_retries_once() {
    let ws = generate_random_map(10, 10, 0.2, 11).unwrap();
    let planner = PlannerModel { cop_ms: 100, cfp_ms: 300, cfp_per_participant_ms: 0, first_attempt_extra_ms: 1500 };
    let out = run_mission(&virtual_cfg(ws, 4, 2, planner)).unwrap();
    assert!(out.report.is_complete());
    assert_eq!(out.report.max_attempts, 2);
    assert!(out.rounds.iter().all(|r| r.retries == 1));
}

#[test]
fn transport_delay_only_shifts_requests() {
    let ws = generate_random_map(8, 8, 0.2, 3).unwrap();
    let mut cfg = virtual_cfg(ws, 3, 4, PlannerModel::default());
    cfg.clock = ClockMode::Virtual { planner: PlannerModel::default(), transport_delay_ms: 350 };
    let r = run_mission(&cfg).unwrap().report;
    assert!(r.is_complete());
    assert_eq!(r.collisions, 0);
    assert!(r.t_m_ms > r.t_p_ms);
}

#[test]
fn holonomic_team_completes() {
    let ws = generate_random_map(12, 9, 0.25, 8).unwrap();
    let mut cfg = virtual_cfg(ws, 5, 3, PlannerModel::default());
    cfg.kind = RobotKind::Holonomic;
    let r = run_mission(&cfg).unwrap().report;
    assert!(r.is_complete());
    assert_eq!(r.collisions, 0);
}

#[test]
fn wall_clock_mission_completes() {
    let ws = map(&["....", ".@..", "...."]);
    let mut cfg = MissionConfig::new(ws, 2, RobotKind::DifferentialDrive, 1);
    cfg.clock = ClockMode::WallClock;
    cfg.tau_ms = 40;
    let out = run_mission(&cfg).unwrap();
    assert!(out.report.is_complete());
    assert_eq!(out.report.collisions, 0);
}

#[test]
fn repeats_do_not_depend_on_thread_count() {
    let ws = generate_random_map(10, 10, 0.2675, 5).unwrap();
    let cfg = virtual_cfg(ws, 3, 40, PlannerModel::default());
    let one: Vec<_> = run_repeats(&cfg, 4, 1).unwrap().into_iter().map(|r| r.unwrap().report).collect();
    let four: Vec<_> = run_repeats(&cfg, 4, 4).unwrap().into_iter().map(|r| r.unwrap().report).collect();
    assert_eq!(one, four);
    assert_eq!(one.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![40, 41, 42, 43]);
}
