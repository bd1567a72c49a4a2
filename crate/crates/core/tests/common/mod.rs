#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use concpp::cop::{compute_optimal_costs, extract_optimal_paths, Assignment, CostMatrix};
use concpp::sim::{ClockMode, MissionConfig, PlannerModel};
use concpp::workspace::parse_map;
use concpp::{Cell, CellClass, Heading, Path, RobotId, RobotKind, RobotState, View, Workspace};

pub fn map(rows: &[&str]) -> Workspace {
    let text = format!("type octile\nheight {}\nwidth {}\nmap\n{}\n", rows.len(), rows[0].len(), rows.join("\n"));
    parse_map(&text).unwrap()
}

pub fn holo(x: u32, y: u32) -> RobotState {
    RobotState::holonomic(Cell::new(x, y))
}

/// Three robots in a row below an open row; their first paths take 3, 1 and
/// 2 moves, and the last free cell only shows up when r3 arrives.
pub fn skip_scenario() -> MissionConfig {
    let ws = map(&["...@", "...."]);
    let mut cfg = MissionConfig::new(ws, 3, RobotKind::DifferentialDrive, 0);
    cfg.starts = Some(vec![
        RobotState::oriented(Cell::new(1, 1), Heading::South),
        RobotState::oriented(Cell::new(2, 1), Heading::North),
        RobotState::oriented(Cell::new(3, 1), Heading::East),
    ]);
    cfg.clock = ClockMode::Virtual { planner: PlannerModel::INSTANT, transport_delay_ms: 0 };
    cfg
}

/// Requests reach the planner at 1.2 s and every collision-free attempt
/// takes 1.4 s.
pub fn reattempt_scenario() -> MissionConfig {
    let mut cfg = skip_scenario();
    let planner = PlannerModel { cop_ms: 0, cfp_ms: 1400, cfp_per_participant_ms: 0, first_attempt_extra_ms: 0 };
    cfg.clock = ClockMode::Virtual { planner, transport_delay_ms: 1200 };
    cfg
}

/// View rows listed from the top (highest y) down.
pub fn view_from(rows_top_down: &[&str]) -> View {
    let h = rows_top_down.len() as u32;
    let w = rows_top_down[0].len() as u32;
    let mut v = View::unexplored(w, h);
    for (i, row) in rows_top_down.iter().enumerate() {
        let y = h - i as u32;
        for (x, ch) in row.chars().enumerate() {
            let class = match ch {
                'c' => CellClass::Covered,
                'g' => CellClass::Goal,
                '#' => CellClass::Obstacle,
                _ => CellClass::Unexplored,
            };
            v.set(Cell::new(x as u32 + 1, y), class);
        }
    }
    v
}

/// r1 heads along the bottom row past r2's start, r2 heads up the column
/// that r3 is about to enter and park on.
pub fn cascade_instance() -> (View, CostMatrix, Assignment, Vec<Path>, BTreeMap<RobotId, Path>) {
    let v = view_from(&["#g###", "#gc##", "ccccg"]);
    let robots = [(RobotId(1), holo(1, 1)), (RobotId(2), holo(2, 1))];
    let reserved: BTreeSet<Cell> = [Cell::new(2, 2)].into();
    let delta = compute_optimal_costs(&v, &reserved, &robots).unwrap();
    let g_top = delta.goal_index(Cell::new(2, 3)).unwrap();
    let g_end = delta.goal_index(Cell::new(5, 1)).unwrap();
    let gamma = Assignment { goal_of: vec![Some(g_end), Some(g_top)] };
    let phi = extract_optimal_paths(&delta, &gamma).unwrap();
    let r3 = Path::new(vec![holo(3, 2), holo(2, 2)]).unwrap();
    (v, delta, gamma, phi, [(RobotId(3), r3)].into())
}
