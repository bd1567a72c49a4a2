use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cop::{assign_optimal, compute_optimal_costs, extract_optimal_paths};
use crate::kinematics::{validate_path_set, Heading, TimedPath, ViolationKind};
use crate::workspace::Workspace;

fn c(x: u32, y: u32) -> Cell {
    Cell::new(x, y)
}

fn holo(x: u32, y: u32) -> RobotState {
    RobotState::holonomic(c(x, y))
}

/// Rows listed top-down as they appear on screen; `c` covered, `g` goal,
/// `#` obstacle, `?` unexplored.
fn view_from(rows_top_down: &[&str]) -> View {
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
            v.set(c(x as u32 + 1, y), class);
        }
    }
    v
}

fn straight(cells: &[(u32, u32)]) -> Path {
    Path::new(cells.iter().map(|&(x, y)| holo(x, y)).collect()).unwrap()
}

#[test]
fn remaining_path_cases() {
    let pi = straight(&[(1, 1), (2, 1), (3, 1), (4, 1), (5, 1), (6, 1), (7, 1), (8, 1)]);
    let short = straight(&[(1, 2), (2, 2), (3, 2), (4, 2)]);
    let full: BTreeMap<RobotId, Path> = [(RobotId(1), short.clone()), (RobotId(2), pi.clone())].into();
    let non: BTreeSet<RobotId> = [RobotId(1), RobotId(2)].into();
    let rem = remaining_paths(&full, &non, 5);
    assert_eq!(rem[&RobotId(1)], Path::singleton(short.state_at(3)));
    assert_eq!(rem[&RobotId(2)].states(), &pi.states()[5..=7]);
    assert!(remaining_paths(&full, &BTreeSet::new(), 5).is_empty());
}

proptest! {
    #[test]
    fn remaining_paths_match_slicing(len in 0usize..15, t_start in 0u64..20) {
        let cells: Vec<(u32, u32)> = (0..=len).map(|i| (i as u32 + 1, 1)).collect();
        let pi = straight(&cells);
        let full: BTreeMap<RobotId, Path> = [(RobotId(3), pi.clone())].into();
        let rem = remaining_paths(&full, &[RobotId(3)].into(), t_start);
        let expected: Vec<RobotState> = if len as u64 <= t_start {
            vec![*pi.states().last().unwrap()]
        } else {
            pi.states()[t_start as usize..].to_vec()
        };
        prop_assert_eq!(rem[&RobotId(3)].states(), expected.as_slice());
    }
}

fn plan_all(view: &View, robots: &[(RobotId, RobotState)], reserved: &BTreeSet<Cell>, rem: &BTreeMap<RobotId, Path>) -> (CostMatrix, CfpOutcome) {
    let delta = compute_optimal_costs(view, reserved, robots).unwrap();
    let gamma = assign_optimal(&delta);
    let phi = extract_optimal_paths(&delta, &gamma).unwrap();
    let out = cfp_for_par(view, &delta, gamma, phi, rem).unwrap();
    (delta, out)
}

#[test]
fn single_robot_keeps_its_optimal_path() {
    let v = view_from(&["cgg"]);
    let robots = [(RobotId(1), holo(1, 1))];
    let delta = compute_optimal_costs(&v, &BTreeSet::new(), &robots).unwrap();
    let gamma = assign_optimal(&delta);
    let phi = extract_optimal_paths(&delta, &gamma).unwrap();
    let out = cfp_for_par(&v, &delta, gamma.clone(), phi.clone(), &BTreeMap::new()).unwrap();
    assert_eq!(out.gamma, gamma);
    assert_eq!(out.sigma, phi);
    assert_eq!(out.offsets, vec![0]);
}

#[test]
fn corridor_pair_both_active_without_collision() {
    let v = view_from(&["ccgg"]);
    let robots = [(RobotId(1), holo(1, 1)), (RobotId(2), holo(2, 1))];
    let (_, out) = plan_all(&v, &robots, &BTreeSet::new(), &BTreeMap::new());
    assert_eq!(out.active_count(), 2);
    let timed: BTreeMap<RobotId, TimedPath> =
        robots.iter().zip(&out.sigma).map(|((id, _), p)| (*id, TimedPath::new(p.clone(), 0))).collect();
    assert!(validate_path_set(&timed, &Workspace::open(4, 1), 12).is_clean());
    let goals: BTreeSet<Cell> = out.sigma.iter().map(|p| p.last().cell).collect();
    assert_eq!(goals, [c(3, 1), c(4, 1)].into());
}

#[test]
fn inactive_sitter_swaps_into_movers_goal() {
    let v = view_from(&["ccg"]);
    let robots = [(RobotId(1), holo(1, 1)), (RobotId(2), holo(2, 1))];
    let delta = compute_optimal_costs(&v, &BTreeSet::new(), &robots).unwrap();
    let gamma = Assignment { goal_of: vec![Some(0), None] };
    let paths = extract_optimal_paths(&delta, &gamma).unwrap();
    let mut fix = repair::Repair::new(&delta, gamma, paths);
    assert!(fix.adjust_crossover());
    let (gamma, paths, events) = fix.into_parts();
    assert_eq!(gamma.goal_of, vec![None, Some(0)]);
    assert_eq!(paths[1].last().cell, c(3, 1));
    assert_eq!(events, vec![CfpEvent::Swapped { a: RobotId(1), b: RobotId(2), kind: SwapKind::Crossover }]);
}

#[test]
fn crossover_free_input_is_a_fixpoint() {
    let v = view_from(&["gcc", "###", "gcc"]);
    let robots = [(RobotId(1), holo(2, 1)), (RobotId(2), holo(2, 3))];
    let delta = compute_optimal_costs(&v, &BTreeSet::new(), &robots).unwrap();
    let gamma = assign_optimal(&delta);
    let paths = extract_optimal_paths(&delta, &gamma).unwrap();
    let mut fix = repair::Repair::new(&delta, gamma.clone(), paths.clone());
    assert!(!fix.adjust_crossover());
    assert!(!fix.adjust_nested());
    assert_eq!(fix.into_parts().0, gamma);
}

#[test]
fn nested_chain_is_reordered() {
    // a at x=1 heads for x=6 and b at x=2 heads for x=4: b is nested in a
    let v = view_from(&["cccgcg"]);
    let robots = [(RobotId(1), holo(1, 1)), (RobotId(2), holo(2, 1))];
    let delta = compute_optimal_costs(&v, &BTreeSet::new(), &robots).unwrap();
    let g4 = delta.goal_index(c(4, 1)).unwrap();
    let g6 = delta.goal_index(c(6, 1)).unwrap();
    let gamma = Assignment { goal_of: vec![Some(g6), Some(g4)] };
    let paths = extract_optimal_paths(&delta, &gamma).unwrap();
    let starts = repair::starts_of(&delta);
    assert_eq!(nested_pairs(&starts, &gamma, &paths), vec![(0, 1)]);
    let mut fix = repair::Repair::new(&delta, gamma, paths);
    assert!(fix.adjust_nested());
    let (gamma, paths, _) = fix.into_parts();
    assert_eq!(gamma.goal_of, vec![Some(g4), Some(g6)]);
    assert!(nested_pairs(&starts, &gamma, &paths).is_empty());
    assert!(crossover_pairs(&starts, &gamma, &paths).is_empty());
}

#[test]
fn start_on_other_path_gives_precedence() {
    let v = view_from(&["ccgg"]);
    let robots = [(RobotId(1), holo(1, 1)), (RobotId(2), holo(2, 1))];
    let delta = compute_optimal_costs(&v, &BTreeSet::new(), &robots).unwrap();
    let g3 = delta.goal_index(c(3, 1)).unwrap();
    let g4 = delta.goal_index(c(4, 1)).unwrap();
    let gamma = Assignment { goal_of: vec![Some(g3), Some(g4)] };
    let paths = extract_optimal_paths(&delta, &gamma).unwrap();
    let theta = compute_precedences(&delta, &gamma, &paths, &BTreeMap::new());
    assert!(theta.before(RobotId(2), RobotId(1)));
    assert_eq!(absolute_precedence(&theta), AbsolutePrecedence::Order(vec![RobotId(2), RobotId(1)]));
}

#[test]
fn disjoint_paths_have_no_precedence() {
    let v = view_from(&["gc#cg"]);
    let robots = [(RobotId(1), holo(2, 1)), (RobotId(2), holo(4, 1))];
    let (delta, out) = plan_all(&v, &robots, &BTreeSet::new(), &BTreeMap::new());
    let theta = compute_precedences(&delta, &out.gamma, &out.omega, &BTreeMap::new());
    assert!(theta.edges.is_empty());
}

#[test]
fn two_cycle_victim_is_lowest_id() {
    let v = view_from(&["cg", "cg"]);
    let robots = [(RobotId(2), holo(1, 1)), (RobotId(5), holo(1, 2))];
    let delta = compute_optimal_costs(&v, &BTreeSet::new(), &robots).unwrap();
    let mut gamma = Assignment { goal_of: vec![Some(0), Some(1)] };
    let victim = break_precedence_cycles(&delta, &mut gamma, &[RobotId(5), RobotId(2)]);
    assert_eq!(victim, RobotId(2));
    assert_eq!(gamma.goal_of, vec![None, Some(1)]);
}

/// Two participants and one non-participant whose remaining path parks in
/// the only corridor to the second participant's goal.
pub(crate) fn cascade_instance() -> (View, CostMatrix, Assignment, Vec<Path>, BTreeMap<RobotId, Path>) {
    let v = view_from(&["#g###", "#gc##", "ccccg"]);
    let robots = [(RobotId(1), holo(1, 1)), (RobotId(2), holo(2, 1))];
    let reserved: BTreeSet<Cell> = [c(2, 2)].into();
    let delta = compute_optimal_costs(&v, &reserved, &robots).unwrap();
    let g_top = delta.goal_index(c(2, 3)).unwrap();
    let g_end = delta.goal_index(c(5, 1)).unwrap();
    let gamma = Assignment { goal_of: vec![Some(g_end), Some(g_top)] };
    let phi = extract_optimal_paths(&delta, &gamma).unwrap();
    let rem: BTreeMap<RobotId, Path> = [(RobotId(3), straight(&[(3, 2), (2, 2)]))].into();
    (v, delta, gamma, phi, rem)
}

#[test]
fn inactivation_cascade() {
    let (v, delta, gamma, phi, rem) = cascade_instance();
    assert!(phi[0].contains_cell(c(2, 1)), "r2 stands on r1's path");
    let out = cfp_for_par(&v, &delta, gamma, phi, &rem).unwrap();
    assert_eq!(out.active_count(), 0);
    let inactivated: Vec<(RobotId, InactivationReason)> = out
        .events
        .iter()
        .filter_map(|e| match e {
            CfpEvent::Inactivated { robot, reason } => Some((*robot, reason.clone())),
            _ => None,
        })
        .collect();
    assert_eq!(
        inactivated,
        vec![
            (RobotId(2), InactivationReason::Blocked { by: RobotId(3) }),
            (RobotId(1), InactivationReason::Blocked { by: RobotId(2) }),
        ]
    );
    assert!(out.sigma.iter().all(|p| p.is_empty()));
}

#[test]
fn lookahead_arithmetic() {
    // 0.4 s, 1.3 s, 0.1 s bias, 1 s intervals, CLK 1: 1 + floor(2.3) - 1
    assert_eq!(update_lookahead(400, 1300, 100, 1000, 1), 2);
    // rational cross-check: (2 * 13/10 - 4/10 + 1/10) = 23/10
    let num = 2 * 13 - 4 + 1;
    assert_eq!(1 + num / 10 - 1, 2);
}

/// Clock advancing by a fixed script of durations.
struct Scripted {
    now: u64,
    tau: u64,
    cfp: Vec<u64>,
}

impl PlannerClock for Scripted {
    fn clk(&self) -> Clk {
        self.now / self.tau
    }
    fn now_ms(&self) -> u64 {
        self.now
    }
    fn spend(&mut self, phase: PlanPhase) {
        if let PlanPhase::Cfp { attempt, .. } = phase {
            self.now += self.cfp[attempt - 1];
        }
    }
}

#[test]
fn overrun_reattempts_with_longer_lookahead() {
    let v = view_from(&["cg"]);
    let robots = [(RobotId(1), holo(1, 1))];
    let full: BTreeMap<RobotId, Path> = [(RobotId(1), Path::singleton(holo(1, 1)))].into();
    let input = RoundInput { view: &v, reserved: &BTreeSet::new(), participants: &robots, full_paths: &full };
    let mut clock = Scripted { now: 1200, tau: 1000, cfp: vec![1400, 1400] };
    let cfg = LookAheadConfig { tau_ms: 1000, bias_ms: 0, max_attempts: Some(2) };
    let plan = concpp_for_par(input, &mut clock, cfg).unwrap();
    assert_eq!(plan.attempts.iter().map(|a| a.t_start).collect::<Vec<_>>(), vec![2, 5]);
    assert_eq!(plan.attempts[0].clk_at_end, 2);
    assert_eq!(update_lookahead(1200, 2600, 0, 1000, 2), 3);
    assert_eq!(plan.t_start, 5);
    assert_eq!(plan.retries(), 1);
}

#[test]
fn instantaneous_planner_uses_next_clk() {
    let v = view_from(&["cg"]);
    let robots = [(RobotId(1), holo(1, 1))];
    let full: BTreeMap<RobotId, Path> = [(RobotId(1), Path::singleton(holo(1, 1)))].into();
    let input = RoundInput { view: &v, reserved: &BTreeSet::new(), participants: &robots, full_paths: &full };
    let mut clock = Scripted { now: 3000, tau: 1000, cfp: vec![0] };
    let cfg = LookAheadConfig { tau_ms: 1000, bias_ms: 0, max_attempts: Some(2) };
    let plan = concpp_for_par(input, &mut clock, cfg).unwrap();
    assert_eq!(plan.attempts.len(), 1);
    assert_eq!(plan.t_start, 4);
}

#[test]
fn retry_limit_is_enforced() {
    let v = view_from(&["cg"]);
    let robots = [(RobotId(1), holo(1, 1))];
    let full: BTreeMap<RobotId, Path> = [(RobotId(1), Path::singleton(holo(1, 1)))].into();
    let input = RoundInput { view: &v, reserved: &BTreeSet::new(), participants: &robots, full_paths: &full };
    // each attempt slower than the last defeats the look-ahead prediction
    let mut clock = Scripted { now: 0, tau: 1000, cfp: vec![1500, 6000, 20000] };
    let cfg = LookAheadConfig { tau_ms: 1000, bias_ms: 0, max_attempts: Some(2) };
    assert!(matches!(concpp_for_par(input, &mut clock, cfg), Err(CfpError::RetryBound { .. })));
}

// ---- randomised instances -------------------------------------------------

pub(crate) struct Instance {
    pub view: View,
    pub robots: Vec<(RobotId, RobotState)>,
}

pub(crate) fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (rng.gen_range(3..=8), rng.gen_range(3..=8));
    let mut view = View::unexplored(w, h);
    let mut covered = Vec::new();
    for y in 1..=h {
        for x in 1..=w {
            let class = match rng.gen_range(0..20) {
                0..=8 => CellClass::Covered,
                9..=13 => CellClass::Goal,
                14..=16 => CellClass::Obstacle,
                _ => CellClass::Unexplored,
            };
            view.set(c(x, y), class);
            if class == CellClass::Covered {
                covered.push(c(x, y));
            }
        }
    }
    let r = rng.gen_range(1..=5usize);
    while covered.len() < r {
        let cell = c(rng.gen_range(1..=w), rng.gen_range(1..=h));
        if !covered.contains(&cell) {
            view.set(cell, CellClass::Covered);
            covered.push(cell);
        }
    }
    let dd = rng.gen_bool(0.5);
    let mut robots = Vec::new();
    for i in 0..r {
        let k = rng.gen_range(0..covered.len());
        let cell = covered.swap_remove(k);
        let state = if dd { RobotState::oriented(cell, Heading::ALL[rng.gen_range(0..4)]) } else { RobotState::holonomic(cell) };
        robots.push((RobotId::from_index(i), state));
    }
    Instance { view, robots }
}

/// Brute-force crossover/nested scan straight from cell membership.
pub(crate) fn infeasible_pairs(starts: &[Cell], active: &[bool], paths: &[Path]) -> usize {
    let on = |p: &Path, cell: Cell| p.states().iter().any(|s| s.cell == cell);
    let mut bad = 0;
    for i in 0..starts.len() {
        for j in 0..starts.len() {
            if i == j {
                continue;
            }
            if !active[i] && active[j] && on(&paths[j], starts[i]) {
                bad += 1;
            }
            if i < j && active[i] && active[j] && on(&paths[j], starts[i]) && on(&paths[i], starts[j]) {
                bad += 1;
            }
            if active[i] && active[j] && on(&paths[j], starts[i]) && on(&paths[j], paths[i].last().cell) {
                bad += 1;
            }
        }
    }
    bad
}

fn audit(sets: &[(RobotId, Path)], view: &View) -> crate::kinematics::AuditReport {
    let ws = Workspace::from_fn(view.width(), view.height(), |cell| view.class(cell).is_traversable());
    let horizon = sets.iter().map(|(_, p)| p.len()).max().unwrap_or(0) as Clk + 2;
    let timed: BTreeMap<RobotId, TimedPath> = sets.iter().map(|(id, p)| (*id, TimedPath::new(p.clone(), 0))).collect();
    validate_path_set(&timed, &ws, horizon)
}

fn check_round(view: &View, robots: &[(RobotId, RobotState)], reserved: &BTreeSet<Cell>, rem: &BTreeMap<RobotId, Path>) -> Result<(CostMatrix, CfpOutcome), TestCaseError> {
    let (delta, out) = plan_all(view, robots, reserved, rem);
    let starts: Vec<Cell> = robots.iter().map(|(_, s)| s.cell).collect();
    let active: Vec<bool> = out.gamma.goal_of.iter().map(Option::is_some).collect();
    prop_assert_eq!(infeasible_pairs(&starts, &active, &out.omega), 0);

    let mut all: Vec<(RobotId, Path)> = robots.iter().map(|(id, _)| *id).zip(out.sigma.iter().cloned()).collect();
    all.extend(rem.iter().map(|(k, p)| (*k, p.clone())));
    let report = audit(&all, view);
    prop_assert!(report.is_clean(), "{:?}", report);

    let reachable = delta.costs.iter().flatten().any(|c| c.finite().is_some());
    if rem.is_empty() && reachable {
        prop_assert!(out.active_count() >= 1, "no progress with every robot participating");
    }

    // minimality: one fewer Halt collides with somebody
    for (row, &u) in out.offsets.iter().enumerate() {
        if u == 0 || out.gamma.goal_of[row].is_none() {
            continue;
        }
        let mut fewer = all.clone();
        fewer[row].1 = out.omega[row].with_halt_prefix(u - 1);
        let r = audit(&fewer, view);
        let id = robots[row].0;
        prop_assert!(
            r.violations.iter().any(|v| v.robots.contains(&id) && v.kind != ViolationKind::Obstacle),
            "offset {} of {} is not minimal", u, id
        );
    }
    Ok((delta, out))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rounds_are_safe_feasible_and_progressive(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let (delta, out) = check_round(&inst.view, &inst.robots, &BTreeSet::new(), &BTreeMap::new())?;

        // follow-up round: previously inactive robots plan around the active ones
        let mut rem = BTreeMap::new();
        let mut reserved = BTreeSet::new();
        let mut second = Vec::new();
        for (row, &(id, s)) in delta.participants.iter().enumerate() {
            match out.gamma.goal_of[row] {
                Some(g) => {
                    rem.insert(id, out.sigma[row].clone());
                    reserved.insert(delta.goals[g]);
                }
                None => second.push((id, s)),
            }
        }
        if !second.is_empty() {
            check_round(&inst.view, &second, &reserved, &rem)?;
        }
    }
}
