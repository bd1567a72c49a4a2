//! Relative precedences among participants and their linearisation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cop::{Assignment, CostMatrix};
use crate::kinematics::{Path, RobotId};

/// `(i, j)` in `edges` means robot `i` must act before robot `j`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecedenceMatrix {
    /// Active participants, ascending.
    pub nodes: Vec<RobotId>,
    pub edges: BTreeSet<(RobotId, RobotId)>,
    /// Non-participant -> participant constraints. Non-participants never
    /// yield, so these only ever place them first.
    pub external: BTreeSet<(RobotId, RobotId)>,
}

impl PrecedenceMatrix {
    pub fn before(&self, i: RobotId, j: RobotId) -> bool {
        self.edges.contains(&(i, j))
    }
}

/// A planning order over active participants, or a witness cycle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbsolutePrecedence {
    Order(Vec<RobotId>),
    Cycle(Vec<RobotId>),
}

/// Departure and arrival constraints among active participants on `paths`.
///
/// A start on another path means leaving before that robot passes; a goal on
/// another path means arriving only after that robot has passed.
pub fn compute_precedences(
    delta: &CostMatrix,
    gamma: &Assignment,
    paths: &[Path],
    sigma_rem: &BTreeMap<RobotId, Path>,
) -> PrecedenceMatrix {
    let active: Vec<usize> = (0..paths.len()).filter(|&r| gamma.goal_of[r].is_some()).collect();
    let id = |r: usize| delta.participants[r].0;
    let mut m = PrecedenceMatrix { nodes: active.iter().map(|&r| id(r)).collect(), ..Default::default() };
    for &i in &active {
        for &j in &active {
            if i == j {
                continue;
            }
            if paths[j].contains_cell(paths[i].first().cell) {
                m.edges.insert((id(i), id(j)));
            }
            if paths[j].contains_cell(paths[i].last().cell) {
                m.edges.insert((id(j), id(i)));
            }
        }
    }
    for (&k, rem) in sigma_rem {
        for (r, p) in paths.iter().enumerate() {
            if p.cells().any(|c| rem.contains_cell(c)) {
                m.external.insert((k, id(r)));
            }
        }
    }
    m
}

/// Kahn's algorithm, lowest id first among ready nodes.
pub fn absolute_precedence(theta: &PrecedenceMatrix) -> AbsolutePrecedence {
    let mut indegree: BTreeMap<RobotId, usize> = theta.nodes.iter().map(|&n| (n, 0)).collect();
    for &(_, j) in &theta.edges {
        *indegree.get_mut(&j).expect("edge endpoints are nodes") += 1;
    }
    let mut ready: BTreeSet<RobotId> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
    let mut order = Vec::with_capacity(theta.nodes.len());
    while let Some(n) = ready.pop_first() {
        order.push(n);
        for &(_, j) in theta.edges.range((n, RobotId(0))..=(n, RobotId(u32::MAX))) {
            let d = indegree.get_mut(&j).expect("node");
            *d -= 1;
            if *d == 0 {
                ready.insert(j);
            }
        }
    }
    if order.len() == theta.nodes.len() {
        return AbsolutePrecedence::Order(order);
    }
    // every leftover node has a leftover predecessor; walk back until a repeat
    let placed: BTreeSet<RobotId> = order.into_iter().collect();
    let leftover: BTreeSet<RobotId> = theta.nodes.iter().copied().filter(|n| !placed.contains(n)).collect();
    let pred = |n: RobotId| {
        theta.edges.iter().filter(|&&(i, j)| j == n && leftover.contains(&i)).map(|&(i, _)| i).min().expect("leftover node has a predecessor")
    };
    let mut walk = vec![*leftover.first().expect("non-empty")];
    loop {
        let p = pred(*walk.last().unwrap());
        if let Some(pos) = walk.iter().position(|&w| w == p) {
            let mut cycle = walk.split_off(pos);
            cycle.reverse();
            return AbsolutePrecedence::Cycle(cycle);
        }
        walk.push(p);
    }
}

/// Inactivate the lowest-id member of `cycle`. Returns the victim.
pub fn break_precedence_cycles(delta: &CostMatrix, gamma: &mut Assignment, cycle: &[RobotId]) -> RobotId {
    let victim = *cycle.iter().min().expect("a cycle has members");
    let row = delta.row_of(victim).expect("cycle members are participants");
    gamma.goal_of[row] = None;
    victim
}
