//! Cost-optimal assignment of participants to unassigned goals.

use std::collections::BTreeSet;
use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{apply_motion, Heading, Path, RobotId, RobotState};
use crate::workspace::{unassigned_goals, Cell, CellClass, View};

pub mod hungarian;

/// A shortest move count, or unreachable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cost {
    Finite(u32),
    Infinite,
}

impl Cost {
    pub fn finite(self) -> Option<u32> {
        match self {
            Cost::Finite(v) => Some(v),
            Cost::Infinite => None,
        }
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cost::Finite(v) => write!(f, "{v}"),
            Cost::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CopError {
    #[error("participant {robot} stands on {cell}, which is not covered")]
    NotCovered { robot: RobotId, cell: Cell },
    #[error("assignment of {robot} to {goal} disagrees with its search tree")]
    Inconsistent { robot: RobotId, goal: Cell },
}

const UNREACHED: u32 = u32::MAX;

/// Breadth-first tree over the state graph of one robot, restricted to
/// cells a [`View`] marks Goal or Covered.
#[derive(Clone, Debug)]
pub struct SearchTree {
    start: RobotState,
    width: u32,
    height: u32,
    headings: usize,
    dist: Vec<u32>,
    parent: Vec<u32>,
}

impl SearchTree {
    fn encode(&self, s: RobotState) -> usize {
        let cell = ((s.cell.y - 1) * self.width + (s.cell.x - 1)) as usize;
        cell * self.headings + s.heading.map_or(0, |h| h.index())
    }

    fn decode(&self, i: usize) -> RobotState {
        let cell = i / self.headings;
        let w = self.width as usize;
        let c = Cell::new((cell % w) as u32 + 1, (cell / w) as u32 + 1);
        match self.start.heading {
            Some(_) => RobotState::oriented(c, Heading::ALL[i % self.headings]),
            None => RobotState::holonomic(c),
        }
    }

    /// Expand from `start` through traversable cells of `view`.
    pub fn build(view: &View, start: RobotState) -> Self {
        let kind = start.kind();
        let headings = kind.headings();
        let n = view.width() as usize * view.height() as usize * headings;
        let mut tree = SearchTree {
            start,
            width: view.width(),
            height: view.height(),
            headings,
            dist: vec![UNREACHED; n],
            parent: vec![UNREACHED; n],
        };
        let s0 = tree.encode(start);
        tree.dist[s0] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(s) = queue.pop_front() {
            let d = tree.dist[tree.encode(s)];
            for &m in kind.moves() {
                let Ok(next) = apply_motion(s, m, tree.width, tree.height) else { continue };
                if !view.class(next.cell).is_traversable() {
                    continue;
                }
                let i = tree.encode(next);
                if tree.dist[i] == UNREACHED {
                    tree.dist[i] = d + 1;
                    tree.parent[i] = tree.encode(s) as u32;
                    queue.push_back(next);
                }
            }
        }
        tree
    }

    pub fn start(&self) -> RobotState {
        self.start
    }

    fn best_state(&self, goal: Cell) -> Option<usize> {
        if goal.x < 1 || goal.y < 1 || goal.x > self.width || goal.y > self.height {
            return None;
        }
        let base = self.encode(RobotState { cell: goal, heading: self.start.heading.map(|_| Heading::East) });
        (base..base + self.headings).filter(|&i| self.dist[i] != UNREACHED).min_by_key(|&i| (self.dist[i], i))
    }

    /// Cheapest arrival at `goal` over all headings.
    pub fn cost_to(&self, goal: Cell) -> Cost {
        self.best_state(goal).map_or(Cost::Infinite, |i| Cost::Finite(self.dist[i]))
    }

    /// One shortest path to `goal`, ties resolved by expansion order.
    pub fn path_to(&self, goal: Cell) -> Option<Path> {
        let mut i = self.best_state(goal)?;
        let mut states = vec![self.decode(i)];
        while self.parent[i] != UNREACHED {
            i = self.parent[i] as usize;
            states.push(self.decode(i));
        }
        states.reverse();
        Some(Path::new(states).expect("search edges are single primitives"))
    }
}

/// Per-pair optimal costs plus the search trees that realise them.
#[derive(Clone, Debug)]
pub struct CostMatrix {
    pub participants: Vec<(RobotId, RobotState)>,
    pub goals: Vec<Cell>,
    pub costs: Vec<Vec<Cost>>,
    trees: Vec<SearchTree>,
}

impl CostMatrix {
    pub fn tree(&self, row: usize) -> &SearchTree {
        &self.trees[row]
    }

    pub fn row_of(&self, robot: RobotId) -> Option<usize> {
        self.participants.iter().position(|(id, _)| *id == robot)
    }

    pub fn goal_index(&self, goal: Cell) -> Option<usize> {
        self.goals.binary_search(&goal).ok()
    }
}

/// Participant -> goal index into [`CostMatrix::goals`], `None` for inactive.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    pub goal_of: Vec<Option<usize>>,
}

impl Assignment {
    pub fn active_count(&self) -> usize {
        self.goal_of.iter().filter(|g| g.is_some()).count()
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.goal_of.iter().flatten().all(|g| seen.insert(*g))
    }
}

/// BFS cost from each participant to each unreserved goal.
///
/// Participants are processed in ascending id order; goals in ascending cell order.
pub fn compute_optimal_costs(
    view: &View,
    reserved: &BTreeSet<Cell>,
    participants: &[(RobotId, RobotState)],
) -> Result<CostMatrix, CopError> {
    let mut participants = participants.to_vec();
    participants.sort_by_key(|(id, _)| *id);
    for &(robot, s) in &participants {
        if view.class(s.cell) != CellClass::Covered {
            return Err(CopError::NotCovered { robot, cell: s.cell });
        }
    }
    let goals = unassigned_goals(view, reserved);
    let trees: Vec<SearchTree> = participants.iter().map(|&(_, s)| SearchTree::build(view, s)).collect();
    let costs = trees.iter().map(|t| goals.iter().map(|&g| t.cost_to(g)).collect()).collect();
    Ok(CostMatrix { participants, goals, costs, trees })
}

/// Hungarian assignment over the matrix; unreachable pairs are never assigned.
pub fn assign_optimal(delta: &CostMatrix) -> Assignment {
    Assignment { goal_of: hungarian::assign(&delta.costs) }
}

/// Shortest path per participant; inactive participants keep their start state.
pub fn extract_optimal_paths(delta: &CostMatrix, gamma: &Assignment) -> Result<Vec<Path>, CopError> {
    delta
        .participants
        .iter()
        .enumerate()
        .map(|(row, &(robot, start))| match gamma.goal_of[row] {
            None => Ok(Path::singleton(start)),
            Some(g) => {
                let goal = delta.goals[g];
                let path = delta.trees[row].path_to(goal).ok_or(CopError::Inconsistent { robot, goal })?;
                if Cost::Finite(path.len() as u32) != delta.costs[row][g] {
                    return Err(CopError::Inconsistent { robot, goal });
                }
                Ok(path)
            }
        })
        .collect()
}
