//! Space-time reservations and Halt-prefix start offsets.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::cop::{Assignment, CostMatrix};
use crate::kinematics::{Clk, Path, RobotId};
use crate::workspace::Cell;

use super::{CfpEvent, InactivationReason};

/// Why a candidate path cannot be committed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    /// Time relative to the table origin.
    pub time: Clk,
    pub with: RobotId,
}

/// Committed robots, each moving along a cell sequence from time 0 and
/// resting on its last cell forever afterwards.
#[derive(Clone, Debug, Default)]
pub struct ReservationTable {
    moving: HashMap<(Clk, Cell), RobotId>,
    rest: HashMap<Cell, (Clk, RobotId)>,
    last_visit: HashMap<Cell, Clk>,
}

impl ReservationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn occupant(&self, t: Clk, cell: Cell) -> Option<RobotId> {
        self.moving
            .get(&(t, cell))
            .copied()
            .or_else(|| self.rest.get(&cell).filter(|(from, _)| *from <= t).map(|&(_, r)| r))
    }

    pub fn commit(&mut self, robot: RobotId, cells: &[Cell]) {
        let end = cells.len() - 1;
        for (t, &c) in cells[..end].iter().enumerate() {
            self.moving.insert((t as Clk, c), robot);
            let lv = self.last_visit.entry(c).or_insert(0);
            *lv = (*lv).max(t as Clk);
        }
        self.rest.insert(cells[end], (end as Clk, robot));
    }

    pub fn commit_stationary(&mut self, robot: RobotId, cell: Cell) {
        self.commit(robot, &[cell]);
    }

    /// First same-cell, head-on or parked-goal conflict of `cells`.
    pub fn conflict(&self, cells: &[Cell]) -> Option<Conflict> {
        let end = cells.len() - 1;
        for t in 0..=end {
            let tc = t as Clk;
            if let Some(with) = self.occupant(tc, cells[t]) {
                return Some(Conflict { time: tc, with });
            }
            if t > 0 && cells[t] != cells[t - 1] {
                if let Some(k) = self.occupant(tc - 1, cells[t]) {
                    if self.occupant(tc, cells[t - 1]) == Some(k) {
                        return Some(Conflict { time: tc, with: k });
                    }
                }
            }
        }
        let goal = cells[end];
        if let Some(&(from, with)) = self.rest.get(&goal) {
            return Some(Conflict { time: from, with });
        }
        if let Some(&lv) = self.last_visit.get(&goal) {
            if lv > end as Clk {
                let with = self.moving[&(lv, goal)];
                return Some(Conflict { time: lv, with });
            }
        }
        None
    }

    /// Smallest `u <= bound` such that `u` Halts followed by `cells` is conflict-free.
    pub fn first_free_offset(&self, cells: &[Cell], bound: usize) -> Result<usize, Conflict> {
        let mut first = None;
        let mut candidate = Vec::with_capacity(cells.len() + bound);
        for u in 0..=bound {
            candidate.clear();
            candidate.extend(std::iter::repeat_n(cells[0], u));
            candidate.extend_from_slice(cells);
            match self.conflict(&candidate) {
                None => return Ok(u),
                Some(c) => {
                    first.get_or_insert(c);
                }
            }
        }
        Err(first.expect("at least one offset tried"))
    }
}

/// Offsets for one pass over the active participants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OffsetOutcome {
    pub gamma: Assignment,
    /// Per participant row; zero for inactive rows.
    pub offsets: Vec<usize>,
    pub events: Vec<CfpEvent>,
}

/// Search limit for a single participant's offset.
pub fn offset_bound(paths: &[Path], sigma_rem: &BTreeMap<RobotId, Path>) -> usize {
    let rem = sigma_rem.values().map(Path::len).max().unwrap_or(0);
    rem + paths.iter().map(Path::len).sum::<usize>() + paths.len() + sigma_rem.len()
}

/// Commit `sigma_rem` and inactive participants, then give each active
/// participant in `order` its minimal conflict-free Halt prefix. A participant
/// with no such prefix is inactivated and parks on its start for the rest of
/// the pass.
pub fn compute_start_offsets(
    delta: &CostMatrix,
    gamma: &Assignment,
    paths: &[Path],
    order: &[RobotId],
    sigma_rem: &BTreeMap<RobotId, Path>,
) -> OffsetOutcome {
    let mut table = ReservationTable::new();
    for (&k, rem) in sigma_rem {
        let cells: Vec<Cell> = rem.cells().collect();
        table.commit(k, &cells);
    }
    for (row, &(id, s)) in delta.participants.iter().enumerate() {
        if gamma.goal_of[row].is_none() {
            table.commit_stationary(id, s.cell);
        }
    }
    let bound = offset_bound(paths, sigma_rem);
    let mut out = OffsetOutcome { gamma: gamma.clone(), offsets: vec![0; paths.len()], events: Vec::new() };
    for &robot in order {
        let row = delta.row_of(robot).expect("ordered robots are participants");
        let cells: Vec<Cell> = paths[row].cells().collect();
        match table.first_free_offset(&cells, bound) {
            Ok(u) => {
                out.offsets[row] = u;
                let mut timed = vec![cells[0]; u];
                timed.extend_from_slice(&cells);
                table.commit(robot, &timed);
            }
            Err(conflict) => {
                out.gamma.goal_of[row] = None;
                table.commit_stationary(robot, cells[0]);
                out.events.push(CfpEvent::Inactivated { robot, reason: InactivationReason::Blocked { by: conflict.with } });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: u32) -> Cell {
        Cell::new(x, 1)
    }

    #[test]
    fn parked_goal_blocks_forever() {
        let mut t = ReservationTable::new();
        t.commit(RobotId(9), &[c(1), c(2), c(3), c(4)]);
        assert_eq!(t.first_free_offset(&[c(5), c(4)], 10).unwrap_err().with, RobotId(9));
    }

    #[test]
    fn waits_until_a_crossing_robot_has_passed() {
        let col = |y: u32| Cell::new(2, y);
        let mut t = ReservationTable::new();
        // r9 sweeps along row 1 and parks on (3, 1)
        t.commit(RobotId(9), &[c(1), c(2), c(3)]);
        assert_eq!(t.first_free_offset(&[col(3), col(2), col(1)], 10), Ok(0));
        assert_eq!(t.first_free_offset(&[col(2), col(1)], 10), Ok(1));
    }

    #[test]
    fn head_on_is_detected() {
        let mut t = ReservationTable::new();
        t.commit(RobotId(1), &[c(1), c(2)]);
        let hit = t.conflict(&[c(2), c(1)]).unwrap();
        assert_eq!(hit.with, RobotId(1));
    }

    #[test]
    fn parking_on_a_later_visited_cell_is_rejected() {
        let mut t = ReservationTable::new();
        t.commit(RobotId(1), &[c(1), c(2), c(3), c(2)]);
        assert!(t.conflict(&[c(4), c(3)]).is_some());
        assert!(t.conflict(&[c(5), c(4)]).is_none());
    }
}
