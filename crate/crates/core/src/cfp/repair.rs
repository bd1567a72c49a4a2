//! Feasibility repair: crossover path pairs and nested paths.

use std::collections::BTreeSet;

use crate::cop::{Assignment, CostMatrix};
use crate::kinematics::Path;
use crate::workspace::Cell;

use super::{CfpEvent, InactivationReason, SwapKind};

/// Participant rows `(a, b)`, `a < b`, forming a crossover pair.
pub fn crossover_pairs(starts: &[Cell], gamma: &Assignment, paths: &[Path]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..starts.len() {
        for b in a + 1..starts.len() {
            if crossover_kind(starts, gamma, paths, a, b).is_some() {
                out.push((a, b));
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Crossover {
    /// `sitter` is inactive and stands on the active `mover`'s path.
    Sitting { sitter: usize, mover: usize },
    /// Both active, each start on the other's path.
    Mutual,
}

fn crossover_kind(starts: &[Cell], gamma: &Assignment, paths: &[Path], a: usize, b: usize) -> Option<Crossover> {
    let active = |i: usize| gamma.goal_of[i].is_some();
    match (active(a), active(b)) {
        (false, true) if paths[b].contains_cell(starts[a]) => Some(Crossover::Sitting { sitter: a, mover: b }),
        (true, false) if paths[a].contains_cell(starts[b]) => Some(Crossover::Sitting { sitter: b, mover: a }),
        (true, true) if paths[b].contains_cell(starts[a]) && paths[a].contains_cell(starts[b]) => Some(Crossover::Mutual),
        _ => None,
    }
}

/// Active rows `(outer, inner)` where `inner`'s start and goal both lie on `outer`'s path.
pub fn nested_pairs(starts: &[Cell], gamma: &Assignment, paths: &[Path]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for outer in 0..starts.len() {
        for inner in 0..starts.len() {
            if outer != inner && is_nested(starts, gamma, paths, inner, outer) {
                out.push((outer, inner));
            }
        }
    }
    out
}

fn is_nested(starts: &[Cell], gamma: &Assignment, paths: &[Path], inner: usize, outer: usize) -> bool {
    gamma.goal_of[inner].is_some()
        && gamma.goal_of[outer].is_some()
        && paths[outer].contains_cell(starts[inner])
        && paths[outer].contains_cell(paths[inner].last().cell)
}

pub(crate) fn starts_of(delta: &CostMatrix) -> Vec<Cell> {
    delta.participants.iter().map(|(_, s)| s.cell).collect()
}

/// Shortest path from a participant's start to goal `g`, or its start alone.
pub(crate) fn path_for(delta: &CostMatrix, row: usize, g: Option<usize>) -> Option<Path> {
    match g {
        None => Some(Path::singleton(delta.participants[row].1)),
        Some(g) => delta.tree(row).path_to(delta.goals[g]),
    }
}

/// Repair state shared by the crossover and nested passes. Every assignment
/// ever produced is remembered; revisiting one falls back to inactivation,
/// which always yields a fresh state because the active count never grows.
pub(crate) struct Repair<'a> {
    pub delta: &'a CostMatrix,
    pub gamma: Assignment,
    pub paths: Vec<Path>,
    pub events: Vec<CfpEvent>,
    seen: BTreeSet<Vec<Option<usize>>>,
}

impl<'a> Repair<'a> {
    pub fn new(delta: &'a CostMatrix, gamma: Assignment, paths: Vec<Path>) -> Self {
        let mut seen = BTreeSet::new();
        seen.insert(gamma.goal_of.clone());
        Self { delta, gamma, paths, events: Vec::new(), seen }
    }

    fn inactivate(&mut self, row: usize, reason: InactivationReason) {
        self.gamma.goal_of[row] = None;
        self.paths[row] = Path::singleton(self.delta.participants[row].1);
        self.seen.insert(self.gamma.goal_of.clone());
        self.events.push(CfpEvent::Inactivated { robot: self.delta.participants[row].0, reason });
    }

    /// Adopt `candidate` if every path exists and the state is new.
    fn try_adopt(&mut self, candidate: Vec<Option<usize>>, rows: &[usize]) -> bool {
        if self.seen.contains(&candidate) {
            return false;
        }
        let mut fresh = Vec::with_capacity(rows.len());
        for &r in rows {
            match path_for(self.delta, r, candidate[r]) {
                Some(p) => fresh.push(p),
                None => return false,
            }
        }
        for (&r, p) in rows.iter().zip(fresh) {
            self.paths[r] = p;
        }
        self.gamma.goal_of = candidate;
        self.seen.insert(self.gamma.goal_of.clone());
        true
    }

    /// Swap goals until no crossover pair remains. Returns whether anything changed.
    pub fn adjust_crossover(&mut self) -> bool {
        let starts = starts_of(self.delta);
        let mut changed = false;
        loop {
            let mut found = None;
            'scan: for a in 0..starts.len() {
                for b in a + 1..starts.len() {
                    if let Some(kind) = crossover_kind(&starts, &self.gamma, &self.paths, a, b) {
                        found = Some((a, b, kind));
                        break 'scan;
                    }
                }
            }
            let Some((a, b, kind)) = found else { return changed };
            changed = true;
            let mut candidate = self.gamma.goal_of.clone();
            candidate.swap(a, b);
            let (ra, rb) = (self.delta.participants[a].0, self.delta.participants[b].0);
            if self.try_adopt(candidate, &[a, b]) {
                self.events.push(CfpEvent::Swapped { a: ra, b: rb, kind: SwapKind::Crossover });
            } else {
                let victim = match kind {
                    Crossover::Sitting { mover, .. } => mover,
                    Crossover::Mutual => b,
                };
                self.inactivate(victim, InactivationReason::CrossoverFallback);
            }
        }
    }

    /// One tree-reordering pass over all nesting forests. Returns whether anything changed.
    pub fn adjust_nested(&mut self) -> bool {
        let starts = starts_of(self.delta);
        let n = starts.len();
        let pairs = nested_pairs(&starts, &self.gamma, &self.paths);
        if pairs.is_empty() {
            return false;
        }
        let rank = |r: usize| (self.paths[r].len(), self.delta.participants[r].0);
        let mut parent: Vec<Option<usize>> = vec![None; n];
        for inner in 0..n {
            let best = pairs.iter().filter(|&&(_, i)| i == inner).map(|&(o, _)| o).min_by_key(|&o| rank(o));
            if let Some(outer) = best {
                // refuse an edge that would close a cycle
                let mut up = Some(outer);
                let mut cyclic = false;
                while let Some(u) = up {
                    if u == inner {
                        cyclic = true;
                        break;
                    }
                    up = parent[u];
                }
                if !cyclic {
                    parent[inner] = Some(outer);
                }
            }
        }
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (child, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                children[p].push(child);
            }
        }
        for (p, kids) in children.iter_mut().enumerate() {
            let path = &self.paths[p];
            kids.sort_by_key(|&k| {
                let pos = path.cells().position(|c| c == starts[k]).unwrap_or(usize::MAX);
                (pos, self.delta.participants[k].0)
            });
        }

        fn pre(node: usize, children: &[Vec<usize>], out: &mut Vec<usize>) {
            out.push(node);
            for &c in &children[node] {
                pre(c, children, out);
            }
        }
        fn post(node: usize, children: &[Vec<usize>], out: &mut Vec<usize>) {
            for &c in &children[node] {
                post(c, children, out);
            }
            out.push(node);
        }

        let mut candidate = self.gamma.goal_of.clone();
        let mut touched = Vec::new();
        for root in 0..n {
            if parent[root].is_some() || children[root].is_empty() {
                continue;
            }
            let (mut robots, mut goals) = (Vec::new(), Vec::new());
            pre(root, &children, &mut robots);
            post(root, &children, &mut goals);
            for (&r, &g) in robots.iter().zip(&goals) {
                candidate[r] = self.gamma.goal_of[g];
            }
            touched.extend(robots);
        }
        touched.sort_unstable();
        if self.try_adopt(candidate, &touched) {
            self.events.push(CfpEvent::Reassigned {
                robots: touched.iter().map(|&r| self.delta.participants[r].0).collect(),
            });
        } else {
            let victim = (0..n).filter(|&r| parent[r].is_some()).max_by_key(|&r| self.delta.participants[r].0);
            let victim = victim.expect("a nesting forest has a child");
            self.inactivate(victim, InactivationReason::NestedFallback);
        }
        true
    }

    /// Alternate both passes until neither finds anything.
    pub fn run(&mut self) {
        loop {
            let crossed = self.adjust_crossover();
            let nested = self.adjust_nested();
            if !crossed && !nested {
                return;
            }
        }
    }

    pub fn into_parts(self) -> (Assignment, Vec<Path>, Vec<CfpEvent>) {
        (self.gamma, self.paths, self.events)
    }
}
