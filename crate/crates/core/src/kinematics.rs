//! Robot states, motion primitives, paths and the path-set audit.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workspace::{Cell, Workspace};

/// Global discrete clock value.
pub type Clk = u64;

/// 1-based robot identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RobotId(pub u32);

impl RobotId {
    /// Zero-based index into per-robot vectors.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(i: usize) -> Self {
        RobotId(i as u32 + 1)
    }
}

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Heading {
    East,
    North,
    West,
    South,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::East, Heading::North, Heading::West, Heading::South];

    pub fn offset(self) -> (i32, i32) {
        match self {
            Heading::East => (1, 0),
            Heading::North => (0, 1),
            Heading::West => (-1, 0),
            Heading::South => (0, -1),
        }
    }

    /// 90° counter-clockwise.
    pub fn left(self) -> Heading {
        match self {
            Heading::East => Heading::North,
            Heading::North => Heading::West,
            Heading::West => Heading::South,
            Heading::South => Heading::East,
        }
    }

    /// 90° clockwise.
    pub fn right(self) -> Heading {
        match self {
            Heading::East => Heading::South,
            Heading::South => Heading::West,
            Heading::West => Heading::North,
            Heading::North => Heading::East,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        match self {
            Heading::East => 'E',
            Heading::North => 'N',
            Heading::West => 'W',
            Heading::South => 'S',
        }
    }

    pub fn from_letter(c: char) -> Option<Heading> {
        Heading::ALL.into_iter().find(|h| h.letter() == c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotKind {
    /// State is cell + heading; moves are Halt, TurnLeft, TurnRight, MoveNext.
    DifferentialDrive,
    /// State is a cell; moves are Halt and the four compass translations.
    Holonomic,
}

impl RobotKind {
    /// Non-Halt primitives in search tie-break order.
    pub fn moves(self) -> &'static [Motion] {
        match self {
            RobotKind::DifferentialDrive => &[Motion::MoveNext, Motion::TurnLeft, Motion::TurnRight],
            RobotKind::Holonomic => &[Motion::MoveEast, Motion::MoveNorth, Motion::MoveWest, Motion::MoveSouth],
        }
    }

    pub fn headings(self) -> usize {
        match self {
            RobotKind::DifferentialDrive => 4,
            RobotKind::Holonomic => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Motion {
    Halt,
    TurnLeft,
    TurnRight,
    MoveNext,
    MoveEast,
    MoveNorth,
    MoveWest,
    MoveSouth,
}

impl Motion {
    pub fn is_halt(self) -> bool {
        self == Motion::Halt
    }

    fn legal_for(self, kind: RobotKind) -> bool {
        match self {
            Motion::Halt => true,
            Motion::TurnLeft | Motion::TurnRight | Motion::MoveNext => kind == RobotKind::DifferentialDrive,
            _ => kind == RobotKind::Holonomic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RobotState {
    pub cell: Cell,
    pub heading: Option<Heading>,
}

impl RobotState {
    pub fn holonomic(cell: Cell) -> Self {
        Self { cell, heading: None }
    }

    pub fn oriented(cell: Cell, heading: Heading) -> Self {
        Self { cell, heading: Some(heading) }
    }

    pub fn kind(&self) -> RobotKind {
        if self.heading.is_some() {
            RobotKind::DifferentialDrive
        } else {
            RobotKind::Holonomic
        }
    }
}

impl fmt::Display for RobotState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.heading {
            Some(h) => write!(f, "({}, {}, {})", self.cell.x, self.cell.y, h.letter()),
            None => write!(f, "{}", self.cell),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MotionError {
    #[error("{motion:?} is not a {kind:?} primitive")]
    Illegal { motion: Motion, kind: RobotKind },
    #[error("{motion:?} from {from} leaves the workspace")]
    OutOfBounds { from: RobotState, motion: Motion },
}

/// Apply one primitive inside a `width x height` grid.
pub fn apply_motion(state: RobotState, m: Motion, width: u32, height: u32) -> Result<RobotState, MotionError> {
    let kind = state.kind();
    if !m.legal_for(kind) {
        return Err(MotionError::Illegal { motion: m, kind });
    }
    let translate = |h: Heading| {
        let (dx, dy) = h.offset();
        state
            .cell
            .offset(dx, dy, width, height)
            .map(|cell| RobotState { cell, heading: state.heading })
            .ok_or(MotionError::OutOfBounds { from: state, motion: m })
    };
    match m {
        Motion::Halt => Ok(state),
        Motion::TurnLeft => Ok(RobotState { heading: state.heading.map(Heading::left), ..state }),
        Motion::TurnRight => Ok(RobotState { heading: state.heading.map(Heading::right), ..state }),
        Motion::MoveNext => translate(state.heading.expect("differential drive has a heading")),
        Motion::MoveEast => translate(Heading::East),
        Motion::MoveNorth => translate(Heading::North),
        Motion::MoveWest => translate(Heading::West),
        Motion::MoveSouth => translate(Heading::South),
    }
}

/// The primitive that turns `from` into `to`, if any.
pub fn motion_between(from: RobotState, to: RobotState) -> Option<Motion> {
    if from == to {
        return Some(Motion::Halt);
    }
    let kind = from.kind();
    if to.kind() != kind {
        return None;
    }
    kind.moves().iter().copied().find(|&m| {
        // bounds never matter here: `to` is already a concrete cell
        apply_motion(from, m, u32::MAX, u32::MAX).ok() == Some(to)
    })
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PathError {
    #[error("a path needs at least one state")]
    Empty,
    #[error("step {index}: {from} -> {to} is not a single primitive")]
    BadStep { index: usize, from: RobotState, to: RobotState },
    #[error("state {index} at {cell} is out of bounds")]
    OutOfBounds { index: usize, cell: Cell },
}

/// A state sequence `s_0..s_Λ`; `len()` is the move count Λ.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Path {
    states: Vec<RobotState>,
}

impl Path {
    pub fn new(states: Vec<RobotState>) -> Result<Self, PathError> {
        if states.is_empty() {
            return Err(PathError::Empty);
        }
        for (index, w) in states.windows(2).enumerate() {
            if motion_between(w[0], w[1]).is_none() {
                return Err(PathError::BadStep { index, from: w[0], to: w[1] });
            }
        }
        Ok(Self { states })
    }

    pub fn singleton(state: RobotState) -> Self {
        Self { states: vec![state] }
    }

    /// Build from a start state and a primitive sequence.
    pub fn from_motions(start: RobotState, motions: &[Motion], width: u32, height: u32) -> Result<Self, MotionError> {
        let mut states = vec![start];
        for &m in motions {
            let next = apply_motion(*states.last().expect("non-empty"), m, width, height)?;
            states.push(next);
        }
        Ok(Self { states })
    }

    /// Number of moves Λ.
    pub fn len(&self) -> usize {
        self.states.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn states(&self) -> &[RobotState] {
        &self.states
    }

    pub fn first(&self) -> RobotState {
        self.states[0]
    }

    pub fn last(&self) -> RobotState {
        *self.states.last().expect("non-empty")
    }

    /// State after `j` moves, holding the last state once the path ends.
    pub fn state_at(&self, j: usize) -> RobotState {
        self.states[j.min(self.states.len() - 1)]
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.states.iter().map(|s| s.cell)
    }

    pub fn contains_cell(&self, cell: Cell) -> bool {
        self.cells().any(|c| c == cell)
    }

    pub fn motions(&self) -> Vec<Motion> {
        self.states
            .windows(2)
            .map(|w| motion_between(w[0], w[1]).expect("paths hold single-primitive steps"))
            .collect()
    }

    /// Prefix `n` Halt moves.
    pub fn with_halt_prefix(&self, n: usize) -> Path {
        let mut states = vec![self.first(); n];
        states.extend_from_slice(&self.states);
        Path { states }
    }

    /// Append `other`, whose first state must equal this path's last state.
    pub fn extend(&mut self, other: &Path) {
        assert_eq!(self.last(), other.first(), "paths must join");
        self.states.extend_from_slice(&other.states[1..]);
    }

    pub fn push(&mut self, state: RobotState) {
        debug_assert!(motion_between(self.last(), state).is_some());
        self.states.push(state);
    }

    /// Sub-path `s_from..=s_to`.
    pub fn slice(&self, from: usize, to: usize) -> Path {
        Path { states: self.states[from..=to].to_vec() }
    }

    pub fn check_bounds(&self, width: u32, height: u32) -> Result<(), PathError> {
        for (index, s) in self.states.iter().enumerate() {
            if s.cell.x < 1 || s.cell.y < 1 || s.cell.x > width || s.cell.y > height {
                return Err(PathError::OutOfBounds { index, cell: s.cell });
            }
        }
        Ok(())
    }
}

/// Number of non-Halt primitives.
pub fn path_cost(path: &Path) -> usize {
    path.states.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Number of primitives including Halt.
pub fn total_moves(path: &Path) -> usize {
    path.len()
}

/// A path whose first state is occupied during interval `t_start`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedPath {
    pub path: Path,
    pub t_start: Clk,
}

impl TimedPath {
    pub fn new(path: Path, t_start: Clk) -> Self {
        Self { path, t_start }
    }

    pub fn stationary(state: RobotState, t_start: Clk) -> Self {
        Self { path: Path::singleton(state), t_start }
    }

    /// State at CLK `t`: the first state before `t_start`, the last after the end.
    pub fn state_at(&self, t: Clk) -> RobotState {
        if t <= self.t_start {
            self.path.first()
        } else {
            self.path.state_at((t - self.t_start) as usize)
        }
    }

    pub fn cell_at(&self, t: Clk) -> Cell {
        self.state_at(t).cell
    }

    /// CLK at which the last state is first occupied.
    pub fn t_end(&self) -> Clk {
        self.t_start + self.path.len() as Clk
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Obstacle,
    SameCell,
    HeadOn,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub time: Clk,
    /// One robot for obstacle hits, an ordered pair otherwise.
    pub robots: Vec<RobotId>,
    pub kind: ViolationKind,
}

/// Violations found by [`validate_path_set`], sorted by time, kind, robots.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

/// Check obstacle avoidance, same-cell and head-on conditions for every CLK
/// in `0..=horizon`. Paths hold their end states past their last move.
pub fn validate_path_set(paths: &BTreeMap<RobotId, TimedPath>, ws: &Workspace, horizon: Clk) -> AuditReport {
    let mut violations = Vec::new();
    let ids: Vec<RobotId> = paths.keys().copied().collect();
    let mut prev: Vec<Cell> = Vec::new();
    for t in 0..=horizon {
        let cur: Vec<Cell> = ids.iter().map(|id| paths[id].cell_at(t)).collect();
        let mut occupants: BTreeMap<Cell, Vec<usize>> = BTreeMap::new();
        for (i, &cell) in cur.iter().enumerate() {
            if !ws.is_free(cell) {
                violations.push(Violation { time: t, robots: vec![ids[i]], kind: ViolationKind::Obstacle });
            }
            occupants.entry(cell).or_default().push(i);
        }
        for group in occupants.values() {
            for (a, &i) in group.iter().enumerate() {
                for &k in &group[a + 1..] {
                    violations.push(Violation { time: t, robots: vec![ids[i], ids[k]], kind: ViolationKind::SameCell });
                }
            }
        }
        if t > 0 {
            let mut before: BTreeMap<Cell, Vec<usize>> = BTreeMap::new();
            for (i, &cell) in prev.iter().enumerate() {
                before.entry(cell).or_default().push(i);
            }
            for (i, (&from, &to)) in prev.iter().zip(&cur).enumerate() {
                if from == to {
                    continue;
                }
                for &k in before.get(&to).map(Vec::as_slice).unwrap_or_default() {
                    if k > i && cur[k] == from {
                        violations.push(Violation { time: t, robots: vec![ids[i], ids[k]], kind: ViolationKind::HeadOn });
                    }
                }
            }
        }
        prev = cur;
    }
    violations.sort();
    AuditReport { violations }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("robot {robot}: missing record for clk {clk}")]
    Gap { robot: RobotId, clk: Clk },
    #[error("robot {robot}: {source}")]
    Path { robot: RobotId, source: PathError },
}

pub const TRACE_HEADER: &str = "clk,robot_id,x,y,heading";

/// Render trajectories as `clk,robot_id,x,y,heading` lines, ordered by clk then robot.
pub fn write_trace(trajectories: &BTreeMap<RobotId, Vec<RobotState>>) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    let horizon = trajectories.values().map(Vec::len).max().unwrap_or(0);
    for t in 0..horizon {
        for (id, states) in trajectories {
            let Some(s) = states.get(t) else { continue };
            let heading = s.heading.map(|h| h.letter().to_string()).unwrap_or_default();
            out.push_str(&format!("{t},{},{},{},{heading}\n", id.0, s.cell.x, s.cell.y));
        }
    }
    out
}

/// Parse a trace into one path per robot, anchored at CLK 0.
pub fn parse_trace(text: &str) -> Result<BTreeMap<RobotId, Path>, TraceError> {
    let mut records: BTreeMap<RobotId, BTreeMap<Clk, RobotState>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() || (line == 1 && raw.starts_with("clk")) {
            continue;
        }
        let err = |message: &str| TraceError::Parse { line, message: message.to_string() };
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 5 {
            return Err(err("expected 5 comma-separated fields"));
        }
        let num = |s: &str| s.trim().parse::<u64>().map_err(|_| err(&format!("invalid number {s:?}")));
        let clk = num(fields[0])?;
        let id = num(fields[1])?;
        let x = num(fields[2])?;
        let y = num(fields[3])?;
        if id == 0 || x == 0 || y == 0 || id > u32::MAX as u64 || x > u32::MAX as u64 || y > u32::MAX as u64 {
            return Err(err("ids and coordinates are 1-based 32-bit values"));
        }
        let heading = match fields[4].trim() {
            "" => None,
            h if h.len() == 1 => Some(Heading::from_letter(h.chars().next().unwrap()).ok_or_else(|| err("invalid heading"))?),
            _ => return Err(err("invalid heading")),
        };
        let state = RobotState { cell: Cell::new(x as u32, y as u32), heading };
        if records.entry(RobotId(id as u32)).or_default().insert(clk, state).is_some() {
            return Err(err("duplicate record"));
        }
    }
    let mut out = BTreeMap::new();
    for (robot, by_clk) in records {
        let mut states = Vec::with_capacity(by_clk.len());
        for (expected, (clk, s)) in by_clk.into_iter().enumerate() {
            if clk != expected as Clk {
                return Err(TraceError::Gap { robot, clk: expected as Clk });
            }
            states.push(s);
        }
        let path = Path::new(states).map_err(|source| TraceError::Path { robot, source })?;
        out.insert(robot, path);
    }
    Ok(out)
}
