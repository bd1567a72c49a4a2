//! Grid workspace, ground truth, and the four-way cell classification used by
//! robots (local views) and the coverage planner (global view).
//!
//! Coordinates are 1-based: `x` is the column in `1..=width`, `y` the row in
//! `1..=height`. Map files list rows from the top, so the first body line of a
//! `.map` file is `y = 1`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A grid cell `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    /// Neighbour at offset `(dx, dy)`, if it stays inside a `width x height` grid.
    pub fn offset(self, dx: i32, dy: i32, width: u32, height: u32) -> Option<Cell> {
        let x = self.x as i64 + dx as i64;
        let y = self.y as i64 + dy as i64;
        if x < 1 || y < 1 || x > width as i64 || y > height as i64 {
            None
        } else {
            Some(Cell::new(x as u32, y as u32))
        }
    }

    /// In-bounds 4-neighbours in E, N, W, S order.
    pub fn neighbours(self, width: u32, height: u32) -> impl Iterator<Item = Cell> {
        [(1, 0), (0, 1), (-1, 0), (0, -1)]
            .into_iter()
            .filter_map(move |(dx, dy)| self.offset(dx, dy, width, height))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("line {line}: malformed header: {message}")]
    Header { line: usize, message: String },
    #[error("line {line}: expected {expected} glyphs, found {found}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("line {line}, column {column}: unknown glyph {glyph:?}")]
    Glyph { line: usize, column: usize, glyph: char },
    #[error("expected {expected} map rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("cannot place {requested} obstacles on a {width}x{height} grid while keeping free space connected")]
    Generation { requested: usize, width: u32, height: u32 },
}

/// A grid workspace together with its hidden ground truth.
///
/// Planner-side code never receives a `Workspace`; only the sensor model,
/// the simulator and post-hoc audits read the truth grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Workspace {
    width: u32,
    height: u32,
    glyphs: Vec<u8>,
}

fn glyph_is_free(glyph: u8) -> Option<bool> {
    match glyph {
        b'.' | b'G' => Some(true),
        b'@' | b'O' | b'T' => Some(false),
        _ => None,
    }
}

impl Workspace {
    /// An obstacle-free workspace.
    pub fn open(width: u32, height: u32) -> Self {
        Self::from_fn(width, height, |_| true)
    }

    /// Build a workspace from a per-cell `is_free` predicate.
    pub fn from_fn(width: u32, height: u32, mut is_free: impl FnMut(Cell) -> bool) -> Self {
        assert!(width > 0 && height > 0, "workspace must be non-empty");
        let mut glyphs = Vec::with_capacity((width * height) as usize);
        for y in 1..=height {
            for x in 1..=width {
                glyphs.push(if is_free(Cell::new(x, y)) { b'.' } else { b'@' });
            }
        }
        Self { width, height, glyphs }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn num_cells(&self) -> usize {
        self.glyphs.len()
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x >= 1 && cell.y >= 1 && cell.x <= self.width && cell.y <= self.height
    }

    fn index(&self, cell: Cell) -> usize {
        ((cell.y - 1) * self.width + (cell.x - 1)) as usize
    }

    /// Ground truth: `true` iff the cell is in bounds and obstacle-free.
    pub fn is_free(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && glyph_is_free(self.glyphs[self.index(cell)]).unwrap_or(false)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (1..=self.height).flat_map(move |y| (1..=self.width).map(move |x| Cell::new(x, y)))
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        self.cells().filter(|&c| self.is_free(c)).collect()
    }

    pub fn obstacle_count(&self) -> usize {
        self.num_cells() - self.free_count()
    }

    pub fn free_count(&self) -> usize {
        self.glyphs.iter().filter(|&&g| glyph_is_free(g) == Some(true)).count()
    }

    /// Whether all free cells form one 4-connected component.
    pub fn free_space_connected(&self) -> bool {
        let free = self.free_cells();
        let Some(&first) = free.first() else {
            return false;
        };
        self.reachable_from(first) == free.len()
    }

    fn reachable_from(&self, start: Cell) -> usize {
        let mut seen = vec![false; self.num_cells()];
        let mut queue = VecDeque::from([start]);
        seen[self.index(start)] = true;
        let mut count = 0;
        while let Some(cell) = queue.pop_front() {
            count += 1;
            for next in cell.neighbours(self.width, self.height) {
                let i = self.index(next);
                if !seen[i] && self.is_free(next) {
                    seen[i] = true;
                    queue.push_back(next);
                }
            }
        }
        count
    }

    /// Serialize to MovingAI `.map` text. The grid body round-trips exactly.
    pub fn to_map_string(&self) -> String {
        let mut out = format!("type octile\nheight {}\nwidth {}\nmap\n", self.height, self.width);
        for row in self.glyphs.chunks(self.width as usize) {
            out.push_str(std::str::from_utf8(row).expect("glyphs are ASCII"));
            out.push('\n');
        }
        out
    }
}

/// Parse a MovingAI `.map` file.
pub fn parse_map(text: &str) -> Result<Workspace, MapError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));

    let mut header = |key: &str| -> Result<(usize, String), MapError> {
        let (line, content) = lines.next().ok_or_else(|| MapError::Header {
            line: 0,
            message: format!("missing `{key}` line"),
        })?;
        let mut parts = content.split_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok((line, parts.collect::<Vec<_>>().join(" "))),
            _ => Err(MapError::Header { line, message: format!("expected `{key}`, found {content:?}") }),
        }
    };

    let (line, kind) = header("type")?;
    if kind.is_empty() {
        return Err(MapError::Header { line, message: "missing map type".into() });
    }
    let parse_dim = |(line, value): (usize, String)| -> Result<u32, MapError> {
        value
            .parse::<u32>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| MapError::Header { line, message: format!("invalid dimension {value:?}") })
    };
    let height = parse_dim(header("height")?)?;
    let width = parse_dim(header("width")?)?;
    let (line, rest) = header("map")?;
    if !rest.is_empty() {
        return Err(MapError::Header { line, message: "unexpected text after `map`".into() });
    }

    let mut glyphs = Vec::with_capacity((width * height) as usize);
    let mut rows = 0usize;
    for (line, content) in lines {
        if rows == height as usize {
            if content.trim().is_empty() {
                continue;
            }
            return Err(MapError::RowCount { expected: height as usize, found: rows + 1 });
        }
        let bytes = content.as_bytes();
        if bytes.len() != width as usize {
            return Err(MapError::Ragged { line, expected: width as usize, found: bytes.len() });
        }
        for (col, &b) in bytes.iter().enumerate() {
            if glyph_is_free(b).is_none() {
                return Err(MapError::Glyph { line, column: col + 1, glyph: b as char });
            }
        }
        glyphs.extend_from_slice(bytes);
        rows += 1;
    }
    if rows != height as usize {
        return Err(MapError::RowCount { expected: height as usize, found: rows });
    }
    Ok(Workspace { width, height, glyphs })
}

/// Random map with exactly `round(density * width * height)` obstacles whose
/// free space stays 4-connected.
pub fn generate_random_map(width: u32, height: u32, density: f64, seed: u64) -> Result<Workspace, MapError> {
    let total = (width * height) as usize;
    let requested = (density * total as f64).round() as usize;
    let mut ws = Workspace::open(width, height);
    let mut order: Vec<Cell> = ws.cells().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut placed = 0;
    let mut free = total;
    for cell in order {
        if placed == requested {
            break;
        }
        if free <= 1 {
            break;
        }
        let i = ws.index(cell);
        ws.glyphs[i] = b'@';
        let anchor = cell
            .neighbours(width, height)
            .find(|&n| ws.is_free(n))
            .or_else(|| ws.cells().find(|&c| ws.is_free(c)));
        let connected = anchor.is_some_and(|a| ws.reachable_from(a) == free - 1);
        if connected {
            placed += 1;
            free -= 1;
        } else {
            ws.glyphs[i] = b'.';
        }
    }
    if placed != requested {
        return Err(MapError::Generation { requested, width, height });
    }
    Ok(ws)
}

/// Knowledge about one cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellClass {
    Unexplored,
    Obstacle,
    /// Explored, obstacle-free, not yet visited.
    Goal,
    /// Explored, obstacle-free, visited by some robot.
    Covered,
}

impl CellClass {
    /// Least upper bound under `Unexplored < {Obstacle, Goal}`, `Goal < Covered`.
    /// `None` when the two classes contradict each other.
    pub fn join(self, other: CellClass) -> Option<CellClass> {
        use CellClass::*;
        match (self, other) {
            (Unexplored, c) | (c, Unexplored) => Some(c),
            (Obstacle, Obstacle) => Some(Obstacle),
            (Obstacle, _) | (_, Obstacle) => None,
            (Covered, _) | (_, Covered) => Some(Covered),
            (Goal, Goal) => Some(Goal),
        }
    }

    /// Cells the planner may route through.
    pub fn is_traversable(self) -> bool {
        matches!(self, CellClass::Goal | CellClass::Covered)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ViewError {
    #[error("view dimensions {found:?} do not match {expected:?}")]
    DimensionMismatch { expected: (u32, u32), found: (u32, u32) },
    #[error("inconsistent knowledge at {cell}: {left:?} vs {right:?}")]
    Inconsistent { cell: Cell, left: CellClass, right: CellClass },
    #[error("robot deployed on non-free cell {0}")]
    InvalidDeployment(Cell),
}

/// A dense classification of every workspace cell.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct View {
    width: u32,
    height: u32,
    classes: Vec<CellClass>,
}

/// A robot's own knowledge of the workspace.
pub type LocalView = View;
/// The coverage planner's fused knowledge.
pub type GlobalView = View;

impl View {
    pub fn unexplored(width: u32, height: u32) -> Self {
        Self { width, height, classes: vec![CellClass::Unexplored; (width * height) as usize] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x >= 1 && cell.y >= 1 && cell.x <= self.width && cell.y <= self.height
    }

    pub(crate) fn index(&self, cell: Cell) -> usize {
        ((cell.y - 1) * self.width + (cell.x - 1)) as usize
    }

    pub(crate) fn cell_at(&self, index: usize) -> Cell {
        let w = self.width as usize;
        Cell::new((index % w) as u32 + 1, (index / w) as u32 + 1)
    }

    pub fn class(&self, cell: Cell) -> CellClass {
        self.classes[self.index(cell)]
    }

    /// Overwrite one cell. Used by tests and fixtures that hand-build views.
    pub fn set(&mut self, cell: Cell, class: CellClass) {
        let i = self.index(cell);
        self.classes[i] = class;
    }

    pub fn count(&self, class: CellClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    /// Cells of one class in ascending `(x, y)` order.
    pub fn cells_of(&self, class: CellClass) -> Vec<Cell> {
        let mut cells: Vec<Cell> = self
            .classes
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == class)
            .map(|(i, _)| self.cell_at(i))
            .collect();
        cells.sort();
        cells
    }

    pub fn is_traversable(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && self.class(cell).is_traversable()
    }

    /// Per-cell join with `other`.
    pub fn fuse(&mut self, other: &View) -> Result<(), ViewError> {
        if self.dims() != other.dims() {
            return Err(ViewError::DimensionMismatch { expected: self.dims(), found: other.dims() });
        }
        for (i, (mine, theirs)) in self.classes.iter_mut().zip(&other.classes).enumerate() {
            *mine = mine.join(*theirs).ok_or_else(|| {
                let w = self.width as usize;
                ViewError::Inconsistent {
                    cell: Cell::new((i % w) as u32 + 1, (i / w) as u32 + 1),
                    left: *mine,
                    right: *theirs,
                }
            })?;
        }
        Ok(())
    }
}

/// Rangefinder model: four beams (E, N, W, S) reaching `range` cells; a beam
/// stops at the first obstacle it hits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorModel {
    pub range: u32,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self { range: 1 }
    }
}

/// Initial local view of a robot standing on `start`.
pub fn init_local_view(start: Cell, ws: &Workspace, sensor: SensorModel) -> Result<LocalView, ViewError> {
    let mut view = View::unexplored(ws.width(), ws.height());
    sense_and_update(&mut view, start, ws, sensor)?;
    Ok(view)
}

/// Mark `cell` covered and classify every unexplored cell the beams reach.
/// Never downgrades existing knowledge.
pub fn sense_and_update(view: &mut LocalView, cell: Cell, ws: &Workspace, sensor: SensorModel) -> Result<(), ViewError> {
    if !ws.is_free(cell) {
        return Err(ViewError::InvalidDeployment(cell));
    }
    view.set(cell, CellClass::Covered);
    for (dx, dy) in [(1, 0), (0, 1), (-1, 0), (0, -1)] {
        let mut cur = cell;
        for _ in 0..sensor.range {
            let Some(next) = cur.offset(dx, dy, ws.width(), ws.height()) else {
                break;
            };
            let free = ws.is_free(next);
            if view.class(next) == CellClass::Unexplored {
                view.set(next, if free { CellClass::Goal } else { CellClass::Obstacle });
            }
            if !free {
                break;
            }
            cur = next;
        }
    }
    Ok(())
}

/// `global ⊔ local`, cell by cell.
pub fn fuse_views(global: &GlobalView, local: &LocalView) -> Result<GlobalView, ViewError> {
    let mut out = global.clone();
    out.fuse(local)?;
    Ok(out)
}

/// Goals not reserved by robots already travelling towards them.
pub fn unassigned_goals(global: &GlobalView, reserved: &BTreeSet<Cell>) -> Vec<Cell> {
    global.cells_of(CellClass::Goal).into_iter().filter(|c| !reserved.contains(c)).collect()
}
