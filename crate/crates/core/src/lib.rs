//! Concurrent multi-robot coverage path planning for unknown grid workspaces.
//!
//! A central coverage planner receives local views from robots that finished
//! their paths, fuses them, and plans collision-free paths for those robots
//! while the remaining robots keep moving. The [`sim`] module drives whole
//! missions on a virtual or wall clock and reports coverage, safety and
//! planning/execution overlap metrics.

pub mod cfp;
pub mod coordinator;
pub mod cop;
pub mod kinematics;
pub mod sim;
pub mod workspace;

pub use kinematics::{Clk, Heading, Motion, Path, RobotId, RobotKind, RobotState, TimedPath};
pub use workspace::{Cell, CellClass, View, Workspace};
