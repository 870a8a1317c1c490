//! Block-diagonal semidefinite programming: problem container, a
//! self-contained primal-dual interior-point solver, and SDPA sparse-format
//! interop.

pub mod problem;
pub mod sdpa;
pub mod solver;

pub use problem::{Block, BlockKind, Constraint, Entry, SdpProblem, Sense};
pub use solver::{solve, SdpError, SdpOptions, SdpSolution, SdpStatus};
