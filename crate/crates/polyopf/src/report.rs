//! Run summaries: the bound report produced by every method, and the
//! user-facing level convention.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// The bound is attained by a feasible point: residuals within tolerance
    /// and objective gap within the certification tolerance.
    GlobalCertified,
    /// A valid lower bound without a matching feasible point.
    BoundOnly,
    SolverFailure,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::GlobalCertified => "GlobalCertified",
            Status::BoundOnly => "BoundOnly",
            Status::SolverFailure => "SolverFailure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub method: String,
    /// Lower bound on the generation cost in $/h.
    pub lower_bound: f64,
    pub status: Status,
    /// Voltage vector `[Re V; Im V]` when extraction succeeded.
    pub extracted_x: Option<Vec<f64>>,
    /// Eigenvalue ratio of the (rotation-reduced) order-1 moment matrix;
    /// small means numerically rank one.
    pub rank_gap: f64,
    pub iterations: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    Op2,
    Op4,
}

impl Formulation {
    /// Maps the user-facing hierarchy level (1, 2, …) to the internal
    /// moment-basis degree r: the degree-2 formulation starts at r = 1, the
    /// degree-4 formulation at r = 2.
    pub fn moment_degree(self, level: usize) -> usize {
        match self {
            Formulation::Op2 => level,
            Formulation::Op4 => level + 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Formulation::Op2 => "op2",
            Formulation::Op4 => "op4",
        }
    }
}
