//! Semidefinite relaxations of polynomial programs: dense moment hierarchy,
//! correlative-sparsity (clique) hierarchy, and the explicit dual SDP used as
//! an independent cross-check at the first level.

pub mod chordal;
pub mod dense;
pub mod face;
pub mod sparse;
