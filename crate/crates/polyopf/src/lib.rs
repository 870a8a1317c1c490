//! Global lower bounds (and certified optima) for AC optimal power flow.
//!
//! The pipeline: parse a MATPOWER case ([`case_io`]), assemble the admittance
//! model and the real quadratic-form matrices ([`network`]), build a degree-4
//! or lifted degree-2 polynomial program ([`polyprog`]), relax it to a
//! semidefinite program — dense moment hierarchy ([`relax::dense`]),
//! clique-sparse hierarchy ([`relax::sparse`]), or the cutting-surface loop
//! ([`digs`]) — and solve with the built-in primal-dual interior-point kernel
//! ([`sdp`]). Solution extraction and certification live in [`relax::sparse`];
//! run summaries in [`report`].

pub mod case_io;
pub mod digs;
pub mod network;
pub mod polyprog;
pub mod relax;
pub mod report;
pub mod run;
pub mod sdp;
