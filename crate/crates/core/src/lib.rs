//! Laboratory for divergence-constrained microstructure: spectral energies,
//! exact laminate and branching constructions, hull algebra and scaling-law
//! diagnostics.
//!
//! The crate is organized around a few moving parts:
//!
//! * [`operator`] — constant-coefficient homogeneous operators, symbols,
//!   wave cones, and the divergence rewriting of first-order operators;
//! * [`wells`] / [`hulls`] — the three-state system in exact rational
//!   arithmetic, hull membership and decomposition, rigidity search;
//! * [`grid`] — periodic fields, transforms, cone multipliers, field files;
//! * [`geometry`] — exact polyhedral complexes with jump-condition checks;
//! * [`constructions`] — simple laminates, two-well branching and the
//!   iterated three-state laminate, with analytic energy accounting;
//! * [`energy`] — pair and relaxed elastic energies, interfacial energy,
//!   frequency-control diagnostics;
//! * [`scaling`] — sweeps, scaling-law fits, calibrated certificates.

pub mod constructions;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod hulls;
pub mod la;
pub mod operator;
pub mod scaling;
pub mod wells;

pub use error::{Error, Result};
