//! A numerical laboratory for generalized electromagnetism: p-form fields on
//! ultrastatic spacetimes whose spatial sections are flat tori.
//!
//! The crate discretizes the spatial slice with a periodic cubical complex
//! and diagonal Hodge weights, evolves the constrained wave system with a
//! staggered leapfrog, builds retarded/advanced Green's operators by causal
//! marching, and carries the classical solution space all the way through
//! the symplectic form and a one-particle structure to smeared field
//! operators, canonical commutators, and Weyl unitaries on a truncated
//! Fock space. Every structural identity along the way is exposed as a
//! residual that test suites can pin down.

pub mod cauchy;
pub mod error;
pub mod evolve;
pub mod forms;
pub mod green;
pub mod lattice;
pub mod phase;
pub mod quantum;

pub use error::{Error, Result};
pub use forms::{HodgeParts, HodgeSector, ModeBasis, Slice, SpatialMetric};
pub use lattice::{Cochain, CubicalComplex};
