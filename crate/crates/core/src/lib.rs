//! Geometry-reconstruction atomistic/continuum (GR-AC) coupling on the 2D
//! triangular lattice.
//!
//! The crate builds patch-test consistent hybrid energies for arbitrary
//! interface geometries, assembles the atomistic, Cauchy–Born and coupled
//! stress tensors together with their Crouzeix–Raviart correctors, and
//! measures consistency errors numerically.
//!
//! Module map:
//!
//! * [`lattice`]: sites, directions, the canonical triangulation, edges.
//! * [`fields`]: lattice displacement fields, finite differences, P1
//!   gradients, discrete norms and the `U^{-1,2}` dual norm.
//! * [`potentials`]: nearest-neighbour multi-body site potentials and the
//!   Cauchy–Born density.
//! * [`partition`]: atomistic / interface / continuum decomposition.
//! * [`reconstruction`]: reconstruction coefficients and the patch-test
//!   constraint system.
//! * [`energy`]: the three energies and their force fields.
//! * [`stress`]: stress tensors, correctors and consistency diagnostics.
//! * [`harness`]: experiment configuration and runners behind the `grac` CLI.

pub mod energy;
pub mod error;
pub mod fields;
pub mod harness;
pub mod lattice;
pub mod partition;
pub mod potentials;
pub mod reconstruction;
pub mod stress;

pub use error::{Error, Result};

/// Column vector in the plane.
pub type Vec2 = nalgebra::Vector2<f64>;
/// Real 2×2 matrix (deformation gradients and stresses).
pub type Mat2 = nalgebra::Matrix2<f64>;

/// Finite differences `(D_1 y(x), …, D_6 y(x))` of a deformation at a site.
pub type Bonds = [Vec2; 6];
