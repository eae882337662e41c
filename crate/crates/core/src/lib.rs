//! Time-discrete solver for the φ-η-θ model of planar grain boundary motion
//! under isothermal solidification.
//!
//! Each time step solves a fixed-point problem for the order parameters
//! `v = [w, η]` and then a weighted total-variation minimisation for the
//! orientation `θ`. The [`verify`] module packages the invariants the
//! scheme is expected to satisfy as runnable checks.

pub mod energy;
pub mod grid;
pub mod init;
pub mod model;
pub mod scheme;
pub mod state;
pub mod thetastep;
pub mod verify;
pub mod vstep;

pub use grid::{GridError, GridSpec, ScalarField, VectorField};
pub use model::{check_a4, MobilitySpec, ModelError, ModelSpec, PotentialSpec, ValidationReport};
pub use state::PhaseState;
