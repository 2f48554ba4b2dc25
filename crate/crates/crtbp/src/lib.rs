//! Planar circular restricted three-body problem toolkit.
//!
//! A variational (symplectic) integrator for the PCRTBP, analytic step
//! Jacobians and costate propagation, periodic orbits with invariant
//! manifold globalization on Poincare sections, and an indirect optimal
//! control solver that sweeps out reachable sets under bounded low thrust
//! for transfer design.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod integrator;
pub mod linearization;
pub mod plot;
pub mod reachability;
pub mod run;
pub mod structures;

pub use error::{Error, Result};
