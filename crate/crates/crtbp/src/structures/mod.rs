//! Phase-space structures: Poincare sections, periodic orbits, and
//! invariant manifolds.

pub mod manifold;
pub mod orbit;
pub mod section;
pub mod target;

pub use manifold::{globalize_manifold, ManifoldBranch, ManifoldKind, ManifoldTrajectory};
pub use orbit::{find_periodic_orbit, monodromy, Monodromy, OrbitTarget, PeriodicOrbit};
pub use section::{
    detect_crossings, CrossingDirection, DirectionFilter, PoincareSection, SectionCrossing,
};
pub use target::{target_orbit_region, TargetRegion};
