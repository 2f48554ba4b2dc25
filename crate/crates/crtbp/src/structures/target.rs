//! Target region on a Poincare section: crossings of a control-free
//! lunar orbit, clustered by crossing direction.

use serde::{Deserialize, Serialize};

use crate::dynamics::{distances, jacobi_integral, ControlVec, StateVec, SystemParams};
use crate::error::Result;
use crate::integrator::{propagate_const, DiscreteTrajectory};
use crate::structures::section::{
    detect_crossings, CrossingDirection, PoincareSection, SectionCrossing,
};

/// Crossings of a target orbit with a section, split into the two
/// direction clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRegion {
    pub ascending: Vec<SectionCrossing>,
    pub descending: Vec<SectionCrossing>,
    /// Jacobi energy of the seeding state.
    pub energy: f64,
    /// Largest distance from the smaller primary over the span.
    pub max_r2: f64,
    /// Set when the orbit leaves the lunar region (max_r2 >= 0.5).
    pub escaped: bool,
    pub trajectory: DiscreteTrajectory,
}

/// Propagate a control-free target orbit over `t_span` and record its
/// section crossings, clustered by the sign of the section-normal
/// velocity.
pub fn target_orbit_region(
    params: &SystemParams,
    state0: &StateVec,
    t_span: f64,
    section: &PoincareSection,
) -> Result<TargetRegion> {
    let n = (t_span / params.h).round() as usize;
    let trajectory = propagate_const(state0, &ControlVec::ZERO, n, params)?;
    let crossings = detect_crossings(&trajectory, section, 0);
    let mut ascending = Vec::new();
    let mut descending = Vec::new();
    for c in crossings {
        match c.direction {
            CrossingDirection::Ascending => ascending.push(c),
            CrossingDirection::Descending => descending.push(c),
        }
    }
    let mut max_r2 = 0.0_f64;
    for s in &trajectory.states {
        let (_, r2) = distances(s, params)?;
        max_r2 = max_r2.max(r2);
    }
    Ok(TargetRegion {
        ascending,
        descending,
        energy: jacobi_integral(state0, params)?,
        max_r2,
        escaped: max_r2 >= 0.5,
        trajectory,
    })
}
