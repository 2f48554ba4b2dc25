//! Poincare section geometry and crossing detection.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::dynamics::StateVec;
use crate::error::{Error, Result};
use crate::integrator::DiscreteTrajectory;

/// Which way a trajectory pierces the section line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossingDirection {
    /// Normal velocity positive.
    Ascending,
    /// Normal velocity negative.
    Descending,
}

/// Direction filter for recorded crossings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DirectionFilter {
    Ascending,
    Descending,
    #[default]
    Both,
}

impl DirectionFilter {
    fn admits(self, d: CrossingDirection) -> bool {
        match self {
            DirectionFilter::Both => true,
            DirectionFilter::Ascending => d == CrossingDirection::Ascending,
            DirectionFilter::Descending => d == CrossingDirection::Descending,
        }
    }
}

/// A section line in position space: anchored at a point, inclined at angle
/// alpha, with an optional window of signed arc length along the line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareSection {
    pub anchor: (f64, f64),
    /// Inclination of the line, in [0, 2 pi).
    pub alpha: f64,
    pub filter: DirectionFilter,
    /// Admissible signed arc-length range along the line from the anchor.
    pub window: Option<(f64, f64)>,
}

impl PoincareSection {
    pub fn new(anchor: (f64, f64), alpha: f64) -> Result<Self> {
        if !(0.0..TAU).contains(&alpha) {
            return Err(Error::Domain(format!("alpha = {alpha} outside [0, 2pi)")));
        }
        Ok(Self {
            anchor,
            alpha,
            filter: DirectionFilter::Both,
            window: None,
        })
    }

    pub fn with_filter(mut self, filter: DirectionFilter) -> Self {
        self.filter = filter;
        self
    }

    pub fn with_window(mut self, lo: f64, hi: f64) -> Self {
        self.window = Some((lo, hi));
        self
    }

    /// Signed offset of a position from the section line.
    pub fn offset(&self, x: f64, y: f64) -> f64 {
        -(x - self.anchor.0) * self.alpha.sin() + (y - self.anchor.1) * self.alpha.cos()
    }

    /// Signed arc length along the line from the anchor.
    pub fn arc_coordinate(&self, x: f64, y: f64) -> f64 {
        (x - self.anchor.0) * self.alpha.cos() + (y - self.anchor.1) * self.alpha.sin()
    }

    /// Velocity component normal to the line.
    pub fn normal_velocity(&self, state: &StateVec) -> f64 {
        -state.vx * self.alpha.sin() + state.vy * self.alpha.cos()
    }

    fn admits(&self, state: &StateVec, direction: CrossingDirection) -> bool {
        if !self.filter.admits(direction) {
            return false;
        }
        match self.window {
            None => true,
            Some((lo, hi)) => {
                let s = self.arc_coordinate(state.x, state.y);
                s >= lo && s <= hi
            }
        }
    }
}

/// One recorded pierce of the section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionCrossing {
    /// Full state at the crossing (linear interpolation between steps).
    pub state: StateVec,
    /// Crossing time along the parent trajectory.
    pub time: f64,
    /// Section-plane coordinates (x, xdot).
    pub coords: (f64, f64),
    pub direction: CrossingDirection,
    /// Id of the trajectory the crossing came from.
    pub trajectory_id: usize,
}

fn interpolate(a: &StateVec, b: &StateVec, tau: f64) -> StateVec {
    StateVec::new(
        a.x + tau * (b.x - a.x),
        a.y + tau * (b.y - a.y),
        a.vx + tau * (b.vx - a.vx),
        a.vy + tau * (b.vy - a.vy),
    )
}

/// Detect a crossing between two consecutive samples; `t0` is the time of
/// the first sample and `dt` the spacing.
pub(crate) fn crossing_between(
    section: &PoincareSection,
    a: &StateVec,
    b: &StateVec,
    t0: f64,
    dt: f64,
    trajectory_id: usize,
) -> Option<SectionCrossing> {
    let g0 = section.offset(a.x, a.y);
    let g1 = section.offset(b.x, b.y);
    // Strict sign change; a node exactly on the section counts once, as the
    // start of the bracketing interval.
    let tau = if g0 == 0.0 {
        0.0
    } else if g0 * g1 < 0.0 {
        g0 / (g0 - g1)
    } else {
        return None;
    };
    let state = interpolate(a, b, tau);
    let direction = if g1 - g0 >= 0.0 {
        CrossingDirection::Ascending
    } else {
        CrossingDirection::Descending
    };
    if !section.admits(&state, direction) {
        return None;
    }
    Some(SectionCrossing {
        state,
        time: t0 + tau * dt,
        coords: (state.x, state.vx),
        direction,
        trajectory_id,
    })
}

/// All admissible crossings of a trajectory with a section, refined by
/// linear interpolation between the bracketing steps.
pub fn detect_crossings(
    traj: &DiscreteTrajectory,
    section: &PoincareSection,
    trajectory_id: usize,
) -> Vec<SectionCrossing> {
    let mut out = Vec::new();
    for (k, pair) in traj.states.windows(2).enumerate() {
        if let Some(c) =
            crossing_between(section, &pair[0], &pair[1], traj.time(k), traj.h, trajectory_id)
        {
            out.push(c);
        }
    }
    out
}
