//! Globalization of the stable/unstable manifolds of a periodic orbit.
//!
//! Seeds are spread uniformly in time along the orbit; the monodromy
//! eigenvector is transported to each seed point with the accumulated step
//! Jacobians, and each seed is offset by a small epsilon along it. Unstable
//! trajectories run forward under the discrete map; stable ones run
//! backward through the map's reversing symmetry (x, y, xdot, ydot) ->
//! (x, -y, -xdot, ydot).

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlVec, StateVec, SystemParams};
use crate::error::{Error, Result};
use crate::integrator::{step, DiscreteTrajectory};
use crate::structures::orbit::{stm_over_time, Monodromy, PeriodicOrbit};
use crate::structures::section::{crossing_between, PoincareSection, SectionCrossing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ManifoldKind {
    Stable,
    Unstable,
}

/// Globalization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldOptions {
    pub kind: ManifoldKind,
    /// Seed displacement along the transported eigenvector.
    pub epsilon: f64,
    /// Number of seeds, spread uniformly in time along the orbit.
    pub n_trajectories: usize,
    /// Propagation horizon per trajectory (time-of-flight).
    pub t_max: f64,
    /// Branch selector: seed = orbit point + sign * epsilon * v.
    pub sign: f64,
    /// Crossings earlier than this are ignored (skips the departure leg).
    pub min_time: f64,
}

/// One globalized trajectory of the branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldTrajectory {
    pub seed_index: usize,
    /// Time along the orbit at which the seed departs.
    pub departure_time: f64,
    pub seed: StateVec,
    /// Physical states at uniform spacing h; for the stable branch these
    /// march backward in time away from the orbit.
    pub states: DiscreteTrajectory,
    pub crossing: Option<SectionCrossing>,
    /// Unsigned time-of-flight from seed to the crossing.
    pub flight_time: Option<f64>,
}

/// A one-sided branch of the stable or unstable manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldBranch {
    pub kind: ManifoldKind,
    pub epsilon: f64,
    pub trajectories: Vec<ManifoldTrajectory>,
}

/// Orient a direction so its first significant component is positive.
fn oriented(v: Vector4<f64>) -> Vector4<f64> {
    for i in 0..4 {
        if v[i].abs() > 1e-9 {
            return if v[i] < 0.0 { -v } else { v };
        }
    }
    v
}

/// Globalize one branch of a manifold of `orbit`, stopping each trajectory
/// at the first admissible crossing of `section` (if given), at a
/// collision, or at `t_max`.
pub fn globalize_manifold(
    orbit: &PeriodicOrbit,
    mono: &Monodromy,
    params: &SystemParams,
    section: Option<&PoincareSection>,
    opts: &ManifoldOptions,
) -> Result<ManifoldBranch> {
    if !(opts.epsilon > 0.0) {
        return Err(Error::Domain(format!(
            "manifold epsilon must be positive, got {}",
            opts.epsilon
        )));
    }
    if opts.n_trajectories == 0 {
        return Err(Error::Domain("manifold needs at least one seed".into()));
    }
    if opts.sign != 1.0 && opts.sign != -1.0 {
        return Err(Error::Domain(format!(
            "branch sign must be +1 or -1, got {}",
            opts.sign
        )));
    }
    let direction = match opts.kind {
        ManifoldKind::Unstable => mono.v_unstable,
        ManifoldKind::Stable => mono.v_stable,
    };
    let n_steps = (opts.t_max / params.h).ceil() as usize;
    let mut trajectories = Vec::with_capacity(opts.n_trajectories);
    for i in 0..opts.n_trajectories {
        let t_i = orbit.period * i as f64 / opts.n_trajectories as f64;
        let (stm, point) = stm_over_time(&orbit.initial_state, t_i, params)?;
        let transported = oriented((stm * direction).normalize());
        let seed = StateVec::from_vector(
            &(point.to_vector() + opts.sign * opts.epsilon * transported),
        );
        trajectories.push(propagate_branch_trajectory(
            i, t_i, seed, section, params, n_steps, opts,
        )?);
    }
    Ok(ManifoldBranch {
        kind: opts.kind,
        epsilon: opts.epsilon,
        trajectories,
    })
}

fn propagate_branch_trajectory(
    seed_index: usize,
    departure_time: f64,
    seed: StateVec,
    section: Option<&PoincareSection>,
    params: &SystemParams,
    n_steps: usize,
    opts: &ManifoldOptions,
) -> Result<ManifoldTrajectory> {
    let backward = opts.kind == ManifoldKind::Stable;
    let mut sim = if backward { seed.reflected() } else { seed };
    let mut states = vec![seed];
    let mut crossing = None;
    for k in 0..n_steps {
        let next_sim = match step(&sim, &ControlVec::ZERO, params) {
            Ok(s) => s,
            Err(Error::Collision { .. }) => break,
            Err(e) => return Err(e),
        };
        let physical = if backward { next_sim.reflected() } else { next_sim };
        let t0 = k as f64 * params.h;
        if let Some(sec) = section {
            if let Some(c) = crossing_between(
                sec,
                states.last().expect("nonempty"),
                &physical,
                t0,
                params.h,
                seed_index,
            ) {
                if c.time >= opts.min_time {
                    states.push(physical);
                    crossing = Some(c);
                    break;
                }
            }
        }
        states.push(physical);
        sim = next_sim;
    }
    let controls = vec![ControlVec::ZERO; states.len() - 1];
    let flight_time = crossing.as_ref().map(|c: &SectionCrossing| c.time);
    Ok(ManifoldTrajectory {
        seed_index,
        departure_time,
        seed,
        states: DiscreteTrajectory {
            states,
            controls,
            h: params.h,
            params: *params,
        },
        crossing,
        flight_time,
    })
}
