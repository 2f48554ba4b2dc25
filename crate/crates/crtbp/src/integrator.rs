//! Discrete variational update map for the PCRTBP plus a fixed-step
//! Runge-Kutta baseline and energy-drift diagnostics.
//!
//! The update map comes from a trapezoidal discrete Lagrangian with
//! zero-order-hold forcing. It is explicit, second-order accurate, and
//! symplectic, so the Jacobi integral stays bounded instead of drifting.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    continuous_dynamics, jacobi_integral, ControlVec, StateVec, SystemParams, COLLISION_GUARD,
};
use crate::error::{Error, Result};

/// Gravitational part of the discrete potential gradient, evaluated at a
/// bare position. This is the attractive-sign gradient that appears in the
/// discrete update map; the continuous Ux relates to it by Ux = x - g_x.
pub(crate) fn grav_grad(x: f64, y: f64, mu: f64) -> Result<(f64, f64)> {
    let r1 = (x + mu).hypot(y);
    let r2 = (x - 1.0 + mu).hypot(y);
    if r1 < COLLISION_GUARD {
        return Err(Error::Collision {
            primary: 1,
            distance: r1,
            guard: COLLISION_GUARD,
        });
    }
    if r2 < COLLISION_GUARD {
        return Err(Error::Collision {
            primary: 2,
            distance: r2,
            guard: COLLISION_GUARD,
        });
    }
    let r13 = r1 * r1 * r1;
    let r23 = r2 * r2 * r2;
    let gx = (1.0 - mu) * (x + mu) / r13 + mu * (x - 1.0 + mu) / r23;
    let gy = (1.0 - mu) * y / r13 + mu * y / r23;
    Ok((gx, gy))
}

/// Position half of the update map: (x_{k+1}, y_{k+1}) from the full state,
/// together with the gravity gradient already evaluated at step k.
pub(crate) fn position_step(
    state: &StateVec,
    params: &SystemParams,
) -> Result<(f64, f64, f64, f64)> {
    let h = params.h;
    let (gx, gy) = grav_grad(state.x, state.y, params.mu)?;
    let denom = 1.0 + h * h;
    let x1 = (h * state.vx
        + h * h * state.vy
        + state.x * (1.0 + 1.5 * h * h)
        + 0.5 * h * h * h * state.y
        - 0.5 * h * h * h * gy
        - 0.5 * h * h * gx)
        / denom;
    let y1 = h * state.vy + h * state.x - h * x1 + state.y + 0.5 * h * h * state.y
        - 0.5 * h * h * gy;
    Ok((x1, y1, gx, gy))
}

/// One step of the forced variational update map.
pub fn step(state: &StateVec, control: &ControlVec, params: &SystemParams) -> Result<StateVec> {
    let h = params.h;
    let (x1, y1, gx, gy) = position_step(state, params)?;
    let (gx1, gy1) = grav_grad(x1, y1, params.mu)?;
    let vx1 = state.vx - 2.0 * state.y + 2.0 * y1 + 0.5 * h * (x1 + state.x)
        - 0.5 * h * (gx1 + gx)
        + h * control.ux;
    let vy1 = state.vy + 2.0 * state.x - 2.0 * x1 + 0.5 * h * (y1 + state.y)
        - 0.5 * h * (gy1 + gy)
        + h * control.uy;
    Ok(StateVec::new(x1, y1, vx1, vy1))
}

/// Trapezoidal discrete Lagrangian over one step between position-only
/// endpoints q0 = (x0, y0) and q1 = (x1, y1).
pub fn discrete_lagrangian(q0: (f64, f64), q1: (f64, f64), h: f64, mu: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("h = {h} must be positive")));
    }
    let dx = (q1.0 - q0.0) / h;
    let dy = (q1.1 - q0.1) / h;
    let lag = |x: f64, y: f64| -> Result<f64> {
        let r1 = (x + mu).hypot(y);
        let r2 = (x - 1.0 + mu).hypot(y);
        if r1 < COLLISION_GUARD || r2 < COLLISION_GUARD {
            return Err(Error::Collision {
                primary: if r1 < r2 { 1 } else { 2 },
                distance: r1.min(r2),
                guard: COLLISION_GUARD,
            });
        }
        Ok(0.5 * ((dx - y) * (dx - y) + (dy + x) * (dy + x)) + (1.0 - mu) / r1 + mu / r2)
    };
    Ok(0.5 * h * (lag(q0.0, q0.1)? + lag(q1.0, q1.1)?))
}

/// Time-indexed output of the discrete update map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteTrajectory {
    pub states: Vec<StateVec>,
    pub controls: Vec<ControlVec>,
    pub h: f64,
    pub params: SystemParams,
}

impl DiscreteTrajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.h
    }

    pub fn final_state(&self) -> &StateVec {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn final_time(&self) -> f64 {
        self.time(self.states.len().saturating_sub(1))
    }
}

/// Propagate the discrete map through a full control schedule.
pub fn propagate(
    state0: &StateVec,
    controls: &[ControlVec],
    params: &SystemParams,
) -> Result<DiscreteTrajectory> {
    if controls.is_empty() {
        return Err(Error::Domain("propagate requires N >= 1 steps".into()));
    }
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(*state0);
    for (k, u) in controls.iter().enumerate() {
        let next = step(states.last().unwrap(), u, params).map_err(|e| Error::CollisionAtStep {
            step: k,
            source: Box::new(e),
        })?;
        states.push(next);
    }
    Ok(DiscreteTrajectory {
        states,
        controls: controls.to_vec(),
        h: params.h,
        params: *params,
    })
}

/// Propagate with a constant control held for `n` steps.
pub fn propagate_const(
    state0: &StateVec,
    control: &ControlVec,
    n: usize,
    params: &SystemParams,
) -> Result<DiscreteTrajectory> {
    propagate(state0, &vec![*control; n], params)
}

/// Classical fourth-order Runge-Kutta step on the continuous dynamics.
/// Kept as the drift-comparison baseline.
pub fn rk4_step(
    state: &StateVec,
    control: &ControlVec,
    params: &SystemParams,
    dt: f64,
) -> Result<StateVec> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt = {dt} must be positive")));
    }
    let s = state.to_vector();
    let k1 = continuous_dynamics(state, control, params)?;
    let k2 = continuous_dynamics(&StateVec::from_vector(&(s + 0.5 * dt * k1)), control, params)?;
    let k3 = continuous_dynamics(&StateVec::from_vector(&(s + 0.5 * dt * k2)), control, params)?;
    let k4 = continuous_dynamics(&StateVec::from_vector(&(s + dt * k3)), control, params)?;
    Ok(StateVec::from_vector(
        &(s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)),
    ))
}

/// Repeated RK4 steps; used for baselines and high-accuracy oracles.
pub fn rk4_propagate(
    state0: &StateVec,
    control: &ControlVec,
    params: &SystemParams,
    dt: f64,
    n: usize,
) -> Result<StateVec> {
    let mut s = *state0;
    for _ in 0..n {
        s = rk4_step(&s, control, params, dt)?;
    }
    Ok(s)
}

/// Jacobi-integral history and drift statistics for a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// Jacobi integral at each step.
    pub energies: Vec<f64>,
    /// Initial Jacobi integral.
    pub e0: f64,
    /// Mean of |E(t) - E(0)|.
    pub mean_deviation: f64,
    /// Max of |E(t) - E(0)|.
    pub max_deviation: f64,
    /// Least-squares slope of E(t) - E(0) against time.
    pub drift_slope: f64,
}

/// Per-step Jacobi values and summary drift statistics.
pub fn energy_report(traj: &DiscreteTrajectory) -> Result<EnergyReport> {
    if traj.is_empty() {
        return Err(Error::Domain("energy_report requires a nonempty trajectory".into()));
    }
    let energies: Vec<f64> = traj
        .states
        .iter()
        .map(|s| jacobi_integral(s, &traj.params))
        .collect::<Result<_>>()?;
    let e0 = energies[0];
    let n = energies.len() as f64;
    let mean_deviation = energies.iter().map(|e| (e - e0).abs()).sum::<f64>() / n;
    let max_deviation = energies
        .iter()
        .map(|e| (e - e0).abs())
        .fold(0.0_f64, f64::max);
    // Least-squares fit of (t_k, E_k - E_0).
    let tbar = (0..energies.len()).map(|k| traj.time(k)).sum::<f64>() / n;
    let ebar = energies.iter().map(|e| e - e0).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, e) in energies.iter().enumerate() {
        let dt = traj.time(k) - tbar;
        num += dt * (e - e0 - ebar);
        den += dt * dt;
    }
    let drift_slope = if den > 0.0 { num / den } else { 0.0 };
    Ok(EnergyReport {
        energies,
        e0,
        mean_deviation,
        max_deviation,
        drift_slope,
    })
}
