//! Continuous-time planar circular restricted three-body problem.
//!
//! Everything is expressed in the standard nondimensional rotating frame:
//! the primaries sit at (-mu, 0) and (1-mu, 0), the frame rotates with unit
//! mean motion, and lengths/times are scaled by the primary separation and
//! inverse mean motion.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance below which a state is treated as colliding with a primary.
pub const COLLISION_GUARD: f64 = 1e-8;

/// Nondimensional system parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Mass ratio mu = m2 / (m1 + m2).
    pub mu: f64,
    /// Fixed integrator step size.
    pub h: f64,
    /// Thrust acceleration bound.
    pub u_max: f64,
}

impl SystemParams {
    pub fn new(mu: f64, h: f64, u_max: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&mu) || !mu.is_finite() {
            return Err(Error::Domain(format!("mu = {mu} outside [0, 1/2]")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Domain(format!("step size h = {h} must be positive")));
        }
        if !(u_max >= 0.0) || !u_max.is_finite() {
            return Err(Error::Domain(format!("u_max = {u_max} must be nonnegative")));
        }
        Ok(Self { mu, h, u_max })
    }

    /// Same parameters with a different step size.
    pub fn with_h(self, h: f64) -> Self {
        Self { h, ..self }
    }
}

/// Rotating-frame barycentric state (x, y, xdot, ydot).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVec {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl StateVec {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self { x, y, vx, vy }
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.vx, self.vy)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.vx.is_finite() && self.vy.is_finite()
    }

    /// Image under the CRTBP reversal symmetry (x, y, vx, vy) -> (x, -y, -vx, vy).
    pub fn reflected(self) -> Self {
        Self::new(self.x, -self.y, -self.vx, self.vy)
    }
}

/// Thrust acceleration components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlVec {
    pub ux: f64,
    pub uy: f64,
}

impl ControlVec {
    pub const ZERO: Self = Self { ux: 0.0, uy: 0.0 };

    pub fn new(ux: f64, uy: f64) -> Self {
        Self { ux, uy }
    }

    pub fn norm(self) -> f64 {
        self.ux.hypot(self.uy)
    }
}

/// Labels for the five equilibrium points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LagrangeLabel {
    L1,
    L2,
    L3,
    L4,
    L5,
}

/// The five equilibria of the rotating-frame dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangePointSet {
    /// Between the primaries.
    pub l1: (f64, f64),
    /// Beyond the secondary.
    pub l2: (f64, f64),
    /// Beyond the primary.
    pub l3: (f64, f64),
    /// Leading equilateral point.
    pub l4: (f64, f64),
    /// Trailing equilateral point.
    pub l5: (f64, f64),
}

impl LagrangePointSet {
    pub fn get(&self, label: LagrangeLabel) -> (f64, f64) {
        match label {
            LagrangeLabel::L1 => self.l1,
            LagrangeLabel::L2 => self.l2,
            LagrangeLabel::L3 => self.l3,
            LagrangeLabel::L4 => self.l4,
            LagrangeLabel::L5 => self.l5,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (LagrangeLabel, (f64, f64))> {
        [
            (LagrangeLabel::L1, self.l1),
            (LagrangeLabel::L2, self.l2),
            (LagrangeLabel::L3, self.l3),
            (LagrangeLabel::L4, self.l4),
            (LagrangeLabel::L5, self.l5),
        ]
        .into_iter()
    }
}

/// Mass ratio mu = m2 / (m1 + m2).
pub fn mass_parameter(m1: f64, m2: f64) -> Result<f64> {
    if !(m1 > 0.0) {
        return Err(Error::Domain(format!("m1 = {m1} must be positive")));
    }
    if !(m2 >= 0.0) {
        return Err(Error::Domain(format!("m2 = {m2} must be nonnegative")));
    }
    if m2 > m1 {
        return Err(Error::Domain(format!(
            "m2 = {m2} exceeds m1 = {m1}; label the heavier body m1"
        )));
    }
    Ok(m2 / (m1 + m2))
}

/// Rotating-frame positions of the two primaries.
pub fn primary_positions(params: &SystemParams) -> ((f64, f64), (f64, f64)) {
    ((-params.mu, 0.0), (1.0 - params.mu, 0.0))
}

/// Distances to each primary, with the collision guard applied. Massless
/// primaries (mu = 0 or mu = 1) exert no pull and are not guarded.
pub fn distances(state: &StateVec, params: &SystemParams) -> Result<(f64, f64)> {
    let mu = params.mu;
    let r1 = (state.x + mu).hypot(state.y);
    let r2 = (state.x - 1.0 + mu).hypot(state.y);
    if mu < 1.0 && r1 < COLLISION_GUARD {
        return Err(Error::Collision {
            primary: 1,
            distance: r1,
            guard: COLLISION_GUARD,
        });
    }
    if mu > 0.0 && r2 < COLLISION_GUARD {
        return Err(Error::Collision {
            primary: 2,
            distance: r2,
            guard: COLLISION_GUARD,
        });
    }
    Ok((r1, r2))
}

/// Effective potential U = (x^2 + y^2)/2 + (1-mu)/r1 + mu/r2.
pub fn effective_potential(state: &StateVec, params: &SystemParams) -> Result<f64> {
    let (r1, r2) = distances(state, params)?;
    let mu = params.mu;
    let t1 = if mu < 1.0 { (1.0 - mu) / r1 } else { 0.0 };
    let t2 = if mu > 0.0 { mu / r2 } else { 0.0 };
    Ok(0.5 * (state.x * state.x + state.y * state.y) + t1 + t2)
}

/// Gradient (Ux, Uy) of the effective potential.
pub fn grad_u(state: &StateVec, params: &SystemParams) -> Result<(f64, f64)> {
    let (r1, r2) = distances(state, params)?;
    let mu = params.mu;
    let r13 = r1 * r1 * r1;
    let r23 = r2 * r2 * r2;
    let (g1x, g1y) = if mu < 1.0 {
        ((1.0 - mu) * (state.x + mu) / r13, (1.0 - mu) * state.y / r13)
    } else {
        (0.0, 0.0)
    };
    let (g2x, g2y) = if mu > 0.0 {
        (mu * (state.x - 1.0 + mu) / r23, mu * state.y / r23)
    } else {
        (0.0, 0.0)
    };
    Ok((state.x - g1x - g2x, state.y - g1y - g2y))
}

/// Rotating-frame state derivative: (vx, vy, 2 vy + Ux + ux, -2 vx + Uy + uy).
pub fn continuous_dynamics(
    state: &StateVec,
    control: &ControlVec,
    params: &SystemParams,
) -> Result<Vector4<f64>> {
    let (ux_pot, uy_pot) = grad_u(state, params)?;
    Ok(Vector4::new(
        state.vx,
        state.vy,
        2.0 * state.vy + ux_pot + control.ux,
        -2.0 * state.vx + uy_pot + control.uy,
    ))
}

/// Jacobi integral E = (vx^2 + vy^2)/2 - U. Conserved under zero control.
pub fn jacobi_integral(state: &StateVec, params: &SystemParams) -> Result<f64> {
    let u = effective_potential(state, params)?;
    Ok(0.5 * (state.vx * state.vx + state.vy * state.vy) - u)
}

/// Ux restricted to the x axis; the collinear points are its roots.
fn collinear_residual(x: f64, mu: f64) -> f64 {
    let d1 = x + mu;
    let d2 = x - 1.0 + mu;
    x - (1.0 - mu) * d1 / (d1.abs().powi(3)) - mu * d2 / (d2.abs().powi(3))
}

/// Bisection on `collinear_residual` to a bracket width of 1e-15.
fn bisect_collinear(mut lo: f64, mut hi: f64, mu: f64) -> Result<f64> {
    let mut flo = collinear_residual(lo, mu);
    let fhi = collinear_residual(hi, mu);
    if flo * fhi > 0.0 {
        return Err(Error::Numerical(format!(
            "collinear bracket [{lo}, {hi}] does not straddle a root"
        )));
    }
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fmid = collinear_residual(mid, mu);
        if flo * fmid <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fmid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// All five equilibria. Collinear roots by bisection, equilateral points in
/// closed form at (1/2 - mu, +/- sqrt(3)/2).
pub fn lagrange_points(params: &SystemParams) -> Result<LagrangePointSet> {
    let mu = params.mu;
    if !(mu > 0.0 && mu < 0.5) {
        return Err(Error::Domain(format!(
            "lagrange_points requires 0 < mu < 1/2, got {mu}"
        )));
    }
    let eps = 1e-6;
    let l1 = bisect_collinear(-mu + eps, 1.0 - mu - eps, mu)?;
    let l2 = bisect_collinear(1.0 - mu + eps, 2.5, mu)?;
    let l3 = bisect_collinear(-2.5, -mu - eps, mu)?;
    let half = 3.0_f64.sqrt() / 2.0;
    Ok(LagrangePointSet {
        l1: (l1, 0.0),
        l2: (l2, 0.0),
        l3: (l3, 0.0),
        l4: (0.5 - mu, half),
        l5: (0.5 - mu, -half),
    })
}
