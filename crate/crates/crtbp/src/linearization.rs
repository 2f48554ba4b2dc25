//! Analytic Jacobian of the discrete update map and the explicit costate
//! update via Gauss-Jordan elimination.
//!
//! All Jacobian entries are derived by exact chain rule through the update
//! map, including the dependence of the step-(k+1) potential gradients on
//! the step-(k+1) positions. The printed cascade formulas this follows
//! contain a few transcription defects (an r^3 that should be r^5 in the
//! mixed second partial, a sign on the f4_y centrifugal term, and truncated
//! chain terms in the velocity columns); the finite-difference oracle in the
//! tests is the ground truth for the exact versions used here.

use nalgebra::{Matrix4, Matrix4x2, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{StateVec, SystemParams, COLLISION_GUARD};
use crate::error::{Error, Result};
use crate::integrator::{position_step, DiscreteTrajectory};

/// 4x4 matrix of partials of the update map with respect to the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepJacobian(pub Matrix4<f64>);

impl StepJacobian {
    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }
}

/// Adjoint variables (lambda_x, lambda_y, lambda_vx, lambda_vy).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostateVec {
    pub lx: f64,
    pub ly: f64,
    pub lvx: f64,
    pub lvy: f64,
}

impl CostateVec {
    pub const ZERO: Self = Self {
        lx: 0.0,
        ly: 0.0,
        lvx: 0.0,
        lvy: 0.0,
    };

    pub fn new(lx: f64, ly: f64, lvx: f64, lvy: f64) -> Self {
        Self { lx, ly, lvx, lvy }
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.lx, self.ly, self.lvx, self.lvy)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

/// Distinct second partials (Uxx, Uyy, Uxy) of the gravitational part of
/// the potential gradient used by the discrete map.
pub fn second_partials_u(x: f64, y: f64, mu: f64) -> Result<(f64, f64, f64)> {
    let r1 = (x + mu).hypot(y);
    let r2 = (x - 1.0 + mu).hypot(y);
    if r1 < COLLISION_GUARD || r2 < COLLISION_GUARD {
        return Err(Error::Collision {
            primary: if r1 < r2 { 1 } else { 2 },
            distance: r1.min(r2),
            guard: COLLISION_GUARD,
        });
    }
    let r13 = r1.powi(3);
    let r15 = r1.powi(5);
    let r23 = r2.powi(3);
    let r25 = r2.powi(5);
    let d1 = x + mu;
    let d2 = x - 1.0 + mu;
    let uxx = (1.0 - mu) * (1.0 / r13 - 3.0 * d1 * d1 / r15)
        + mu * (1.0 / r23 - 3.0 * d2 * d2 / r25);
    let uyy = (1.0 - mu) * (1.0 / r13 - 3.0 * y * y / r15)
        + mu * (1.0 / r23 - 3.0 * y * y / r25);
    let uxy = -3.0 * (1.0 - mu) * d1 * y / r15 - 3.0 * mu * d2 * y / r25;
    Ok((uxx, uyy, uxy))
}

/// Exact Jacobian of one step of the update map with respect to the state,
/// at fixed control.
pub fn step_jacobian(state: &StateVec, params: &SystemParams) -> Result<StepJacobian> {
    let h = params.h;
    let mu = params.mu;
    let (x1, y1, _, _) = position_step(state, params)?;
    let (uxx, uyy, uxy) = second_partials_u(state.x, state.y, mu)?;
    let (uxx1, uyy1, uxy1) = second_partials_u(x1, y1, mu)?;

    let d = 1.0 / (1.0 + h * h);
    let h2 = h * h;
    let h3 = h2 * h;

    // Row 1: x_{k+1}.
    let f1x = d * (1.0 + 1.5 * h2 - 0.5 * h3 * uxy - 0.5 * h2 * uxx);
    let f1y = d * (0.5 * h3 * (1.0 - uyy) - 0.5 * h2 * uxy);
    let f1vx = d * h;
    let f1vy = d * h2;

    // Row 2: y_{k+1}.
    let f2x = h - h * f1x - 0.5 * h2 * uxy;
    let f2y = -h * f1y + 1.0 + 0.5 * h2 - 0.5 * h2 * uyy;
    let f2vx = -h * f1vx;
    let f2vy = h - h * f1vy;

    // Chain of the step-(k+1) gradients through (x_{k+1}, y_{k+1}).
    let gx1 = |a: f64, b: f64| uxx1 * a + uxy1 * b; // d g_x(k+1) / d xi
    let gy1 = |a: f64, b: f64| uxy1 * a + uyy1 * b; // d g_y(k+1) / d xi

    // Row 3: xdot_{k+1}.
    let f3x = 2.0 * f2x + 0.5 * h * (f1x + 1.0) - 0.5 * h * gx1(f1x, f2x) - 0.5 * h * uxx;
    let f3y = -2.0 + 2.0 * f2y + 0.5 * h * f1y - 0.5 * h * gx1(f1y, f2y) - 0.5 * h * uxy;
    let f3vx = 1.0 + 2.0 * f2vx + 0.5 * h * f1vx - 0.5 * h * gx1(f1vx, f2vx);
    let f3vy = 2.0 * f2vy + 0.5 * h * f1vy - 0.5 * h * gx1(f1vy, f2vy);

    // Row 4: ydot_{k+1}.
    let f4x = 2.0 - 2.0 * f1x + 0.5 * h * f2x - 0.5 * h * gy1(f1x, f2x) - 0.5 * h * uxy;
    let f4y = -2.0 * f1y + 0.5 * h * (f2y + 1.0) - 0.5 * h * gy1(f1y, f2y) - 0.5 * h * uyy;
    let f4vx = -2.0 * f1vx + 0.5 * h * f2vx - 0.5 * h * gy1(f1vx, f2vx);
    let f4vy = 1.0 - 2.0 * f1vy + 0.5 * h * f2vy - 0.5 * h * gy1(f1vy, f2vy);

    Ok(StepJacobian(Matrix4::new(
        f1x, f1y, f1vx, f1vy, //
        f2x, f2y, f2vx, f2vy, //
        f3x, f3y, f3vx, f3vy, //
        f4x, f4y, f4vx, f4vy,
    )))
}

/// Partials of the update map with respect to the control: thrust enters
/// the velocity rows linearly with slope h.
pub fn control_jacobian(params: &SystemParams) -> Matrix4x2<f64> {
    let h = params.h;
    Matrix4x2::new(
        0.0, 0.0, //
        0.0, 0.0, //
        h, 0.0, //
        0.0, h,
    )
}

const PIVOT_FLOOR: f64 = 1e-13;

/// Explicit costate update solving J^T lambda_{k+1} = lambda_k by the fixed
/// pivot-order elimination. Errors on vanishing pivots.
pub fn costate_step_elimination(
    costate: &CostateVec,
    jacobian: &StepJacobian,
) -> Result<CostateVec> {
    let m = jacobian.0.transpose();
    let lam = costate.to_vector();

    let f1x = m[(0, 0)];
    if f1x.abs() < PIVOT_FLOOR {
        return Err(Error::Elimination {
            pivot: "f1x",
            value: f1x,
        });
    }
    // Scale factors for the row operations.
    let a = -m[(1, 0)] / f1x;
    let b = -m[(2, 0)] / f1x;
    let c = -m[(3, 0)] / f1x;

    let a22 = m[(1, 1)] + a * m[(0, 1)];
    let a23 = m[(1, 2)] + a * m[(0, 2)];
    let a24 = m[(1, 3)] + a * m[(0, 3)];
    if a22.abs() < PIVOT_FLOOR {
        return Err(Error::Elimination {
            pivot: "alpha22",
            value: a22,
        });
    }
    let r3_1 = m[(2, 1)] + b * m[(0, 1)];
    let r3_2 = m[(2, 2)] + b * m[(0, 2)];
    let r3_3 = m[(2, 3)] + b * m[(0, 3)];
    let r4_1 = m[(3, 1)] + c * m[(0, 1)];
    let r4_2 = m[(3, 2)] + c * m[(0, 2)];
    let r4_3 = m[(3, 3)] + c * m[(0, 3)];

    let e = -r3_1 / a22;
    let f = -r4_1 / a22;

    let a33 = r3_2 + e * a23;
    let a34 = r3_3 + e * a24;
    if a33.abs() < PIVOT_FLOOR {
        return Err(Error::Elimination {
            pivot: "alpha33",
            value: a33,
        });
    }
    let g = -(r4_2 + f * a23) / a33;
    let a44 = r4_3 + f * a24 + g * a34;
    if a44.abs() < PIVOT_FLOOR {
        return Err(Error::Elimination {
            pivot: "alpha44",
            value: a44,
        });
    }

    // Right-hand side under the same row operations.
    let b1 = lam[0];
    let b2 = lam[1] + a * lam[0];
    let b3 = lam[2] + b * lam[0] + e * b2;
    let b4 = lam[3] + c * lam[0] + f * b2 + g * b3;

    // Back substitution.
    let a12 = m[(0, 1)];
    let a13 = m[(0, 2)];
    let a14 = m[(0, 3)];
    let lvy1 = b4 / a44;
    let lvx1 = (b3 - a34 * lvy1) / a33;
    let ly1 = (b2 - a23 * lvx1 - a24 * lvy1) / a22;
    let lx1 = (b1 - a12 * ly1 - a13 * lvx1 - a14 * lvy1) / f1x;
    Ok(CostateVec::new(lx1, ly1, lvx1, lvy1))
}

/// Generic partial-pivot solve of J^T lambda_{k+1} = lambda_k.
pub fn costate_step_generic(costate: &CostateVec, jacobian: &StepJacobian) -> Result<CostateVec> {
    let lu = jacobian.0.transpose().lu();
    lu.solve(&costate.to_vector())
        .map(|v| CostateVec::from_vector(&v))
        .ok_or_else(|| Error::Numerical("singular step Jacobian in costate update".into()))
}

/// Costate update: the explicit elimination, with the generic solve as a
/// fallback when a pivot vanishes.
pub fn costate_step(costate: &CostateVec, jacobian: &StepJacobian) -> Result<CostateVec> {
    match costate_step_elimination(costate, jacobian) {
        Ok(next) => Ok(next),
        Err(Error::Elimination { .. }) => costate_step_generic(costate, jacobian),
        Err(e) => Err(e),
    }
}

/// Ordered product of per-step Jacobians J_{N-1} ... J_0 along a trajectory.
/// For a closed periodic trajectory this approximates the monodromy matrix.
pub fn stm_chain(traj: &DiscreteTrajectory) -> Result<Matrix4<f64>> {
    if traj.len() < 2 {
        return Err(Error::Domain("stm_chain needs at least one step".into()));
    }
    let mut phi = Matrix4::identity();
    for state in &traj.states[..traj.len() - 1] {
        let jac = step_jacobian(state, &traj.params)?;
        phi = jac.0 * phi;
    }
    Ok(phi)
}
