//! Lyapunov orbits about the collinear points: differential correction,
//! monodromy matrix, and stability directions.
//!
//! The corrector is single shooting on the perpendicular-crossing
//! condition: start on y = 0 with velocity along y, adjust ydot0 until the
//! next y = 0 crossing has xdot = 0. Sensitivities come from the chained
//! analytic step Jacobians; the crossing itself is refined with a
//! fractional step of the same update map.

use nalgebra::{Complex, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    continuous_dynamics, jacobi_integral, lagrange_points, ControlVec, StateVec, SystemParams,
};
use crate::error::{Error, Result};
use crate::integrator::{propagate_const, step, DiscreteTrajectory};
use crate::linearization::{second_partials_u, step_jacobian};

/// How to select the orbit within the L1 Lyapunov family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OrbitTarget {
    /// Fix the initial x on the y = 0 line.
    InitialX(f64),
    /// Fix the x-amplitude relative to L1 (positive toward the larger primary).
    Amplitude(f64),
    /// Fix the Jacobi energy of the orbit.
    Energy(f64),
}

/// A converged planar periodic orbit about L1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    /// Perpendicular-crossing initial state (x0, 0, 0, ydot0).
    pub initial_state: StateVec,
    pub period: f64,
    pub half_period: f64,
    /// Jacobi energy at the initial state.
    pub energy: f64,
    /// One period sampled at the uniform step h (final fractional step not
    /// stored; use `period` for exact return-map evaluations).
    pub trajectory: DiscreteTrajectory,
    /// Full-period return residual |Phi_T(x0) - x0|.
    pub residual: f64,
    /// Corrector iterations used on the final continuation stage.
    pub iterations: usize,
}

/// State and accumulated state-transition matrix at a y = 0 crossing.
struct AxisCrossing {
    state: StateVec,
    time: f64,
    stm: Matrix4<f64>,
}

/// Smallest fractional step still treated as a real step.
const MIN_FRACTION: f64 = 1e-13;

/// Advance by a fractional step tau * h (tau in (0, 1]).
fn fractional_step(state: &StateVec, tau: f64, params: &SystemParams) -> Result<StateVec> {
    if tau <= MIN_FRACTION {
        return Ok(*state);
    }
    step(state, &ControlVec::ZERO, &params.with_h(tau * params.h))
}

/// Propagate (zero control) to the first y = 0 sign change, refine the
/// crossing with a fractional step, and accumulate the STM along the way.
fn propagate_to_axis_crossing(
    state0: &StateVec,
    params: &SystemParams,
    max_steps: usize,
) -> Result<AxisCrossing> {
    let mut state = *state0;
    let mut stm = Matrix4::identity();
    let mut prev_sign = 0.0;
    for k in 0..max_steps {
        let jac = step_jacobian(&state, params)?;
        let next = step(&state, &ControlVec::ZERO, params)?;
        if prev_sign == 0.0 && next.y != 0.0 {
            prev_sign = next.y.signum();
        } else if next.y == 0.0 || next.y.signum() != prev_sign {
            // Crossing inside (state, next): bisect the fraction.
            let mut lo = 0.0_f64;
            let mut hi = 1.0_f64;
            let y_lo = state.y;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let y_mid = fractional_step(&state, mid, params)?.y;
                if y_mid == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                } else if y_mid.signum() == y_lo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-16 {
                    break;
                }
            }
            let tau = 0.5 * (lo + hi);
            let crossed = fractional_step(&state, tau, params)?;
            if tau > MIN_FRACTION {
                let frac_jac = step_jacobian(&state, &params.with_h(tau * params.h))?;
                stm = frac_jac.0 * stm;
            }
            return Ok(AxisCrossing {
                state: crossed,
                time: k as f64 * params.h + tau * params.h,
                stm,
            });
        }
        stm = jac.0 * stm;
        state = next;
    }
    Err(Error::Numerical(format!(
        "no y = 0 crossing within {max_steps} steps"
    )))
}

/// In-plane frequency nu of the center mode at L1 and the linearized
/// ydot0 seed for a Lyapunov orbit starting at x0 on the axis.
fn linear_seed(params: &SystemParams, l1x: f64, x0: f64) -> Result<f64> {
    let (gxx, gyy, _) = second_partials_u(l1x, 0.0, params.mu)?;
    // Effective-potential Hessian on the axis.
    let uxx = 1.0 - gxx;
    let uyy = 1.0 - gyy;
    // nu^4 + (Uxx + Uyy - 4) nu^2 + Uxx Uyy = 0, positive root.
    let b = uxx + uyy - 4.0;
    let disc = b * b - 4.0 * uxx * uyy;
    if disc < 0.0 {
        return Err(Error::Numerical("no center mode at L1".into()));
    }
    let s = 0.5 * (-b + disc.sqrt());
    if s <= 0.0 {
        return Err(Error::Numerical("center-mode frequency not real".into()));
    }
    let nu2 = s;
    let amp = x0 - l1x;
    Ok(-amp * (nu2 + uxx) / 2.0)
}

/// Correct ydot0 at fixed x0 so the first crossing is perpendicular.
/// Returns the converged initial state, half period, and iteration count.
fn correct_at_x0(
    params: &SystemParams,
    x0: f64,
    mut vy0: f64,
    max_steps: usize,
) -> Result<(StateVec, f64, usize)> {
    let tol = 1e-11;
    let mut last_residual = f64::MAX;
    for iter in 0..25 {
        let state0 = StateVec::new(x0, 0.0, 0.0, vy0);
        let crossing = propagate_to_axis_crossing(&state0, params, max_steps)?;
        let vx_cross = crossing.state.vx;
        if vx_cross.abs() <= tol {
            return Ok((state0, crossing.time, iter));
        }
        last_residual = vx_cross.abs();
        // Sensitivity of xdot at the crossing to ydot0, holding y = 0:
        // d xdot = Phi[2,3] - (xddot / ydot) Phi[1,3].
        let deriv = continuous_dynamics(&crossing.state, &ControlVec::ZERO, params)?;
        let vy_cross = crossing.state.vy;
        if vy_cross.abs() < 1e-12 {
            return Err(Error::Numerical(
                "tangential section crossing in corrector".into(),
            ));
        }
        let sens = crossing.stm[(2, 3)] - deriv[2] / vy_cross * crossing.stm[(1, 3)];
        if sens.abs() < 1e-12 {
            return Err(Error::Numerical("singular corrector sensitivity".into()));
        }
        vy0 -= vx_cross / sens;
    }
    Err(Error::NoConvergence {
        iterations: 25,
        residual: last_residual,
    })
}

fn solve_at_x0(params: &SystemParams, l1x: f64, x0: f64) -> Result<PeriodicOrbit> {
    let amp = l1x - x0;
    // Continuation in amplitude, reusing the offset from the linear seed.
    let n_stages = ((amp.abs() / 0.005).ceil() as usize).max(1);
    let max_steps = (30.0 / params.h).ceil() as usize;
    let mut delta = 0.0;
    let mut result = None;
    for stage in 1..=n_stages {
        let xi = l1x - amp * stage as f64 / n_stages as f64;
        let seed = linear_seed(params, l1x, xi)? + delta;
        let (state0, half_period, iterations) = correct_at_x0(params, xi, seed, max_steps)?;
        delta = state0.vy - linear_seed(params, l1x, xi)?;
        result = Some((state0, half_period, iterations));
    }
    let (state0, half_period, iterations) = result.expect("at least one stage");
    let period = 2.0 * half_period;

    // Full-period return residual via exact-time propagation.
    let (_, final_state) = stm_over_time(&state0, period, params)?;
    let residual = (final_state.to_vector() - state0.to_vector()).norm();

    let n = (period / params.h).floor() as usize;
    let trajectory = propagate_const(&state0, &ControlVec::ZERO, n.max(1), params)?;
    let energy = jacobi_integral(&state0, params)?;
    Ok(PeriodicOrbit {
        initial_state: state0,
        period,
        half_period,
        energy,
        trajectory,
        residual,
        iterations,
    })
}

/// Differentially corrected L1 Lyapunov orbit for the requested target.
pub fn find_periodic_orbit(params: &SystemParams, target: OrbitTarget) -> Result<PeriodicOrbit> {
    let lp = lagrange_points(params)?;
    let l1x = lp.l1.0;
    match target {
        OrbitTarget::InitialX(x0) => solve_at_x0(params, l1x, x0),
        OrbitTarget::Amplitude(a) => solve_at_x0(params, l1x, l1x - a),
        OrbitTarget::Energy(e_target) => {
            // Secant on the amplitude; energy is monotone along the family.
            let mut a0 = 0.005;
            let mut a1 = 0.02;
            let mut o0 = solve_at_x0(params, l1x, l1x - a0)?;
            let mut o1 = solve_at_x0(params, l1x, l1x - a1)?;
            for _ in 0..30 {
                if (o1.energy - e_target).abs() < 1e-10 {
                    return Ok(o1);
                }
                let denom = o1.energy - o0.energy;
                if denom.abs() < 1e-15 {
                    break;
                }
                let a2 = a1 - (o1.energy - e_target) * (a1 - a0) / denom;
                let o2 = solve_at_x0(params, l1x, l1x - a2)?;
                a0 = a1;
                o0 = o1;
                a1 = a2;
                o1 = o2;
            }
            Err(Error::NoConvergence {
                iterations: 30,
                residual: (o1.energy - e_target).abs(),
            })
        }
    }
}

/// Propagate zero-control for an exact (non-multiple-of-h) duration,
/// chaining Jacobians, and return the STM and final state.
pub fn stm_over_time(
    state0: &StateVec,
    t: f64,
    params: &SystemParams,
) -> Result<(Matrix4<f64>, StateVec)> {
    let n = (t / params.h).floor() as usize;
    let mut state = *state0;
    let mut stm = Matrix4::identity();
    for _ in 0..n {
        let jac = step_jacobian(&state, params)?;
        stm = jac.0 * stm;
        state = step(&state, &ControlVec::ZERO, params)?;
    }
    let tau = (t - n as f64 * params.h) / params.h;
    if tau > MIN_FRACTION {
        let jac = step_jacobian(&state, &params.with_h(tau * params.h))?;
        stm = jac.0 * stm;
        state = fractional_step(&state, tau, params)?;
    }
    Ok((stm, state))
}

/// Monodromy matrix of a periodic orbit with its eigen-structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Monodromy {
    pub matrix: Matrix4<f64>,
    pub eigenvalues: Vector4<Complex<f64>>,
    /// Real eigenvalue with |lambda| > 1 and its unit eigenvector.
    pub lambda_unstable: f64,
    pub v_unstable: Vector4<f64>,
    /// Reciprocal partner and its unit eigenvector.
    pub lambda_stable: f64,
    pub v_stable: Vector4<f64>,
}

/// Unit-norm null vector of (m - lambda I) via SVD.
fn eigenvector_for(m: &Matrix4<f64>, lambda: f64) -> Result<Vector4<f64>> {
    let shifted = m - Matrix4::identity() * lambda;
    let svd = shifted.svd(true, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD failed on monodromy shift".into()))?;
    // Singular values are sorted descending; the last right-singular vector
    // spans the (numerical) null space.
    let v = v_t.row(3).transpose();
    Ok(v / v.norm())
}

/// Monodromy of an orbit: the STM over one exact period plus the
/// stable/unstable eigen-pair.
pub fn monodromy(orbit: &PeriodicOrbit, params: &SystemParams) -> Result<Monodromy> {
    let (matrix, _) = stm_over_time(&orbit.initial_state, orbit.period, params)?;
    let eigenvalues = matrix.complex_eigenvalues();
    let mut lambda_unstable = None;
    for ev in eigenvalues.iter() {
        if ev.im.abs() <= 1e-6 * ev.re.abs().max(1.0) && ev.re > 1.0 + 1e-6 {
            let candidate = ev.re;
            lambda_unstable = Some(match lambda_unstable {
                Some(best) if best >= candidate => best,
                _ => candidate,
            });
        }
    }
    let lambda_unstable = lambda_unstable.ok_or_else(|| {
        Error::Numerical("monodromy has no real unstable eigenvalue".into())
    })?;
    let lambda_stable = 1.0 / lambda_unstable;
    let v_unstable = eigenvector_for(&matrix, lambda_unstable)?;
    let v_stable = eigenvector_for(&matrix, lambda_stable)?;
    Ok(Monodromy {
        matrix,
        eigenvalues,
        lambda_unstable,
        v_unstable,
        lambda_stable,
        v_stable,
    })
}
