//! Indirect optimal control on a Poincare section: bounded-thrust
//! reachable sets and transfer design.
//!
//! The terminal cost maximizes section-plane displacement from the
//! control-free endpoint along a swept direction theta. The discrete
//! necessary conditions propagate the costate forward through the
//! transposed-inverse step Jacobian; the Hamiltonian is linear in the
//! control, so the optimal thrust saturates the bound opposite the
//! velocity costates. A multiple-shooting Newton iteration zeroes arc
//! continuity defects, the two section constraints, and transversality.

use nalgebra::{DMatrix, DVector, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{effective_potential, ControlVec, StateVec, SystemParams};
use crate::error::{Error, Result};
use crate::integrator::{propagate_const, step, DiscreteTrajectory};
use crate::linearization::{costate_step, step_jacobian, CostateVec};
use crate::structures::section::{CrossingDirection, PoincareSection, SectionCrossing};

/// Fixed-horizon reachability problem on a section through L1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachProblem {
    pub params: SystemParams,
    pub initial_state: StateVec,
    /// Horizon in steps; the final time is n_steps * h.
    pub n_steps: usize,
    /// Terminal section (anchored at L1, inclined at alpha_d).
    pub section: PoincareSection,
    /// Zero-control propagation of the initial state over the horizon.
    pub reference_terminal: StateVec,
}

impl ReachProblem {
    /// Build a problem over the horizon tf, rounding to whole steps and
    /// precomputing the control-free terminal state.
    pub fn new(
        params: SystemParams,
        initial_state: StateVec,
        tf: f64,
        section: PoincareSection,
    ) -> Result<Self> {
        let n_steps = (tf / params.h).round() as usize;
        if n_steps < 2 {
            return Err(Error::Domain(format!(
                "horizon tf = {tf} shorter than two steps of h = {}",
                params.h
            )));
        }
        let free = propagate_const(&initial_state, &ControlVec::ZERO, n_steps, &params)?;
        Ok(Self {
            params,
            initial_state,
            n_steps,
            section,
            reference_terminal: *free.final_state(),
        })
    }

    pub fn tf(&self) -> f64 {
        self.n_steps as f64 * self.params.h
    }

    /// Control-free terminal point in section coordinates (x, xdot).
    pub fn center(&self) -> (f64, f64) {
        (self.reference_terminal.x, self.reference_terminal.vx)
    }
}

/// Terminal displacement cost: -1/2 [(dx)^2 + (dxdot)^2]. Minimizing it
/// maximizes the section-plane distance from the control-free endpoint.
pub fn cost_j(x_n: &StateVec, xn_n: &StateVec) -> f64 {
    let dx = x_n.x - xn_n.x;
    let dvx = x_n.vx - xn_n.vx;
    -0.5 * (dx * dx + dvx * dvx)
}

/// Section membership and sweep-direction constraints in
/// cleared-denominator form: both vanish exactly where the tangent forms
/// do, with no singularities at 90 degrees.
pub fn terminal_constraints(
    x_n: &StateVec,
    xn_n: &StateVec,
    section: &PoincareSection,
    theta: f64,
) -> (f64, f64) {
    let m1 = section.offset(x_n.x, x_n.y);
    let dx = x_n.x - xn_n.x;
    let dvx = x_n.vx - xn_n.vx;
    let m2 = dvx * theta.cos() - dx * theta.sin();
    (m1, m2)
}

/// Discrete Hamiltonian: inner product of the costate with the mapped
/// next state.
pub fn hamiltonian(
    costate: &CostateVec,
    state: &StateVec,
    control: &ControlVec,
    params: &SystemParams,
) -> Result<f64> {
    let next = step(state, control, params)?;
    Ok(costate.to_vector().dot(&next.to_vector()))
}

/// Pointwise Hamiltonian minimizer over the thrust disk. Linear-in-u
/// Hamiltonian: the minimum sits on the boundary, opposite the velocity
/// costates; zero when they vanish.
pub fn optimal_control_from_costate(costate: &CostateVec, params: &SystemParams) -> ControlVec {
    let norm = (costate.lvx * costate.lvx + costate.lvy * costate.lvy).sqrt();
    if norm < 1e-14 || params.u_max == 0.0 {
        return ControlVec::ZERO;
    }
    ControlVec::new(
        -params.u_max * costate.lvx / norm,
        -params.u_max * costate.lvy / norm,
    )
}

/// Converged two-point boundary-value solution for one sweep angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingSolution {
    pub theta: f64,
    pub trajectory: DiscreteTrajectory,
    /// Costates lambda_0 .. lambda_N.
    pub costates: Vec<CostateVec>,
    /// Terminal multipliers for (m1, m2); zero in fixed-endpoint solves.
    pub beta: [f64; 2],
    /// Thrust magnitude of the bang profile (u_max for boundary solves;
    /// solved, and at most u_max, for fixed-endpoint transfers).
    pub u_mag: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub terminal: SectionCrossing,
}

impl ShootingSolution {
    /// Terminal point in section coordinates (x, xdot).
    pub fn terminal_point(&self) -> (f64, f64) {
        self.terminal.coords
    }
}

/// Bang control of a given magnitude opposite the velocity costates.
fn control_with_magnitude(costate: &CostateVec, u_mag: f64) -> ControlVec {
    let norm = (costate.lvx * costate.lvx + costate.lvy * costate.lvy).sqrt();
    if norm < 1e-14 || u_mag == 0.0 {
        return ControlVec::ZERO;
    }
    ControlVec::new(-u_mag * costate.lvx / norm, -u_mag * costate.lvy / norm)
}

/// Sweep states, costates, and controls forward over `n` steps from one
/// shooting node, with thrust magnitude `u_mag`.
fn sweep(
    x0: &StateVec,
    l0: &CostateVec,
    n: usize,
    params: &SystemParams,
    u_mag: f64,
) -> Result<(Vec<StateVec>, Vec<CostateVec>, Vec<ControlVec>)> {
    let mut states = Vec::with_capacity(n + 1);
    let mut costates = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    states.push(*x0);
    costates.push(*l0);
    let mut x = *x0;
    let mut l = *l0;
    for _ in 0..n {
        let jac = step_jacobian(&x, params)?;
        let l_next = costate_step(&l, &jac)?;
        let u = control_with_magnitude(&l_next, u_mag);
        x = step(&x, &u, params)?;
        l = l_next;
        states.push(x);
        costates.push(l);
        controls.push(u);
    }
    Ok((states, costates, controls))
}

/// What pins down the endpoint of a solve.
#[derive(Debug, Clone, Copy)]
enum TerminalMode {
    /// Reachable-set boundary point: section membership, sweep direction,
    /// and transversality with multipliers beta.
    Boundary { theta: f64 },
    /// Full terminal state equality (transfer solve).
    Fixed { target: StateVec },
}

struct Shooting<'a> {
    problem: &'a ReachProblem,
    mode: TerminalMode,
    n_arcs: usize,
    /// Steps per arc (first arcs absorb the remainder).
    arc_steps: Vec<usize>,
}

impl<'a> Shooting<'a> {
    fn new(problem: &'a ReachProblem, mode: TerminalMode, n_arcs: usize) -> Result<Self> {
        if n_arcs == 0 {
            return Err(Error::Domain("n_arcs must be at least 1".into()));
        }
        if n_arcs > problem.n_steps {
            return Err(Error::Domain(format!(
                "n_arcs = {n_arcs} exceeds horizon of {} steps",
                problem.n_steps
            )));
        }
        let base = problem.n_steps / n_arcs;
        let extra = problem.n_steps % n_arcs;
        let arc_steps = (0..n_arcs).map(|j| base + usize::from(j < extra)).collect();
        Ok(Self {
            problem,
            mode,
            n_arcs,
            arc_steps,
        })
    }

    fn dim(&self) -> usize {
        match self.mode {
            TerminalMode::Boundary { .. } => 8 * self.n_arcs - 2,
            // lambda0 (4) + interior nodes + thrust magnitude; matched by
            // continuity + terminal equality (4) + lambda0 normalization.
            TerminalMode::Fixed { .. } => 8 * self.n_arcs - 3,
        }
    }

    /// Thrust magnitude used by the sweeps of this iterate.
    fn u_mag(&self, z: &DVector<f64>) -> f64 {
        match self.mode {
            TerminalMode::Boundary { .. } => self.problem.params.u_max,
            TerminalMode::Fixed { .. } => z[self.dim() - 1],
        }
    }

    fn node(&self, z: &DVector<f64>, j: usize) -> (StateVec, CostateVec) {
        if j == 0 {
            let l0 = CostateVec::from_vector(&Vector4::new(z[0], z[1], z[2], z[3]));
            (self.problem.initial_state, l0)
        } else {
            let o = 4 + 8 * (j - 1);
            (
                StateVec::new(z[o], z[o + 1], z[o + 2], z[o + 3]),
                CostateVec::new(z[o + 4], z[o + 5], z[o + 6], z[o + 7]),
            )
        }
    }

    /// Pack an initial iterate: lambda_0 = guess (normalized in fixed
    /// mode), interior nodes from the induced forward sweep (zero
    /// continuity defects), beta = 0 / u_mag = u_max.
    fn initial_iterate(&self, guess: &CostateVec) -> Result<DVector<f64>> {
        let mut z = DVector::zeros(self.dim());
        let mut l0 = guess.to_vector();
        if matches!(self.mode, TerminalMode::Fixed { .. }) {
            let n = l0.norm();
            if n > 1e-14 {
                l0 /= n;
            } else {
                l0 = Vector4::new(0.0, 0.0, -1.0, 0.0);
            }
            z[self.dim() - 1] = self.problem.params.u_max;
        }
        z.rows_mut(0, 4).copy_from(&l0);
        let mut x = self.problem.initial_state;
        let mut l = CostateVec::from_vector(&l0);
        let u_mag = self.u_mag(&z);
        for j in 0..self.n_arcs - 1 {
            let (xs, ls, _) = sweep(&x, &l, self.arc_steps[j], &self.problem.params, u_mag)?;
            x = *xs.last().expect("nonempty sweep");
            l = *ls.last().expect("nonempty sweep");
            let o = 4 + 8 * j;
            z.rows_mut(o, 4).copy_from(&x.to_vector());
            z.rows_mut(o + 4, 4).copy_from(&l.to_vector());
        }
        Ok(z)
    }

    fn residuals(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let params = &self.problem.params;
        let mut r = DVector::zeros(self.dim());
        let mut x_end = self.problem.initial_state;
        let mut l_end = CostateVec::new(0.0, 0.0, 0.0, 0.0);
        let u_mag = self.u_mag(z);
        for j in 0..self.n_arcs {
            let (x0, l0) = self.node(z, j);
            let (xs, ls, _) = sweep(&x0, &l0, self.arc_steps[j], params, u_mag)?;
            x_end = *xs.last().expect("nonempty sweep");
            l_end = *ls.last().expect("nonempty sweep");
            if j + 1 < self.n_arcs {
                let (xn, ln) = self.node(z, j + 1);
                let o = 8 * j;
                r.rows_mut(o, 4)
                    .copy_from(&(x_end.to_vector() - xn.to_vector()));
                r.rows_mut(o + 4, 4)
                    .copy_from(&(l_end.to_vector() - ln.to_vector()));
            }
        }
        let o = 8 * (self.n_arcs - 1);
        match self.mode {
            TerminalMode::Boundary { theta } => {
                let beta = [z[self.dim() - 2], z[self.dim() - 1]];
                let (m1, m2) = terminal_constraints(
                    &x_end,
                    &self.problem.reference_terminal,
                    &self.problem.section,
                    theta,
                );
                let dx = x_end.x - self.problem.reference_terminal.x;
                let dvx = x_end.vx - self.problem.reference_terminal.vx;
                let alpha = self.problem.section.alpha;
                let dphi = Vector4::new(-dx, 0.0, -dvx, 0.0);
                let dm1 = Vector4::new(-alpha.sin(), alpha.cos(), 0.0, 0.0);
                let dm2 = Vector4::new(-theta.sin(), 0.0, theta.cos(), 0.0);
                let trans = dphi + beta[0] * dm1 + beta[1] * dm2 - l_end.to_vector();
                r.rows_mut(o, 4).copy_from(&trans);
                r[o + 4] = m1;
                r[o + 5] = m2;
            }
            TerminalMode::Fixed { target } => {
                r.rows_mut(o, 4)
                    .copy_from(&(x_end.to_vector() - target.to_vector()));
                // Pin the costate scale: the bang direction field is
                // invariant under lambda scaling.
                let l0 = Vector4::new(z[0], z[1], z[2], z[3]);
                r[o + 4] = l0.norm_squared() - 1.0;
            }
        }
        Ok(r)
    }

    /// Forward-difference Jacobian of the residual map, columns in
    /// parallel.
    fn jacobian(&self, z: &DVector<f64>, r0: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let cols: Result<Vec<DVector<f64>>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let eps = 1e-7 * (1.0 + z[i].abs());
                let mut zp = z.clone();
                zp[i] += eps;
                Ok((self.residuals(&zp)? - r0) / eps)
            })
            .collect();
        let cols = cols?;
        Ok(DMatrix::from_columns(&cols))
    }

    fn solve(&self, guess: &CostateVec, max_iter: usize, tol: f64) -> Result<DVector<f64>> {
        let z0 = self.initial_iterate(guess)?;
        let (z, residual) = self.solve_iterate(z0, max_iter, tol)?;
        if residual <= tol {
            Ok(z)
        } else {
            Err(Error::NoConvergence {
                iterations: max_iter,
                residual,
            })
        }
    }

    /// Fixed-mode iterate built from a converged boundary solution: its
    /// own states and (rescaled to unit lambda_0) costates at the arc
    /// nodes, thrust magnitude at the bound.
    fn iterate_from_solution(&self, sol: &ShootingSolution) -> DVector<f64> {
        let mut z = DVector::zeros(self.dim());
        let scale = 1.0 / sol.costates[0].to_vector().norm().max(1e-14);
        z.rows_mut(0, 4).copy_from(&(sol.costates[0].to_vector() * scale));
        let mut idx = 0;
        for j in 0..self.n_arcs - 1 {
            idx += self.arc_steps[j];
            let o = 4 + 8 * j;
            z.rows_mut(o, 4)
                .copy_from(&sol.trajectory.states[idx].to_vector());
            z.rows_mut(o + 4, 4)
                .copy_from(&(sol.costates[idx].to_vector() * scale));
        }
        z[self.dim() - 1] = self.problem.params.u_max;
        z
    }

    /// Damped Newton from a full iterate; returns the best iterate found
    /// and its residual norm (which may exceed `tol`).
    fn solve_iterate(
        &self,
        mut z: DVector<f64>,
        max_iter: usize,
        tol: f64,
    ) -> Result<(DVector<f64>, f64)> {
        let mut r = self.residuals(&z)?;
        for _ in 0..max_iter {
            if r.norm() <= tol {
                let residual = r.norm();
                return Ok((z, residual));
            }
            let jac = self.jacobian(&z, &r)?;
            // Minimum-norm least-squares step: tolerant of the near-rank
            // deficiency of the bang-control sensitivity.
            let delta = jac
                .svd(true, true)
                .solve(&-&r, 1e-12)
                .map_err(|e| Error::Numerical(format!("SVD solve failed: {e}")))?;
            let mut accepted = false;
            let mut t = 1.0;
            for _ in 0..12 {
                let zt = &z + t * &delta;
                match self.residuals(&zt) {
                    Ok(rt) if rt.norm() < r.norm() => {
                        z = zt;
                        r = rt;
                        accepted = true;
                        break;
                    }
                    _ => t *= 0.5,
                }
            }
            if !accepted {
                break;
            }
        }
        let residual = r.norm();
        Ok((z, residual))
    }
}

/// Assemble a full solution from a converged iterate.
fn finish_solution(
    shooting: &Shooting<'_>,
    z: &DVector<f64>,
    theta: f64,
    iterations: usize,
) -> Result<ShootingSolution> {
    let params = &shooting.problem.params;
    let (_, l0) = shooting.node(z, 0);
    let u_mag = shooting.u_mag(z);
    let (states, costates, controls) = sweep(
        &shooting.problem.initial_state,
        &l0,
        shooting.problem.n_steps,
        params,
        u_mag,
    )?;
    let residual = shooting.residuals(z)?.norm();
    let beta = match shooting.mode {
        TerminalMode::Boundary { .. } => [z[shooting.dim() - 2], z[shooting.dim() - 1]],
        TerminalMode::Fixed { .. } => [0.0, 0.0],
    };
    let terminal_state = *states.last().expect("nonempty sweep");
    let direction = if shooting.problem.section.normal_velocity(&terminal_state) >= 0.0 {
        CrossingDirection::Ascending
    } else {
        CrossingDirection::Descending
    };
    let terminal = SectionCrossing {
        state: terminal_state,
        time: shooting.problem.tf(),
        coords: (terminal_state.x, terminal_state.vx),
        direction,
        trajectory_id: 0,
    };
    Ok(ShootingSolution {
        theta,
        trajectory: DiscreteTrajectory {
            states,
            controls: controls.clone(),
            h: params.h,
            params: *params,
        },
        costates,
        beta,
        u_mag,
        residual,
        iterations,
        converged: true,
        terminal,
    })
}

const SHOOT_TOL: f64 = 1e-8;
const MAX_ITER: usize = 30;

/// Solve the boundary TPBVP for one sweep direction. With u_max = 0 the
/// reachable set collapses: the control-free trajectory is returned
/// directly and the section constraints are not enforced.
pub fn shooting_solve(
    problem: &ReachProblem,
    theta: f64,
    initial_costate_guess: &CostateVec,
    n_arcs: usize,
) -> Result<ShootingSolution> {
    let shooting = Shooting::new(problem, TerminalMode::Boundary { theta }, n_arcs)?;
    if problem.params.u_max == 0.0 {
        let z = shooting.initial_iterate(&CostateVec::new(0.0, 0.0, 0.0, 0.0))?;
        return finish_solution(&shooting, &z, theta, 0);
    }
    let z = shooting.solve(initial_costate_guess, MAX_ITER, SHOOT_TOL)?;
    finish_solution(&shooting, &z, theta, MAX_ITER)
}

/// One entry of a reachable set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachPoint {
    pub theta: f64,
    /// Terminal section point (x, xdot); the attempted guess's endpoint
    /// when the solve failed.
    pub point: (f64, f64),
    pub converged: bool,
    pub solution: Option<ShootingSolution>,
}

/// Reachable-set boundary sampled over a sweep of directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachableSet {
    /// Control-free terminal point.
    pub center: (f64, f64),
    /// Entries ordered by theta.
    pub points: Vec<ReachPoint>,
    pub n_converged: usize,
}

impl ReachableSet {
    /// Converged boundary points ordered by the actual displacement angle
    /// about the control-free center (the direction constraint only pins
    /// the displacement line, so a solve may land on either end of it).
    pub fn polygon(&self) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .filter(|p| p.converged)
            .map(|p| p.point)
            .collect();
        // Drop far-lobe outliers: solves that jumped to a distant critical
        // point rather than the local boundary.
        let mut rho: Vec<f64> = pts
            .iter()
            .map(|p| (p.0 - self.center.0).hypot(p.1 - self.center.1))
            .collect();
        rho.sort_by(|a, b| a.partial_cmp(b).expect("finite radii"));
        if !rho.is_empty() {
            let median = rho[rho.len() / 2];
            pts.retain(|p| {
                (p.0 - self.center.0).hypot(p.1 - self.center.1) <= 4.0 * median.max(1e-12)
            });
        }
        pts.sort_by(|a, b| {
            let aa = (a.1 - self.center.1).atan2(a.0 - self.center.0);
            let ab = (b.1 - self.center.1).atan2(b.0 - self.center.0);
            aa.partial_cmp(&ab).expect("finite angles")
        });
        pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        pts
    }

    /// Whether the boundary polygon is simple (no two non-adjacent edges
    /// intersect).
    pub fn is_simple(&self) -> bool {
        let poly = self.polygon();
        let n = poly.len();
        if n < 3 {
            return false;
        }
        for i in 0..n {
            for j in i + 1..n {
                // Skip adjacent edges (shared vertex), including the wrap.
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                if segment_intersection(
                    poly[i],
                    poly[(i + 1) % n],
                    poly[j],
                    poly[(j + 1) % n],
                )
                .is_some()
                {
                    return false;
                }
            }
        }
        true
    }

    /// Whether a section point lies strictly inside the boundary polygon
    /// (even-odd rule).
    pub fn encloses(&self, p: (f64, f64)) -> bool {
        let poly = self.polygon();
        let n = poly.len();
        if n < 3 {
            return false;
        }
        let mut inside = false;
        for i in 0..n {
            let (x0, y0) = poly[i];
            let (x1, y1) = poly[(i + 1) % n];
            if (y0 > p.1) != (y1 > p.1) && p.0 < (x1 - x0) * (p.1 - y0) / (y1 - y0) + x0 {
                inside = !inside;
            }
        }
        inside
    }

    /// Orientation in degrees (in [0, 180)) of the major axis of the
    /// second-moment ellipse fitted to the converged boundary points about
    /// the control-free center.
    pub fn major_axis_degrees(&self) -> Option<f64> {
        let pts = self.polygon();
        if pts.len() < 3 {
            return None;
        }
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in &pts {
            let dx = x - self.center.0;
            let dy = y - self.center.1;
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        // Principal direction of the 2x2 covariance.
        let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        Some(angle.to_degrees().rem_euclid(180.0))
    }

    /// Signed area of the boundary polygon (shoelace), absolute value.
    pub fn polygon_area(&self) -> f64 {
        let poly = self.polygon();
        let n = poly.len();
        if n < 3 {
            return 0.0;
        }
        let mut twice = 0.0;
        for i in 0..n {
            let (x0, y0) = poly[i];
            let (x1, y1) = poly[(i + 1) % n];
            twice += x0 * y1 - x1 * y0;
        }
        0.5 * twice.abs()
    }
}

/// Fresh costate guess whose induced initial thrust points along theta in
/// the section plane, at a tunable magnitude and orientation.
fn aligned_guess_scaled(theta: f64, scale: f64, flip: f64) -> CostateVec {
    CostateVec::new(
        0.0,
        0.0,
        -scale * flip * theta.cos(),
        -scale * flip * theta.sin(),
    )
}

fn aligned_guess(theta: f64) -> CostateVec {
    aligned_guess_scaled(theta, 1e-2, 1.0)
}

/// Sweep the boundary directions and collect the reachable set. With
/// continuation on, each solve warm-starts from the previous converged
/// costate; failed or wrongly oriented solves fall back through a cascade
/// of fresh aligned guesses.
pub fn reachable_set(
    problem: &ReachProblem,
    theta_list: &[f64],
    continuation: bool,
) -> Result<ReachableSet> {
    if theta_list.is_empty() {
        return Err(Error::Domain("theta sweep must be nonempty".into()));
    }
    let mut points = Vec::with_capacity(theta_list.len());
    let mut warm: Option<CostateVec> = None;
    for &theta in theta_list {
        let mut guesses: Vec<CostateVec> = Vec::new();
        if continuation {
            if let Some(l0) = warm {
                guesses.push(l0);
            }
        }
        for &(scale, flip) in &[(1e-3, -1.0), (1e-2, -1.0), (1e-3, 1.0), (1e-2, 1.0)] {
            guesses.push(aligned_guess_scaled(theta, scale, flip));
        }
        // Prefer the solution whose displacement points along +theta; keep
        // the first converged one otherwise.
        let mut best: Option<ShootingSolution> = None;
        for guess in &guesses {
            if let Ok(sol) = shooting_solve(problem, theta, guess, 4) {
                let d = (
                    sol.terminal_point().0 - problem.center().0,
                    sol.terminal_point().1 - problem.center().1,
                );
                let along = d.0 * theta.cos() + d.1 * theta.sin();
                let oriented = along > 0.0;
                if best.is_none() {
                    best = Some(sol);
                    if oriented {
                        break;
                    }
                } else if oriented {
                    best = Some(sol);
                    break;
                }
            }
        }
        match best {
            Some(sol) => {
                warm = Some(sol.costates[0]);
                points.push(ReachPoint {
                    theta,
                    point: sol.terminal_point(),
                    converged: true,
                    solution: Some(sol),
                });
            }
            None => points.push(ReachPoint {
                theta,
                point: problem.center(),
                converged: false,
                solution: None,
            }),
        }
    }
    let n_converged = points.iter().filter(|p| p.converged).count();
    if 2 * n_converged < theta_list.len() {
        return Err(Error::NoConvergence {
            iterations: theta_list.len(),
            residual: n_converged as f64 / theta_list.len() as f64,
        });
    }
    Ok(ReachableSet {
        center: problem.center(),
        points,
        n_converged,
    })
}

/// Proper intersection of segments p0-p1 and q0-q1, with the parameter
/// along q.
pub(crate) fn segment_intersection(
    p0: (f64, f64),
    p1: (f64, f64),
    q0: (f64, f64),
    q1: (f64, f64),
) -> Option<((f64, f64), f64)> {
    let r = (p1.0 - p0.0, p1.1 - p0.1);
    let s = (q1.0 - q0.0, q1.1 - q0.1);
    let denom = r.0 * s.1 - r.1 * s.0;
    if denom.abs() < 1e-15 {
        return None;
    }
    let qp = (q0.0 - p0.0, q0.1 - p0.1);
    let t = (qp.0 * s.1 - qp.1 * s.0) / denom;
    let u = (qp.0 * r.1 - qp.1 * r.0) / denom;
    if !(0.0..=1.0).contains(&t) || !(0.0..=1.0).contains(&u) {
        return None;
    }
    Some(((p0.0 + t * r.0, p0.1 + t * r.1), u))
}

/// A designed transfer: section intersection, completed target state, and
/// the constrained solve that reaches it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferDesign {
    /// Intersection of the reach boundary with the target region, in
    /// section coordinates (x, xdot).
    pub intersection: (f64, f64),
    /// Full target state completed from section geometry and the target
    /// orbit's Jacobi energy.
    pub target_state: StateVec,
    pub solution: ShootingSolution,
}

/// Intersect the reachable boundary with a cluster of target-orbit
/// crossings, complete the full target state (y from the section line,
/// ydot from the Jacobi integral at the target energy, sign from the
/// nearest cluster crossing), and re-solve with a terminal state
/// equality.
pub fn design_transfer(
    problem: &ReachProblem,
    reach: &ReachableSet,
    target_crossings: &[SectionCrossing],
    n_arcs: usize,
) -> Result<TransferDesign> {
    if target_crossings.len() < 2 {
        return Err(Error::Geometry(
            "target region needs at least two crossings".into(),
        ));
    }
    let polygon = reach.polygon();
    if polygon.len() < 3 {
        return Err(Error::Geometry("reach boundary is degenerate".into()));
    }
    // Closed reach boundary against consecutive target crossings.
    let mut hit: Option<((f64, f64), f64, usize)> = None;
    'outer: for i in 0..polygon.len() {
        let p0 = polygon[i];
        let p1 = polygon[(i + 1) % polygon.len()];
        for (j, pair) in target_crossings.windows(2).enumerate() {
            if let Some((point, u)) =
                segment_intersection(p0, p1, pair[0].coords, pair[1].coords)
            {
                hit = Some((point, u, j));
                break 'outer;
            }
        }
    }
    // No boundary crossing: the regions still intersect when cluster
    // points lie inside the reachable set; target the enclosed crossing
    // nearest the control-free center.
    if hit.is_none() {
        hit = target_crossings
            .iter()
            .enumerate()
            .filter(|(_, c)| reach.encloses(c.coords))
            .min_by(|(_, a), (_, b)| {
                let da = (a.coords.0 - reach.center.0).hypot(a.coords.1 - reach.center.1);
                let db = (b.coords.0 - reach.center.0).hypot(b.coords.1 - reach.center.1);
                da.partial_cmp(&db).expect("finite distances")
            })
            .map(|(j, c)| (c.coords, 0.0, j.min(target_crossings.len() - 2)));
    }
    let (point, u, j) =
        hit.ok_or_else(|| Error::Geometry("no transfer at this horizon".into()))?;

    // Complete the state on the section line at the target orbit's energy.
    let (c0, c1) = (&target_crossings[j], &target_crossings[j + 1]);
    let nearest = if u <= 0.5 { c0 } else { c1 };
    let section = &problem.section;
    let y = if section.alpha.cos().abs() > 1e-9 {
        section.anchor.1 + (point.0 - section.anchor.0) * section.alpha.tan()
    } else {
        // Vertical section: x is fixed, take y from the interpolated
        // crossing pair.
        c0.state.y + u * (c1.state.y - c0.state.y)
    };
    let e_target = crate::dynamics::jacobi_integral(&nearest.state, &problem.params)?;
    let u_pot = effective_potential(
        &StateVec::new(point.0, y, 0.0, 0.0),
        &problem.params,
    )?;
    let vy_sq = 2.0 * (e_target + u_pot) - point.1 * point.1;
    if vy_sq < 0.0 {
        return Err(Error::Domain(format!(
            "energy-infeasible ydot completion (ydot^2 = {vy_sq:.3e})"
        )));
    }
    let vy = vy_sq.sqrt() * nearest.state.vy.signum();
    let target_state = StateVec::new(point.0, y, point.1, vy);

    // Warm start from the converged boundary solve whose endpoint is
    // nearest the intersection, then continue the terminal equality from
    // that endpoint to the completed target in homotopy stages.
    let dir = (point.1 - reach.center.1).atan2(point.0 - reach.center.0);
    let nearest_sol = reach
        .points
        .iter()
        .filter(|p| p.converged)
        .min_by(|a, b| {
            let da = (a.point.0 - point.0).hypot(a.point.1 - point.1);
            let db = (b.point.0 - point.0).hypot(b.point.1 - point.1);
            da.partial_cmp(&db).expect("finite distances")
        })
        .and_then(|p| p.solution.as_ref());
    let start_state = nearest_sol
        .map(|s| *s.trajectory.final_state())
        .unwrap_or(problem.reference_terminal);
    let seed_shooting =
        Shooting::new(problem, TerminalMode::Fixed { target: target_state }, n_arcs)?;
    let mut z_cur = match nearest_sol {
        Some(sol) => seed_shooting.iterate_from_solution(sol),
        None => seed_shooting.initial_iterate(&aligned_guess(dir))?,
    };

    // Adaptive homotopy of the terminal equality from the warm-start
    // endpoint to the completed target, carrying the full iterate.
    let mut s = 0.0_f64;
    let mut ds = 1.0_f64;
    while s < 1.0 {
        let s_try = (s + ds).min(1.0);
        let mid = StateVec::from_vector(
            &(start_state.to_vector()
                + s_try * (target_state.to_vector() - start_state.to_vector())),
        );
        let stage = Shooting::new(problem, TerminalMode::Fixed { target: mid }, n_arcs)?;
        let (z_new, residual) = stage.solve_iterate(z_cur.clone(), MAX_ITER, SHOOT_TOL)?;
        if residual <= SHOOT_TOL {
            z_cur = z_new;
            s = s_try;
            ds = (ds * 2.0).min(1.0 - s + 1e-16);
        } else {
            ds *= 0.5;
            if ds < 1.0 / 512.0 {
                return Err(Error::NoConvergence {
                    iterations: MAX_ITER,
                    residual,
                });
            }
        }
    }
    let z = z_cur;
    let shooting = Shooting::new(problem, TerminalMode::Fixed { target: target_state }, n_arcs)?;
    let u_req = z[shooting.dim() - 1].abs();
    if u_req > problem.params.u_max + 1e-9 {
        return Err(Error::Domain(format!(
            "transfer requires thrust {u_req:.4} above the bound {}",
            problem.params.u_max
        )));
    }
    let solution = finish_solution(&shooting, &z, dir, MAX_ITER)?;
    Ok(TransferDesign {
        intersection: point,
        target_state,
        solution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::lagrange_points;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const MU: f64 = 0.0125;

    fn baseline_problem(u_max: f64) -> ReachProblem {
        let params = SystemParams::new(MU, 1e-3, u_max).unwrap();
        let lp = lagrange_points(&params).unwrap();
        let section = PoincareSection::new(lp.l1, 0.0).unwrap();
        ReachProblem::new(params, StateVec::new(0.8156, 0.0, 0.0, 0.1922), 1.4, section).unwrap()
    }

    #[test]
    fn cost_examples() {
        let z = StateVec::new(0.0, 0.0, 0.0, 0.0);
        assert_eq!(cost_j(&z, &z), 0.0);
        assert_eq!(cost_j(&StateVec::new(1.0, 0.0, 0.0, 0.0), &z), -0.5);
        assert_eq!(cost_j(&StateVec::new(3.0, 7.0, 4.0, 9.0), &z), -12.5);
    }

    #[test]
    fn terminal_constraint_examples() {
        let section = PoincareSection::new((0.8377, 0.0), 0.0).unwrap();
        // On the x-axis with alpha = 0.
        let x_n = StateVec::new(0.9, 0.0, 0.1, 0.0);
        let (m1, _) = terminal_constraints(&x_n, &x_n, &section, 0.0);
        assert_abs_diff_eq!(m1, 0.0, epsilon = 1e-15);
        // Equal displacements at 45 degrees.
        let xn_n = StateVec::new(0.9, 0.0, 0.1, 0.0);
        let x_n = StateVec::new(0.9 + 0.02, 0.0, 0.1 + 0.02, 0.0);
        let (_, m2) = terminal_constraints(&x_n, &xn_n, &section, std::f64::consts::FRAC_PI_4);
        assert_abs_diff_eq!(m2, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn control_law_examples_and_disk_minimality() {
        let p = SystemParams::new(MU, 1e-3, 0.1).unwrap();
        let u = optimal_control_from_costate(&CostateVec::new(0.3, -0.2, 0.0, 0.0), &p);
        assert_eq!((u.ux, u.uy), (0.0, 0.0));
        let u = optimal_control_from_costate(&CostateVec::new(0.0, 0.0, 0.0, -1.0), &p);
        assert_abs_diff_eq!(u.ux, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u.uy, 0.1, epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let state = StateVec::new(0.82, 0.01, 0.05, 0.2);
        let lam = CostateVec::new(0.4, -0.1, 0.7, -0.3);
        let u_star = optimal_control_from_costate(&lam, &p);
        let h_star = hamiltonian(&lam, &state, &u_star, &p).unwrap();
        for _ in 0..100 {
            let r = p.u_max * rng.gen::<f64>().sqrt();
            let phi = rng.gen::<f64>() * std::f64::consts::TAU;
            let u = ControlVec::new(r * phi.cos(), r * phi.sin());
            let h = hamiltonian(&lam, &state, &u, &p).unwrap();
            assert!(h_star <= h + 1e-12, "H(u*) = {h_star} > H(u) = {h}");
        }
    }

    #[test]
    fn hamiltonian_gradient_matches_finite_differences() {
        let p = SystemParams::new(MU, 1e-3, 0.1).unwrap();
        let state = StateVec::new(0.82, 0.01, 0.05, 0.2);
        let lam = CostateVec::new(0.4, -0.1, 0.7, -0.3);
        // Control enters only the velocity rows, linearly with weight h.
        let grad = (p.h * lam.lvx, p.h * lam.lvy);
        let eps = 1e-6;
        let u0 = ControlVec::new(0.01, -0.02);
        for (i, expect) in [grad.0, grad.1].iter().enumerate() {
            let mut up = u0;
            let mut um = u0;
            if i == 0 {
                up.ux += eps;
                um.ux -= eps;
            } else {
                up.uy += eps;
                um.uy -= eps;
            }
            let fd = (hamiltonian(&lam, &state, &up, &p).unwrap()
                - hamiltonian(&lam, &state, &um, &p).unwrap())
                / (2.0 * eps);
            assert_abs_diff_eq!(fd, *expect, epsilon = 1e-7);
        }
    }

    #[test]
    fn zero_thrust_collapse() {
        let problem = baseline_problem(0.0);
        for theta in [0.0, 1.0, 2.5, 4.0] {
            let sol =
                shooting_solve(&problem, theta, &CostateVec::new(0.0, 0.0, 0.0, 0.0), 4).unwrap();
            let (x, vx) = sol.terminal_point();
            let (cx, cvx) = problem.center();
            assert!((x - cx).abs() <= 1e-9 && (vx - cvx).abs() <= 1e-9);
        }
    }

    #[test]
    fn baseline_scenario_single_angle_satisfies_necessary_conditions() {
        let problem = baseline_problem(0.1);
        let theta = 1.2;
        let sol =
            shooting_solve(&problem, theta, &aligned_guess_scaled(theta, 1e-3, -1.0), 4).unwrap();
        assert!(sol.residual <= SHOOT_TOL, "residual {:.3e}", sol.residual);
        let p = &problem.params;
        // Per-step dynamics, costate recursion, and control-bound checks.
        for k in 0..problem.n_steps {
            let jac = step_jacobian(&sol.trajectory.states[k], p).unwrap();
            let l_next = costate_step(&sol.costates[k], &jac).unwrap();
            let dl = (l_next.to_vector() - sol.costates[k + 1].to_vector()).norm();
            assert!(dl <= 1e-10, "costate defect {dl:.3e} at step {k}");
            let x_next = step(
                &sol.trajectory.states[k],
                &sol.trajectory.controls[k],
                p,
            )
            .unwrap();
            let dx = (x_next.to_vector() - sol.trajectory.states[k + 1].to_vector()).norm();
            assert!(dx <= 1e-10, "dynamics defect {dx:.3e} at step {k}");
            assert!(sol.trajectory.controls[k].norm() <= p.u_max + 1e-12);
        }
        // Terminal conditions.
        let (m1, m2) = terminal_constraints(
            &sol.terminal.state,
            &problem.reference_terminal,
            &problem.section,
            theta,
        );
        assert!(m1.abs() <= 1e-8 && m2.abs() <= 1e-8, "m = ({m1:.3e}, {m2:.3e})");
        // Displacement lies on the theta line (either orientation; m2 only
        // pins the line).
        let (cx, cvx) = problem.center();
        let d = (sol.terminal_point().0 - cx, sol.terminal_point().1 - cvx);
        let across = d.0 * theta.sin() - d.1 * theta.cos();
        assert!(across.abs() <= 1e-7, "off-line component {across:.3e}");
    }

    #[test]
    fn small_sweep_encloses_center() {
        let problem = baseline_problem(0.1);
        let thetas: Vec<f64> = (0..8)
            .map(|i| i as f64 * std::f64::consts::TAU / 8.0)
            .collect();
        let set = reachable_set(&problem, &thetas, true).unwrap();
        assert!(set.n_converged >= 4, "{}/8 converged", set.n_converged);
        let polygon = set.polygon();
        assert!(point_in_polygon(set.center, &polygon), "center outside polygon");
    }

    fn point_in_polygon(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
        let mut inside = false;
        let n = poly.len();
        for i in 0..n {
            let (x0, y0) = poly[i];
            let (x1, y1) = poly[(i + 1) % n];
            if (y0 > p.1) != (y1 > p.1)
                && p.0 < (x1 - x0) * (p.1 - y0) / (y1 - y0) + x0
            {
                inside = !inside;
            }
        }
        inside
    }

    #[test]
    fn disjoint_target_region_is_an_error() {
        let problem = baseline_problem(0.0);
        let square: Vec<ReachPoint> = [(0.0_f64, 0.0_f64), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
            .iter()
            .map(|&(x, y)| ReachPoint {
                theta: y.atan2(x),
                point: (x, y),
                converged: true,
                solution: None,
            })
            .collect();
        let reach = ReachableSet {
            center: (0.5, 0.5),
            points: square,
            n_converged: 4,
        };
        let mk = |x: f64, vx: f64| SectionCrossing {
            state: StateVec::new(x, 0.0, vx, 0.0),
            time: 0.0,
            coords: (x, vx),
            direction: CrossingDirection::Descending,
            trajectory_id: 0,
        };
        let far = vec![mk(5.0, 5.0), mk(6.0, 5.0)];
        let err = design_transfer(&problem, &reach, &far, 4).unwrap_err();
        assert!(err.to_string().contains("no transfer at this horizon"), "{err}");
    }

    #[test]
    fn segment_intersection_unit_square() {
        // Horizontal ray from an interior point out through the right edge.
        let hit = segment_intersection((1.0, 0.0), (1.0, 1.0), (0.5, 0.5), (1.5, 0.5));
        let ((x, y), u) = hit.unwrap();
        assert_abs_diff_eq!(x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(u, 0.5, epsilon = 1e-15);
        assert!(segment_intersection((1.0, 0.0), (1.0, 1.0), (0.2, 0.5), (0.8, 0.5)).is_none());
    }
}
