//! End-to-end acceptance checks, one per criterion. Each test prints a
//! single pass/fail line; a failing criterion panics with the same text.

use std::time::Instant;

use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crtbp::config::RunConfig;
use crtbp::dynamics::{
    jacobi_integral, lagrange_points, ControlVec, StateVec, SystemParams,
};
use crtbp::export;
use crtbp::integrator::{energy_report, propagate_const, rk4_step, step, DiscreteTrajectory};
use crtbp::linearization::{
    costate_step_elimination, costate_step_generic, step_jacobian, CostateVec, StepJacobian,
};
use crtbp::reachability::{design_transfer, reachable_set, ReachProblem};
use crtbp::run::run;
use crtbp::structures::manifold::{ManifoldKind, ManifoldOptions};
use crtbp::structures::orbit::stm_over_time;
use crtbp::structures::target::target_orbit_region;
use crtbp::structures::{
    find_periodic_orbit, globalize_manifold, monodromy, OrbitTarget, PoincareSection,
};

const MU: f64 = 0.0125;

fn report(n: usize, label: &str, outcome: Result<(), String>) {
    match outcome {
        Ok(()) => println!("criterion {n} ({label}): pass"),
        Err(msg) => {
            let line = format!("criterion {n} ({label}): FAIL - {msg}");
            println!("{line}");
            panic!("{line}");
        }
    }
}

fn check(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

#[test]
fn criterion_01_energy_boundedness() {
    let started = Instant::now();
    let outcome = (|| {
        let params = SystemParams::new(MU, 1e-3, 0.0).map_err(|e| e.to_string())?;
        let state0 = StateVec::new(0.75, 0.0, 0.0, 0.2883);
        let n = 50_000;
        let traj =
            propagate_const(&state0, &ControlVec::ZERO, n, &params).map_err(|e| e.to_string())?;
        let rep = energy_report(&traj).map_err(|e| e.to_string())?;

        // Cumulative drift of the classical fourth-order scheme at the
        // same step.
        let mut s = state0;
        let e0 = jacobi_integral(&s, &params).map_err(|e| e.to_string())?;
        for _ in 0..n {
            s = rk4_step(&s, &ControlVec::ZERO, &params, params.h).map_err(|e| e.to_string())?;
        }
        let rk_drift = (jacobi_integral(&s, &params).map_err(|e| e.to_string())? - e0).abs();

        check(
            rk_drift >= 10.0 * rep.max_deviation,
            format!(
                "rk4 cumulative drift {rk_drift:.3e} not 10x the bounded deviation {:.3e}",
                rep.max_deviation
            ),
        )?;
        check(
            rep.drift_slope.abs() <= 1e-12,
            format!("drift slope {:.3e} exceeds 1e-12", rep.drift_slope),
        )?;
        check(
            rep.max_deviation <= 1e-8,
            format!("max |E(t) - E(0)| = {:.3e} exceeds 1e-8", rep.max_deviation),
        )?;
        check(
            started.elapsed().as_secs_f64() < 30.0,
            format!("runtime {:.1}s exceeds 30s", started.elapsed().as_secs_f64()),
        )
    })();
    report(1, "energy boundedness", outcome);
}

#[test]
fn criterion_02_integrator_order() {
    let outcome = (|| {
        let state0 = StateVec::new(0.75, 0.0, 0.0, 0.2883);
        let tf = 1.0;
        // High-accuracy reference: classical fourth-order at dt = 1e-5
        // (local error far below the 1e-13 comparison tolerance).
        let ref_params = SystemParams::new(MU, 1e-5, 0.0).map_err(|e| e.to_string())?;
        let mut reference = state0;
        for _ in 0..100_000 {
            reference = rk4_step(&reference, &ControlVec::ZERO, &ref_params, 1e-5)
                .map_err(|e| e.to_string())?;
        }
        let mut errors = Vec::new();
        for h in [4e-3, 2e-3, 1e-3] {
            let params = SystemParams::new(MU, h, 0.0).map_err(|e| e.to_string())?;
            let n = (tf / h).round() as usize;
            let traj = propagate_const(&state0, &ControlVec::ZERO, n, &params)
                .map_err(|e| e.to_string())?;
            errors.push((traj.final_state().to_vector() - reference.to_vector()).norm());
        }
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            check(
                (3.2..=4.8).contains(&ratio),
                format!("error ratio {ratio:.2} outside 4x (+/-20%); errors {errors:?}"),
            )?;
        }
        Ok(())
    })();
    report(2, "integrator order", outcome);
}

fn random_state(rng: &mut ChaCha8Rng) -> StateVec {
    StateVec::new(
        rng.gen_range(0.4..1.2),
        rng.gen_range(-0.3..0.3),
        rng.gen_range(-0.5..0.5),
        rng.gen_range(-0.5..0.5),
    )
}

fn fd_step_jacobian(state: &StateVec, params: &SystemParams) -> Result<Matrix4<f64>, String> {
    let eps = 1e-6;
    let mut m = Matrix4::zeros();
    for j in 0..4 {
        let mut up = state.to_vector();
        let mut dn = state.to_vector();
        up[j] += eps;
        dn[j] -= eps;
        let fp = step(&StateVec::from_vector(&up), &ControlVec::ZERO, params)
            .map_err(|e| e.to_string())?;
        let fm = step(&StateVec::from_vector(&dn), &ControlVec::ZERO, params)
            .map_err(|e| e.to_string())?;
        let col = (fp.to_vector() - fm.to_vector()) / (2.0 * eps);
        m.set_column(j, &col);
    }
    Ok(m)
}

#[test]
fn criterion_03_jacobian_correctness() {
    let outcome = (|| {
        let params = SystemParams::new(MU, 1e-3, 0.0).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..100 {
            let state = random_state(&mut rng);
            let analytic = step_jacobian(&state, &params).map_err(|e| e.to_string())?;
            let fd = fd_step_jacobian(&state, &params)?;
            let rel = (analytic.0 - fd).norm() / analytic.0.norm();
            check(
                rel <= 1e-6,
                format!("trial {trial}: relative error {rel:.3e} at {state:?}"),
            )?;
        }
        Ok(())
    })();
    report(3, "step Jacobian vs finite differences", outcome);
}

#[test]
fn criterion_04_costate_map() {
    let outcome = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Random well-posed systems.
        let mut tested = 0;
        while tested < 1000 {
            let mut m = Matrix4::<f64>::zeros();
            for i in 0..4 {
                for j in 0..4 {
                    m[(i, j)] = rng.gen_range(-1.0..1.0);
                }
            }
            m += 2.0 * Matrix4::identity();
            if m.determinant().abs() < 1e-3 {
                continue;
            }
            let jac = StepJacobian(m);
            let lam = CostateVec::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let a = costate_step_elimination(&lam, &jac).map_err(|e| e.to_string())?;
            let b = costate_step_generic(&lam, &jac).map_err(|e| e.to_string())?;
            let diff = (a.to_vector() - b.to_vector()).norm()
                / b.to_vector().norm().max(1.0);
            check(
                diff <= 1e-12,
                format!("random system {tested}: elimination vs generic differ by {diff:.3e}"),
            )?;
            tested += 1;
        }
        // Every Jacobian from the criterion-3 sample.
        let params = SystemParams::new(MU, 1e-3, 0.0).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..100 {
            let state = random_state(&mut rng);
            let jac = step_jacobian(&state, &params).map_err(|e| e.to_string())?;
            let lam = CostateVec::new(0.3, -0.7, 0.2, 0.9);
            let a = costate_step_elimination(&lam, &jac).map_err(|e| e.to_string())?;
            let b = costate_step_generic(&lam, &jac).map_err(|e| e.to_string())?;
            let diff = (a.to_vector() - b.to_vector()).norm()
                / b.to_vector().norm().max(1.0);
            check(
                diff <= 1e-12,
                format!("step Jacobian {trial}: elimination vs generic differ by {diff:.3e}"),
            )?;
        }
        Ok(())
    })();
    report(4, "costate map agreement", outcome);
}

#[test]
fn criterion_05_equilibria() {
    let outcome = (|| {
        let params = SystemParams::new(MU, 1e-3, 0.0).map_err(|e| e.to_string())?;
        let lp = lagrange_points(&params).map_err(|e| e.to_string())?;
        for (label, pos) in lp.iter() {
            let s = StateVec::new(pos.0, pos.1, 0.0, 0.0);
            let g = crtbp::dynamics::grad_u(&s, &params).map_err(|e| e.to_string())?;
            let norm = (g.0 * g.0 + g.1 * g.1).sqrt();
            check(
                norm <= 1e-12,
                format!("{label:?}: |grad U| = {norm:.3e} exceeds 1e-12"),
            )?;
        }
        let expect = (0.5 - MU, 3.0_f64.sqrt() / 2.0);
        check(
            (lp.l4.0 - expect.0).abs() <= 1e-14 && (lp.l4.1 - expect.1).abs() <= 1e-14,
            format!("L4 = {:?} differs from {expect:?}", lp.l4),
        )?;
        check(
            (lp.l5.0 - expect.0).abs() <= 1e-14 && (lp.l5.1 + expect.1).abs() <= 1e-14,
            format!("L5 = {:?} differs from mirrored {expect:?}", lp.l5),
        )
    })();
    report(5, "equilibria", outcome);
}

#[test]
fn criterion_06_periodic_orbit_and_monodromy() {
    let outcome = (|| {
        let params = SystemParams::new(MU, 1e-3, 0.0).map_err(|e| e.to_string())?;
        let orbit = find_periodic_orbit(&params, OrbitTarget::InitialX(0.8156))
            .map_err(|e| e.to_string())?;
        let (_, half) = stm_over_time(&orbit.initial_state, orbit.half_period, &params)
            .map_err(|e| e.to_string())?;
        check(
            half.vx.abs() <= 1e-10,
            format!("crossing residual |xdot| = {:.3e} exceeds 1e-10", half.vx.abs()),
        )?;
        let mono = monodromy(&orbit, &params).map_err(|e| e.to_string())?;
        let det = mono.matrix.determinant();
        check(
            (det - 1.0).abs() <= 1e-6,
            format!("monodromy det = {det} not within 1e-6 of 1"),
        )?;
        check(
            mono.lambda_unstable > 1.0,
            format!("no real eigenvalue > 1 (largest real {})", mono.lambda_unstable),
        )
    })();
    report(6, "periodic orbit and monodromy", outcome);
}

#[test]
fn criterion_07_manifold_time_of_flight() {
    let outcome = (|| {
        let params = SystemParams::new(MU, 1e-3, 0.0).map_err(|e| e.to_string())?;
        let orbit = find_periodic_orbit(&params, OrbitTarget::InitialX(0.8156))
            .map_err(|e| e.to_string())?;
        let mono = monodromy(&orbit, &params).map_err(|e| e.to_string())?;
        // x-axis section on the Moon side of the orbit.
        let l1 = lagrange_points(&params).map_err(|e| e.to_string())?.l1;
        let section = PoincareSection::new(l1, 0.0)
            .map_err(|e| e.to_string())?
            .with_window(0.05, 0.45);
        let opts = ManifoldOptions {
            kind: ManifoldKind::Unstable,
            epsilon: 1e-4,
            n_trajectories: 10,
            t_max: 8.0,
            sign: 1.0,
            min_time: 0.3,
        };
        let branch = globalize_manifold(&orbit, &mono, &params, Some(&section), &opts)
            .map_err(|e| e.to_string())?;
        let times: Vec<f64> = branch
            .trajectories
            .iter()
            .filter_map(|t| t.flight_time)
            .collect();
        check(
            times.len() >= branch.trajectories.len() / 2,
            format!("only {}/{} trajectories reach the section", times.len(),
                branch.trajectories.len()),
        )?;
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        check(
            (2.5..=3.7).contains(&mean),
            format!("mean time of flight {mean:.3} outside [2.5, 3.7]"),
        )
    })();
    report(7, "manifold time of flight", outcome);
}

fn reach_problem(u_max: f64) -> Result<ReachProblem, String> {
    let params = SystemParams::new(MU, 1e-3, u_max).map_err(|e| e.to_string())?;
    let l1 = lagrange_points(&params).map_err(|e| e.to_string())?.l1;
    let section = PoincareSection::new(l1, 0.0).map_err(|e| e.to_string())?;
    ReachProblem::new(params, StateVec::new(0.8156, 0.0, 0.0, 0.1922), 1.4, section)
        .map_err(|e| e.to_string())
}

fn sweep_angles(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| k as f64 * std::f64::consts::TAU / n as f64)
        .collect()
}

#[test]
fn criterion_08_reachability() {
    let outcome = (|| {
        // Zero-thrust collapse.
        let problem0 = reach_problem(0.0)?;
        let set0 = reachable_set(&problem0, &sweep_angles(8), false).map_err(|e| e.to_string())?;
        for p in &set0.points {
            let d = ((p.point.0 - set0.center.0).powi(2)
                + (p.point.1 - set0.center.1).powi(2))
            .sqrt();
            check(
                p.converged && d <= 1e-9,
                format!("theta {:.2}: zero-thrust point {d:.3e} from the free crossing", p.theta),
            )?;
        }
        // Positive-thrust sweep.
        let problem = reach_problem(0.1)?;
        let set = reachable_set(&problem, &sweep_angles(24), true).map_err(|e| e.to_string())?;
        check(
            4 * set.n_converged >= 3 * 24,
            format!("{}/24 angles converged (< 75%)", set.n_converged),
        )?;
        check(set.is_simple(), "boundary polygon self-intersects".into())?;
        check(
            set.encloses(set.center),
            "polygon does not strictly enclose the control-free point".into(),
        )?;
        let axis = set
            .major_axis_degrees()
            .ok_or_else(|| "degenerate polygon: no major axis".to_string())?;
        check(
            (55.0..=85.0).contains(&axis),
            format!("major axis {axis:.1} degrees outside [55, 85]"),
        )
    })();
    report(8, "reachable set collapse and enclosure", outcome);
}

#[test]
fn criterion_09_end_to_end_transfer() {
    let started = Instant::now();
    let outcome = (|| {
        let problem = reach_problem(0.9)?;
        let set = reachable_set(&problem, &sweep_angles(24), true).map_err(|e| e.to_string())?;
        let region = target_orbit_region(
            &problem.params,
            &StateVec::new(1.05, 0.0, 0.0, 0.35),
            20.0,
            &problem.section,
        )
        .map_err(|e| e.to_string())?;
        check(
            !region.descending.is_empty(),
            "target orbit has no descending crossings".into(),
        )?;
        let design = design_transfer(&problem, &set, &region.descending, 4)
            .map_err(|e| e.to_string())?;
        check(
            design.solution.residual <= 1e-6,
            format!("terminal error {:.3e} exceeds 1e-6", design.solution.residual),
        )?;
        let tof = design.solution.trajectory.final_time();
        check(
            (tof - 1.4).abs() <= 1e-9,
            format!("time of flight {tof} differs from 1.4"),
        )?;
        check(
            started.elapsed().as_secs_f64() < 600.0,
            format!("pipeline took {:.0}s (>= 10 min)", started.elapsed().as_secs_f64()),
        )
    })();
    report(9, "end-to-end transfer", outcome);
}

#[test]
fn criterion_10_determinism_and_round_trip() {
    let outcome = (|| {
        // Identical configs produce identical content hashes.
        let cfg = RunConfig::from_json(
            r#"{
                "scenario": "simulate",
                "system": { "mu": 0.0125 },
                "simulate": { "initial_state": [0.75, 0.0, 0.0, 0.2883], "tf": 1.0 }
            }"#,
        )
        .map_err(|e| e.to_string())?;
        let base = std::env::temp_dir().join("crtbp-acceptance-determinism");
        let _ = std::fs::remove_dir_all(&base);
        let m1 = run(&cfg, &base.join("a"), false).map_err(|e| e.to_string())?;
        let m2 = run(&cfg, &base.join("b"), false).map_err(|e| e.to_string())?;
        check(
            m1.content_hash == m2.content_hash,
            format!("hashes differ: {} vs {}", m1.content_hash, m2.content_hash),
        )?;
        // JSON export/import is bit-exact.
        let params = SystemParams::new(MU, 1e-3, 0.0).map_err(|e| e.to_string())?;
        let traj = propagate_const(
            &StateVec::new(0.8156, 0.0, 0.0, 0.1922),
            &ControlVec::ZERO,
            1000,
            &params,
        )
        .map_err(|e| e.to_string())?;
        let text = export::to_json(&traj).map_err(|e| e.to_string())?;
        let back: DiscreteTrajectory = export::from_json(&text).map_err(|e| e.to_string())?;
        for (k, (a, b)) in traj.states.iter().zip(&back.states).enumerate() {
            let same: bool = Vector4::from_iterator(
                [a.x, a.y, a.vx, a.vy].into_iter(),
            )
            .iter()
            .zip([b.x, b.y, b.vx, b.vy].iter())
            .all(|(p, q)| p.to_bits() == q.to_bits());
            check(same, format!("state {k} not bit-identical after round trip"))?;
        }
        Ok(())
    })();
    report(10, "determinism and round trip", outcome);
}
