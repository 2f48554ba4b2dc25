//! Scenario runner: executes a validated configuration, writes every
//! artifact, and returns a manifest describing the run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{state_from, RunConfig, Scenario, SectionConfig};
use crate::dynamics::{
    grad_u, jacobi_integral, lagrange_points, ControlVec, StateVec, SystemParams,
};
use crate::error::{Error, Result};
use crate::export;
use crate::integrator::{energy_report, propagate_const, rk4_step, DiscreteTrajectory};
use crate::plot::{Figure, Series};
use crate::reachability::{design_transfer, reachable_set, ReachProblem, ReachableSet};
use crate::structures::{
    find_periodic_orbit, globalize_manifold, monodromy, ManifoldBranch, Monodromy, OrbitTarget,
    PeriodicOrbit, PoincareSection,
};
use crate::structures::manifold::{ManifoldKind, ManifoldOptions};
use crate::structures::target::target_orbit_region;

/// Record of one completed run: the echoed configuration, the artifact
/// list, a deterministic content hash, and timing/iteration diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    /// The validated configuration the run executed.
    pub config: RunConfig,
    /// Artifact file names, relative to the output directory.
    pub files: Vec<String>,
    /// SHA-256 over the sorted artifact names and bytes; excludes wall
    /// time, so identical runs hash identically.
    pub content_hash: String,
    pub wall_time_s: f64,
    /// Named iteration counters from the solvers involved.
    pub iterations: BTreeMap<String, usize>,
}

/// Collects artifacts in the output directory and hashes them.
struct Emitter {
    dir: PathBuf,
    files: Vec<String>,
}

impl Emitter {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn emit(&mut self, name: &str, contents: &str) -> Result<()> {
        if contents.is_empty() {
            return Err(Error::Geometry(format!("artifact {name} would be empty")));
        }
        export::write_file(&self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finalize(
        self,
        cfg: &RunConfig,
        started: Instant,
        iterations: BTreeMap<String, usize>,
    ) -> Result<RunManifest> {
        let mut files = self.files;
        files.sort();
        let mut hasher = Sha256::new();
        for name in &files {
            let path = self.dir.join(name);
            let bytes = std::fs::read(&path)?;
            if bytes.is_empty() {
                return Err(Error::Geometry(format!("artifact {name} is empty on disk")));
            }
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update(&bytes);
        }
        let digest = hasher.finalize();
        let mut content_hash = String::with_capacity(64);
        for b in digest {
            let _ = write!(content_hash, "{b:02x}");
        }
        let manifest = RunManifest {
            scenario: cfg.scenario.as_str().to_string(),
            config: cfg.clone(),
            files,
            content_hash,
            wall_time_s: started.elapsed().as_secs_f64(),
            iterations,
        };
        export::write_file(&self.dir.join("manifest.json"), &export::to_json(&manifest)?)?;
        Ok(manifest)
    }
}

fn params_of(cfg: &RunConfig) -> Result<SystemParams> {
    SystemParams::new(cfg.system.mu, cfg.system.h, cfg.system.u_max)
}

/// Build a section from its config block; the anchor defaults to L1.
fn section_from(sc: &SectionConfig, params: &SystemParams) -> Result<PoincareSection> {
    let anchor = match sc.anchor {
        Some(a) => a,
        None => lagrange_points(params)?.l1,
    };
    let mut section = PoincareSection::new(anchor, sc.alpha_d.to_radians())?;
    if let Some((lo, hi)) = sc.window {
        section = section.with_window(lo, hi);
    }
    Ok(section)
}

fn orbit_target(sel: &crate::config::OrbitSelect) -> OrbitTarget {
    match sel {
        crate::config::OrbitSelect::InitialX { value } => OrbitTarget::InitialX(*value),
        crate::config::OrbitSelect::Amplitude { value } => OrbitTarget::Amplitude(*value),
        crate::config::OrbitSelect::Energy { value } => OrbitTarget::Energy(*value),
    }
}

fn xy(traj: &DiscreteTrajectory) -> Vec<(f64, f64)> {
    traj.states.iter().map(|s| (s.x, s.y)).collect()
}

fn rotating_frame_figure(title: &str, params: &SystemParams) -> Result<Figure> {
    let lp = lagrange_points(params)?;
    Ok(Figure::new(title)
        .with(Series::scatter(
            "primaries",
            vec![(-params.mu, 0.0), (1.0 - params.mu, 0.0)],
            "#444444",
            5.0,
        ))
        .with(Series::scatter("l1", vec![lp.l1], "#2ca02c", 3.0)))
}

/// Orbit descriptor for JSON export (monodromy spectrum flattened to
/// re/im pairs).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct OrbitSummary {
    initial_state: StateVec,
    period: f64,
    half_period: f64,
    energy: f64,
    residual: f64,
    iterations: usize,
    eigenvalues: Vec<(f64, f64)>,
    lambda_unstable: f64,
    lambda_stable: f64,
}

impl OrbitSummary {
    fn new(orbit: &PeriodicOrbit, mono: &Monodromy) -> Self {
        Self {
            initial_state: orbit.initial_state,
            period: orbit.period,
            half_period: orbit.half_period,
            energy: orbit.energy,
            residual: orbit.residual,
            iterations: orbit.iterations,
            eigenvalues: mono.eigenvalues.iter().map(|c| (c.re, c.im)).collect(),
            lambda_unstable: mono.lambda_unstable,
            lambda_stable: mono.lambda_stable,
        }
    }
}

/// Execute a run and write all artifacts plus `manifest.json` under
/// `out_dir`. The config must already be validated.
pub fn run(cfg: &RunConfig, out_dir: &Path, verbose: bool) -> Result<RunManifest> {
    cfg.validate()?;
    let started = Instant::now();
    let params = params_of(cfg)?;
    let mut em = Emitter::new(out_dir)?;
    let mut iters = BTreeMap::new();
    let log = |msg: &str| {
        if verbose {
            eprintln!("[crtbp] {msg}");
        }
    };
    match cfg.scenario {
        Scenario::Simulate => {
            let sim = cfg.simulate.as_ref().expect("validated");
            let state0 = state_from(&sim.initial_state);
            let n = (sim.tf / params.h).round() as usize;
            log(&format!("simulate: {n} steps of h = {}", params.h));
            let traj = propagate_const(&state0, &ControlVec::ZERO, n, &params)?;
            let report = energy_report(&traj)?;
            iters.insert("steps".into(), n);
            em.emit("trajectory.csv", &export::trajectory_csv(&traj))?;
            let mut energy_csv = String::from("t,energy,deviation\n");
            for (k, e) in report.energies.iter().enumerate() {
                let _ = writeln!(energy_csv, "{},{},{}", traj.time(k), e, e - report.e0);
            }
            em.emit("energy.csv", &energy_csv)?;
            #[derive(Serialize)]
            struct SimSummary<'a> {
                energy: &'a crate::integrator::EnergyReport,
                rk4_max_deviation: Option<f64>,
                rk4_drift_slope: Option<f64>,
            }
            let mut summary = SimSummary {
                energy: &report,
                rk4_max_deviation: None,
                rk4_drift_slope: None,
            };
            if sim.compare_rk4 {
                log("simulate: reference fourth-order comparison");
                let mut s = state0;
                let e0 = jacobi_integral(&s, &params)?;
                let mut max_dev = 0.0_f64;
                let mut last_dev = 0.0;
                for _ in 0..n {
                    s = rk4_step(&s, &ControlVec::ZERO, &params, params.h)?;
                    last_dev = jacobi_integral(&s, &params)? - e0;
                    max_dev = max_dev.max(last_dev.abs());
                }
                summary.rk4_max_deviation = Some(max_dev);
                summary.rk4_drift_slope = Some(last_dev / sim.tf);
            }
            em.emit("simulate.json", &export::to_json(&summary)?)?;
            let fig = rotating_frame_figure("trajectory (rotating frame)", &params)?
                .with(Series::line("trajectory", xy(&traj), "#1f77b4"));
            em.emit("trajectory.svg", &fig.render()?)?;
            let dev: Vec<(f64, f64)> = report
                .energies
                .iter()
                .enumerate()
                .map(|(k, e)| (traj.time(k), e - report.e0))
                .collect();
            let efig = Figure::new("Jacobi deviation vs time")
                .with(Series::line("deviation", dev, "#d62728"));
            em.emit("energy.svg", &efig.render()?)?;
        }
        Scenario::Lagrange => {
            log("lagrange: solving equilibria");
            let lp = lagrange_points(&params)?;
            #[derive(Serialize)]
            struct Equilibrium {
                label: String,
                position: (f64, f64),
                grad_norm: f64,
                energy: f64,
            }
            let mut points = Vec::new();
            for (label, pos) in lp.iter() {
                let s = StateVec::new(pos.0, pos.1, 0.0, 0.0);
                let g = grad_u(&s, &params)?;
                points.push(Equilibrium {
                    label: format!("{label:?}"),
                    position: pos,
                    grad_norm: (g.0 * g.0 + g.1 * g.1).sqrt(),
                    energy: jacobi_integral(&s, &params)?,
                });
            }
            em.emit("lagrange.json", &export::to_json(&points)?)?;
            let fig = rotating_frame_figure("equilibrium points", &params)?.with(Series::scatter(
                "equilibria",
                lp.iter().map(|(_, p)| p).collect(),
                "#d62728",
                4.0,
            ));
            em.emit("lagrange.svg", &fig.render()?)?;
        }
        Scenario::Orbit => {
            let orb_cfg = cfg.orbit.as_ref().expect("validated");
            log("orbit: differential correction");
            let orbit = find_periodic_orbit(&params, orbit_target(&orb_cfg.target))?;
            let mono = monodromy(&orbit, &params)?;
            iters.insert("corrector".into(), orbit.iterations);
            em.emit("orbit.json", &export::to_json(&OrbitSummary::new(&orbit, &mono))?)?;
            em.emit("orbit_trajectory.csv", &export::trajectory_csv(&orbit.trajectory))?;
            let fig = rotating_frame_figure("periodic orbit", &params)?
                .with(Series::line("orbit", xy(&orbit.trajectory), "#1f77b4").closed());
            em.emit("orbit.svg", &fig.render()?)?;
        }
        Scenario::Manifold => {
            let man = cfg.manifold.as_ref().expect("validated");
            log("manifold: orbit, monodromy, globalization");
            let orbit = find_periodic_orbit(&params, orbit_target(&man.orbit))?;
            let mono = monodromy(&orbit, &params)?;
            iters.insert("corrector".into(), orbit.iterations);
            let section = section_from(&man.section, &params)?;
            let kind = if man.kind == "stable" {
                ManifoldKind::Stable
            } else {
                ManifoldKind::Unstable
            };
            let opts = ManifoldOptions {
                kind,
                epsilon: man.epsilon,
                n_trajectories: man.n_trajectories,
                t_max: man.t_max,
                sign: man.sign,
                min_time: man.min_time,
            };
            let branch = globalize_manifold(&orbit, &mono, &params, Some(&section), &opts)?;
            emit_manifold(&mut em, &params, &orbit, &branch)?;
        }
        Scenario::Reach => {
            let set = run_reach(cfg, &params, &mut iters, verbose)?;
            emit_reach(&mut em, &set)?;
        }
        Scenario::Transfer => {
            let set = run_reach(cfg, &params, &mut iters, verbose)?;
            emit_reach(&mut em, &set)?;
            let r = cfg.reach.as_ref().expect("validated");
            let t = cfg.transfer.as_ref().expect("validated");
            let section = section_from(&r.section, &params)?;
            log("transfer: target region and constrained solve");
            let problem =
                ReachProblem::new(params, state_from(&r.initial_state), r.tf, section)?;
            let region = target_orbit_region(
                &params,
                &state_from(&t.target_state),
                t.target_t_span,
                &section,
            )?;
            if region.escaped {
                return Err(Error::Geometry(format!(
                    "target orbit leaves the lunar region (max r2 = {:.3})",
                    region.max_r2
                )));
            }
            let cluster = if t.use_descending {
                &region.descending
            } else {
                &region.ascending
            };
            let design = design_transfer(&problem, &set, cluster, t.n_arcs)?;
            iters.insert("transfer".into(), design.solution.iterations);
            em.emit("transfer.csv", &export::trajectory_csv(&design.solution.trajectory))?;
            #[derive(Serialize)]
            struct TransferSummary {
                intersection: (f64, f64),
                target_state: StateVec,
                time_of_flight: f64,
                terminal_error: f64,
                thrust_magnitude: f64,
                iterations: usize,
                peak_thrust: f64,
            }
            let peak_thrust = design
                .solution
                .trajectory
                .controls
                .iter()
                .map(|u| u.norm())
                .fold(0.0_f64, f64::max);
            em.emit(
                "transfer.json",
                &export::to_json(&TransferSummary {
                    intersection: design.intersection,
                    target_state: design.target_state,
                    time_of_flight: design.solution.trajectory.final_time(),
                    terminal_error: design.solution.residual,
                    thrust_magnitude: design.solution.u_mag,
                    iterations: design.solution.iterations,
                    peak_thrust,
                })?,
            )?;
            let fig = rotating_frame_figure("transfer (rotating frame)", &params)?
                .with(Series::line("target orbit", xy(&region.trajectory), "#aaaaaa"))
                .with(Series::line("transfer", xy(&design.solution.trajectory), "#1f77b4"));
            em.emit("transfer.svg", &fig.render()?)?;
            // Section-plane overlay: reach boundary, target clusters, and
            // the chosen intersection.
            let mut sfig = Figure::new("section plane (x, xdot)")
                .with(Series::line("reach boundary", closed_polygon(&set), "#1f77b4").closed())
                .with(Series::scatter("reach center", vec![set.center], "#1f77b4", 3.0));
            if !region.descending.is_empty() {
                sfig = sfig.with(Series::scatter(
                    "target descending",
                    region.descending.iter().map(|c| (c.state.x, c.state.vx)).collect(),
                    "#2ca02c",
                    2.5,
                ));
            }
            if !region.ascending.is_empty() {
                sfig = sfig.with(Series::scatter(
                    "target ascending",
                    region.ascending.iter().map(|c| (c.state.x, c.state.vx)).collect(),
                    "#ff7f0e",
                    2.5,
                ));
            }
            sfig = sfig.with(Series::scatter(
                "intersection",
                vec![design.intersection],
                "#d62728",
                5.0,
            ));
            em.emit("section.svg", &sfig.render()?)?;
        }
    }
    em.finalize(cfg, started, iters)
}

fn run_reach(
    cfg: &RunConfig,
    params: &SystemParams,
    iters: &mut BTreeMap<String, usize>,
    verbose: bool,
) -> Result<ReachableSet> {
    let r = cfg.reach.as_ref().expect("validated");
    let section = section_from(&r.section, params)?;
    if verbose {
        eprintln!("[crtbp] reach: {} angle sweep over tf = {}", r.n_angles, r.tf);
    }
    let problem = ReachProblem::new(*params, state_from(&r.initial_state), r.tf, section)?;
    let thetas: Vec<f64> = (0..r.n_angles)
        .map(|k| 2.0 * std::f64::consts::PI * k as f64 / r.n_angles as f64)
        .collect();
    let set = reachable_set(&problem, &thetas, r.continuation)?;
    let total: usize = set
        .points
        .iter()
        .filter_map(|p| p.solution.as_ref().map(|s| s.iterations))
        .sum();
    iters.insert("shooting_total".into(), total);
    iters.insert("converged_angles".into(), set.n_converged);
    Ok(set)
}

fn closed_polygon(set: &ReachableSet) -> Vec<(f64, f64)> {
    set.polygon()
}

fn emit_reach(em: &mut Emitter, set: &ReachableSet) -> Result<()> {
    em.emit("reach.csv", &export::reach_csv(set))?;
    #[derive(Serialize)]
    struct ReachSummary {
        center: (f64, f64),
        n_converged: usize,
        n_angles: usize,
        polygon: Vec<(f64, f64)>,
        area: f64,
        major_axis_degrees: Option<f64>,
        simple: bool,
        encloses_center: bool,
    }
    let summary = ReachSummary {
        center: set.center,
        n_converged: set.n_converged,
        n_angles: set.points.len(),
        polygon: set.polygon(),
        area: set.polygon_area(),
        major_axis_degrees: set.major_axis_degrees(),
        simple: set.is_simple(),
        encloses_center: set.encloses(set.center),
    };
    em.emit("reach.json", &export::to_json(&summary)?)?;
    let fig = Figure::new("reachable set (x, xdot)")
        .with(Series::line("boundary", closed_polygon(set), "#1f77b4").closed())
        .with(Series::scatter("center", vec![set.center], "#d62728", 4.0));
    em.emit("reach.svg", &fig.render()?)?;
    Ok(())
}

fn emit_manifold(
    em: &mut Emitter,
    params: &SystemParams,
    orbit: &PeriodicOrbit,
    branch: &ManifoldBranch,
) -> Result<()> {
    #[derive(Serialize)]
    struct TrajectorySummary {
        seed_index: usize,
        departure_time: f64,
        seed: StateVec,
        flight_time: Option<f64>,
        hit_section: bool,
    }
    #[derive(Serialize)]
    struct ManifoldSummary {
        kind: String,
        epsilon: f64,
        n_trajectories: usize,
        n_hits: usize,
        mean_flight_time: Option<f64>,
        trajectories: Vec<TrajectorySummary>,
    }
    let times: Vec<f64> = branch
        .trajectories
        .iter()
        .filter_map(|t| t.flight_time)
        .collect();
    let summary = ManifoldSummary {
        kind: format!("{:?}", branch.kind).to_lowercase(),
        epsilon: branch.epsilon,
        n_trajectories: branch.trajectories.len(),
        n_hits: times.len(),
        mean_flight_time: if times.is_empty() {
            None
        } else {
            Some(times.iter().sum::<f64>() / times.len() as f64)
        },
        trajectories: branch
            .trajectories
            .iter()
            .map(|t| TrajectorySummary {
                seed_index: t.seed_index,
                departure_time: t.departure_time,
                seed: t.seed,
                flight_time: t.flight_time,
                hit_section: t.crossing.is_some(),
            })
            .collect(),
    };
    em.emit("manifold.json", &export::to_json(&summary)?)?;
    let mut traj_csv = String::from("trajectory_id,t,x,y,vx,vy\n");
    for t in &branch.trajectories {
        for (k, s) in t.states.states.iter().enumerate() {
            let _ = writeln!(
                traj_csv,
                "{},{},{},{},{},{}",
                t.seed_index,
                t.states.time(k),
                s.x,
                s.y,
                s.vx,
                s.vy
            );
        }
    }
    em.emit("manifold_trajectories.csv", &traj_csv)?;
    let crossings: Vec<_> = branch
        .trajectories
        .iter()
        .filter_map(|t| t.crossing)
        .collect();
    em.emit("manifold_crossings.csv", &export::crossings_csv(&crossings))?;
    let mut fig = rotating_frame_figure("invariant manifold", params)?
        .with(Series::line("orbit", xy(&orbit.trajectory), "#000000").closed());
    for t in &branch.trajectories {
        fig = fig.with(Series::line(
            &format!("branch-{}", t.seed_index),
            xy(&t.states),
            "#1f77b4",
        ));
    }
    em.emit("manifold.svg", &fig.render()?)?;
    Ok(())
}
