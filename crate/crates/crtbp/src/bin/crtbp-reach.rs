//! Command-line front end: run a scenario from a JSON config.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on solver
//! failures, 1 otherwise.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crtbp::config::{RunConfig, Scenario};
use crtbp::run::run;
use crtbp::Error;

#[derive(Parser, Debug)]
#[command(
    name = "crtbp-reach",
    about = "Planar CRTBP scenarios: simulation, equilibria, periodic orbits, manifolds, reachable sets, transfers",
    version
)]
struct Cli {
    /// Scenario to run; must match the config's scenario field.
    #[arg(value_parser = parse_scenario)]
    scenario: Scenario,

    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Output directory; overrides the config's output_dir (default "out").
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads for the shooting solver; the CRTBP_THREADS
    /// environment variable takes precedence.
    #[arg(long)]
    threads: Option<usize>,

    /// Print progress to stderr.
    #[arg(long)]
    verbose: bool,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    match s {
        "simulate" => Ok(Scenario::Simulate),
        "lagrange" => Ok(Scenario::Lagrange),
        "orbit" => Ok(Scenario::Orbit),
        "manifold" => Ok(Scenario::Manifold),
        "reach" => Ok(Scenario::Reach),
        "transfer" => Ok(Scenario::Transfer),
        other => Err(format!(
            "unknown scenario \"{other}\"; expected simulate|lagrange|orbit|manifold|reach|transfer"
        )),
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Domain(_) => 2,
        Error::NoConvergence { .. }
        | Error::Numerical(_)
        | Error::Elimination { .. }
        | Error::Collision { .. }
        | Error::CollisionAtStep { .. }
        | Error::Geometry(_) => 3,
        Error::Io(_) | Error::Json(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let threads = std::env::var("CRTBP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .or(cli.threads);
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("threads: must be at least 1".into()));
        }
        // Ignore the error if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let text = std::fs::read_to_string(&cli.config).map_err(|e| {
        Error::Config(format!("cannot read {}: {e}", cli.config.display()))
    })?;
    let cfg = RunConfig::from_json(&text)?;
    if cfg.scenario != cli.scenario {
        return Err(Error::Config(format!(
            "scenario mismatch: command line says \"{}\" but config says \"{}\"",
            scenario_str(cli.scenario),
            cfg.scenario.as_str()
        )));
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let manifest = run(&cfg, &out_dir, cli.verbose)?;
    println!(
        "{}: {} artifact(s) in {} ({:.2}s, hash {})",
        manifest.scenario,
        manifest.files.len(),
        out_dir.display(),
        manifest.wall_time_s,
        &manifest.content_hash[..12]
    );
    Ok(())
}

fn scenario_str(s: Scenario) -> &'static str {
    s.as_str()
}
