//! CSV and JSON persistence with round-trip-exact float formatting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::Result;
use crate::integrator::DiscreteTrajectory;
use crate::reachability::ReachableSet;
use crate::structures::section::SectionCrossing;

/// Shortest round-trip decimal form of a float.
fn fmt_f64(v: f64) -> String {
    let mut buf = ryu_like(v);
    if !buf.contains('.') && !buf.contains('e') && !buf.contains("inf") && !buf.contains("NaN") {
        buf.push_str(".0");
    }
    buf
}

fn ryu_like(v: f64) -> String {
    // `{}` on f64 is the shortest representation that round-trips.
    format!("{v}")
}

/// Trajectory CSV: `t,x,y,vx,vy,ux,uy`, one row per stored state; the
/// terminal row carries zero control.
pub fn trajectory_csv(traj: &DiscreteTrajectory) -> String {
    let mut out = String::from("t,x,y,vx,vy,ux,uy\n");
    for (k, s) in traj.states.iter().enumerate() {
        let (ux, uy) = traj
            .controls
            .get(k)
            .map(|u| (u.ux, u.uy))
            .unwrap_or((0.0, 0.0));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_f64(traj.time(k)),
            fmt_f64(s.x),
            fmt_f64(s.y),
            fmt_f64(s.vx),
            fmt_f64(s.vy),
            fmt_f64(ux),
            fmt_f64(uy)
        );
    }
    out
}

/// Section-crossing CSV: `t,x,y,vx,vy,branch_id`.
pub fn crossings_csv(crossings: &[SectionCrossing]) -> String {
    let mut out = String::from("t,x,y,vx,vy,branch_id\n");
    for c in crossings {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(c.time),
            fmt_f64(c.state.x),
            fmt_f64(c.state.y),
            fmt_f64(c.state.vx),
            fmt_f64(c.state.vy),
            c.trajectory_id
        );
    }
    out
}

/// Reachable-set CSV: `theta,x,xdot,converged`.
pub fn reach_csv(set: &ReachableSet) -> String {
    let mut out = String::from("theta,x,xdot,converged\n");
    for p in &set.points {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(p.theta),
            fmt_f64(p.point.0),
            fmt_f64(p.point.1),
            p.converged
        );
    }
    out
}

/// Pretty JSON text of any serializable value.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

/// Parse JSON produced by [`to_json`]; floats round-trip bit-exactly.
pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

/// Write a file, creating parent directories as needed.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}
