//! Run configuration: JSON schema, defaults, and validation with
//! field-path error messages.

use serde::{Deserialize, Serialize};

use crate::dynamics::StateVec;
use crate::error::{Error, Result};

/// Which pipeline a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Simulate,
    Lagrange,
    Orbit,
    Manifold,
    Reach,
    Transfer,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Simulate => "simulate",
            Scenario::Lagrange => "lagrange",
            Scenario::Orbit => "orbit",
            Scenario::Manifold => "manifold",
            Scenario::Reach => "reach",
            Scenario::Transfer => "transfer",
        }
    }
}

fn default_h() -> f64 {
    1e-3
}

fn default_u_max() -> f64 {
    0.0
}

/// System block: mass ratio, step size, thrust bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub mu: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_u_max")]
    pub u_max: f64,
}

/// Section block; the anchor defaults to L1 when omitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionConfig {
    #[serde(default)]
    pub anchor: Option<(f64, f64)>,
    /// Inclination in degrees from the vertical sweep axis.
    #[serde(default)]
    pub alpha_d: f64,
    #[serde(default)]
    pub window: Option<(f64, f64)>,
}

impl Default for SectionConfig {
    fn default() -> Self {
        Self {
            anchor: None,
            alpha_d: 0.0,
            window: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub initial_state: [f64; 4],
    pub tf: f64,
    /// Also integrate with a classical fourth-order scheme and report both
    /// drift statistics.
    #[serde(default)]
    pub compare_rk4: bool,
}

/// How to select the periodic orbit in the family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OrbitSelect {
    InitialX { value: f64 },
    Amplitude { value: f64 },
    Energy { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub target: OrbitSelect,
}

fn default_epsilon() -> f64 {
    1e-6
}

fn default_n_trajectories() -> usize {
    10
}

fn default_sign() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    pub orbit: OrbitSelect,
    /// "stable" or "unstable".
    pub kind: String,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_n_trajectories")]
    pub n_trajectories: usize,
    pub t_max: f64,
    #[serde(default = "default_sign")]
    pub sign: f64,
    #[serde(default)]
    pub min_time: f64,
    #[serde(default)]
    pub section: SectionConfig,
}

fn default_n_angles() -> usize {
    24
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachConfig {
    pub initial_state: [f64; 4],
    pub tf: f64,
    #[serde(default)]
    pub section: SectionConfig,
    #[serde(default = "default_n_angles")]
    pub n_angles: usize,
    /// Warm-start each sweep angle from the previous solution.
    #[serde(default = "default_true")]
    pub continuation: bool,
}

fn default_n_arcs() -> usize {
    4
}

fn default_target_t_span() -> f64 {
    20.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    pub target_state: [f64; 4],
    #[serde(default = "default_target_t_span")]
    pub target_t_span: f64,
    #[serde(default = "default_n_arcs")]
    pub n_arcs: usize,
    /// Use the descending-direction cluster of target crossings.
    #[serde(default = "default_true")]
    pub use_descending: bool,
}

/// Top-level run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub system: SystemConfig,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orbit: Option<OrbitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifold: Option<ManifoldConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reach: Option<ReachConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferConfig>,
}

fn range(ok: bool, path: &str, msg: String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{path}: {msg}")))
    }
}

fn check_state(path: &str, s: &[f64; 4]) -> Result<()> {
    range(
        s.iter().all(|v| v.is_finite()),
        path,
        format!("state components must be finite, got {s:?}"),
    )
}

fn check_section(path: &str, s: &SectionConfig) -> Result<()> {
    if let Some((ax, ay)) = s.anchor {
        range(
            ax.is_finite() && ay.is_finite(),
            &format!("{path}.anchor"),
            format!("anchor must be finite, got ({ax}, {ay})"),
        )?;
    }
    range(
        s.alpha_d.is_finite() && s.alpha_d.abs() <= 180.0,
        &format!("{path}.alpha_d"),
        format!("inclination must lie in [-180, 180] degrees, got {}", s.alpha_d),
    )?;
    if let Some((lo, hi)) = s.window {
        range(
            lo.is_finite() && hi.is_finite() && lo < hi,
            &format!("{path}.window"),
            format!("window must satisfy lo < hi, got ({lo}, {hi})"),
        )?;
    }
    Ok(())
}

impl RunConfig {
    /// Parse and validate a config document. Parse errors carry the JSON
    /// position; validation errors carry the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::Config(
                "empty config; required fields: scenario (simulate|lagrange|orbit|manifold|reach|transfer), \
                 system.mu, plus the block named after the scenario"
                    .into(),
            ));
        }
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks on every present block.
    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        range(
            s.mu.is_finite() && s.mu > 0.0 && s.mu < 0.5,
            "system.mu",
            format!("mass ratio must lie in (0, 0.5), got {}", s.mu),
        )?;
        range(
            s.h.is_finite() && s.h > 0.0 && s.h <= 0.1,
            "system.h",
            format!("step size must lie in (0, 0.1], got {}", s.h),
        )?;
        range(
            s.u_max.is_finite() && s.u_max >= 0.0,
            "system.u_max",
            format!("thrust bound must be nonnegative, got {}", s.u_max),
        )?;
        match self.scenario {
            Scenario::Simulate => {
                let sim = self.require(self.simulate.as_ref(), "simulate")?;
                check_state("simulate.initial_state", &sim.initial_state)?;
                range(
                    sim.tf.is_finite() && sim.tf > 0.0,
                    "simulate.tf",
                    format!("horizon must be positive, got {}", sim.tf),
                )?;
            }
            Scenario::Lagrange => {}
            Scenario::Orbit => {
                let orb = self.require(self.orbit.as_ref(), "orbit")?;
                check_orbit_select("orbit.target", &orb.target)?;
            }
            Scenario::Manifold => {
                let man = self.require(self.manifold.as_ref(), "manifold")?;
                check_orbit_select("manifold.orbit", &man.orbit)?;
                range(
                    man.kind == "stable" || man.kind == "unstable",
                    "manifold.kind",
                    format!("must be \"stable\" or \"unstable\", got \"{}\"", man.kind),
                )?;
                range(
                    man.epsilon > 0.0,
                    "manifold.epsilon",
                    format!("offset must be positive, got {}", man.epsilon),
                )?;
                range(
                    man.n_trajectories >= 1,
                    "manifold.n_trajectories",
                    "need at least one trajectory".into(),
                )?;
                range(
                    man.t_max.is_finite() && man.t_max > 0.0,
                    "manifold.t_max",
                    format!("horizon must be positive, got {}", man.t_max),
                )?;
                range(
                    man.sign == 1.0 || man.sign == -1.0,
                    "manifold.sign",
                    format!("must be +1 or -1, got {}", man.sign),
                )?;
                range(
                    man.min_time >= 0.0,
                    "manifold.min_time",
                    format!("must be nonnegative, got {}", man.min_time),
                )?;
                check_section("manifold.section", &man.section)?;
            }
            Scenario::Reach => {
                let r = self.require(self.reach.as_ref(), "reach")?;
                self.check_reach(r)?;
            }
            Scenario::Transfer => {
                let r = self.require(self.reach.as_ref(), "reach")?;
                self.check_reach(r)?;
                let t = self.require(self.transfer.as_ref(), "transfer")?;
                check_state("transfer.target_state", &t.target_state)?;
                range(
                    t.target_t_span.is_finite() && t.target_t_span > 0.0,
                    "transfer.target_t_span",
                    format!("span must be positive, got {}", t.target_t_span),
                )?;
                range(
                    t.n_arcs >= 1,
                    "transfer.n_arcs",
                    "need at least one shooting arc".into(),
                )?;
            }
        }
        Ok(())
    }

    fn check_reach(&self, r: &ReachConfig) -> Result<()> {
        check_state("reach.initial_state", &r.initial_state)?;
        range(
            r.tf.is_finite() && r.tf > 0.0,
            "reach.tf",
            format!("horizon must be positive, got {}", r.tf),
        )?;
        range(
            r.n_angles >= 4,
            "reach.n_angles",
            format!("sweep needs at least 4 angles, got {}", r.n_angles),
        )?;
        check_section("reach.section", &r.section)
    }

    fn require<'a, T>(&self, block: Option<&'a T>, name: &str) -> Result<&'a T> {
        block.ok_or_else(|| {
            Error::Config(format!(
                "{name}: block is required for scenario \"{}\"",
                self.scenario.as_str()
            ))
        })
    }
}

fn check_orbit_select(path: &str, sel: &OrbitSelect) -> Result<()> {
    let v = match sel {
        OrbitSelect::InitialX { value } => *value,
        OrbitSelect::Amplitude { value } => *value,
        OrbitSelect::Energy { value } => *value,
    };
    range(v.is_finite(), path, format!("value must be finite, got {v}"))?;
    if let OrbitSelect::Amplitude { value } = sel {
        range(
            *value > 0.0,
            path,
            format!("amplitude must be positive, got {value}"),
        )?;
    }
    Ok(())
}

/// Convenience: array form to a state vector.
pub fn state_from(a: &[f64; 4]) -> StateVec {
    StateVec::new(a[0], a[1], a[2], a[3])
}
