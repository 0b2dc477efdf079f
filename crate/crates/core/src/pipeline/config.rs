//! JSON scenario configuration. Every field has a default, and the
//! resolved configuration serializes back with all defaults filled in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Filter prediction seeds each registration.
    Cl,
    /// Each registration starts from the previous registration result.
    Ol,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cl" => Ok(Mode::Cl),
            "ol" => Ok(Mode::Ol),
            other => Err(Error::InvalidConfig(format!("mode must be 'cl' or 'ol', got '{other}'"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Cl => "cl",
            Mode::Ol => "ol",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Procedural shape name.
    pub shape: String,
    /// Scale factor; 1 gives a body about 1 m across.
    pub size: f64,
    /// Number of surface points.
    pub points: usize,
    /// Optional ASCII PLY file used instead of the procedural shape.
    pub path: Option<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            shape: "satellite".into(),
            size: 1.0,
            points: 20_000,
            path: None,
        }
    }
}

/// Initial conditions and constants of the simulated target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthConfig {
    /// `{B}` relative to `{A}` as `[x, y, z, w]`.
    pub mu0: [f64; 4],
    /// Body rate (rad/s).
    pub omega0: [f64; 3],
    pub r_c0: [f64; 3],
    pub v_c0: [f64; 3],
    pub rho: [f64; 3],
    /// `{B}` relative to `{C}` as `[x, y, z, w]`.
    pub eta: [f64; 4],
    /// Principal moments (kg·m²).
    pub inertia: [f64; 3],
    /// Integration step (s).
    pub dt: f64,
    /// Torque perturbation intensity injected into the truth (rad/s²).
    pub sigma_torque: f64,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            mu0: [0.0, 0.0, 0.0, 1.0],
            omega0: [0.02, 0.04, 0.02],
            r_c0: [0.0, 5.0, 0.0],
            v_c0: [0.0, 0.0, 0.0],
            rho: [-0.15, 0.0, 0.0],
            eta: [0.0, 0.0, 0.0, 1.0],
            inertia: [4.0, 8.0, 5.0],
            dt: 0.01,
            sigma_torque: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitConfig {
    /// Orbital rate (rad/s); zero disables gravity terms.
    pub n: f64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self { n: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub rate_hz: f64,
    /// Points per scan.
    pub points: usize,
    /// Per-axis noise (m).
    pub sigma: f64,
    /// Blackout windows `[start, end)` in seconds.
    pub blackouts: Vec<[f64; 2]>,
    /// Boresight direction in `{A}`; defaults to the line of sight to the
    /// target's initial position.
    pub view_dir: Option<[f64; 3]>,
    /// Write every scan as PLY next to the track.
    pub export_scans: bool,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            rate_hz: 2.0,
            points: 500,
            sigma: 0.005,
            blackouts: Vec::new(),
            view_dir: None,
            export_scans: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub sigma_mu: f64,
    pub sigma_omega: f64,
    pub sigma_p: f64,
    pub sigma_r_c: f64,
    pub sigma_v_c: f64,
    pub sigma_rho: f64,
    pub sigma_eta: f64,
    pub omega: [f64; 3],
    pub p: [f64; 3],
    pub rho: [f64; 3],
    pub eta: [f64; 4],
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            sigma_mu: 0.1,
            sigma_omega: 0.1,
            sigma_p: 0.5,
            sigma_r_c: 0.5,
            sigma_v_c: 0.1,
            sigma_rho: 0.2,
            sigma_eta: 0.1,
            omega: [0.0; 3],
            p: [0.0; 3],
            rho: [0.0; 3],
            eta: [0.0, 0.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub sigma_tau: f64,
    pub sigma_f: f64,
    /// Position measurement noise (m).
    pub sigma_pos: f64,
    /// Quaternion-vector measurement noise.
    pub sigma_att: f64,
    pub prior: PriorConfig,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            sigma_tau: 1e-4,
            sigma_f: 1e-4,
            sigma_pos: 0.01,
            sigma_att: 0.005,
            prior: PriorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpConfig {
    pub max_iter: usize,
    /// Residual threshold (m²); defaults to `σ²` of the scan noise.
    pub d_min: Option<f64>,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iter: 50,
            d_min: None,
        }
    }
}

/// Error of the coarse pose that seeds the very first registration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub angle_deg: f64,
    pub offset: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            angle_deg: 3.0,
            offset: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub mode: Mode,
    /// Simulated time (s).
    pub duration: f64,
    pub model: ModelConfig,
    pub truth: TruthConfig,
    pub orbit: OrbitConfig,
    pub sensor: SensorConfig,
    pub filter: FilterConfig,
    pub icp: IcpConfig,
    pub acquisition: AcquisitionConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            seed: 1,
            mode: Mode::Cl,
            duration: 60.0,
            model: ModelConfig::default(),
            truth: TruthConfig::default(),
            orbit: OrbitConfig::default(),
            sensor: SensorConfig::default(),
            filter: FilterConfig::default(),
            icp: IcpConfig::default(),
            acquisition: AcquisitionConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.sensor.rate_hz > 0.0 && self.sensor.rate_hz.is_finite()) {
            return bad(format!("sensor.rate_hz must be positive, got {}", self.sensor.rate_hz));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.truth.dt > 0.0) {
            return bad(format!("truth.dt must be positive, got {}", self.truth.dt));
        }
        if self.truth.dt > 1.0 / self.sensor.rate_hz {
            return bad("truth.dt exceeds the frame interval".into());
        }
        if self.sensor.points < 3 {
            return bad("sensor.points must be at least 3".into());
        }
        if !(self.sensor.sigma >= 0.0) {
            return bad("sensor.sigma must be non-negative".into());
        }
        if !(self.orbit.n >= 0.0) {
            return bad("orbit.n must be non-negative".into());
        }
        if self.icp.max_iter == 0 {
            return bad("icp.max_iter must be at least 1".into());
        }
        if let Some(v) = self.sensor.view_dir {
            if v.iter().all(|x| *x == 0.0) {
                return bad("sensor.view_dir must be non-zero".into());
            }
        }
        let f = &self.filter;
        for (name, v) in [
            ("filter.sigma_tau", f.sigma_tau),
            ("filter.sigma_f", f.sigma_f),
            ("filter.sigma_pos", f.sigma_pos),
            ("filter.sigma_att", f.sigma_att),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if !(f.sigma_pos > 0.0 && f.sigma_att > 0.0) {
            return bad("measurement noise must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_takes_defaults() {
        let cfg = ScenarioConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut cfg = ScenarioConfig::default();
        cfg.sensor.blackouts = vec![[10.0, 20.0]];
        cfg.mode = Mode::Ol;
        assert_eq!(ScenarioConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert!(cfg.to_json().contains("\"mode\": \"ol\""));
    }

    #[test]
    fn unknown_fields_and_bad_values() {
        assert!(ScenarioConfig::from_json(r#"{"sensr": {}}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"sensor": {"rate_hz": 0}}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"duration": -1}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"mode": "xx"}"#).is_err());
        assert!(ScenarioConfig::from_json("not json").is_err());
    }
}
