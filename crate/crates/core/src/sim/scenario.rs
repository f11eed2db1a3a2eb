use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bo::CostConfig;
use crate::error::{Error, Result};
use crate::mpc::MpcConfig;
use crate::path::{build_clothoid, build_eight_path, ClothoidSpec, PathTable, DEFAULT_SPACING};
use crate::tracking::AptParams;
use crate::vehicle::{ControlLimits, VehicleParams};

/// Steering feedback gain shipped with the scenarios (rad/m). Larger gains
/// destabilise the closed loop of this plant.
pub const DEFAULT_STEER_GAIN: f64 = -0.05;

/// Which parts of the upper layer are learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Circle-fit radius, fixed steering equilibrium.
    Ppt,
    /// Adaptive radius and steering feedback, fixed base steering.
    Apt,
    /// Circle-fit radius, learned steering equilibrium.
    Dep,
    /// Adaptive laws with every parameter learned.
    Almpc,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Ppt, Mode::Apt, Mode::Dep, Mode::Almpc];

    pub fn uses_apt(self) -> bool {
        matches!(self, Mode::Apt | Mode::Almpc)
    }

    pub fn learns_delta(self) -> bool {
        matches!(self, Mode::Dep | Mode::Almpc)
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Ppt => "MPC-PPT",
            Mode::Apt => "MPC-APT",
            Mode::Dep => "MPC-DEP",
            Mode::Almpc => "ALMPC",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ppt => "ppt",
            Mode::Apt => "apt",
            Mode::Dep => "dep",
            Mode::Almpc => "almpc",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ppt" => Ok(Mode::Ppt),
            "apt" => Ok(Mode::Apt),
            "dep" => Ok(Mode::Dep),
            "almpc" => Ok(Mode::Almpc),
            other => Err(Error::Config(format!("unknown mode '{other}' (expected ppt, apt, dep or almpc)"))),
        }
    }
}

/// Upper-layer parameters: steering equilibrium and radius-law weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub delta_eq: f64,
    pub w_r: f64,
    pub w_e: f64,
}

impl Theta {
    pub fn to_array(self) -> [f64; 3] {
        [self.delta_eq, self.w_r, self.w_e]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match v {
            [d, r, e] => Ok(Self { delta_eq: *d, w_r: *r, w_e: *e }),
            _ => Err(Error::Config(format!("theta needs 3 components, got {}", v.len()))),
        }
    }
}

impl FromStr for Theta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad theta component '{p}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_slice(&parts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PathSpec {
    Clothoid {
        #[serde(default)]
        x0: f64,
        #[serde(default)]
        y0: f64,
        #[serde(default)]
        theta0: f64,
        kappa: f64,
        kappa_prime: f64,
        length: f64,
        #[serde(default = "default_spacing")]
        spacing: f64,
    },
    Eight {
        radius: f64,
        #[serde(default = "default_spacing")]
        spacing: f64,
    },
}

fn default_spacing() -> f64 {
    DEFAULT_SPACING
}

impl Default for PathSpec {
    fn default() -> Self {
        let c = ClothoidSpec::default();
        PathSpec::Clothoid {
            x0: c.x0,
            y0: c.y0,
            theta0: c.theta0,
            kappa: c.kappa,
            kappa_prime: c.kappa_prime,
            length: c.length,
            spacing: DEFAULT_SPACING,
        }
    }
}

impl PathSpec {
    pub fn build(&self) -> Result<PathTable> {
        match *self {
            PathSpec::Clothoid { x0, y0, theta0, kappa, kappa_prime, length, spacing } => {
                build_clothoid(&ClothoidSpec { x0, y0, theta0, kappa, kappa_prime, length }, spacing)
            }
            PathSpec::Eight { radius, spacing } => build_eight_path(radius, spacing),
        }
    }
}

/// Settings of the circle-fit baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PptConfig {
    /// Path points ahead used in the fit; `None` means the prediction horizon.
    pub horizon_pts: Option<usize>,
    /// Smallest arc-length gap between fitted points (m).
    pub min_step: f64,
}

impl Default for PptConfig {
    fn default() -> Self {
        Self { horizon_pts: None, min_step: 0.5 }
    }
}

/// Everything needed to run one closed-loop episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    /// Episode length (s).
    pub duration: f64,
    pub seed: u64,
    /// RK4 steps of the plant per control period.
    pub substeps: usize,
    /// Parameters used when none are passed explicitly.
    pub theta: Option<[f64; 3]>,
    pub path: PathSpec,
    pub plant: VehicleParams,
    pub model: VehicleParams,
    pub limits: ControlLimits,
    pub mpc: MpcConfig,
    pub apt: AptParams,
    pub cost: CostConfig,
    pub ppt: PptConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "case1".into(),
            mode: Mode::Almpc,
            duration: 18.4,
            seed: 0,
            substeps: 10,
            theta: None,
            path: PathSpec::default(),
            plant: VehicleParams::default(),
            model: VehicleParams::default(),
            limits: ControlLimits::default(),
            mpc: MpcConfig::default(),
            apt: AptParams { k: DEFAULT_STEER_GAIN, ..AptParams::default() },
            cost: CostConfig::default(),
            ppt: PptConfig::default(),
        }
    }
}

impl Scenario {
    /// Precise-parameter case: plant and model share every parameter.
    pub fn case1() -> Self {
        Self::default()
    }

    /// Reduced-friction case: the plant runs on mu = 0.9.
    pub fn case2() -> Self {
        Self { name: "case2".into(), plant: VehicleParams::default().with_mu(0.9), ..Self::default() }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.mpc.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.model.validate()?;
        self.limits.validate()?;
        self.mpc.validate()?;
        self.apt.validate()?;
        self.cost.validate()?;
        let steps = self.duration / self.mpc.dt;
        if !(self.duration > 0.0) || (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "duration {} s is not a whole number of {} s control periods",
                self.duration, self.mpc.dt
            )));
        }
        if self.steps() != self.cost.n_k {
            return Err(Error::Config(format!(
                "cost.n_k = {} does not match duration / dt = {}",
                self.cost.n_k,
                self.steps()
            )));
        }
        if self.substeps == 0 {
            return Err(Error::Config("substeps must be at least 1".into()));
        }
        if self.ppt.horizon_pts.is_some_and(|n| n < 3) || !(self.ppt.min_step > 0.0) {
            return Err(Error::Config("ppt needs horizon_pts >= 3 and min_step > 0".into()));
        }
        Ok(())
    }

    /// Full parameter vector for this scenario's mode. Components the mode
    /// does not learn are pinned to the defaults in `apt`.
    pub fn resolve_theta(&self, theta: Option<Theta>) -> Result<Theta> {
        let given = theta.or(self.theta.map(|t| Theta { delta_eq: t[0], w_r: t[1], w_e: t[2] }));
        let base = Theta { delta_eq: self.apt.delta_eq_base, w_r: self.apt.w_r, w_e: self.apt.w_e };
        match (self.mode, given) {
            (Mode::Ppt, _) => Ok(base),
            (_, None) => Err(Error::Config(format!("mode {} needs theta", self.mode))),
            (Mode::Apt, Some(t)) => Ok(Theta { delta_eq: base.delta_eq, ..t }),
            (Mode::Dep, Some(t)) => Ok(Theta { delta_eq: t.delta_eq, ..base }),
            (Mode::Almpc, Some(t)) => Ok(t),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Scenario::case1().validate().unwrap();
        Scenario::case2().validate().unwrap();
        assert_eq!(Scenario::case1().steps(), 184);
        assert_eq!(Scenario::case2().plant.mu, 0.9);
    }

    #[test]
    fn toml_round_trip() {
        let s = Scenario { theta: Some([-0.482, 1.026, 0.945]), ..Scenario::case2() };
        let text = s.to_toml_string().unwrap();
        assert_eq!(Scenario::from_toml_str(&text).unwrap(), s);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let s = Scenario::from_toml_str("name = \"x\"\nmode = \"ppt\"\n[plant]\nm = 1830.0\ni_z = 3234.0\na = 1.4\nb = 1.65\ntire_b = 8.321\ntire_c = 1.626\nmu = 0.9\ng = 9.81\n").unwrap();
        assert_eq!(s.mode, Mode::Ppt);
        assert_eq!(s.plant.mu, 0.9);
        assert_eq!(s.mpc, MpcConfig::default());
        let eight = Scenario::from_toml_str("[path]\nkind = \"eight\"\nradius = 40.0\n").unwrap();
        assert_eq!(eight.path, PathSpec::Eight { radius: 40.0, spacing: DEFAULT_SPACING });
    }

    #[test]
    fn bad_files_rejected() {
        assert!(Scenario::from_toml_str("duration = 18.45\n").is_err());
        assert!(Scenario::from_toml_str("bogus = 1\n").is_err());
        assert!(Scenario::from_toml_str("mode = \"fast\"\n").is_err());
    }

    #[test]
    fn theta_resolution_per_mode() {
        let t = Theta { delta_eq: -0.4, w_r: 1.2, w_e: 0.5 };
        let mut s = Scenario::case1();
        s.mode = Mode::Ppt;
        assert_eq!(s.resolve_theta(Some(t)).unwrap(), Theta { delta_eq: -0.52, w_r: 1.0, w_e: 0.0 });
        s.mode = Mode::Apt;
        assert_eq!(s.resolve_theta(Some(t)).unwrap(), Theta { delta_eq: -0.52, ..t });
        s.mode = Mode::Dep;
        assert_eq!(s.resolve_theta(Some(t)).unwrap(), Theta { delta_eq: -0.4, w_r: 1.0, w_e: 0.0 });
        s.mode = Mode::Almpc;
        assert_eq!(s.resolve_theta(Some(t)).unwrap(), t);
        assert!(s.resolve_theta(None).is_err());
    }

    #[test]
    fn parse_mode_and_theta() {
        assert_eq!("ALMPC".parse::<Mode>().unwrap(), Mode::Almpc);
        assert_eq!("-0.482, 1.026,0.945".parse::<Theta>().unwrap().to_array(), [-0.482, 1.026, 0.945]);
        assert!("1,2".parse::<Theta>().is_err());
    }
}
