//! Experiment configuration, read from TOML.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::DiscretePath;
use crate::landscape::{DomainSpec, PotentialField, PotentialSource};
use crate::pde::LinearSolver;
use crate::sde::BoundaryRegion;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("experiment `{experiment}`, field `{field}`: {message}")]
    Invalid {
        experiment: String,
        field: String,
        message: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Analyze,
    Theory,
    Simulate,
    Solve,
    Verify,
    Action,
}

impl ExperimentKind {
    pub fn simulates(self) -> bool {
        matches!(self, Self::Simulate | Self::Verify)
    }

    pub fn solves(self) -> bool {
        matches!(self, Self::Solve | Self::Verify)
    }
}

/// A start point, a list of start points cycled over paths, or a keyword:
/// `"qsd"` samples starts from the quasi-stationary distribution at each
/// temperature and `"c_max"` uses the lowest minimum of the deepest well.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartSpec {
    Point(Vec<f64>),
    Points(Vec<Vec<f64>>),
    Named(String),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub spacing: Vec<f64>,
}

/// Boundary regions: explicit, or balls of radius `beta` around the
/// predicted support points (endpoints in 1D).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub explicit: Vec<BoundaryRegion>,
}

/// A smooth boundary observable `F(z) = amplitude * exp(-|z - center|^2 / width^2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpObservable {
    pub center: Vec<f64>,
    pub width: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl BumpObservable {
    pub fn eval(&self, z: &[f64]) -> f64 {
        let r2: f64 = z.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        self.amplitude * (-r2 / (self.width * self.width)).exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_time: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Repeat every run at `dt / 2` and report the shift.
    #[serde(default)]
    pub dt_halving: bool,
    #[serde(default)]
    pub write_samples: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            dt: None,
            max_time: None,
            seed: 0,
            dt_halving: false,
            write_samples: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default)]
    pub linear: LinearSolver,
    #[serde(default)]
    pub eigen: bool,
    /// Report the oscillation of each harmonic solution over the component
    /// of `{f < level}` containing the start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leveling_level: Option<f64>,
    #[serde(default)]
    pub write_solutions: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionConfig {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    pub total_time: f64,
    pub segments: usize,
    pub iterations: usize,
}

/// Probability whose decay in `1/h` is fitted across the temperatures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayTarget {
    Leftover,
    Region(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    pub potential: PotentialSource,
    pub domain: DomainSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub temperatures: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<StartSpec>,
    #[serde(default)]
    pub regions: RegionsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<BumpObservable>,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecayTarget>,
    /// Relative tolerance against the 1D exact probabilities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_tolerance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(rename = "experiment")]
    pub experiments: Vec<ExperimentConfig>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.experiments.is_empty() {
            return Err(ConfigError::Parse("no [[experiment]] tables".into()));
        }
        self.experiments.iter().try_for_each(ExperimentConfig::validate)
    }
}

impl ExperimentConfig {
    fn invalid(&self, field: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            experiment: self.name.clone(),
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let f = PotentialField::from_source(&self.potential).map_err(|e| self.invalid("potential", e.to_string()))?;
        let dom = crate::landscape::DomainGeometry::from_spec(&self.domain)
            .map_err(|e| self.invalid("domain", e.to_string()))?;
        let d = dom.dim();
        if f.dim() != d {
            return Err(self.invalid(
                "potential",
                format!("dimension {} differs from domain dimension {d}", f.dim()),
            ));
        }
        let needs_grid = !matches!(self.kind, ExperimentKind::Action);
        if needs_grid {
            if self.grid.spacing.is_empty() || self.grid.spacing.iter().any(|s| !(*s > 0.0)) {
                return Err(self.invalid("grid.spacing", "positive spacing required"));
            }
            if self.grid.spacing.len() != 1 && self.grid.spacing.len() != d {
                return Err(self.invalid("grid.spacing", format!("expected 1 or {d} entries")));
            }
        }
        if self.temperatures.iter().any(|h| !(*h > 0.0)) {
            return Err(self.invalid("temperatures", "every h must be positive"));
        }
        if (self.kind.simulates() || self.kind.solves()) && self.temperatures.is_empty() {
            return Err(self.invalid("temperatures", "at least one temperature required"));
        }
        match &self.start {
            Some(StartSpec::Point(p)) if p.len() != d => {
                return Err(self.invalid("start", format!("expected {d} coordinates")));
            }
            Some(StartSpec::Points(ps)) if ps.is_empty() || ps.iter().any(|p| p.len() != d) => {
                return Err(self.invalid("start", format!("expected a non-empty list of {d}-vectors")));
            }
            Some(StartSpec::Named(n)) if n != "qsd" && n != "c_max" => {
                return Err(self.invalid("start", format!("unknown start `{n}`, expected \"qsd\" or \"c_max\"")));
            }
            Some(StartSpec::Named(n)) if n == "qsd" && !self.kind.simulates() && !self.kind.solves() => {
                return Err(self.invalid("start", "\"qsd\" needs a simulate, solve or verify experiment"));
            }
            None if self.kind != ExperimentKind::Analyze && self.kind != ExperimentKind::Action => {
                return Err(self.invalid("start", "start required"));
            }
            _ => {}
        }
        if let Some(b) = self.regions.beta {
            if !(b > 0.0) {
                return Err(self.invalid("regions.beta", "must be positive"));
            }
        }
        if self.kind.simulates() {
            if self.mc.n_paths == 0 {
                return Err(self.invalid("mc.n_paths", "must be at least 1"));
            }
            if let Some(dt) = self.mc.dt {
                if !(dt > 0.0) {
                    return Err(self.invalid("mc.dt", "must be positive"));
                }
            }
        }
        if let Some(DecayTarget::Region(label)) = &self.decay {
            if !self.regions.explicit.is_empty() && !self.regions.explicit.iter().any(|r| &r.label == label) {
                return Err(self.invalid("decay", format!("no region labelled `{label}`")));
            }
        }
        if self.kind == ExperimentKind::Action {
            let a = self
                .action
                .as_ref()
                .ok_or_else(|| self.invalid("action", "[action] table required"))?;
            if a.from.len() != d || a.to.len() != d {
                return Err(self.invalid("action", format!("endpoints need {d} coordinates")));
            }
            DiscretePath::straight(&a.from, &a.to, a.total_time, a.segments)
                .map_err(|e| self.invalid("action", e.to_string()))?;
        }
        Ok(())
    }
}
