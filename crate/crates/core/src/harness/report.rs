//! Report types and on-disk artifacts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::compare::RegionVerdict;
use super::config::{ConfigFile, ExperimentKind};
use crate::exitlaw::ExitLaw;
use crate::morse::LandscapeReport;
use crate::sde::{BoundaryRegion, DecayFit, ExitHistogram, ObservableEstimate};

/// Crate version with the commit it was built from.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("LANGEVIN_EXIT_GIT_DESCRIBE"));

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub version: String,
    pub config: ConfigFile,
    pub experiments: Vec<ExperimentReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub kind: ExperimentKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub landscape: Option<LandscapeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exit_law: Option<ExitLaw>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theory_error: Option<String>,
    pub regions: Vec<BoundaryRegion>,
    /// Predicted weight carried by each region.
    pub region_weights: Vec<f64>,
    pub temperatures: Vec<TemperatureReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_fit: Option<DecayFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionReport>,
    pub warnings: Vec<String>,
    pub errors: Vec<String>,
}

impl ExperimentReport {
    pub fn empty(name: &str, kind: ExperimentKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            landscape: None,
            exit_law: None,
            theory_error: None,
            regions: Vec::new(),
            region_weights: Vec::new(),
            temperatures: Vec::new(),
            decay_fit: None,
            action: None,
            warnings: Vec::new(),
            errors: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureReport {
    pub h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc: Option<McReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pde: Option<PdeReport>,
    pub verdicts: Vec<RegionVerdict>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub dt: f64,
    pub max_time: f64,
    pub histogram: ExitHistogram,
    /// Mean exit time over uncensored paths.
    pub mean_exit_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observable: Option<ObservableEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub halved: Option<HalvingReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalvingReport {
    pub dt: f64,
    pub histogram: ExitHistogram,
    /// Largest proportion shift over regions and leftover, in units of the
    /// combined standard error of the two runs.
    pub max_shift_sigma: f64,
    pub within_3sigma: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub left: f64,
    pub right: f64,
    pub region_probabilities: Vec<f64>,
    pub mean_exit_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeReport {
    /// `v_h` of each region indicator at the start node.
    pub region_probabilities: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observable_value: Option<f64>,
    /// Oscillation of each region solution, then the observable solution,
    /// over the leveling set.
    pub leveling_oscillations: Vec<f64>,
    pub leveling_nodes: usize,
    pub max_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigen: Option<EigenSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    pub lambda: f64,
    pub lambda2: f64,
    pub log_z: f64,
    pub residual: f64,
    pub qsd_region_probabilities: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qsd_observable: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionReport {
    pub value: f64,
    pub iterations: usize,
    pub line_search_stalled: bool,
    /// `2 (f(to) - f(from))`, the uphill cost between critical points.
    pub barrier_reference: f64,
}

/// A file produced by a run, relative to the output directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub path: String,
    pub contents: Vec<u8>,
}

impl VerificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `report.json` and every artifact below `dir`.
    pub fn write(&self, dir: &Path, artifacts: &[Artifact]) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        for a in artifacts {
            let p = dir.join(&a.path);
            if let Some(parent) = p.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(p, &a.contents)?;
        }
        Ok(())
    }
}
