use std::fs;
use std::path::{Path, PathBuf};

use mincurvfg::factors::{FactorWeights, StateBounds};
use mincurvfg::fg::SolverConfig;
use mincurvfg::planner::{PlannerConfig, PlannerOptions};
use mincurvfg::track::{load_track, load_track_boundaries, write_track, Track, TrackKind};
use mincurvfg::vehicle::VehicleParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Where the track comes from. A centerline file (schema A) or a pair of
/// boundary files (schema B) take precedence over the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackSource {
    pub generator: TrackKind,
    pub centerline: Option<PathBuf>,
    pub left: Option<PathBuf>,
    pub right: Option<PathBuf>,
    /// Overrides loop detection for files.
    pub closed: Option<bool>,
    /// Resampling step of the centerline, meters.
    pub spacing: f64,
    /// Distance-field cache, built and written when missing.
    pub sdf: Option<PathBuf>,
}

impl Default for TrackSource {
    fn default() -> Self {
        Self {
            generator: TrackKind::Chicane,
            centerline: None,
            left: None,
            right: None,
            closed: None,
            spacing: 0.01,
            sdf: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub track: TrackSource,
    pub vehicle: VehicleParams,
    pub weights: FactorWeights,
    pub bounds: StateBounds,
    pub planner: PlannerOptions,
    pub solver: SolverConfig,
}

impl RunConfig {
    /// Reads a JSON config; relative track paths are resolved against the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig = if text.trim().is_empty() {
            RunConfig::default()
        } else {
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        let t = &mut config.track;
        for p in [&mut t.centerline, &mut t.left, &mut t.right, &mut t.sdf].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            planner: self.planner,
            vehicle: self.vehicle,
            weights: self.weights,
            bounds: self.bounds,
            solver: self.solver,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.track.spacing > 0.0 && self.track.spacing.is_finite()) {
            return Err(CliError::Input(format!("track.spacing must be positive, got {}", self.track.spacing)));
        }
        if self.track.left.is_some() != self.track.right.is_some() {
            return Err(CliError::Input("track.left and track.right must be given together".into()));
        }
        self.planner_config().validate().map_err(|e| CliError::Input(e.to_string()))
    }

    pub fn load_track(&self) -> Result<Track, CliError> {
        let t = &self.track;
        let track = match (&t.centerline, &t.left, &t.right) {
            (Some(c), _, _) => load_track(c, t.spacing, t.closed),
            (None, Some(l), Some(r)) => load_track_boundaries(l, r, t.spacing, t.closed),
            _ => t.generator.build(t.spacing),
        };
        track.map_err(|e| CliError::Input(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form with every default filled in.
    pub fn hash(&self) -> String {
        digest(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

pub fn digest(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// SHA-256 of the resampled track in schema A.
pub fn track_hash(track: &Track) -> String {
    let mut buf = Vec::new();
    write_track(track, &mut buf).expect("writing to memory");
    digest(&buf)
}
