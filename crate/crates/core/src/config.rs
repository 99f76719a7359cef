//! Engine and service configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compliance::RuleWindow;
use crate::detections::IncidentalParams;
use crate::error::{Error, Result};
use crate::geo::DEFAULT_AOI_SIDE_M;
use crate::routing::{ElpcParams, RoutingPolicy, DEFAULT_RADIUS_M, DEFAULT_SCORE_THRESHOLD, DEFAULT_TOP_K};

/// Environment variable that overrides `data_dir`.
pub const DATA_DIR_ENV: &str = "LANDTRIAGE_DATA_DIR";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Durability {
    /// fsync after every append.
    #[default]
    Fsync,
    /// Flush to the OS only.
    Flush,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub data_dir: PathBuf,
    pub score_threshold: f64,
    pub radius_m: f64,
    pub top_k: usize,
    pub aoi_side_m: f64,
    pub window: RuleWindow,
    pub routing_policy: RoutingPolicy,
    pub boundary_days: i64,
    pub incidental_score_floor: f64,
    pub incidental_match_buffer_m: f64,
    /// Write a snapshot after this many events; 0 disables snapshots.
    pub snapshot_every: u64,
    pub durability: Durability,
    /// Published review-reduction figure to compare the computed one against.
    pub reported_review_reduction: Option<f64>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data_dir: PathBuf::from("landtriage-data"),
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            radius_m: DEFAULT_RADIUS_M,
            top_k: DEFAULT_TOP_K,
            aoi_side_m: DEFAULT_AOI_SIDE_M,
            window: RuleWindow::default(),
            routing_policy: RoutingPolicy::NearestExclusive,
            boundary_days: 2,
            incidental_score_floor: 0.5,
            incidental_match_buffer_m: 150.0,
            snapshot_every: 500,
            durability: Durability::Fsync,
            reported_review_reduction: None,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, field: &'static str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::validation("invalid_config", field, format!("{field} must be positive, got {v}")))
            }
        };
        positive(self.score_threshold, "score_threshold")?;
        if self.score_threshold > 1.0 {
            return Err(Error::validation("invalid_config", "score_threshold", "score_threshold must be at most 1"));
        }
        positive(self.radius_m, "radius_m")?;
        positive(self.aoi_side_m, "aoi_side_m")?;
        positive(self.incidental_score_floor, "incidental_score_floor")?;
        if self.incidental_match_buffer_m < 0.0 || !self.incidental_match_buffer_m.is_finite() {
            return Err(Error::validation("invalid_config", "incidental_match_buffer_m", "must be non-negative"));
        }
        if self.top_k < 1 {
            return Err(Error::validation("invalid_config", "top_k", "top_k must be at least 1"));
        }
        if self.boundary_days < 0 {
            return Err(Error::validation("invalid_config", "boundary_days", "boundary_days must be non-negative"));
        }
        self.window.validate()
    }

    /// Reads a JSON config file; missing keys take defaults.
    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Config = serde_json::from_str(&text)
            .map_err(|e| Error::validation("invalid_config", path.display().to_string(), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies [`DATA_DIR_ENV`] when set and non-empty.
    pub fn with_env(mut self) -> Config {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV).filter(|v| !v.is_empty()) {
            self.data_dir = PathBuf::from(dir);
        }
        self
    }

    pub fn elpc_params(&self) -> ElpcParams {
        ElpcParams {
            radius_m: self.radius_m,
            top_k: self.top_k,
            policy: self.routing_policy,
        }
    }

    pub fn incidental_params(&self) -> IncidentalParams {
        IncidentalParams {
            score_floor: self.incidental_score_floor,
            match_buffer_m: self.incidental_match_buffer_m,
            aoi_side_m: self.aoi_side_m,
        }
    }
}
