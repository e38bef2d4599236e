//! Service configuration (JSON). Relative paths resolve against the directory
//! holding the config file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use arise_core::gamify::PointsTable;
use arise_core::reports::ReportVocabulary;
use arise_core::terra::VegetationParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable that takes precedence over `--config`.
pub const CONFIG_ENV: &str = "ARISE_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("use case {use_case}: {field} {path} does not exist")]
    MissingPath {
        use_case: String,
        field: &'static str,
        path: PathBuf,
    },
    #[error("{0}")]
    Invalid(String),
}

fn default_listen() -> SocketAddr {
    "127.0.0.1:8080".parse().expect("literal address")
}

fn default_radius() -> f64 {
    2000.0
}

fn default_refresh() -> f64 {
    24.0
}

fn default_true() -> bool {
    true
}

fn default_exaggeration() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UseCaseConfig {
    pub name: String,
    pub poi_registry_path: PathBuf,
    pub review_fixture_path: PathBuf,
    pub heightmap_path: PathBuf,
    pub veg_base_path: PathBuf,
    /// `(row, col)` cells of the water bodies the flood starts from.
    pub flood_seeds: Vec<(usize, usize)>,
    #[serde(default = "default_exaggeration")]
    pub vertical_exaggeration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    #[serde(default = "default_radius")]
    pub onsite_radius_m: f64,
    pub use_cases: Vec<UseCaseConfig>,
    #[serde(default = "default_refresh")]
    pub refresh_period_h: f64,
    /// Refresh every gallery once when the server starts.
    #[serde(default = "default_true")]
    pub refresh_on_start: bool,
    #[serde(default)]
    pub external_generator_url: Option<String>,
    /// Replaces the bundled English lexicon.
    #[serde(default)]
    pub lexicon_path: Option<PathBuf>,
    #[serde(default)]
    pub report_vocabulary: ReportVocabulary,
    #[serde(default)]
    pub points: PointsTable,
    #[serde(default)]
    pub vegetation: VegetationParams,
}

impl ServiceConfig {
    /// Reads, resolves and validates a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: ServiceConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.data_dir);
        if let Some(p) = self.lexicon_path.as_mut() {
            join(p);
        }
        for uc in &mut self.use_cases {
            join(&mut uc.poi_registry_path);
            join(&mut uc.review_fixture_path);
            join(&mut uc.heightmap_path);
            join(&mut uc.veg_base_path);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.onsite_radius_m.is_finite() && self.onsite_radius_m >= 0.0) {
            return Err(ConfigError::Invalid(format!("onsite_radius_m {} must be >= 0", self.onsite_radius_m)));
        }
        if !(self.refresh_period_h.is_finite() && self.refresh_period_h > 0.0) {
            return Err(ConfigError::Invalid(format!("refresh_period_h {} must be > 0", self.refresh_period_h)));
        }
        self.points.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let mut names = std::collections::HashSet::new();
        for uc in &self.use_cases {
            if !names.insert(uc.name.as_str()) {
                return Err(ConfigError::Invalid(format!("duplicate use case {}", uc.name)));
            }
            for (field, path) in [
                ("poi_registry_path", &uc.poi_registry_path),
                ("review_fixture_path", &uc.review_fixture_path),
                ("heightmap_path", &uc.heightmap_path),
                ("veg_base_path", &uc.veg_base_path),
            ] {
                if !path.exists() {
                    return Err(ConfigError::MissingPath {
                        use_case: uc.name.clone(),
                        field,
                        path: path.clone(),
                    });
                }
            }
        }
        if let Some(p) = &self.lexicon_path {
            if !p.exists() {
                return Err(ConfigError::Invalid(format!("lexicon {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn use_case(&self, name: &str) -> Option<&UseCaseConfig> {
        self.use_cases.iter().find(|u| u.name == name)
    }
}
