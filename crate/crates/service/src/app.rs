//! Service state and the operations behind every endpoint and CLI command.
//!
//! Handlers in [`crate::api`] and the CLI only parse input and serialize output;
//! everything they return comes from a method here, which in turn delegates to
//! the core modules.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use arise_core::artworks::{Gallery, GalleryDelta, GeneratorAdapter, HttpGenerator, ProceduralGenerator};
use arise_core::gamify::{Ledger, UserProfile};
use arise_core::geo::{GeoError, GeoPoint, SpatialIndex};
use arise_core::reports::{BotReply, ChatEngine, ChatMessage, MediaRef, ReportRegistry};
use arise_core::smda::{self, FixtureSource, Lexicon, Poi, PoiStats};
use arise_core::terra::{self, Grid, HeightMap, IndicatorState, ScenarioResult, TerrainMesh, TerraError};
use arise_core::Exec;
use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ServiceConfig, UseCaseConfig};
use crate::store::{ArtworkRecord, EventRecord, JsonlReportSink, Store, StoreError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Unauthorized(String),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Unauthorized(_) => "unauthorized",
            ServiceError::Internal(_) => "internal",
        }
    }
}

impl From<GeoError> for ServiceError {
    fn from(e: GeoError) -> Self {
        ServiceError::BadRequest(e.to_string())
    }
}

impl From<TerraError> for ServiceError {
    fn from(e: TerraError) -> Self {
        ServiceError::BadRequest(e.to_string())
    }
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

/// Popup-card payload for a nearby report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCard {
    pub id: String,
    pub hazard_type: String,
    pub description: String,
    pub distance_m: f64,
    pub media: Vec<MediaRef>,
    pub created_at: DateTime<Utc>,
}

/// PoI overlay payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiOverlay {
    #[serde(flatten)]
    pub stats: PoiStats,
    pub use_case: String,
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainPayload {
    pub use_case: String,
    pub cell_size: f64,
    pub nrows: usize,
    pub ncols: usize,
    pub mesh: TerrainMesh,
    pub baseline: IndicatorState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRequest {
    pub use_case: String,
    /// Absolute water-surface elevation; omitted or `null` means no water.
    #[serde(default)]
    pub water_level: Option<f64>,
    #[serde(default)]
    pub temp_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryEntry {
    pub artwork_id: String,
    pub poi_id: String,
    pub prompt_text: String,
    pub image_url: String,
    pub generated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub use_case: String,
    pub reviews: usize,
    pub skipped: usize,
    pub skipped_lines: Vec<usize>,
    pub ignored: usize,
    pub pois: Vec<PoiStats>,
}

/// Static data and derived statistics of one use case.
pub struct UseCase {
    pub config: UseCaseConfig,
    pub pois: Vec<Poi>,
    pub heightmap: HeightMap,
    pub veg_base: Grid<f64>,
    stats: RwLock<Vec<PoiStats>>,
    refresh_lock: Mutex<()>,
}

impl UseCase {
    fn load(config: &UseCaseConfig) -> anyhow::Result<Self> {
        let pois = smda::load_registry(&config.poi_registry_path)?;
        let pois: Vec<Poi> = pois.into_iter().filter(|p| p.use_case == config.name).collect();
        for p in &pois {
            anyhow::ensure!(
                p.photo_path.is_file(),
                "use case {}: photo {} of {} does not exist",
                config.name,
                p.photo_path.display(),
                p.poi_id
            );
        }
        let read = |p: &PathBuf| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
        let heightmap = terra::load_heightmap(&read(&config.heightmap_path)?)
            .with_context(|| format!("parsing {}", config.heightmap_path.display()))?;
        let veg = terra::load_heightmap(&read(&config.veg_base_path)?)
            .with_context(|| format!("parsing {}", config.veg_base_path.display()))?;
        anyhow::ensure!(
            veg.elevations.shape() == heightmap.elevations.shape(),
            "use case {}: vegetation grid {:?} does not match heightmap {:?}",
            config.name,
            veg.elevations.shape(),
            heightmap.elevations.shape()
        );
        let veg_base = veg.elevations;
        IndicatorState::baseline(veg_base.clone()).validate()?;
        terra::flood_extent(&heightmap, f64::NEG_INFINITY, &config.flood_seeds)?;
        Ok(Self {
            config: config.clone(),
            pois,
            heightmap,
            veg_base,
            stats: RwLock::new(Vec::new()),
            refresh_lock: Mutex::new(()),
        })
    }

    pub fn stats(&self) -> Vec<PoiStats> {
        self.stats.read().clone()
    }

    fn photo_of(&self, poi_id: &str) -> Option<PathBuf> {
        self.pois.iter().find(|p| p.poi_id == poi_id).map(|p| p.photo_path.clone())
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    pub store: Arc<Store>,
    pub lexicon: Lexicon,
    pub use_cases: BTreeMap<String, UseCase>,
    pub chat: ChatEngine,
    pub reports: Arc<ReportRegistry>,
    pub ledger: Ledger,
    gallery: RwLock<Gallery>,
    /// PoI id -> use case, plus the PoI locations.
    poi_index: RwLock<(BTreeMap<String, String>, SpatialIndex)>,
    generator: Box<dyn GeneratorAdapter>,
    exec: Exec,
}

impl AppState {
    /// Loads static inputs, then replays the data directory. Use cases without
    /// stored statistics are ingested.
    pub fn open(config: ServiceConfig) -> anyhow::Result<Self> {
        Self::open_with(config, true)
    }

    pub fn open_with(config: ServiceConfig, ingest_missing: bool) -> anyhow::Result<Self> {
        let store = Arc::new(Store::open(&config.data_dir)?);
        let lexicon = match &config.lexicon_path {
            Some(p) => Lexicon::load(p)?,
            None => Lexicon::english(),
        };
        let mut use_cases = BTreeMap::new();
        for uc in &config.use_cases {
            let loaded = UseCase::load(uc).with_context(|| format!("loading use case {}", uc.name))?;
            use_cases.insert(uc.name.clone(), loaded);
        }

        let reports = Arc::new(ReportRegistry::new());
        for report in store.reports.read_all()? {
            reports.insert(report)?;
        }
        let chat = ChatEngine::new(
            config.report_vocabulary.clone(),
            reports.clone(),
            Arc::new(JsonlReportSink(store.clone())),
        );

        let mut gallery = Gallery::new();
        for record in store.artworks.read_all::<ArtworkRecord>()? {
            match record {
                ArtworkRecord::Artwork { artwork, .. } => gallery.insert(artwork),
                ArtworkRecord::Gallery { use_case, current } => gallery.set_current(&use_case, current),
            }
        }

        let ledger = Ledger::new(config.points.clone())?;
        for e in store.profiles.read_all::<EventRecord>()? {
            ledger.apply(&e.user_id, e.event_type);
        }

        let generator: Box<dyn GeneratorAdapter> = match &config.external_generator_url {
            Some(url) => Box::new(HttpGenerator::new(url.clone())?),
            None => Box::new(ProceduralGenerator),
        };

        let state = Self {
            config,
            store,
            lexicon,
            use_cases,
            chat,
            reports,
            ledger,
            gallery: RwLock::new(gallery),
            poi_index: RwLock::new((BTreeMap::new(), SpatialIndex::new())),
            generator,
            exec: Exec::default(),
        };
        for name in state.use_cases.keys() {
            match state.store.read_stats(name)? {
                Some(stats) => state.install_stats(name, stats),
                None if ingest_missing => {
                    log::info!("no statistics for {name} yet; ingesting");
                    state.ingest(name)?;
                }
                None => {}
            }
        }
        Ok(state)
    }

    fn use_case(&self, name: &str) -> Result<&UseCase, ServiceError> {
        self.use_cases
            .get(name)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown use case {name:?}")))
    }

    fn install_stats(&self, use_case: &str, stats: Vec<PoiStats>) {
        let mut index = self.poi_index.write();
        index.0.retain(|_, uc| uc != use_case);
        for s in &stats {
            index.0.insert(s.poi_id.clone(), use_case.to_string());
            index.1.insert(s.poi_id.clone(), s.location);
        }
        if let Some(uc) = self.use_cases.get(use_case) {
            *uc.stats.write() = stats;
        }
    }

    /// Recomputes a use case's statistics from its review source.
    pub fn ingest(&self, use_case: &str) -> Result<IngestSummary, ServiceError> {
        let uc = self.use_case(use_case)?;
        let source = FixtureSource::new(&uc.config.review_fixture_path);
        let batch = smda::ingest_reviews(&source, use_case, &uc.pois).map_err(|e| ServiceError::Internal(e.to_string()))?;
        let stats = smda::aggregate_use_case(&uc.pois, &batch.reviews, &self.lexicon, self.exec)
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        self.store.write_stats(use_case, &stats)?;
        self.install_stats(use_case, stats.clone());
        Ok(IngestSummary {
            use_case: use_case.to_string(),
            reviews: batch.reviews.len(),
            skipped: batch.skipped(),
            skipped_lines: batch.skipped_lines,
            ignored: batch.ignored,
            pois: stats,
        })
    }

    pub fn stats(&self, use_case: &str) -> Result<Vec<PoiStats>, ServiceError> {
        Ok(self.use_case(use_case)?.stats())
    }

    pub fn default_radius(&self) -> f64 {
        self.config.onsite_radius_m
    }

    pub fn nearby_reports(&self, lat: f64, lon: f64, radius_m: Option<f64>) -> Result<Vec<ReportCard>, ServiceError> {
        let center = GeoPoint::new(lat, lon)?;
        let radius = radius_m.unwrap_or(self.config.onsite_radius_m);
        Ok(self
            .reports
            .nearby(center, radius)?
            .into_iter()
            .map(|(r, d)| ReportCard {
                id: r.id,
                hazard_type: r.hazard_type.to_string(),
                description: r.description,
                distance_m: d,
                media: r.media,
                created_at: r.created_at,
            })
            .collect())
    }

    pub fn nearby_pois(&self, lat: f64, lon: f64, radius_m: Option<f64>) -> Result<Vec<PoiOverlay>, ServiceError> {
        let center = GeoPoint::new(lat, lon)?;
        let radius = radius_m.unwrap_or(self.config.onsite_radius_m);
        let hits = {
            let index = self.poi_index.read();
            index
                .1
                .query_radius(center, radius)?
                .into_iter()
                .filter_map(|(id, d)| index.0.get(&id).map(|uc| (id, uc.clone(), d)))
                .collect::<Vec<_>>()
        };
        Ok(hits
            .into_iter()
            .filter_map(|(id, uc, d)| {
                let stats = self.use_cases.get(&uc)?.stats.read().iter().find(|s| s.poi_id == id).cloned()?;
                Some(PoiOverlay {
                    stats,
                    use_case: uc,
                    distance_m: d,
                })
            })
            .collect())
    }

    pub fn terrain(&self, use_case: &str) -> Result<TerrainPayload, ServiceError> {
        let uc = self.use_case(use_case)?;
        let mesh = terra::mesh_from_heightmap(&uc.heightmap, uc.config.vertical_exaggeration, self.exec)?;
        Ok(TerrainPayload {
            use_case: use_case.to_string(),
            cell_size: uc.heightmap.cell_size,
            nrows: uc.heightmap.nrows(),
            ncols: uc.heightmap.ncols(),
            mesh,
            baseline: IndicatorState::baseline(uc.veg_base.clone()),
        })
    }

    pub fn simulate(&self, req: &SimulateRequest) -> Result<ScenarioResult, ServiceError> {
        let uc = self.use_case(&req.use_case)?;
        let state = IndicatorState {
            water_level: req.water_level.unwrap_or(f64::NEG_INFINITY),
            temp_delta: req.temp_delta,
            veg_base: uc.veg_base.clone(),
        };
        Ok(terra::simulate(
            &uc.heightmap,
            &state,
            &uc.config.flood_seeds,
            self.config.vegetation,
            self.exec,
        )?)
    }

    pub fn gallery(&self, use_case: &str) -> Result<Vec<GalleryEntry>, ServiceError> {
        self.use_case(use_case)?;
        Ok(self
            .gallery
            .read()
            .current(use_case)
            .into_iter()
            .map(|a| GalleryEntry {
                artwork_id: a.id.clone(),
                poi_id: a.poi_id.clone(),
                prompt_text: a.prompt.prompt_text.clone(),
                image_url: format!("/artworks/{}.png", a.id),
                generated_at: a.generated_at,
            })
            .collect())
    }

    /// Snapshot of the whole gallery (history and current selections).
    pub fn gallery_snapshot(&self) -> Gallery {
        self.gallery.read().clone()
    }

    /// Regenerates missing artworks for the use case's top PoIs. One refresh per
    /// use case runs at a time; readers keep seeing the old gallery until commit.
    pub fn refresh_gallery(&self, use_case: &str) -> Result<GalleryDelta, ServiceError> {
        let uc = self.use_case(use_case)?;
        let _guard = uc.refresh_lock.lock();
        let snapshot = self.gallery.read().clone();
        let mut plan = snapshot
            .plan_refresh(
                use_case,
                &uc.stats(),
                &|id| uc.photo_of(id),
                self.generator.as_ref(),
                self.exec,
                Utc::now(),
            )
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        for art in &mut plan.created {
            self.store.write_image(&art.id, &art.image)?;
            art.image = Vec::new();
            self.store.artworks.append(&ArtworkRecord::Artwork {
                use_case: use_case.to_string(),
                artwork: art.clone(),
            })?;
        }
        self.store.artworks.append(&ArtworkRecord::Gallery {
            use_case: use_case.to_string(),
            current: plan.current.clone(),
        })?;
        Ok(self.gallery.write().commit(plan))
    }

    pub fn artwork_image(&self, artwork_id: &str) -> Result<Vec<u8>, ServiceError> {
        if self.gallery.read().get(artwork_id).is_none() {
            return Err(ServiceError::NotFound(format!("unknown artwork {artwork_id:?}")));
        }
        Ok(self.store.read_image(artwork_id)?)
    }

    /// Handles a batch of chat messages in order.
    pub fn chat(&self, messages: &[ChatMessage]) -> Result<Vec<BotReply>, ServiceError> {
        let now = Utc::now();
        messages
            .iter()
            .map(|m| {
                if m.session_id.trim().is_empty() {
                    return Err(ServiceError::BadRequest("session_id must not be empty".into()));
                }
                self.chat.handle(m, now).map_err(|e| ServiceError::Internal(e.to_string()))
            })
            .collect()
    }

    /// Records an interaction. `claimed_user` is the optional identity header;
    /// when present it must name the same user as the body.
    pub fn record_event(
        &self,
        user_id: &str,
        event_type: &str,
        claimed_user: Option<&str>,
    ) -> Result<UserProfile, ServiceError> {
        if let Some(claimed) = claimed_user {
            if claimed != user_id {
                return Err(ServiceError::Unauthorized(format!(
                    "identity header {claimed:?} does not match user {user_id:?}"
                )));
            }
        }
        let result = self
            .ledger
            .record(user_id, event_type, |event| {
                self.store.profiles.append(&EventRecord {
                    user_id: user_id.to_string(),
                    event_type: event,
                    at: Utc::now(),
                })
            })
            .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        Ok(result?)
    }

    pub fn profile(&self, user_id: &str) -> Result<UserProfile, ServiceError> {
        self.ledger
            .profile(user_id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown user {user_id:?}")))
    }
}
