//! Sentiment-conditioned artwork generation and the per-use-case gallery.
//!
//! A PoI's mean sentiment falls into one of four bands, each with a fixed style
//! descriptor that goes into the prompt. Images come from a [`GeneratorAdapter`]:
//! either the built-in [`ProceduralGenerator`] or an HTTP backend. A failing
//! external backend falls back to the procedural one.
//!
//! The gallery regenerates an artwork only when a top PoI has no artwork for its
//! current band, so small sentiment drift does not churn images.

use std::collections::HashMap;
use std::fmt;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::time::Duration;

use base64::Engine as _;
use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::par::Exec;
use crate::smda::{top_k_by_reviews, PoiStats, TOP_K};

/// Edge length of every generated image, in pixels.
pub const IMAGE_SIZE: u32 = 512;

/// Timeout for external generator calls.
pub const EXTERNAL_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum ArtError {
    #[error("photo for {poi_id} not found at {path}")]
    MissingPhoto { poi_id: String, path: PathBuf },
    #[error("generator failed: {0}")]
    Generator(String),
    #[error("image is not a {IMAGE_SIZE}x{IMAGE_SIZE} PNG: {0}")]
    BadImage(String),
}

/// Sentiment interval mapped to an art style; lower bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentimentBand {
    /// s < -0.5
    Stormy,
    /// -0.5 <= s < 0
    Melancholic,
    /// 0 <= s < 0.5
    Serene,
    /// s >= 0.5
    Joyful,
}

impl SentimentBand {
    pub const ALL: [SentimentBand; 4] = [
        SentimentBand::Stormy,
        SentimentBand::Melancholic,
        SentimentBand::Serene,
        SentimentBand::Joyful,
    ];

    pub fn of(sentiment: f64) -> Self {
        if sentiment >= 0.5 {
            SentimentBand::Joyful
        } else if sentiment >= 0.0 {
            SentimentBand::Serene
        } else if sentiment >= -0.5 {
            SentimentBand::Melancholic
        } else {
            SentimentBand::Stormy
        }
    }

    pub fn descriptor(self) -> &'static str {
        match self {
            SentimentBand::Joyful => "vibrant, luminous, joyful impressionist",
            SentimentBand::Serene => "serene, soft watercolor",
            SentimentBand::Melancholic => "muted, melancholic tones",
            SentimentBand::Stormy => "dark, stormy expressionist",
        }
    }

    /// Top and bottom colors of the procedural gradient.
    fn palette(self) -> ([f32; 3], [f32; 3]) {
        match self {
            SentimentBand::Joyful => ([255.0, 214.0, 92.0], [242.0, 98.0, 64.0]),
            SentimentBand::Serene => ([168.0, 216.0, 234.0], [214.0, 236.0, 208.0]),
            SentimentBand::Melancholic => ([122.0, 128.0, 150.0], [70.0, 74.0, 96.0]),
            SentimentBand::Stormy => ([44.0, 48.0, 70.0], [10.0, 10.0, 18.0]),
        }
    }
}

impl fmt::Display for SentimentBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.descriptor())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtPrompt {
    pub poi_id: String,
    pub base_photo: PathBuf,
    pub sentiment: f64,
    pub prompt_text: String,
    pub seed: u64,
}

impl ArtPrompt {
    pub fn band(&self) -> SentimentBand {
        SentimentBand::of(self.sentiment)
    }
}

/// First eight bytes of SHA-256 over `poi_id`, a NUL separator and `prompt_text`.
pub fn prompt_seed(poi_id: &str, prompt_text: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(poi_id.as_bytes());
    h.update([0u8]);
    h.update(prompt_text.as_bytes());
    let digest = h.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

/// `"<name>, <band descriptor>, painting"` plus its stable seed.
pub fn build_prompt(poi: &PoiStats, photo: &Path) -> Result<ArtPrompt, ArtError> {
    if !photo.is_file() {
        return Err(ArtError::MissingPhoto {
            poi_id: poi.poi_id.clone(),
            path: photo.to_path_buf(),
        });
    }
    let band = SentimentBand::of(poi.mean_sentiment);
    let prompt_text = format!("{}, {}, painting", poi.name, band.descriptor());
    Ok(ArtPrompt {
        seed: prompt_seed(&poi.poi_id, &prompt_text),
        poi_id: poi.poi_id.clone(),
        base_photo: photo.to_path_buf(),
        sentiment: poi.mean_sentiment,
        prompt_text,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Procedural,
    External,
}

/// Something that turns a prompt into PNG bytes.
pub trait GeneratorAdapter: Send + Sync {
    fn kind(&self) -> GeneratorKind;
    fn render(&self, prompt: &ArtPrompt) -> Result<Vec<u8>, ArtError>;
}

/// Deterministic gradient-plus-value-noise renderer.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProceduralGenerator;

const NOISE_LATTICE: usize = 9;

impl ProceduralGenerator {
    fn pixels(prompt: &ArtPrompt) -> Vec<u8> {
        let (top, bottom) = prompt.band().palette();
        let mut rng = ChaCha8Rng::seed_from_u64(prompt.seed);
        // two octaves: a coarse lattice and one twice as fine
        let coarse: Vec<f32> = (0..NOISE_LATTICE * NOISE_LATTICE).map(|_| rng.random::<f32>()).collect();
        let fine_n = 2 * NOISE_LATTICE - 1;
        let fine: Vec<f32> = (0..fine_n * fine_n).map(|_| rng.random::<f32>()).collect();

        let size = IMAGE_SIZE as usize;
        let mut buf = Vec::with_capacity(size * size * 3);
        for y in 0..size {
            let t = y as f32 / (size - 1) as f32;
            let base: [f32; 3] = std::array::from_fn(|c| top[c] + (bottom[c] - top[c]) * t);
            for x in 0..size {
                let (u, v) = (x as f32 / size as f32, y as f32 / size as f32);
                let n = 0.65 * value_noise(&coarse, NOISE_LATTICE, u, v) + 0.35 * value_noise(&fine, fine_n, u, v);
                let shade = 0.75 + 0.5 * n;
                for channel in base {
                    buf.push((channel * shade).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        buf
    }
}

fn smooth(t: f32) -> f32 {
    t * t * (3.0 - 2.0 * t)
}

/// Smoothly interpolated lattice noise over the unit square.
fn value_noise(lattice: &[f32], n: usize, u: f32, v: f32) -> f32 {
    let span = (n - 1) as f32;
    let (fx, fy) = (u * span, v * span);
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(n - 1), (y0 + 1).min(n - 1));
    let (sx, sy) = (smooth(fx - x0 as f32), smooth(fy - y0 as f32));
    let at = |x: usize, y: usize| lattice[y * n + x];
    let top = at(x0, y0) + (at(x1, y0) - at(x0, y0)) * sx;
    let bottom = at(x0, y1) + (at(x1, y1) - at(x0, y1)) * sx;
    top + (bottom - top) * sy
}

fn encode_png(rgb: &[u8]) -> Result<Vec<u8>, ArtError> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, IMAGE_SIZE, IMAGE_SIZE);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| ArtError::Generator(e.to_string()))?;
    writer
        .write_image_data(rgb)
        .map_err(|e| ArtError::Generator(e.to_string()))?;
    writer.finish().map_err(|e| ArtError::Generator(e.to_string()))?;
    Ok(out)
}

/// Checks that `bytes` decode as a PNG of the expected size.
pub fn check_png(bytes: &[u8]) -> Result<(u32, u32), ArtError> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| ArtError::BadImage(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(|e| ArtError::BadImage(e.to_string()))?;
    if (info.width, info.height) != (IMAGE_SIZE, IMAGE_SIZE) {
        return Err(ArtError::BadImage(format!("got {}x{}", info.width, info.height)));
    }
    Ok((info.width, info.height))
}

impl GeneratorAdapter for ProceduralGenerator {
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::Procedural
    }

    fn render(&self, prompt: &ArtPrompt) -> Result<Vec<u8>, ArtError> {
        encode_png(&Self::pixels(prompt))
    }
}

#[derive(Serialize)]
struct ExternalRequest<'a> {
    prompt_text: &'a str,
    seed: u64,
    base_photo_b64: String,
}

/// Posts `{prompt_text, seed, base_photo_b64}` to a URL and expects PNG bytes back.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpGenerator {
    pub fn new(url: impl Into<String>) -> Result<Self, ArtError> {
        Self::with_timeout(url, EXTERNAL_TIMEOUT)
    }

    pub fn with_timeout(url: impl Into<String>, timeout: Duration) -> Result<Self, ArtError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ArtError::Generator(e.to_string()))?;
        Ok(Self { url: url.into(), client })
    }
}

impl GeneratorAdapter for HttpGenerator {
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::External
    }

    fn render(&self, prompt: &ArtPrompt) -> Result<Vec<u8>, ArtError> {
        let photo = std::fs::read(&prompt.base_photo).map_err(|_| ArtError::MissingPhoto {
            poi_id: prompt.poi_id.clone(),
            path: prompt.base_photo.clone(),
        })?;
        let body = ExternalRequest {
            prompt_text: &prompt.prompt_text,
            seed: prompt.seed,
            base_photo_b64: base64::engine::general_purpose::STANDARD.encode(photo),
        };
        let resp = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| ArtError::Generator(e.to_string()))?;
        let bytes = resp.bytes().map_err(|e| ArtError::Generator(e.to_string()))?.to_vec();
        check_png(&bytes)?;
        Ok(bytes)
    }
}

/// A generated image bound to its prompt.
///
/// `image` is not serialized; stores keep the PNG bytes next to the metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artwork {
    pub id: String,
    pub poi_id: String,
    pub prompt: ArtPrompt,
    #[serde(skip)]
    pub image: Vec<u8>,
    pub generator: GeneratorKind,
    pub generated_at: DateTime<Utc>,
}

impl Artwork {
    pub fn band(&self) -> SentimentBand {
        self.prompt.band()
    }
}

/// Renders `prompt` through `adapter`, falling back to the procedural renderer
/// when an external adapter fails.
pub fn generate(prompt: &ArtPrompt, adapter: &dyn GeneratorAdapter, now: DateTime<Utc>) -> Result<Artwork, ArtError> {
    let (image, generator) = match adapter.render(prompt) {
        Ok(bytes) => (bytes, adapter.kind()),
        Err(e) if adapter.kind() == GeneratorKind::External => {
            log::warn!("external generator failed for {}: {e}; using procedural fallback", prompt.poi_id);
            (ProceduralGenerator.render(prompt)?, GeneratorKind::Procedural)
        }
        Err(e) => return Err(e),
    };
    Ok(Artwork {
        id: uuid::Uuid::new_v4().to_string(),
        poi_id: prompt.poi_id.clone(),
        prompt: prompt.clone(),
        image,
        generator,
        generated_at: now,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GalleryDelta {
    pub created: usize,
    pub retained: usize,
}

/// A computed but not yet committed gallery refresh.
#[derive(Debug, Clone)]
pub struct RefreshPlan {
    pub use_case: String,
    pub created: Vec<Artwork>,
    /// Artwork ids of the refreshed gallery, in top-k order.
    pub current: Vec<String>,
    pub retained: usize,
}

impl RefreshPlan {
    pub fn delta(&self) -> GalleryDelta {
        GalleryDelta {
            created: self.created.len(),
            retained: self.retained,
        }
    }
}

/// All artworks ever generated plus the current selection per use case.
#[derive(Debug, Clone, Default)]
pub struct Gallery {
    artworks: HashMap<String, Artwork>,
    latest: HashMap<(String, SentimentBand), String>,
    current: HashMap<String, Vec<String>>,
}

impl Gallery {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an artwork to the history; it becomes the one served for its
    /// `(poi_id, band)` key when newer than the existing one.
    pub fn insert(&mut self, art: Artwork) {
        let key = (art.poi_id.clone(), art.band());
        let newer = self
            .latest
            .get(&key)
            .and_then(|id| self.artworks.get(id))
            .is_none_or(|old| old.generated_at <= art.generated_at);
        if newer {
            self.latest.insert(key, art.id.clone());
        }
        self.artworks.insert(art.id.clone(), art);
    }

    pub fn set_current(&mut self, use_case: &str, ids: Vec<String>) {
        self.current.insert(use_case.to_string(), ids);
    }

    pub fn get(&self, id: &str) -> Option<&Artwork> {
        self.artworks.get(id)
    }

    pub fn history_len(&self) -> usize {
        self.artworks.len()
    }

    pub fn lookup(&self, poi_id: &str, band: SentimentBand) -> Option<&Artwork> {
        self.latest
            .get(&(poi_id.to_string(), band))
            .and_then(|id| self.artworks.get(id))
    }

    /// The served artworks of a use case, in top-k order.
    pub fn current(&self, use_case: &str) -> Vec<&Artwork> {
        self.current
            .get(use_case)
            .map(|ids| ids.iter().filter_map(|id| self.artworks.get(id)).collect())
            .unwrap_or_default()
    }

    pub fn current_ids(&self, use_case: &str) -> Vec<String> {
        self.current.get(use_case).cloned().unwrap_or_default()
    }

    /// Works out what a refresh would do without touching the gallery. New
    /// images are rendered here, in parallel under `exec`.
    pub fn plan_refresh(
        &self,
        use_case: &str,
        stats: &[PoiStats],
        photo_of: &dyn Fn(&str) -> Option<PathBuf>,
        adapter: &dyn GeneratorAdapter,
        exec: Exec,
        now: DateTime<Utc>,
    ) -> Result<RefreshPlan, ArtError> {
        let top = top_k_by_reviews(stats, TOP_K);
        let mut current = Vec::with_capacity(top.len());
        let mut to_render = Vec::new();
        let mut retained = 0;
        for poi in &top {
            let band = SentimentBand::of(poi.mean_sentiment);
            if let Some(existing) = self.lookup(&poi.poi_id, band) {
                current.push(Some(existing.id.clone()));
                retained += 1;
                continue;
            }
            let photo = photo_of(&poi.poi_id).unwrap_or_default();
            to_render.push((current.len(), build_prompt(poi, &photo)?));
            current.push(None);
        }

        let rendered = exec.map(&to_render, |(_, prompt)| generate(prompt, adapter, now));
        let mut created = Vec::with_capacity(rendered.len());
        for ((slot, _), art) in to_render.iter().zip(rendered) {
            let art = art?;
            current[*slot] = Some(art.id.clone());
            created.push(art);
        }
        Ok(RefreshPlan {
            use_case: use_case.to_string(),
            created,
            current: current.into_iter().flatten().collect(),
            retained,
        })
    }

    pub fn commit(&mut self, plan: RefreshPlan) -> GalleryDelta {
        let delta = plan.delta();
        for art in plan.created {
            self.insert(art);
        }
        self.set_current(&plan.use_case, plan.current);
        delta
    }

    /// Plans and commits in one step.
    pub fn refresh(
        &mut self,
        use_case: &str,
        stats: &[PoiStats],
        photo_of: &dyn Fn(&str) -> Option<PathBuf>,
        adapter: &dyn GeneratorAdapter,
        exec: Exec,
        now: DateTime<Utc>,
    ) -> Result<GalleryDelta, ArtError> {
        let plan = self.plan_refresh(use_case, stats, photo_of, adapter, exec, now)?;
        Ok(self.commit(plan))
    }
}
