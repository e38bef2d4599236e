//! Review ingestion and scoring.
//!
//! Each review gets a lexicon sentiment in [-1, 1]. Per PoI, the mean sentiment
//! and the review count combine into an importance score:
//!
//! ```text
//! importance = (mean + 1) / 2 * log10(1 + n) / log10(1 + n_max)
//! ```
//!
//! where `n_max` is the largest review count among the PoIs of the same use case.
//! Star ratings are carried through ingestion but do not enter any score.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoError, GeoPoint};
use crate::par::Exec;

/// Number of PoIs the gallery draws from.
pub const TOP_K: usize = 5;

const ENGLISH_LEXICON: &str = include_str!("../data/lexicon_en.tsv");

#[derive(Debug, Error)]
pub enum SmdaError {
    #[error("lexicon line {line}: {reason}")]
    Lexicon { line: usize, reason: String },
    #[error("review count {n_reviews} exceeds use-case maximum {n_max}")]
    CountAboveMax { n_reviews: u64, n_max: u64 },
    #[error("mean sentiment {0} outside [-1, 1]")]
    SentimentRange(f64),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed PoI registry {path}: {reason}")]
    Registry { path: PathBuf, reason: String },
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Token valences plus the tokens that flip the next one.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, f64>,
    negators: HashSet<String>,
}

impl Lexicon {
    /// The bundled English lexicon.
    pub fn english() -> Self {
        Self::parse(ENGLISH_LEXICON).expect("bundled lexicon is well-formed")
    }

    /// Parses `token<TAB>valence` lines. `#` starts a comment line and a valence
    /// of `negator` registers a negation token.
    pub fn parse(text: &str) -> Result<Self, SmdaError> {
        let mut lex = Lexicon::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| SmdaError::Lexicon { line: i + 1, reason };
            let (token, value) = line
                .split_once('\t')
                .ok_or_else(|| err("expected token<TAB>valence".into()))?;
            let token = token.trim().to_lowercase();
            if token.is_empty() {
                return Err(err("empty token".into()));
            }
            match value.trim() {
                "negator" => {
                    lex.negators.insert(token);
                }
                v => {
                    let valence: f64 = v.parse().map_err(|_| err(format!("bad valence {v:?}")))?;
                    if !(-1.0..=1.0).contains(&valence) {
                        return Err(err(format!("valence {valence} outside [-1, 1]")));
                    }
                    lex.entries.insert(token, valence);
                }
            }
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self, SmdaError> {
        let text = fs::read_to_string(path).map_err(|source| SmdaError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn valence(&self, token: &str) -> Option<f64> {
        self.entries.get(&token.to_lowercase()).copied()
    }

    pub fn is_negator(&self, token: &str) -> bool {
        self.negators.contains(&token.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A sentiment value clamped to [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SentimentScore(f64);

impl SentimentScore {
    pub fn new(value: f64) -> Self {
        if value.is_nan() {
            return Self(0.0);
        }
        Self(value.clamp(-1.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Lowercased tokens split on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Mean effective valence of the lexicon tokens in `text`; 0 if none match.
pub fn analyze_sentiment(text: &str, lex: &Lexicon) -> SentimentScore {
    let tokens = tokenize(text);
    let mut sum = 0.0;
    let mut matched = 0usize;
    for (i, tok) in tokens.iter().enumerate() {
        let Some(v) = lex.entries.get(tok) else { continue };
        let negated = i > 0 && lex.negators.contains(&tokens[i - 1]);
        sum += if negated { -v } else { *v };
        matched += 1;
    }
    if matched == 0 {
        return SentimentScore(0.0);
    }
    SentimentScore::new(sum / matched as f64)
}

/// Relevance in [0, 1] from mean sentiment and log-damped review volume.
pub fn importance_score(mean_sentiment: f64, n_reviews: u64, n_max: u64) -> Result<f64, SmdaError> {
    if !(-1.0..=1.0).contains(&mean_sentiment) {
        return Err(SmdaError::SentimentRange(mean_sentiment));
    }
    if n_reviews > n_max {
        return Err(SmdaError::CountAboveMax { n_reviews, n_max });
    }
    if n_reviews == 0 || n_max == 0 {
        return Ok(0.0);
    }
    let tone = (mean_sentiment + 1.0) / 2.0;
    let volume = (1.0 + n_reviews as f64).log10() / (1.0 + n_max as f64).log10();
    Ok((tone * volume).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub poi_id: String,
    pub text: String,
    pub rating: Option<u8>,
    pub created_at: DateTime<Utc>,
}

impl Review {
    fn check(&self) -> Result<(), String> {
        if self.poi_id.trim().is_empty() {
            return Err("empty poi_id".into());
        }
        if let Some(r) = self.rating {
            if !(1..=5).contains(&r) {
                return Err(format!("rating {r} outside 1-5"));
            }
        }
        Ok(())
    }
}

/// A registered point of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub poi_id: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub use_case: String,
    pub photo_path: PathBuf,
}

impl Poi {
    pub fn location(&self) -> Result<GeoPoint, GeoError> {
        GeoPoint::new(self.lat, self.lon)
    }
}

/// Reads a PoI registry (a JSON array). Relative photo paths resolve against the
/// registry's directory.
pub fn load_registry(path: &Path) -> Result<Vec<Poi>, SmdaError> {
    let text = fs::read_to_string(path).map_err(|source| SmdaError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut pois: Vec<Poi> = serde_json::from_str(&text).map_err(|e| SmdaError::Registry {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    for poi in &mut pois {
        poi.location()?;
        if poi.photo_path.is_relative() {
            poi.photo_path = base.join(&poi.photo_path);
        }
    }
    Ok(pois)
}

/// Per-PoI overlay figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiStats {
    pub poi_id: String,
    pub name: String,
    pub location: GeoPoint,
    pub review_count: u64,
    pub mean_sentiment: f64,
    pub importance: f64,
}

/// Scores `reviews` (all belonging to `poi`) into overlay figures.
///
/// The mean is order-invariant bit for bit: scores are sorted before summing.
pub fn aggregate_poi(
    poi: &Poi,
    reviews: &[Review],
    lex: &Lexicon,
    n_max: u64,
    exec: Exec,
) -> Result<PoiStats, SmdaError> {
    let mut scores = exec.map(reviews, |r| analyze_sentiment(&r.text, lex).value());
    scores.sort_by(f64::total_cmp);
    let count = scores.len() as u64;
    let mean = if scores.is_empty() {
        0.0
    } else {
        (scores.iter().sum::<f64>() / count as f64).clamp(-1.0, 1.0)
    };
    Ok(PoiStats {
        poi_id: poi.poi_id.clone(),
        name: poi.name.clone(),
        location: poi.location()?,
        review_count: count,
        mean_sentiment: mean,
        importance: importance_score(mean, count, n_max)?,
    })
}

/// Aggregates every PoI of one use case, normalizing importance by the largest
/// review count among them. Output follows the order of `pois`.
pub fn aggregate_use_case(
    pois: &[Poi],
    reviews: &[Review],
    lex: &Lexicon,
    exec: Exec,
) -> Result<Vec<PoiStats>, SmdaError> {
    let mut by_poi: HashMap<&str, Vec<Review>> = HashMap::new();
    for r in reviews {
        by_poi.entry(r.poi_id.as_str()).or_default().push(r.clone());
    }
    let n_max = pois
        .iter()
        .map(|p| by_poi.get(p.poi_id.as_str()).map_or(0, Vec::len) as u64)
        .max()
        .unwrap_or(0);
    pois.iter()
        .map(|p| {
            let own = by_poi.get(p.poi_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            aggregate_poi(p, own, lex, n_max, exec)
        })
        .collect()
}

/// The `k` most reviewed PoIs; ties go to the lexicographically smaller id.
pub fn top_k_by_reviews(stats: &[PoiStats], k: usize) -> Vec<PoiStats> {
    let mut sorted = stats.to_vec();
    sorted.sort_by(|a, b| b.review_count.cmp(&a.review_count).then_with(|| a.poi_id.cmp(&b.poi_id)));
    sorted.truncate(k);
    sorted
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("review fixture {path} unavailable: {source}")]
    Missing {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("reading {path} failed: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// What one ingestion pass produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestBatch {
    pub reviews: Vec<Review>,
    /// 1-based line numbers of records that failed to parse or validate.
    pub skipped_lines: Vec<usize>,
    /// Well-formed records naming a PoI outside the use case.
    pub ignored: usize,
}

impl IngestBatch {
    pub fn skipped(&self) -> usize {
        self.skipped_lines.len()
    }
}

/// Anything that can supply raw reviews.
pub trait ReviewSource {
    fn fetch(&self) -> Result<IngestBatch, IngestError>;
}

/// JSON-lines file with one review object per line.
#[derive(Debug, Clone)]
pub struct FixtureSource {
    path: PathBuf,
}

impl FixtureSource {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }
}

impl ReviewSource for FixtureSource {
    fn fetch(&self) -> Result<IngestBatch, IngestError> {
        let file = fs::File::open(&self.path).map_err(|source| IngestError::Missing {
            path: self.path.clone(),
            source,
        })?;
        let mut batch = IngestBatch::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| IngestError::Read {
                path: self.path.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Review>(&line) {
                Ok(r) if r.check().is_ok() => batch.reviews.push(r),
                Ok(r) => {
                    log::warn!("{}:{}: {}", self.path.display(), i + 1, r.check().unwrap_err());
                    batch.skipped_lines.push(i + 1);
                }
                Err(e) => {
                    log::warn!("{}:{}: {e}", self.path.display(), i + 1);
                    batch.skipped_lines.push(i + 1);
                }
            }
        }
        Ok(batch)
    }
}

/// Pulls the reviews of the PoIs registered for `use_case`.
pub fn ingest_reviews(source: &dyn ReviewSource, use_case: &str, pois: &[Poi]) -> Result<IngestBatch, IngestError> {
    let wanted: HashSet<&str> = pois
        .iter()
        .filter(|p| p.use_case == use_case)
        .map(|p| p.poi_id.as_str())
        .collect();
    let mut batch = source.fetch()?;
    let before = batch.reviews.len();
    batch.reviews.retain(|r| wanted.contains(r.poi_id.as_str()));
    batch.ignored = before - batch.reviews.len();
    if batch.skipped() > 0 {
        log::warn!("use case {use_case}: skipped {} malformed review records", batch.skipped());
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn poi(id: &str) -> Poi {
        Poi {
            poi_id: id.into(),
            name: format!("Site {id}"),
            lat: 45.0,
            lon: 7.0,
            use_case: "uc".into(),
            photo_path: PathBuf::from("p.png"),
        }
    }

    fn review(poi_id: &str, text: &str) -> Review {
        Review {
            poi_id: poi_id.into(),
            text: text.into(),
            rating: None,
            created_at: "2024-06-01T12:00:00Z".parse().unwrap(),
        }
    }

    fn stats(id: &str, n: u64) -> PoiStats {
        PoiStats {
            poi_id: id.into(),
            name: id.into(),
            location: GeoPoint::new(0.0, 0.0).unwrap(),
            review_count: n,
            mean_sentiment: 0.0,
            importance: 0.0,
        }
    }

    #[test]
    fn bundled_lexicon_shape() {
        let lex = Lexicon::english();
        assert!(lex.len() >= 200);
        assert_eq!(lex.valence("Wonderful"), Some(0.8));
        for n in ["not", "no", "never"] {
            assert!(lex.is_negator(n));
        }
    }

    #[test]
    fn lexicon_parse_errors() {
        assert!(matches!(Lexicon::parse("good 0.5"), Err(SmdaError::Lexicon { line: 1, .. })));
        assert!(matches!(Lexicon::parse("# c\ngood\t1.5"), Err(SmdaError::Lexicon { line: 2, .. })));
        assert!(Lexicon::parse("good\tx").is_err());
    }

    #[test]
    fn sentiment_examples() {
        let lex = Lexicon::english();
        assert_eq!(analyze_sentiment("", &lex).value(), 0.0);
        assert_eq!(analyze_sentiment("wonderful", &lex).value(), 0.8);
        assert_eq!(analyze_sentiment("not wonderful", &lex).value(), -0.8);
        assert_eq!(analyze_sentiment("NOT, Wonderful!", &lex).value(), -0.8);
        assert_eq!(analyze_sentiment("the view", &lex).value(), 0.0);
    }

    #[test]
    fn negation_only_reaches_next_token() {
        let lex = Lexicon::parse("good\t0.5\nbad\t-0.5\nnot\tnegator").unwrap();
        // "not" precedes "very", so "good" keeps its sign
        assert_eq!(analyze_sentiment("not very good", &lex).value(), 0.5);
        assert_eq!(analyze_sentiment("good not bad", &lex).value(), 0.5);
    }

    #[test]
    fn unicode_lowercasing() {
        let lex = Lexicon::parse("ÉPICO\t0.6").unwrap();
        assert_eq!(analyze_sentiment("épico", &lex).value(), 0.6);
        assert_eq!(tokenize("Straße—ÖL"), vec!["straße", "öl"]);
    }

    #[test]
    fn importance_examples() {
        assert_eq!(importance_score(0.7, 0, 10).unwrap(), 0.0);
        assert_eq!(importance_score(1.0, 42, 42).unwrap(), 1.0);
        assert!((importance_score(0.0, 9, 99).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(importance_score(0.0, 0, 0).unwrap(), 0.0);
        assert!(matches!(importance_score(0.0, 3, 2), Err(SmdaError::CountAboveMax { .. })));
        assert!(importance_score(1.5, 1, 2).is_err());
        assert!(importance_score(f64::NAN, 1, 2).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let lex = Lexicon::english();
        let empty = aggregate_poi(&poi("a"), &[], &lex, 3, Exec::default()).unwrap();
        assert_eq!((empty.review_count, empty.mean_sentiment, empty.importance), (0, 0.0, 0.0));

        let one = aggregate_poi(&poi("a"), &[review("a", "wonderful")], &lex, 1, Exec::default()).unwrap();
        assert_eq!(one.review_count, 1);
        assert_eq!(one.mean_sentiment, 0.8);
        assert!((one.importance - 0.9).abs() < 1e-12);
    }

    #[test]
    fn aggregate_is_order_invariant() {
        let lex = Lexicon::english();
        let texts = ["wonderful", "dirty and crowded", "nice", "not good at all", "stunning views", "meh"];
        let mut reviews: Vec<Review> = texts.iter().map(|t| review("a", t)).collect();
        let a = aggregate_poi(&poi("a"), &reviews, &lex, 10, Exec::Sequential).unwrap();
        reviews.reverse();
        reviews.swap(1, 4);
        let b = aggregate_poi(&poi("a"), &reviews, &lex, 10, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn use_case_normalizes_by_max() {
        let lex = Lexicon::english();
        let pois = vec![poi("a"), poi("b"), poi("c")];
        let reviews = vec![review("a", "nice"), review("a", "bad"), review("b", "great")];
        let s = aggregate_use_case(&pois, &reviews, &lex, Exec::default()).unwrap();
        assert_eq!(s.iter().map(|p| p.review_count).collect::<Vec<_>>(), vec![2, 1, 0]);
        assert_eq!(s[2].importance, 0.0);
        let expect_b = importance_score(0.7, 1, 2).unwrap();
        assert_eq!(s[1].importance, expect_b);
    }

    #[test]
    fn top_k_rules() {
        assert!(top_k_by_reviews(&[], 5).is_empty());
        let tied = top_k_by_reviews(&[stats("b", 3), stats("a", 3)], 5);
        assert_eq!(tied.iter().map(|s| s.poi_id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        let many: Vec<_> = (0..8).map(|i| stats(&format!("p{i}"), i)).collect();
        let top = top_k_by_reviews(&many, 5);
        assert_eq!(top.len(), 5);
        assert_eq!(top[0].poi_id, "p7");
    }

    #[test]
    fn fixture_skips_malformed_records() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"poi_id":"a","text":"nice","rating":4,"created_at":"2024-06-01T12:00:00Z"}}"#).unwrap();
        writeln!(f, r#"{{"poi_id":"a","text":"oops""#).unwrap();
        writeln!(f, r#"{{"poi_id":"b","text":"","rating":null,"created_at":"2024-06-02T12:00:00Z"}}"#).unwrap();
        let pois = vec![poi("a"), poi("b")];
        let batch = ingest_reviews(&FixtureSource::new(f.path()), "uc", &pois).unwrap();
        assert_eq!(batch.reviews.len(), 2);
        assert_eq!(batch.skipped_lines, vec![2]);
    }

    #[test]
    fn fixture_edge_cases() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let batch = ingest_reviews(&FixtureSource::new(f.path()), "uc", &[poi("a")]).unwrap();
        assert!(batch.reviews.is_empty());

        let err = FixtureSource::new("/nonexistent/reviews.jsonl").fetch().unwrap_err();
        assert!(err.to_string().contains("/nonexistent/reviews.jsonl"));
    }

    #[test]
    fn bad_rating_and_foreign_poi() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"poi_id":"a","text":"x","rating":9,"created_at":"2024-06-01T12:00:00Z"}}"#).unwrap();
        writeln!(f, r#"{{"poi_id":"z","text":"x","rating":2,"created_at":"2024-06-01T12:00:00Z"}}"#).unwrap();
        let batch = ingest_reviews(&FixtureSource::new(f.path()), "uc", &[poi("a")]).unwrap();
        assert_eq!(batch.skipped(), 1);
        assert_eq!(batch.ignored, 1);
        assert!(batch.reviews.is_empty());
    }
}
