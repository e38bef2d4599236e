//! Acceptance suite: one PASS/FAIL line per criterion, each checked against its
//! runtime bound. Runs as a plain binary (`harness = false`).

mod common;

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::io::{BufRead, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Child, Command, ExitCode, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use arise_core::artworks::{build_prompt, check_png, Gallery, GeneratorAdapter, ProceduralGenerator};
use arise_core::geo::{haversine_distance, GeoPoint, SpatialIndex, EARTH_RADIUS_M};
use arise_core::reports::{
    advance, ChatEngine, ChatMessage, ChatSession, ChatState, HazardReport, HazardType, MediaKind, MessageKind,
    ReportRegistry, ReportSink, ReportVocabulary,
};
use arise_core::smda::{self, analyze_sentiment, importance_score, top_k_by_reviews, FixtureSource, Lexicon, PoiStats};
use arise_core::terra::{
    flood_extent, flood_sweep, load_heightmap, mesh_from_heightmap, simulate, Grid, HeightMap, IndicatorState,
    VegetationParams,
};
use arise_core::Exec;
use chrono::{TimeZone, Utc};
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Check = fn() -> Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn main() -> ExitCode {
    let criteria: [(&str, Option<Duration>, Check); 7] = [
        ("geo oracle", Some(Duration::from_secs(5)), geo_oracle),
        ("flood oracle", Some(Duration::from_secs(10)), flood_oracle),
        ("scoring properties", None, scoring_properties),
        ("chat walkthrough", None, chat_walkthrough),
        ("artwork determinism", None, artwork_determinism),
        ("end-to-end fixture run", Some(Duration::from_secs(30)), end_to_end),
        ("mesh counts", None, mesh_counts),
    ];
    let mut failed = 0;
    for (name, bound, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let elapsed = start.elapsed();
        let outcome = match (outcome, bound) {
            (Ok(()), Some(b)) if elapsed > b => Err(format!("took {elapsed:.2?}, bound {b:?}")),
            (o, _) => o,
        };
        let bound = bound.map(|b| format!(" (bound {b:?})")).unwrap_or_default();
        match outcome {
            Ok(()) => println!("PASS  {name}  {elapsed:.2?}{bound}"),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name}  {elapsed:.2?}{bound}: {e}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

/// Great-circle distance via the chord between unit vectors.
fn chord_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let unit = |p: GeoPoint| {
        let (la, lo) = (p.lat().to_radians(), p.lon().to_radians());
        [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
    };
    let (u, v) = (unit(a), unit(b));
    let chord = ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2) + (u[2] - v[2]).powi(2)).sqrt();
    2.0 * EARTH_RADIUS_M * (chord / 2.0).min(1.0).asin()
}

fn geo_oracle() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6e0);
    let points: Vec<(String, GeoPoint)> = (0..1000)
        .map(|i| {
            let p = GeoPoint::new(rng.random_range(44.8..45.3), rng.random_range(7.4..7.9)).unwrap();
            (format!("p{i}"), p)
        })
        .collect();
    let mut idx = SpatialIndex::new();
    for (id, p) in &points {
        idx.insert(id.clone(), *p);
    }
    for q in 0..50 {
        let center = GeoPoint::new(rng.random_range(44.8..45.3), rng.random_range(7.4..7.9)).unwrap();
        let radius = rng.random_range(0.0..20_000.0);
        let got: BTreeSet<String> = idx
            .query_radius(center, radius)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|h| h.0)
            .collect();
        let expected: BTreeSet<String> = points
            .iter()
            .filter(|(_, p)| haversine_distance(center, *p) <= radius)
            .map(|(id, _)| id.clone())
            .collect();
        ensure!(got == expected, "query {q}: {} hits, brute force {}", got.len(), expected.len());
    }
    for i in 0..100 {
        let a = GeoPoint::new(rng.random_range(-90.0..=90.0), rng.random_range(-180.0..=180.0)).unwrap();
        let b = GeoPoint::new(rng.random_range(-90.0..=90.0), rng.random_range(-180.0..=180.0)).unwrap();
        let (h, c) = (haversine_distance(a, b), chord_distance(a, b));
        ensure!((h - c).abs() <= 0.5, "pair {i}: haversine {h} vs chord {c}");
    }
    Ok(())
}

/// Threshold mask, then the connected components (4-neighbour BFS from every
/// cell) that contain an eligible seed.
fn component_oracle(hm: &HeightMap, level: f64, seeds: &[(usize, usize)]) -> Vec<bool> {
    let (nr, nc) = (hm.nrows(), hm.ncols());
    let below: Vec<bool> = (0..nr * nc)
        .map(|i| hm.elevation(i / nc, i % nc).is_some_and(|z| z <= level))
        .collect();
    let mut label = vec![usize::MAX; nr * nc];
    for start in 0..nr * nc {
        if !below[start] || label[start] != usize::MAX {
            continue;
        }
        label[start] = start;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            let (r, c) = (i / nc, i % nc);
            let nbrs = [
                (r > 0).then(|| i - nc),
                (r + 1 < nr).then(|| i + nc),
                (c > 0).then(|| i - 1),
                (c + 1 < nc).then(|| i + 1),
            ];
            for j in nbrs.into_iter().flatten() {
                if below[j] && label[j] == usize::MAX {
                    label[j] = start;
                    stack.push(j);
                }
            }
        }
    }
    let wet: HashSet<usize> = seeds
        .iter()
        .map(|(r, c)| r * nc + c)
        .filter(|i| below[*i])
        .map(|i| label[i])
        .collect();
    (0..nr * nc).map(|i| below[i] && wet.contains(&label[i])).collect()
}

fn random_grid(rng: &mut ChaCha8Rng, n: usize) -> HeightMap {
    let data: Vec<f64> = (0..n * n)
        .map(|i| if i > 0 && rng.random_bool(0.05) { -9999.0 } else { rng.random_range(0.0..100.0f64).round() })
        .collect();
    HeightMap::new(Grid::from_vec(n, n, data).unwrap(), 5.0, -9999.0).unwrap()
}

fn flood_oracle() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf100d);
    for g in 0..200 {
        let hm = random_grid(&mut rng, 20);
        let level = rng.random_range(-5.0..105.0);
        let seeds: Vec<(usize, usize)> = (0..rng.random_range(1..5))
            .map(|_| (rng.random_range(0..20), rng.random_range(0..20)))
            .collect();
        let mask = flood_extent(&hm, level, &seeds).map_err(|e| e.to_string())?;
        ensure!(
            mask.as_slice() == component_oracle(&hm, level, &seeds).as_slice(),
            "grid {g}: mask differs from oracle at level {level}"
        );

        let mut levels: Vec<f64> = (0..20).map(|_| rng.random_range(-5.0..105.0)).collect();
        levels.sort_by(f64::total_cmp);
        let masks: Vec<Grid<bool>> = levels
            .iter()
            .map(|l| flood_extent(&hm, *l, &seeds).unwrap())
            .collect();
        for w in masks.windows(2) {
            let subset = w[0].as_slice().iter().zip(w[1].as_slice()).all(|(a, b)| !a || *b);
            ensure!(subset, "grid {g}: mask shrank as the level rose");
        }
        let counts = flood_sweep(&hm, &levels, &seeds, Exec::default()).map_err(|e| e.to_string())?;
        let expected: Vec<usize> = masks.iter().map(|m| m.as_slice().iter().filter(|w| **w).count()).collect();
        ensure!(counts == expected, "grid {g}: sweep counts differ from per-level masks");
    }
    Ok(())
}

fn lexicon_tokens() -> Vec<String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/lexicon_en.tsv");
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .filter_map(|l| l.split('\t').next().map(String::from))
        .collect()
}

fn scoring_properties() -> Result<(), String> {
    let lex = Lexicon::english();
    let tokens = lexicon_tokens();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5c0);
    let junk = ["", "!!!", "ÉÀ", "日本語", "🙂", "\t\n", "not", "NOT", "never", "a", "the", "42", "-"];
    for i in 0..1000 {
        let words = rng.random_range(0..40);
        let text: Vec<String> = (0..words)
            .map(|_| match rng.random_range(0..4) {
                0 => junk[rng.random_range(0..junk.len())].to_string(),
                1 => (0..rng.random_range(1..8)).map(|_| rng.random::<char>()).collect(),
                _ => {
                    let t = &tokens[rng.random_range(0..tokens.len())];
                    if rng.random_bool(0.3) { t.to_uppercase() } else { t.clone() }
                }
            })
            .collect();
        let sep = [" ", ",", ". ", "-", ""][rng.random_range(0..5)];
        let text = text.join(sep);
        let s = analyze_sentiment(&text, &lex).value();
        ensure!((-1.0..=1.0).contains(&s), "text {i}: sentiment {s} out of range");
        ensure!(analyze_sentiment(&text, &lex).value().to_bits() == s.to_bits(), "text {i}: not deterministic");
    }

    for i in 0..10_000 {
        let s = rng.random_range(-1.0..=1.0);
        let n_max = rng.random_range(0..10_000u64);
        let n = rng.random_range(0..=n_max);
        let v = importance_score(s, n, n_max).map_err(|e| e.to_string())?;
        ensure!((0.0..=1.0).contains(&v), "triple {i}: importance {v}");
        if n < n_max {
            let more = importance_score(s, rng.random_range(n..=n_max), n_max).unwrap();
            ensure!(more >= v, "triple {i}: not monotone in count");
        }
        let s2 = rng.random_range(s..=1.0);
        ensure!(importance_score(s2, n, n_max).unwrap() >= v, "triple {i}: not monotone in sentiment");
    }

    for l in 0..100 {
        let stats: Vec<PoiStats> = (0..rng.random_range(0..20))
            .map(|i| PoiStats {
                poi_id: format!("poi-{:02}", rng.random_range(0..30) * 100 + i),
                name: "x".into(),
                location: GeoPoint::new(45.0, 7.0).unwrap(),
                review_count: rng.random_range(0..6),
                mean_sentiment: 0.0,
                importance: 0.0,
            })
            .collect();
        let mut oracle = stats.clone();
        oracle.sort_by(|a, b| b.review_count.cmp(&a.review_count).then_with(|| a.poi_id.cmp(&b.poi_id)));
        oracle.truncate(5);
        let top = top_k_by_reviews(&stats, 5);
        let got: Vec<&str> = top.iter().map(|s| s.poi_id.as_str()).collect();
        let want: Vec<&str> = oracle.iter().map(|s| s.poi_id.as_str()).collect();
        ensure!(got == want, "list {l}: top-5 {got:?} vs oracle {want:?}");
    }
    Ok(())
}

#[derive(Default)]
struct CaptureSink(Mutex<Vec<HazardReport>>);

impl ReportSink for CaptureSink {
    fn persist(&self, report: &HazardReport) -> Result<(), String> {
        self.0.lock().push(report.clone());
        Ok(())
    }
}

fn run_engine(messages: &[ChatMessage]) -> Result<HazardReport, String> {
    let sink = Arc::new(CaptureSink::default());
    let registry = Arc::new(ReportRegistry::new());
    let engine = ChatEngine::new(ReportVocabulary::default(), registry.clone(), sink.clone());
    let now = Utc.with_ymd_and_hms(2025, 6, 1, 12, 0, 0).unwrap();
    for (i, m) in messages.iter().enumerate() {
        let reply = engine.handle(m, now).map_err(|e| e.to_string())?;
        ensure!(reply.accepted, "message {i} rejected: {}", reply.text);
    }
    let persisted = sink.0.lock().clone();
    ensure!(persisted.len() == 1, "{} reports persisted", persisted.len());
    let report = persisted[0].clone();
    report.validate().map_err(|e| e.to_string())?;
    ensure!(registry.get(&report.id).as_ref() == Some(&report), "report not indexed");
    Ok(report)
}

fn chat_walkthrough() -> Result<(), String> {
    let sid = "walk";
    let start = [
        ChatMessage::command(sid, "/report"),
        ChatMessage::location(sid, 45.0703, 7.6869),
        ChatMessage::text(sid, "flood"),
        ChatMessage::text(sid, "Water entering the crypt"),
    ];
    let mut happy = start.to_vec();
    happy.extend([
        ChatMessage::media(sid, MessageKind::Photo, "file://crypt.jpg"),
        ChatMessage::command(sid, "/skip"),
        ChatMessage::text(sid, "water_depth 0.4 m"),
        ChatMessage::text(sid, "structural 3"),
        ChatMessage::text(sid, "foundations"),
        ChatMessage::text(sid, "yes"),
    ]);
    let r = run_engine(&happy)?;
    ensure!(r.location == GeoPoint::new(45.0703, 7.6869).unwrap(), "location {:?}", r.location);
    ensure!(r.hazard_type == HazardType::Flood, "hazard {:?}", r.hazard_type);
    ensure!(r.description == "Water entering the crypt", "description {:?}", r.description);
    ensure!(
        r.media.len() == 1 && r.media[0].kind == MediaKind::Photo && r.media[0].uri == "file://crypt.jpg",
        "media {:?}",
        r.media
    );
    ensure!(
        r.measurements.len() == 1
            && r.measurements[0].measurement_type == "water_depth"
            && r.measurements[0].value == 0.4
            && r.measurements[0].unit == "m",
        "measurements {:?}",
        r.measurements
    );
    ensure!(
        r.impact_indicators.len() == 1
            && r.impact_indicators[0].indicator == "structural"
            && r.impact_indicators[0].severity == 3,
        "impact {:?}",
        r.impact_indicators
    );
    ensure!(r.risk_elements == ["foundations"], "risk {:?}", r.risk_elements);

    let mut skipping = start.to_vec();
    skipping.extend((0..4).map(|_| ChatMessage::command(sid, "/skip")));
    skipping.push(ChatMessage::text(sid, "yes"));
    let r = run_engine(&skipping)?;
    ensure!(
        r.media.is_empty() && r.measurements.is_empty() && r.impact_indicators.is_empty() && r.risk_elements.is_empty(),
        "all-skip report has extension data: {r:?}"
    );

    let graph = explore_states();
    let reached: BTreeSet<ChatState> = graph.keys().copied().collect();
    ensure!(reached == ChatState::ALL.into_iter().collect(), "unreachable states: {reached:?}");
    for state in ChatState::ALL {
        let mut frontier = vec![state];
        let mut seen = HashSet::new();
        let mut back = false;
        while let Some(s) = frontier.pop() {
            if s == ChatState::Idle {
                back = true;
                break;
            }
            if seen.insert(s) {
                frontier.extend(graph[&s].iter().copied());
            }
        }
        ensure!(back, "dead state {state:?}");
    }
    Ok(())
}

/// Breadth-first walk of the reachable (state, draft) space.
fn explore_states() -> HashMap<ChatState, BTreeSet<ChatState>> {
    let sid = "x";
    let alphabet = [
        ChatMessage::command(sid, "/report"),
        ChatMessage::command(sid, "/skip"),
        ChatMessage::command(sid, "/cancel"),
        ChatMessage::command(sid, "/unknown"),
        ChatMessage::location(sid, 45.0, 7.0),
        ChatMessage::location(sid, -91.0, 7.0),
        ChatMessage::text(sid, "landslide"),
        ChatMessage::text(sid, "free text"),
        ChatMessage::text(sid, " "),
        ChatMessage::text(sid, "crack_width 2 mm"),
        ChatMessage::text(sid, "access 1; visitor_safety 5"),
        ChatMessage::text(sid, "access 7"),
        ChatMessage::text(sid, "yes"),
        ChatMessage::text(sid, "no"),
        ChatMessage::media(sid, MessageKind::Video, "v.mp4"),
        ChatMessage::media(sid, MessageKind::Photo, "p.jpg"),
    ];
    let vocab = ReportVocabulary::default();
    let now = Utc.with_ymd_and_hms(2025, 6, 1, 12, 0, 0).unwrap();
    let mut graph: HashMap<ChatState, BTreeSet<ChatState>> = HashMap::new();
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([ChatSession::new(sid, now)]);
    while let Some(session) = queue.pop_front() {
        if session.draft.media.len() > 2 {
            continue;
        }
        if !seen.insert(serde_json::to_string(&(session.state, &session.draft)).unwrap()) {
            continue;
        }
        for msg in &alphabet {
            let next = advance(session.clone(), msg, &vocab, now).session;
            graph.entry(session.state).or_default().insert(next.state);
            queue.push_back(next);
        }
    }
    graph
}

fn stats(id: &str, sentiment: f64, count: u64) -> PoiStats {
    PoiStats {
        poi_id: id.into(),
        name: format!("Site {id}"),
        location: GeoPoint::new(45.07, 7.69).unwrap(),
        review_count: count,
        mean_sentiment: sentiment,
        importance: 0.5,
    }
}

fn artwork_determinism() -> Result<(), String> {
    let photo = common::fixtures().join("torino/photos/mole.png");
    let gen = ProceduralGenerator;
    for (i, s) in [-0.9, -0.2, 0.1, 0.7].into_iter().enumerate() {
        let prompt = build_prompt(&stats("mole", s, 10), &photo).map_err(|e| e.to_string())?;
        let a = gen.render(&prompt).map_err(|e| e.to_string())?;
        let b = gen.render(&prompt.clone()).map_err(|e| e.to_string())?;
        ensure!(a == b, "prompt {i}: renders differ");
        ensure!(check_png(&a).map_err(|e| e.to_string())? == (512, 512), "prompt {i}: not 512x512");
    }

    let photo_of = |_: &str| Some(photo.clone());
    let now = Utc.with_ymd_and_hms(2025, 6, 1, 0, 0, 0).unwrap();
    let mut list: Vec<PoiStats> = (0..6).map(|i| stats(&format!("p{i}"), 0.2, 10 + i)).collect();
    let mut gallery = Gallery::new();
    let first = gallery
        .refresh("uc", &list, &photo_of, &gen, Exec::default(), now)
        .map_err(|e| e.to_string())?;
    ensure!(first.created == 5, "first refresh created {}", first.created);
    let second = gallery
        .refresh("uc", &list, &photo_of, &gen, Exec::default(), now)
        .map_err(|e| e.to_string())?;
    ensure!(second.created == 0, "second refresh created {}", second.created);

    list[5].mean_sentiment = 0.8; // p5 is the top PoI; serene -> joyful
    let crossing = gallery
        .refresh("uc", &list, &photo_of, &gen, Exec::default(), now)
        .map_err(|e| e.to_string())?;
    ensure!(crossing.created == 1, "band crossing created {}", crossing.created);
    ensure!(gallery.current("uc").len() == 5, "gallery holds {}", gallery.current("uc").len());
    Ok(())
}

struct Server {
    child: Child,
    base: String,
}

impl Server {
    fn start(config: &Path) -> Result<Self, String> {
        let mut child = Command::new(env!("CARGO_BIN_EXE_arise"))
            .arg("--config")
            .arg(config)
            .args(["serve", "--listen", "127.0.0.1:0"])
            .env_remove("ARISE_CONFIG")
            .env("RUST_LOG", "error")
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| e.to_string())?;
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .map_err(|e| e.to_string())?;
        let base = line
            .trim()
            .strip_prefix("listening on ")
            .ok_or_else(|| format!("bad banner {line:?}"))?
            .to_string();
        Ok(Self { child, base })
    }

    fn get(&self, path: &str) -> Value {
        reqwest::blocking::get(format!("{}{path}", self.base))
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .unwrap_or(Value::Null)
    }

    fn post(&self, path: &str, body: String) -> String {
        reqwest::blocking::Client::new()
            .post(format!("{}{path}", self.base))
            .body(body)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.text())
            .unwrap_or_default()
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn end_to_end() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = common::write_config(dir.path(), json!({"refresh_on_start": true}));
    let out = Command::new(env!("CARGO_BIN_EXE_arise"))
        .arg("--config")
        .arg(&config)
        .args(["ingest", "--use-case", "torino"])
        .env_remove("ARISE_CONFIG")
        .env("RUST_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "ingest failed: {}", String::from_utf8_lossy(&out.stderr));

    // direct module computation
    let uc = common::fixtures().join("torino");
    let pois = smda::load_registry(&uc.join("pois.json")).map_err(|e| e.to_string())?;
    let batch = smda::ingest_reviews(&FixtureSource::new(uc.join("reviews.jsonl")), "torino", &pois)
        .map_err(|e| e.to_string())?;
    let expected = smda::aggregate_use_case(&pois, &batch.reviews, &Lexicon::english(), Exec::Sequential)
        .map_err(|e| e.to_string())?;
    ensure!(expected.len() == 5, "fixture has {} PoIs", expected.len());

    let server = Server::start(&config)?;
    let (lat, lon) = (45.0703, 7.6869);
    let overlay = server.get(&format!("/onsite/pois?lat={lat}&lon={lon}&radius_m=20000"));
    let overlay = overlay.as_array().ok_or("no overlay payload")?;
    ensure!(overlay.len() == 5, "{} PoIs in overlay", overlay.len());
    let center = GeoPoint::new(lat, lon).unwrap();
    for s in &expected {
        let o = overlay
            .iter()
            .find(|o| o["poi_id"] == s.poi_id.as_str())
            .ok_or(format!("{} missing", s.poi_id))?;
        ensure!(o["review_count"] == json!(s.review_count), "{}: count", s.poi_id);
        ensure!(o["mean_sentiment"].as_f64() == Some(s.mean_sentiment), "{}: sentiment", s.poi_id);
        ensure!(o["importance"].as_f64() == Some(s.importance), "{}: importance", s.poi_id);
        ensure!(o["distance_m"].as_f64() == Some(haversine_distance(center, s.location)), "{}: distance", s.poi_id);
    }

    let hm = load_heightmap(&std::fs::read_to_string(uc.join("heightmap.asc")).unwrap()).map_err(|e| e.to_string())?;
    let veg = load_heightmap(&std::fs::read_to_string(uc.join("veg_base.asc")).unwrap()).map_err(|e| e.to_string())?;
    let seeds = [(0, 13), (20, 12), (39, 14)];
    for (level, dt) in [(Some(225.0), 1.0), (None, 2.5), (Some(260.0), 0.0)] {
        let body = server.post(
            "/offsite/simulate",
            json!({"use_case": "torino", "water_level": level, "temp_delta": dt}).to_string(),
        );
        let got: Value = serde_json::from_str(&body).map_err(|e| format!("simulate body: {e}"))?;
        let state = IndicatorState {
            water_level: level.unwrap_or(f64::NEG_INFINITY),
            temp_delta: dt,
            veg_base: veg.elevations.clone(),
        };
        let want = simulate(&hm, &state, &seeds, VegetationParams::default(), Exec::Sequential).unwrap();
        ensure!(got == serde_json::to_value(&want).unwrap(), "simulate({level:?}, {dt}) differs");
    }

    let replies = server.post("/chat/webhook", common::report_conversation("e2e", lat, lon));
    ensure!(replies.lines().count() == 10, "chat replies: {replies}");
    server.post("/events", json!({"user_id": "e2e", "event_type": "submit_report"}).to_string());
    server.post("/events", json!({"user_id": "e2e", "event_type": "view_artwork"}).to_string());
    let mut gallery = Value::Null;
    for _ in 0..400 {
        gallery = server.get("/offsite/gallery/torino");
        if gallery.as_array().is_some_and(|g| g.len() == 5) {
            break;
        }
        std::thread::sleep(Duration::from_millis(25));
    }
    ensure!(gallery.as_array().map(Vec::len) == Some(5), "gallery never filled");
    let snapshot = |s: &Server| {
        [
            s.get(&format!("/onsite/reports?lat={lat}&lon={lon}")),
            s.get("/profile/e2e"),
            s.get(&format!("/onsite/pois?lat={lat}&lon={lon}")),
            s.get("/offsite/gallery/torino"),
        ]
    };
    let before = snapshot(&server);
    ensure!(before.iter().all(|v| !v.is_null()), "a snapshot request failed: {before:?}");
    ensure!(before[0].as_array().map(Vec::len) == Some(1), "report not visible");
    drop(server); // SIGKILL, no shutdown hook

    let server = Server::start(&config)?;
    let after = snapshot(&server);
    ensure!(before == after, "state changed across restart");
    Ok(())
}

fn mesh_counts() -> Result<(), String> {
    for (nr, nc) in [(2, 2), (3, 4), (50, 50)] {
        let data = (0..nr * nc).map(|i| (i % 7) as f64).collect();
        let hm = HeightMap::new(Grid::from_vec(nr, nc, data).unwrap(), 10.0, -9999.0).unwrap();
        let mesh = mesh_from_heightmap(&hm, 1.0, Exec::default()).map_err(|e| e.to_string())?;
        ensure!(mesh.vertices.len() == nr * nc, "{nr}x{nc}: {} vertices", mesh.vertices.len());
        ensure!(
            mesh.triangles.len() == 2 * (nr - 1) * (nc - 1),
            "{nr}x{nc}: {} triangles",
            mesh.triangles.len()
        );
    }
    Ok(())
}
