//! Append-only JSON-lines persistence.
//!
//! One file per entity under the data directory. Each file has a single writer
//! (a mutex around the open handle) and every append is synced before the call
//! returns. Startup replays the files to rebuild in-memory state.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use arise_core::artworks::Artwork;
use arise_core::gamify::EventType;
use arise_core::reports::{HazardReport, ReportSink};
use arise_core::smda::PoiStats;
use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Decode {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("encoding record: {0}")]
    Encode(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A JSON-lines file with a single serialized writer.
#[derive(Debug)]
pub struct JsonlLog {
    path: PathBuf,
    writer: Mutex<File>,
}

impl JsonlLog {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        Ok(Self {
            path,
            writer: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append<T: Serialize>(&self, record: &T) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        let mut file = self.writer.lock();
        file.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        file.sync_data().map_err(io_err(&self.path))
    }

    /// Every record in file order. A torn final line (crash mid-append) is
    /// dropped with a warning; corruption anywhere else is an error.
    pub fn read_all<T: DeserializeOwned>(&self) -> Result<Vec<T>, StoreError> {
        let file = File::open(&self.path).map_err(io_err(&self.path))?;
        let lines: Vec<String> = BufReader::new(file)
            .lines()
            .collect::<Result<_, _>>()
            .map_err(io_err(&self.path))?;
        let last = lines.iter().rposition(|l| !l.trim().is_empty());
        let mut out = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(line) {
                Ok(v) => out.push(v),
                Err(e) if Some(i) == last && e.is_eof() => {
                    log::warn!("{}:{}: dropping torn record", self.path.display(), i + 1);
                }
                Err(source) => {
                    return Err(StoreError::Decode {
                        path: self.path.clone(),
                        line: i + 1,
                        source,
                    })
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub user_id: String,
    pub event_type: EventType,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum ArtworkRecord {
    Artwork {
        use_case: String,
        #[serde(flatten)]
        artwork: Artwork,
    },
    Gallery {
        use_case: String,
        current: Vec<String>,
    },
}

/// All persisted entities of one data directory.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    pub reports: JsonlLog,
    pub artworks: JsonlLog,
    pub profiles: JsonlLog,
}

impl Store {
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        for dir in [root.to_path_buf(), root.join("images"), root.join("stats")] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(Self {
            root: root.to_path_buf(),
            reports: JsonlLog::open(root.join("reports.jsonl"))?,
            artworks: JsonlLog::open(root.join("artworks.jsonl"))?,
            profiles: JsonlLog::open(root.join("profiles.jsonl"))?,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn image_path(&self, artwork_id: &str) -> PathBuf {
        self.root.join("images").join(format!("{artwork_id}.png"))
    }

    pub fn write_image(&self, artwork_id: &str, png: &[u8]) -> Result<(), StoreError> {
        let path = self.image_path(artwork_id);
        write_synced(&path, png)
    }

    pub fn read_image(&self, artwork_id: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.image_path(artwork_id);
        fs::read(&path).map_err(io_err(&path))
    }

    fn stats_path(&self, use_case: &str) -> PathBuf {
        self.root.join("stats").join(format!("{use_case}.json"))
    }

    /// Replaces the derived statistics of a use case.
    pub fn write_stats(&self, use_case: &str, stats: &[PoiStats]) -> Result<(), StoreError> {
        let path = self.stats_path(use_case);
        let tmp = path.with_extension("json.tmp");
        write_synced(&tmp, &serde_json::to_vec_pretty(stats)?)?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    pub fn read_stats(&self, use_case: &str) -> Result<Option<Vec<PoiStats>>, StoreError> {
        let path = self.stats_path(use_case);
        if !path.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|source| StoreError::Decode { path, line: 1, source })
    }
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let mut f = File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))?;
    f.sync_all().map_err(io_err(path))
}

/// Appends confirmed reports to `reports.jsonl`.
pub struct JsonlReportSink(pub std::sync::Arc<Store>);

impl ReportSink for JsonlReportSink {
    fn persist(&self, report: &HazardReport) -> Result<(), String> {
        self.0.reports.append(report).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let log = JsonlLog::open(dir.path().join("x.jsonl")).unwrap();
        log.append(&serde_json::json!({"a": 1})).unwrap();
        log.append(&serde_json::json!({"a": 2})).unwrap();
        let back: Vec<serde_json::Value> = log.read_all().unwrap();
        assert_eq!(back, vec![serde_json::json!({"a": 1}), serde_json::json!({"a": 2})]);
    }

    #[test]
    fn torn_tail_is_dropped_but_middle_corruption_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        fs::write(&path, "{\"a\":1}\n{\"a\":").unwrap();
        let log = JsonlLog::open(&path).unwrap();
        let back: Vec<serde_json::Value> = log.read_all().unwrap();
        assert_eq!(back.len(), 1);

        fs::write(&path, "{\"a\":1}\nnot json\n{\"a\":2}\n").unwrap();
        assert!(matches!(log.read_all::<serde_json::Value>(), Err(StoreError::Decode { line: 2, .. })));
    }

    #[test]
    fn stats_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.read_stats("uc").unwrap(), None);
        store.write_stats("uc", &[]).unwrap();
        assert_eq!(store.read_stats("uc").unwrap(), Some(vec![]));
    }
}
