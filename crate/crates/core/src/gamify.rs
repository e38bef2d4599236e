//! Interaction points and levels.
//!
//! A profile is a fold of its event counts over a [`PointsTable`]; points and
//! level are never stored independently of the counts.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GamifyError {
    #[error("unknown event type {0:?}")]
    UnknownEvent(String),
    #[error("user id must not be empty")]
    EmptyUser,
    #[error("level thresholds must start at 0 and increase: {0:?}")]
    Thresholds(Vec<u64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    ViewReport,
    OpenPoiOverlay,
    RunSimulation,
    ViewArtwork,
    SubmitReport,
}

impl EventType {
    pub const ALL: [EventType; 5] = [
        EventType::ViewReport,
        EventType::OpenPoiOverlay,
        EventType::RunSimulation,
        EventType::ViewArtwork,
        EventType::SubmitReport,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::ViewReport => "view_report",
            EventType::OpenPoiOverlay => "open_poi_overlay",
            EventType::RunSimulation => "run_simulation",
            EventType::ViewArtwork => "view_artwork",
            EventType::SubmitReport => "submit_report",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventType {
    type Err = GamifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventType::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| GamifyError::UnknownEvent(s.to_string()))
    }
}

/// Point value per event and the point thresholds of levels 1, 2, ...
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointsTable {
    pub points: BTreeMap<EventType, u64>,
    pub thresholds: Vec<u64>,
}

impl Default for PointsTable {
    fn default() -> Self {
        let points = BTreeMap::from([
            (EventType::ViewReport, 1),
            (EventType::OpenPoiOverlay, 2),
            (EventType::ViewArtwork, 2),
            (EventType::RunSimulation, 5),
            (EventType::SubmitReport, 10),
        ]);
        Self {
            points,
            thresholds: vec![0, 50, 150, 400],
        }
    }
}

impl PointsTable {
    pub fn validate(&self) -> Result<(), GamifyError> {
        let ok = self.thresholds.first() == Some(&0) && self.thresholds.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(())
        } else {
            Err(GamifyError::Thresholds(self.thresholds.clone()))
        }
    }

    pub fn value(&self, event: EventType) -> u64 {
        self.points.get(&event).copied().unwrap_or(0)
    }

    /// 1-based index of the highest threshold reached.
    pub fn level_for(&self, points: u64) -> u32 {
        self.thresholds.iter().take_while(|t| points >= **t).count().max(1) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub points: u64,
    pub level: u32,
    pub event_counts: BTreeMap<EventType, u64>,
}

impl UserProfile {
    pub fn new(user_id: impl Into<String>) -> Self {
        Self {
            user_id: user_id.into(),
            points: 0,
            level: 1,
            event_counts: BTreeMap::new(),
        }
    }

    /// Rebuilds points and level from counts alone.
    pub fn from_counts(user_id: impl Into<String>, event_counts: BTreeMap<EventType, u64>, table: &PointsTable) -> Self {
        let points = event_counts.iter().map(|(e, n)| n * table.value(*e)).sum();
        Self {
            user_id: user_id.into(),
            points,
            level: table.level_for(points),
            event_counts,
        }
    }
}

pub fn record_event(mut profile: UserProfile, event: EventType, table: &PointsTable) -> UserProfile {
    *profile.event_counts.entry(event).or_insert(0) += 1;
    profile.points += table.value(event);
    profile.level = table.level_for(profile.points);
    profile
}

/// Profiles of all users, serialized per user.
#[derive(Debug, Default)]
pub struct Ledger {
    table: PointsTable,
    profiles: Mutex<HashMap<String, Arc<Mutex<UserProfile>>>>,
}

impl Ledger {
    pub fn new(table: PointsTable) -> Result<Self, GamifyError> {
        table.validate()?;
        Ok(Self {
            table,
            profiles: Mutex::new(HashMap::new()),
        })
    }

    pub fn table(&self) -> &PointsTable {
        &self.table
    }

    fn slot(&self, user_id: &str) -> Arc<Mutex<UserProfile>> {
        self.profiles
            .lock()
            .entry(user_id.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(UserProfile::new(user_id))))
            .clone()
    }

    /// Parses `event_type` and applies it. `commit` runs under the user's lock
    /// before the profile changes, so a failed write leaves the profile intact.
    pub fn record<E>(
        &self,
        user_id: &str,
        event_type: &str,
        commit: impl FnOnce(EventType) -> Result<(), E>,
    ) -> Result<Result<UserProfile, E>, GamifyError> {
        if user_id.trim().is_empty() {
            return Err(GamifyError::EmptyUser);
        }
        let event: EventType = event_type.parse()?;
        let slot = self.slot(user_id);
        let mut profile = slot.lock();
        if let Err(e) = commit(event) {
            return Ok(Err(e));
        }
        *profile = record_event(profile.clone(), event, &self.table);
        Ok(Ok(profile.clone()))
    }

    /// Applies an already-validated event, e.g. while replaying a log.
    pub fn apply(&self, user_id: &str, event: EventType) -> UserProfile {
        let slot = self.slot(user_id);
        let mut profile = slot.lock();
        *profile = record_event(profile.clone(), event, &self.table);
        profile.clone()
    }

    pub fn profile(&self, user_id: &str) -> Option<UserProfile> {
        let slot = self.profiles.lock().get(user_id).cloned()?;
        let profile = slot.lock().clone();
        Some(profile)
    }

    pub fn len(&self) -> usize {
        self.profiles.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
