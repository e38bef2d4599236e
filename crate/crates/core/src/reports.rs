//! Guided hazard-report conversation and the report registry.
//!
//! A [`ChatSession`] walks a fixed sequence of prompts:
//!
//! ```text
//! Idle -> AwaitLocation -> AwaitHazardType -> AwaitDescription -> AwaitMedia
//!      -> AwaitMeasurements -> AwaitImpact -> AwaitRisk -> Confirm -> Idle
//! ```
//!
//! [`advance`] is a pure transition function. Invalid input never errors: the
//! session keeps its state and the reply carries a validation message. `/cancel`
//! returns to `Idle` from anywhere, and `/skip` moves past the four optional
//! steps. Media accumulate in `AwaitMedia` until `/skip`; the measurement, impact
//! and risk steps take one message holding `;`-separated entries and then move on.
//!
//! [`ChatEngine`] owns the live sessions, serializes messages per session and
//! hands confirmed reports to a [`ReportSink`] before indexing them in a
//! [`ReportRegistry`].

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geo::{GeoError, GeoPoint, SpatialIndex};

/// Sessions idle for longer than this restart from `Idle`.
pub const SESSION_TIMEOUT_MINUTES: i64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HazardType {
    Fire,
    Flood,
    Storm,
    Landslide,
    Erosion,
    Vandalism,
    Other,
}

impl HazardType {
    pub const ALL: [HazardType; 7] = [
        HazardType::Fire,
        HazardType::Flood,
        HazardType::Storm,
        HazardType::Landslide,
        HazardType::Erosion,
        HazardType::Vandalism,
        HazardType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HazardType::Fire => "fire",
            HazardType::Flood => "flood",
            HazardType::Storm => "storm",
            HazardType::Landslide => "landslide",
            HazardType::Erosion => "erosion",
            HazardType::Vandalism => "vandalism",
            HazardType::Other => "other",
        }
    }
}

impl fmt::Display for HazardType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HazardType {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_lowercase();
        HazardType::ALL
            .into_iter()
            .find(|h| h.as_str() == wanted)
            .ok_or_else(|| ReportError::UnknownHazard(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Photo,
    Video,
    Voice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaRef {
    pub kind: MediaKind,
    pub uri: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub measurement_type: String,
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpactIndicator {
    pub indicator: String,
    pub severity: u8,
}

/// A finished, citizen-submitted hazard observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardReport {
    pub id: String,
    pub location: GeoPoint,
    pub hazard_type: HazardType,
    pub description: String,
    pub media: Vec<MediaRef>,
    pub measurements: Vec<Measurement>,
    pub impact_indicators: Vec<ImpactIndicator>,
    pub risk_elements: Vec<String>,
    pub created_at: DateTime<Utc>,
    pub reporter: String,
}

impl HazardReport {
    pub fn validate(&self) -> Result<(), ReportError> {
        if self.id.trim().is_empty() {
            return Err(ReportError::Invalid("empty id".into()));
        }
        if self.description.trim().is_empty() {
            return Err(ReportError::Invalid("empty description".into()));
        }
        if let Some(bad) = self.impact_indicators.iter().find(|i| !(1..=5).contains(&i.severity)) {
            return Err(ReportError::Invalid(format!(
                "severity {} of {} outside 1-5",
                bad.severity, bad.indicator
            )));
        }
        if self.measurements.iter().any(|m| !m.value.is_finite()) {
            return Err(ReportError::Invalid("non-finite measurement".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("unknown hazard type {0:?}")]
    UnknownHazard(String),
    #[error("invalid report: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("submit requires the confirm state, session is in {0:?}")]
    NotConfirming(ChatState),
    #[error("draft is missing {0}")]
    Incomplete(&'static str),
}

/// Co-created vocabularies accepted by the optional steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportVocabulary {
    pub measurement_types: Vec<String>,
    pub impact_indicators: Vec<String>,
    /// `None` accepts free text.
    #[serde(default)]
    pub risk_elements: Option<Vec<String>>,
}

impl Default for ReportVocabulary {
    fn default() -> Self {
        Self {
            measurement_types: ["water_depth", "wind_speed", "crack_width"].map(String::from).to_vec(),
            impact_indicators: ["structural", "access", "visitor_safety"].map(String::from).to_vec(),
            risk_elements: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatState {
    Idle,
    AwaitLocation,
    AwaitHazardType,
    AwaitDescription,
    AwaitMedia,
    AwaitMeasurements,
    AwaitImpact,
    AwaitRisk,
    Confirm,
}

impl ChatState {
    pub const ALL: [ChatState; 9] = [
        ChatState::Idle,
        ChatState::AwaitLocation,
        ChatState::AwaitHazardType,
        ChatState::AwaitDescription,
        ChatState::AwaitMedia,
        ChatState::AwaitMeasurements,
        ChatState::AwaitImpact,
        ChatState::AwaitRisk,
        ChatState::Confirm,
    ];

    fn next(self) -> ChatState {
        use ChatState::*;
        match self {
            Idle => AwaitLocation,
            AwaitLocation => AwaitHazardType,
            AwaitHazardType => AwaitDescription,
            AwaitDescription => AwaitMedia,
            AwaitMedia => AwaitMeasurements,
            AwaitMeasurements => AwaitImpact,
            AwaitImpact => AwaitRisk,
            AwaitRisk => Confirm,
            Confirm => Idle,
        }
    }

    fn skippable(self) -> bool {
        matches!(
            self,
            ChatState::AwaitMedia | ChatState::AwaitMeasurements | ChatState::AwaitImpact | ChatState::AwaitRisk
        )
    }
}

/// Partially filled report carried by a session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Draft {
    pub location: Option<GeoPoint>,
    pub hazard_type: Option<HazardType>,
    pub description: Option<String>,
    pub media: Vec<MediaRef>,
    pub measurements: Vec<Measurement>,
    pub impact_indicators: Vec<ImpactIndicator>,
    pub risk_elements: Vec<String>,
}

impl Draft {
    /// True when exactly the mandatory fields of the steps before `state` are set.
    pub fn consistent_with(&self, state: ChatState) -> bool {
        use ChatState::*;
        let passed = |s: ChatState| (s as u8) < (state as u8) && state != Idle;
        let set = [
            (AwaitLocation, self.location.is_some()),
            (AwaitHazardType, self.hazard_type.is_some()),
            (AwaitDescription, self.description.is_some()),
        ];
        let mandatory_ok = set.iter().all(|(s, present)| passed(*s) == *present);
        let optional_ok = (passed(AwaitMedia) || state == AwaitMedia || self.media.is_empty())
            && (passed(AwaitMeasurements) || self.measurements.is_empty())
            && (passed(AwaitImpact) || self.impact_indicators.is_empty())
            && (passed(AwaitRisk) || self.risk_elements.is_empty());
        mandatory_ok && optional_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    pub state: ChatState,
    pub draft: Draft,
    pub updated_at: DateTime<Utc>,
}

impl ChatSession {
    pub fn new(session_id: impl Into<String>, now: DateTime<Utc>) -> Self {
        Self {
            session_id: session_id.into(),
            state: ChatState::Idle,
            draft: Draft::default(),
            updated_at: now,
        }
    }

    fn reset(&mut self) {
        self.state = ChatState::Idle;
        self.draft = Draft::default();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageKind {
    Text,
    Location,
    Photo,
    Video,
    Voice,
    Command,
}

/// Raw coordinates as sent over the wire; range-checked by the flow, not the parser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireLocation {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub session_id: String,
    pub kind: MessageKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<WireLocation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_uri: Option<String>,
}

impl ChatMessage {
    pub fn command(session_id: &str, cmd: &str) -> Self {
        Self::with_text(session_id, MessageKind::Command, cmd)
    }

    pub fn text(session_id: &str, text: &str) -> Self {
        Self::with_text(session_id, MessageKind::Text, text)
    }

    pub fn location(session_id: &str, lat: f64, lon: f64) -> Self {
        Self {
            session_id: session_id.into(),
            kind: MessageKind::Location,
            text: None,
            location: Some(WireLocation { lat, lon }),
            media_uri: None,
        }
    }

    pub fn media(session_id: &str, kind: MessageKind, uri: &str) -> Self {
        Self {
            session_id: session_id.into(),
            kind,
            text: None,
            location: None,
            media_uri: Some(uri.into()),
        }
    }

    fn with_text(session_id: &str, kind: MessageKind, text: &str) -> Self {
        Self {
            session_id: session_id.into(),
            kind,
            text: Some(text.into()),
            location: None,
            media_uri: None,
        }
    }

    /// Checks that the payload field required by `kind` is present.
    pub fn check_shape(&self) -> Result<(), String> {
        match self.kind {
            MessageKind::Location if self.location.is_none() => Err("location message without location".into()),
            MessageKind::Photo | MessageKind::Video | MessageKind::Voice
                if self.media_uri.as_deref().is_none_or(|u| u.trim().is_empty()) =>
            {
                Err("media message without media_uri".into())
            }
            MessageKind::Text | MessageKind::Command if self.text.is_none() => Err("message without text".into()),
            _ => Ok(()),
        }
    }

    fn command_word(&self) -> Option<String> {
        let text = self.text.as_deref()?.trim();
        if self.kind == MessageKind::Command || text.starts_with('/') {
            Some(text.split_whitespace().next().unwrap_or("").to_lowercase())
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotReply {
    pub session_id: String,
    pub state: ChatState,
    pub text: String,
    pub options: Vec<String>,
    /// False when the message was rejected and the state did not move.
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_id: Option<String>,
}

/// Result of one transition.
#[derive(Debug, Clone)]
pub struct Advance {
    pub session: ChatSession,
    pub reply: BotReply,
    pub submitted: Option<HazardReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Confirmation {
    Yes,
    No,
}

impl FromStr for Confirmation {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "yes" | "y" => Ok(Confirmation::Yes),
            "no" | "n" => Ok(Confirmation::No),
            _ => Err(()),
        }
    }
}

/// Pseudonymous reporter id derived from the session id.
pub fn reporter_pseudonym(session_id: &str) -> String {
    let digest = Sha256::digest(session_id.as_bytes());
    let hex: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
    format!("anon-{hex}")
}

/// Finalizes or discards the draft of a session sitting in `Confirm`.
///
/// On `Yes` the returned report has a fresh id and `created_at = now`; either way
/// the session goes back to `Idle`.
pub fn submit(
    session: &mut ChatSession,
    confirmation: Confirmation,
    now: DateTime<Utc>,
) -> Result<Option<HazardReport>, StateError> {
    if session.state != ChatState::Confirm {
        return Err(StateError::NotConfirming(session.state));
    }
    if confirmation == Confirmation::No {
        session.reset();
        session.updated_at = now;
        return Ok(None);
    }
    let draft = &session.draft;
    let location = draft.location.ok_or(StateError::Incomplete("location"))?;
    let hazard_type = draft.hazard_type.ok_or(StateError::Incomplete("hazard_type"))?;
    let description = draft.description.clone().ok_or(StateError::Incomplete("description"))?;
    let report = HazardReport {
        id: uuid::Uuid::new_v4().to_string(),
        location,
        hazard_type,
        description,
        media: draft.media.clone(),
        measurements: draft.measurements.clone(),
        impact_indicators: draft.impact_indicators.clone(),
        risk_elements: draft.risk_elements.clone(),
        created_at: now,
        reporter: reporter_pseudonym(&session.session_id),
    };
    session.reset();
    session.updated_at = now;
    Ok(Some(report))
}

/// Applies one message to a session.
pub fn advance(mut session: ChatSession, msg: &ChatMessage, vocab: &ReportVocabulary, now: DateTime<Utc>) -> Advance {
    if session.state != ChatState::Idle && now - session.updated_at > Duration::minutes(SESSION_TIMEOUT_MINUTES) {
        session.reset();
    }
    session.updated_at = now;

    let outcome = step(&mut session, msg, vocab, now);
    let (text, accepted, submitted) = match outcome {
        Step::Moved(submitted) => (prompt(&session, vocab), true, submitted),
        Step::Rejected(why) => (format!("{why} {}", prompt(&session, vocab)), false, None),
    };
    let reply = BotReply {
        session_id: session.session_id.clone(),
        state: session.state,
        options: options(session.state, vocab),
        text,
        accepted,
        report_id: submitted.as_ref().map(|r| r.id.clone()),
    };
    Advance {
        session,
        reply,
        submitted,
    }
}

enum Step {
    Moved(Option<HazardReport>),
    Rejected(String),
}

fn step(session: &mut ChatSession, msg: &ChatMessage, vocab: &ReportVocabulary, now: DateTime<Utc>) -> Step {
    use ChatState::*;
    if let Err(why) = msg.check_shape() {
        return Step::Rejected(format!("Malformed message: {why}."));
    }
    let command = msg.command_word();
    if command.as_deref() == Some("/cancel") {
        session.reset();
        return Step::Moved(None);
    }
    if command.as_deref() == Some("/skip") {
        if session.state.skippable() {
            session.state = session.state.next();
            return Step::Moved(None);
        }
        return Step::Rejected("This step cannot be skipped.".into());
    }
    let text = msg.text.as_deref().map(str::trim).unwrap_or("");

    match session.state {
        Idle => {
            if command.as_deref() == Some("/report") {
                session.draft = Draft::default();
                session.state = AwaitLocation;
                Step::Moved(None)
            } else {
                Step::Rejected("Nothing in progress.".into())
            }
        }
        _ if command.is_some() => Step::Rejected(format!("Unknown command {}.", command.unwrap_or_default())),
        AwaitLocation => {
            let Some(loc) = msg.location.filter(|_| msg.kind == MessageKind::Location) else {
                return Step::Rejected("Please share a location.".into());
            };
            match GeoPoint::new(loc.lat, loc.lon) {
                Ok(p) => {
                    session.draft.location = Some(p);
                    session.state = AwaitHazardType;
                    Step::Moved(None)
                }
                Err(e) => Step::Rejected(format!("Invalid location: {e}.")),
            }
        }
        AwaitHazardType => match text.parse::<HazardType>() {
            Ok(h) if msg.kind == MessageKind::Text => {
                session.draft.hazard_type = Some(h);
                session.state = AwaitDescription;
                Step::Moved(None)
            }
            _ => Step::Rejected("Please pick one of the listed hazard types.".into()),
        },
        AwaitDescription => {
            if msg.kind != MessageKind::Text || text.is_empty() {
                return Step::Rejected("A description is required.".into());
            }
            session.draft.description = Some(text.to_string());
            session.state = AwaitMedia;
            Step::Moved(None)
        }
        AwaitMedia => {
            let kind = match msg.kind {
                MessageKind::Photo => MediaKind::Photo,
                MessageKind::Video => MediaKind::Video,
                MessageKind::Voice => MediaKind::Voice,
                _ => return Step::Rejected("Please send a photo, video or voice message.".into()),
            };
            let uri = msg.media_uri.clone().unwrap_or_default();
            session.draft.media.push(MediaRef { kind, uri });
            Step::Moved(None)
        }
        AwaitMeasurements => match parse_entries(text, |e| parse_measurement(e, vocab)) {
            Ok(list) if msg.kind == MessageKind::Text => {
                session.draft.measurements = list;
                session.state = AwaitImpact;
                Step::Moved(None)
            }
            Ok(_) => Step::Rejected("Please send measurements as text.".into()),
            Err(why) => Step::Rejected(why),
        },
        AwaitImpact => match parse_entries(text, |e| parse_impact(e, vocab)) {
            Ok(list) if msg.kind == MessageKind::Text => {
                session.draft.impact_indicators = list;
                session.state = AwaitRisk;
                Step::Moved(None)
            }
            Ok(_) => Step::Rejected("Please send impacts as text.".into()),
            Err(why) => Step::Rejected(why),
        },
        AwaitRisk => match parse_entries(text, |e| parse_risk(e, vocab)) {
            Ok(list) if msg.kind == MessageKind::Text => {
                session.draft.risk_elements = list;
                session.state = Confirm;
                Step::Moved(None)
            }
            Ok(_) => Step::Rejected("Please send risk elements as text.".into()),
            Err(why) => Step::Rejected(why),
        },
        Confirm => match text.parse::<Confirmation>() {
            Ok(c) if msg.kind == MessageKind::Text => match submit(session, c, now) {
                Ok(report) => Step::Moved(report),
                Err(e) => {
                    session.reset();
                    Step::Rejected(format!("Draft discarded: {e}."))
                }
            },
            _ => Step::Rejected("Please answer yes or no.".into()),
        },
    }
}

fn parse_entries<T>(text: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let entries: Vec<&str> = text.split(';').map(str::trim).filter(|e| !e.is_empty()).collect();
    if entries.is_empty() {
        return Err("Nothing recognised; send at least one entry or /skip.".into());
    }
    entries.into_iter().map(parse).collect()
}

fn parse_measurement(entry: &str, vocab: &ReportVocabulary) -> Result<Measurement, String> {
    let mut parts = entry.split_whitespace();
    let (Some(kind), Some(value), unit) = (parts.next(), parts.next(), parts.collect::<Vec<_>>().join(" ")) else {
        return Err(format!("Could not read {entry:?}; expected '<type> <value> <unit>'."));
    };
    let kind = kind.to_lowercase();
    if !vocab.measurement_types.contains(&kind) {
        return Err(format!("Unknown measurement type {kind:?}."));
    }
    let value: f64 = value
        .parse()
        .ok()
        .filter(|v: &f64| v.is_finite())
        .ok_or_else(|| format!("{value:?} is not a number."))?;
    if unit.is_empty() {
        return Err(format!("Missing unit in {entry:?}."));
    }
    Ok(Measurement {
        measurement_type: kind,
        value,
        unit,
    })
}

fn parse_impact(entry: &str, vocab: &ReportVocabulary) -> Result<ImpactIndicator, String> {
    let parts: Vec<&str> = entry.split_whitespace().collect();
    let [indicator, severity] = parts.as_slice() else {
        return Err(format!("Could not read {entry:?}; expected '<indicator> <severity 1-5>'."));
    };
    let indicator = indicator.to_lowercase();
    if !vocab.impact_indicators.contains(&indicator) {
        return Err(format!("Unknown impact indicator {indicator:?}."));
    }
    match severity.parse::<u8>() {
        Ok(s @ 1..=5) => Ok(ImpactIndicator { indicator, severity: s }),
        _ => Err(format!("Severity {severity:?} must be an integer from 1 to 5.")),
    }
}

fn parse_risk(entry: &str, vocab: &ReportVocabulary) -> Result<String, String> {
    match &vocab.risk_elements {
        Some(allowed) if !allowed.iter().any(|a| a.eq_ignore_ascii_case(entry)) => {
            Err(format!("Unknown risk element {entry:?}."))
        }
        _ => Ok(entry.to_string()),
    }
}

fn prompt(session: &ChatSession, vocab: &ReportVocabulary) -> String {
    use ChatState::*;
    match session.state {
        Idle => "Send /report to start a hazard report.".into(),
        AwaitLocation => "Share the GPS location of the hazard.".into(),
        AwaitHazardType => "What type of hazard is it?".into(),
        AwaitDescription => "Describe briefly what you observed.".into(),
        AwaitMedia => format!(
            "Send photos, videos or voice messages of the event ({} so far). Send /skip when done.",
            session.draft.media.len()
        ),
        AwaitMeasurements => format!(
            "Add measurements as '<type> <value> <unit>' separated by ';' (types: {}), or /skip.",
            vocab.measurement_types.join(", ")
        ),
        AwaitImpact => format!(
            "Rate impacts as '<indicator> <severity 1-5>' separated by ';' (indicators: {}), or /skip.",
            vocab.impact_indicators.join(", ")
        ),
        AwaitRisk => "List the elements at risk separated by ';', or /skip.".into(),
        Confirm => format!("{}\nSubmit this report?", summary(&session.draft)),
    }
}

fn summary(d: &Draft) -> String {
    let loc = d
        .location
        .map(|p| format!("{:.5}, {:.5}", p.lat(), p.lon()))
        .unwrap_or_default();
    let media: Vec<String> = d.media.iter().map(|m| m.uri.clone()).collect();
    let measurements: Vec<String> = d
        .measurements
        .iter()
        .map(|m| format!("{} {} {}", m.measurement_type, m.value, m.unit))
        .collect();
    let impacts: Vec<String> = d
        .impact_indicators
        .iter()
        .map(|i| format!("{} {}", i.indicator, i.severity))
        .collect();
    format!(
        "Location: {loc}\nHazard: {}\nDescription: {}\nMedia: {}\nMeasurements: {}\nImpacts: {}\nRisk: {}",
        d.hazard_type.map(HazardType::as_str).unwrap_or(""),
        d.description.as_deref().unwrap_or(""),
        media.join(", "),
        measurements.join("; "),
        impacts.join("; "),
        d.risk_elements.join("; "),
    )
}

fn options(state: ChatState, vocab: &ReportVocabulary) -> Vec<String> {
    use ChatState::*;
    let skip = || vec!["/skip".to_string()];
    match state {
        Idle => vec!["/report".into()],
        AwaitHazardType => HazardType::ALL.iter().map(|h| h.as_str().to_string()).collect(),
        AwaitMedia | AwaitRisk => match (&vocab.risk_elements, state) {
            (Some(list), AwaitRisk) => list.iter().cloned().chain(skip()).collect(),
            _ => skip(),
        },
        AwaitMeasurements => vocab.measurement_types.iter().cloned().chain(skip()).collect(),
        AwaitImpact => vocab.impact_indicators.iter().cloned().chain(skip()).collect(),
        Confirm => vec!["yes".into(), "no".into()],
        AwaitLocation | AwaitDescription => Vec::new(),
    }
}

/// Destination for confirmed reports. Implementations must serialize writes.
pub trait ReportSink: Send + Sync {
    fn persist(&self, report: &HazardReport) -> Result<(), String>;
}

/// Sink that keeps nothing; useful when the registry is the only store.
#[derive(Debug, Default)]
pub struct DiscardSink;

impl ReportSink for DiscardSink {
    fn persist(&self, _report: &HazardReport) -> Result<(), String> {
        Ok(())
    }
}

/// Stored reports plus their spatial index.
#[derive(Debug, Default)]
pub struct ReportRegistry {
    reports: RwLock<HashMap<String, HazardReport>>,
    index: RwLock<SpatialIndex>,
}

impl ReportRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, report: HazardReport) -> Result<(), ReportError> {
        report.validate()?;
        let mut reports = self.reports.write();
        self.index.write().insert(report.id.clone(), report.location);
        reports.insert(report.id.clone(), report);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<HazardReport> {
        self.reports.read().get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.reports.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> Vec<HazardReport> {
        let mut all: Vec<_> = self.reports.read().values().cloned().collect();
        all.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        all
    }

    /// Reports within `radius_m` of `center`, nearest first.
    pub fn nearby(&self, center: GeoPoint, radius_m: f64) -> Result<Vec<(HazardReport, f64)>, GeoError> {
        let reports = self.reports.read();
        let hits = self.index.read().query_radius(center, radius_m)?;
        Ok(hits
            .into_iter()
            .filter_map(|(id, d)| reports.get(&id).map(|r| (r.clone(), d)))
            .collect())
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("failed to persist report: {0}")]
    Persist(String),
    #[error(transparent)]
    Report(#[from] ReportError),
}

/// Live sessions plus the plumbing that stores what they submit.
pub struct ChatEngine {
    sessions: Mutex<HashMap<String, Arc<Mutex<ChatSession>>>>,
    vocab: ReportVocabulary,
    registry: Arc<ReportRegistry>,
    sink: Arc<dyn ReportSink>,
}

impl ChatEngine {
    pub fn new(vocab: ReportVocabulary, registry: Arc<ReportRegistry>, sink: Arc<dyn ReportSink>) -> Self {
        Self {
            sessions: Mutex::new(HashMap::new()),
            vocab,
            registry,
            sink,
        }
    }

    pub fn registry(&self) -> &Arc<ReportRegistry> {
        &self.registry
    }

    pub fn vocabulary(&self) -> &ReportVocabulary {
        &self.vocab
    }

    /// Snapshot of a session, if it exists.
    pub fn session(&self, session_id: &str) -> Option<ChatSession> {
        let slot = self.sessions.lock().get(session_id).cloned()?;
        let session = slot.lock().clone();
        Some(session)
    }

    /// Handles one message; unknown session ids start a fresh `Idle` session.
    ///
    /// The session only moves forward once a submitted report is persisted and
    /// indexed.
    pub fn handle(&self, msg: &ChatMessage, now: DateTime<Utc>) -> Result<BotReply, EngineError> {
        let slot = self
            .sessions
            .lock()
            .entry(msg.session_id.clone())
            .or_insert_with(|| Arc::new(Mutex::new(ChatSession::new(msg.session_id.clone(), now))))
            .clone();
        let mut session = slot.lock();
        let Advance {
            session: next,
            reply,
            submitted,
        } = advance(session.clone(), msg, &self.vocab, now);
        if let Some(report) = submitted {
            report.validate()?;
            self.sink.persist(&report).map_err(EngineError::Persist)?;
            self.registry.insert(report)?;
        }
        *session = next;
        Ok(reply)
    }
}
