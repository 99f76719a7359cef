use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::detections::{Detection, IncidentalReport, ModelRun};
use crate::error::Result;
use crate::fieldops::{Determination, FieldResponse};
use crate::registry::{Org, RegistryDocs};
use crate::routing::{Assignment, ScreeningItem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RegistryLoaded,
    RunRegistered,
    DetectionsIngested,
    ScreeningQueued,
    ScreeningDecided,
    AssignmentCreated,
    ResponseSubmitted,
    ResponseAmended,
    DeterminationSubmitted,
    IncidentalReported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionsIngested {
    pub run_id: String,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningQueued {
    pub run_id: String,
    pub items: Vec<ScreeningItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningDecided {
    pub item: ScreeningItem,
    pub assignment: Option<Assignment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentsCreated {
    pub run_id: String,
    pub org: Org,
    pub assignments: Vec<Assignment>,
}

/// A state change. Payloads carry results, never requests, so replay does
/// not depend on configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    RegistryLoaded(RegistryDocs),
    RunRegistered(ModelRun),
    DetectionsIngested(DetectionsIngested),
    ScreeningQueued(ScreeningQueued),
    ScreeningDecided(ScreeningDecided),
    AssignmentCreated(AssignmentsCreated),
    ResponseSubmitted(FieldResponse),
    ResponseAmended(FieldResponse),
    DeterminationSubmitted(Determination),
    IncidentalReported(IncidentalReport),
}

impl Event {
    pub fn kind(&self) -> EventKind {
        match self {
            Event::RegistryLoaded(_) => EventKind::RegistryLoaded,
            Event::RunRegistered(_) => EventKind::RunRegistered,
            Event::DetectionsIngested(_) => EventKind::DetectionsIngested,
            Event::ScreeningQueued(_) => EventKind::ScreeningQueued,
            Event::ScreeningDecided(_) => EventKind::ScreeningDecided,
            Event::AssignmentCreated(_) => EventKind::AssignmentCreated,
            Event::ResponseSubmitted(_) => EventKind::ResponseSubmitted,
            Event::ResponseAmended(_) => EventKind::ResponseAmended,
            Event::DeterminationSubmitted(_) => EventKind::DeterminationSubmitted,
            Event::IncidentalReported(_) => EventKind::IncidentalReported,
        }
    }

    pub fn payload(&self) -> Value {
        let v = match self {
            Event::RegistryLoaded(p) => serde_json::to_value(p),
            Event::RunRegistered(p) => serde_json::to_value(p),
            Event::DetectionsIngested(p) => serde_json::to_value(p),
            Event::ScreeningQueued(p) => serde_json::to_value(p),
            Event::ScreeningDecided(p) => serde_json::to_value(p),
            Event::AssignmentCreated(p) => serde_json::to_value(p),
            Event::ResponseSubmitted(p) | Event::ResponseAmended(p) => serde_json::to_value(p),
            Event::DeterminationSubmitted(p) => serde_json::to_value(p),
            Event::IncidentalReported(p) => serde_json::to_value(p),
        };
        v.expect("event payloads serialize")
    }

    pub fn from_parts(kind: EventKind, payload: Value) -> Result<Event> {
        use serde_json::from_value as de;
        Ok(match kind {
            EventKind::RegistryLoaded => Event::RegistryLoaded(de(payload)?),
            EventKind::RunRegistered => Event::RunRegistered(de(payload)?),
            EventKind::DetectionsIngested => Event::DetectionsIngested(de(payload)?),
            EventKind::ScreeningQueued => Event::ScreeningQueued(de(payload)?),
            EventKind::ScreeningDecided => Event::ScreeningDecided(de(payload)?),
            EventKind::AssignmentCreated => Event::AssignmentCreated(de(payload)?),
            EventKind::ResponseSubmitted => Event::ResponseSubmitted(de(payload)?),
            EventKind::ResponseAmended => Event::ResponseAmended(de(payload)?),
            EventKind::DeterminationSubmitted => Event::DeterminationSubmitted(de(payload)?),
            EventKind::IncidentalReported => Event::IncidentalReported(de(payload)?),
        })
    }
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub recorded_at: DateTime<Utc>,
    pub kind: EventKind,
    pub payload: Value,
}

impl EventRecord {
    pub fn new(seq: u64, recorded_at: DateTime<Utc>, event: &Event) -> Self {
        EventRecord {
            seq,
            recorded_at,
            kind: event.kind(),
            payload: event.payload(),
        }
    }

    pub fn event(&self) -> Result<Event> {
        Event::from_parts(self.kind, self.payload.clone())
    }
}
