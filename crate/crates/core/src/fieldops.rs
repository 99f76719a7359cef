//! Field responses, regulator determinations, follow-up latency and packet
//! manifests.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::compliance::{Compliance, SpreadEvent};
use crate::detections::{Detection, ModelRun};
use crate::error::{Error, Result};
use crate::geo::GeoBBox;
use crate::registry::Org;
use crate::routing::Assignment;

/// Exact header names of the bulk response import.
pub const RESPONSE_CSV_HEADERS: [&str; 6] = [
    "assignment_id",
    "visited_on",
    "location_visible",
    "manure_present",
    "reporter_confidence",
    "notes",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReporterConfidence {
    High,
    Medium,
    Low,
}

impl ReporterConfidence {
    pub const ALL: [ReporterConfidence; 3] = [ReporterConfidence::High, ReporterConfidence::Medium, ReporterConfidence::Low];

    pub fn as_str(self) -> &'static str {
        match self {
            ReporterConfidence::High => "high",
            ReporterConfidence::Medium => "medium",
            ReporterConfidence::Low => "low",
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldResponse {
    #[serde(default)]
    pub response_id: String,
    pub assignment_id: String,
    pub visited_on: NaiveDate,
    /// False when the verifier went out but could not get to the site at
    /// all. Such responses count as follow-ups, not as visits.
    #[serde(default = "yes")]
    pub site_reached: bool,
    pub location_visible: bool,
    #[serde(default)]
    pub manure_present: Option<bool>,
    #[serde(default)]
    pub reporter_confidence: Option<ReporterConfidence>,
    #[serde(default)]
    pub notes: String,
    #[serde(default)]
    pub photo_uris: Vec<String>,
}

impl FieldResponse {
    pub fn default_id(assignment_id: &str) -> String {
        format!("resp-{assignment_id}")
    }

    /// Checks the response against its assignment.
    pub fn validate(&self, a: &Assignment) -> Result<()> {
        if a.org != Org::Elpc {
            return Err(Error::validation(
                "wrong_org",
                "assignment_id",
                format!("assignment '{}' belongs to {}; field responses are for elpc", a.assignment_id, a.org),
            ));
        }
        if self.visited_on < a.dispatched_on {
            return Err(Error::validation(
                "visit_before_dispatch",
                "visited_on",
                format!("visited_on {} precedes dispatch {}", self.visited_on, a.dispatched_on),
            ));
        }
        if !self.site_reached && self.location_visible {
            return Err(Error::validation("unreached_but_visible", "location_visible", "an unreached site cannot be visible"));
        }
        match (self.location_visible, self.manure_present) {
            (false, Some(_)) => Err(Error::validation(
                "manure_without_visibility",
                "manure_present",
                "manure_present must be absent when the location was not visible",
            )),
            (true, None) => Err(Error::validation(
                "missing_manure_present",
                "manure_present",
                "manure_present is required when the location was visible",
            )),
            _ => Ok(()),
        }
    }

    pub fn confirmed(&self) -> bool {
        self.manure_present == Some(true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Determination {
    #[serde(default)]
    pub determination_id: String,
    pub assignment_id: String,
    pub decided_on: NaiveDate,
    pub manure_present: bool,
    #[serde(default)]
    pub compliance: Option<Compliance>,
    #[serde(default)]
    pub method_notes: String,
    /// Facts the ruling rests on; when given, the engine classifies them
    /// and requires any stated compliance to agree.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<SpreadEvent>,
}

impl Determination {
    pub fn default_id(assignment_id: &str) -> String {
        format!("det-{assignment_id}")
    }

    pub fn validate(&self, a: &Assignment) -> Result<()> {
        if a.org != Org::Wdnr {
            return Err(Error::validation(
                "wrong_org",
                "assignment_id",
                format!("assignment '{}' belongs to {}; determinations are for wdnr", a.assignment_id, a.org),
            ));
        }
        if self.decided_on < a.dispatched_on {
            return Err(Error::validation(
                "decision_before_dispatch",
                "decided_on",
                format!("decided_on {} precedes dispatch {}", self.decided_on, a.dispatched_on),
            ));
        }
        match (self.manure_present, self.compliance) {
            (false, Some(_)) => Err(Error::validation(
                "compliance_without_manure",
                "compliance",
                "compliance must be absent when no manure was found",
            )),
            (true, None) => Err(Error::validation(
                "missing_compliance",
                "compliance",
                "compliance is required when manure was found",
            )),
            _ => Ok(()),
        }
    }
}

/// Whole days from dispatch to visit.
pub fn latency_days(a: &Assignment, r: &FieldResponse) -> i64 {
    (r.visited_on - a.dispatched_on).num_days()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketManifest {
    pub assignment_id: String,
    pub title: String,
    pub detection_image_uri: String,
    pub summer_image_uri: Option<String>,
    pub static_map_uri: String,
    pub north_arrow: bool,
    pub capture_date: NaiveDate,
    pub centroid_lat: f64,
    pub centroid_lon: f64,
    pub bbox: GeoBBox,
    /// Image slots the source detection could not fill.
    pub missing: Vec<String>,
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Printable packet contents for an assignment.
pub fn build_packet(a: &Assignment, d: &Detection, run: &ModelRun) -> PacketManifest {
    let c = d.bbox.centroid();
    let (lat, lon) = (round6(c.lat), round6(c.lon));
    let mut missing = Vec::new();
    if d.summer_image_uri.is_none() {
        missing.push("summer_image_uri".to_string());
    }
    PacketManifest {
        assignment_id: a.assignment_id.clone(),
        title: format!("Detection {} — {}", d.detection_id, run.imagery_date),
        detection_image_uri: d.image_uri.clone(),
        summer_image_uri: d.summer_image_uri.clone(),
        static_map_uri: format!("geo:{lat:.6},{lon:.6}?z=15"),
        north_arrow: true,
        capture_date: run.imagery_date,
        centroid_lat: lat,
        centroid_lon: lon,
        bbox: d.bbox,
        missing,
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    assignment_id: String,
    visited_on: String,
    location_visible: String,
    manure_present: String,
    reporter_confidence: String,
    notes: String,
    #[serde(default)]
    site_reached: Option<String>,
    #[serde(default)]
    response_id: Option<String>,
}

fn csv_bool(v: &str, field: &str, row: usize) -> Result<Option<bool>> {
    match v.trim().to_ascii_lowercase().as_str() {
        "" => Ok(None),
        "true" | "yes" | "y" | "1" => Ok(Some(true)),
        "false" | "no" | "n" | "0" => Ok(Some(false)),
        other => Err(Error::validation("invalid_bool", format!("row {row}.{field}"), format!("'{other}' is not a boolean"))),
    }
}

/// Parses the bulk response CSV. Rows are numbered from 1 after the header.
pub fn parse_response_csv(text: &str) -> Result<Vec<FieldResponse>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    for h in RESPONSE_CSV_HEADERS {
        if !headers.iter().any(|x| x == h) {
            return Err(Error::validation("missing_column", h, format!("response CSV lacks column '{h}'")));
        }
    }
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let n = i + 1;
        let row = row?;
        let visited_on = NaiveDate::parse_from_str(&row.visited_on, "%Y-%m-%d")
            .map_err(|e| Error::validation("invalid_date", format!("row {n}.visited_on"), e.to_string()))?;
        let location_visible = csv_bool(&row.location_visible, "location_visible", n)?
            .ok_or_else(|| Error::validation("missing_value", format!("row {n}.location_visible"), "value required"))?;
        let reporter_confidence = match row.reporter_confidence.trim() {
            "" => None,
            s => Some(
                serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
                    .map_err(|_| Error::validation("invalid_confidence", format!("row {n}.reporter_confidence"), s.to_string()))?,
            ),
        };
        let site_reached = match &row.site_reached {
            Some(s) => csv_bool(s, "site_reached", n)?.unwrap_or(true),
            None => true,
        };
        let response_id = row
            .response_id
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| FieldResponse::default_id(&row.assignment_id));
        out.push(FieldResponse {
            response_id,
            assignment_id: row.assignment_id,
            visited_on,
            site_reached,
            location_visible,
            manure_present: csv_bool(&row.manure_present, "manure_present", n)?,
            reporter_confidence,
            notes: row.notes,
            photo_uris: Vec::new(),
        });
    }
    Ok(out)
}

/// Writes responses in the import format, including the optional columns.
pub fn to_response_csv(responses: &[FieldResponse]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = RESPONSE_CSV_HEADERS.to_vec();
    header.extend(["site_reached", "response_id"]);
    w.write_record(&header)?;
    for r in responses {
        let visited = r.visited_on.to_string();
        w.write_record([
            r.assignment_id.as_str(),
            visited.as_str(),
            if r.location_visible { "true" } else { "false" },
            match r.manure_present {
                Some(true) => "true",
                Some(false) => "false",
                None => "",
            },
            r.reporter_confidence.map_or("", ReporterConfidence::as_str),
            r.notes.as_str(),
            if r.site_reached { "true" } else { "false" },
            r.response_id.as_str(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}
