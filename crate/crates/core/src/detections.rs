//! Model runs, detection records and incidental reports.
//!
//! Detection files are line-delimited JSON, one record per line:
//! `{"detection_id","run_id","score","bbox":{"min_lat","min_lon","max_lat","max_lon"},"image_uri","summer_image_uri"?}`.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geo::{self, GeoBBox, GeoPoint};
use crate::registry::Registry;

/// Runs dispatched more than this many days after capture get a warning.
pub const MAX_DISPATCH_LAG_DAYS: i64 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRun {
    pub run_id: String,
    pub imagery_date: NaiveDate,
    pub dispatched_on: NaiveDate,
    /// Number of image tiles the detector scanned for this run, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images_scanned: Option<u64>,
}

impl ModelRun {
    /// Validates the run and returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.run_id.trim().is_empty() {
            return Err(Error::validation("missing_id", "run_id", "run_id must be non-empty"));
        }
        if self.dispatched_on < self.imagery_date {
            return Err(Error::validation(
                "dispatch_before_capture",
                "dispatched_on",
                format!("dispatched_on {} precedes imagery_date {}", self.dispatched_on, self.imagery_date),
            ));
        }
        let lag = (self.dispatched_on - self.imagery_date).num_days();
        let mut warnings = Vec::new();
        if lag > MAX_DISPATCH_LAG_DAYS {
            warnings.push(format!("run '{}' dispatched {lag} days after capture", self.run_id));
        }
        Ok(warnings)
    }
}

/// One line of a detection file, with the exact wire key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub detection_id: String,
    pub run_id: String,
    pub score: f64,
    pub bbox: GeoBBox,
    pub image_uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summer_image_uri: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub detection_id: String,
    pub run_id: String,
    pub bbox: GeoBBox,
    pub score: f64,
    pub image_uri: String,
    pub summer_image_uri: Option<String>,
    pub nearest_facility_id: Option<String>,
    pub centroid: GeoPoint,
}

impl Detection {
    pub fn record(&self) -> DetectionRecord {
        DetectionRecord {
            detection_id: self.detection_id.clone(),
            run_id: self.run_id.clone(),
            score: self.score,
            bbox: self.bbox,
            image_uri: self.image_uri.clone(),
            summer_image_uri: self.summer_image_uri.clone(),
        }
    }
}

/// Per-line ingest failure. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub line: usize,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestOutcome {
    pub accepted: Vec<Detection>,
    pub rejected: Vec<RecordError>,
}

/// Parses and validates a detection file for `run_id`. `known` reports
/// whether a detection id is already stored. Blank lines are skipped but
/// still count toward line numbers.
pub fn parse_detection_file(
    run_id: &str,
    text: &str,
    known: impl Fn(&str) -> bool,
    registry: &Registry,
    exec: Exec,
) -> IngestOutcome {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let parsed = exec.map(&lines, |&(line, l)| check_record(run_id, line, l, registry));

    let mut out = IngestOutcome::default();
    let mut batch_ids = BTreeSet::new();
    for (&(line, _), r) in lines.iter().zip(parsed) {
        match r {
            Ok(d) => {
                if known(&d.detection_id) || !batch_ids.insert(d.detection_id.clone()) {
                    out.rejected.push(RecordError {
                        line,
                        reason: "duplicate_detection_id".into(),
                        message: format!("detection '{}' already ingested", d.detection_id),
                        detection_id: Some(d.detection_id),
                    });
                } else {
                    out.accepted.push(d);
                }
            }
            Err(e) => out.rejected.push(e),
        }
    }
    out
}

fn check_record(run_id: &str, line: usize, text: &str, registry: &Registry) -> std::result::Result<Detection, RecordError> {
    let fail = |reason: &str, id: Option<&str>, message: String| RecordError {
        line,
        reason: reason.into(),
        detection_id: id.map(str::to_string),
        message,
    };
    let rec: DetectionRecord = serde_json::from_str(text).map_err(|e| fail("malformed_record", None, e.to_string()))?;
    let id = Some(rec.detection_id.as_str());
    if rec.detection_id.trim().is_empty() {
        return Err(fail("missing_id", None, "detection_id must be non-empty".into()));
    }
    if rec.run_id != run_id {
        return Err(fail("run_mismatch", id, format!("record run_id '{}' differs from batch run '{run_id}'", rec.run_id)));
    }
    if !(0.0..=1.0).contains(&rec.score) {
        return Err(fail("score_out_of_range", id, format!("score {} outside [0, 1]", rec.score)));
    }
    if let Err(e) = rec.bbox.validate() {
        return Err(fail("invalid_bbox", id, e.to_string()));
    }
    if rec.image_uri.trim().is_empty() {
        return Err(fail("missing_image_uri", id, "image_uri must be non-empty".into()));
    }
    let centroid = rec.bbox.centroid();
    let nearest_facility_id = registry.nearest_facility(centroid).map(|(f, _)| f.facility_id.clone());
    Ok(Detection {
        detection_id: rec.detection_id,
        run_id: rec.run_id,
        bbox: rec.bbox,
        score: rec.score,
        image_uri: rec.image_uri,
        summer_image_uri: rec.summer_image_uri.filter(|s| !s.trim().is_empty()),
        nearest_facility_id,
        centroid,
    })
}

/// Serializes detections back to the wire format, one line each.
pub fn to_detection_file<'a>(detections: impl IntoIterator<Item = &'a Detection>) -> String {
    let mut out = String::new();
    for d in detections {
        out.push_str(&serde_json::to_string(&d.record()).expect("record serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicatePair {
    pub a: String,
    pub b: String,
    pub iou: f64,
}

/// Pairs across two runs whose box IoU reaches `iou_threshold`. Flags only.
pub fn dedupe(run_a: &[Detection], run_b: &[Detection], iou_threshold: f64, exec: Exec) -> Result<Vec<DuplicatePair>> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::validation("invalid_threshold", "iou_threshold", format!("{iou_threshold} outside (0, 1]")));
    }
    let rows = exec.map(run_a, |a| {
        run_b
            .iter()
            .filter(|b| a.bbox.intersects(&b.bbox))
            .filter_map(|b| {
                let iou = geo::bbox_iou(&a.bbox, &b.bbox);
                (iou >= iou_threshold).then(|| DuplicatePair {
                    a: a.detection_id.clone(),
                    b: b.detection_id.clone(),
                    iou,
                })
            })
            .collect::<Vec<_>>()
    });
    Ok(rows.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentalReport {
    pub report_id: String,
    pub reporter_verifier_id: String,
    pub observed_on: NaiveDate,
    #[serde(default)]
    pub location: Option<GeoPoint>,
    #[serde(default)]
    pub notes: String,
}

impl IncidentalReport {
    pub fn validate(&self) -> Result<()> {
        if self.report_id.trim().is_empty() {
            return Err(Error::validation("missing_id", "report_id", "report_id must be non-empty"));
        }
        if let Some(p) = self.location {
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncidentalCategory {
    NonGeocodable,
    Detected,
    DetectedBelowThreshold,
    OutsideAoi,
    MissedInAoi,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IncidentalBreakdown {
    pub total: usize,
    pub non_geocodable: usize,
    pub detected: usize,
    pub detected_below_threshold: usize,
    pub outside_aoi: usize,
    pub missed_in_aoi: usize,
    pub reports: Vec<(String, IncidentalCategory)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidentalParams {
    pub score_floor: f64,
    /// A report matches a detection when it lies inside the detection box
    /// grown by this many meters.
    pub match_buffer_m: f64,
    pub aoi_side_m: f64,
}

impl Default for IncidentalParams {
    fn default() -> Self {
        IncidentalParams {
            score_floor: 0.5,
            match_buffer_m: 150.0,
            aoi_side_m: geo::DEFAULT_AOI_SIDE_M,
        }
    }
}

pub fn categorize_incidental(
    report: &IncidentalReport,
    aois: &[GeoBBox],
    detections: &[Detection],
    p: &IncidentalParams,
) -> IncidentalCategory {
    let Some(pt) = report.location else {
        return IncidentalCategory::NonGeocodable;
    };
    let mut best: Option<f64> = None;
    for d in detections {
        if d.bbox.expand_m(p.match_buffer_m).contains_point(pt) {
            best = Some(best.map_or(d.score, |s: f64| s.max(d.score)));
        }
    }
    match best {
        Some(s) if s >= p.score_floor => IncidentalCategory::Detected,
        Some(_) => IncidentalCategory::DetectedBelowThreshold,
        None if !aois.iter().any(|a| a.contains_point(pt)) => IncidentalCategory::OutsideAoi,
        None => IncidentalCategory::MissedInAoi,
    }
}

/// Assigns every report exactly one category.
pub fn categorize_incidentals(
    reports: &[IncidentalReport],
    registry: &Registry,
    detections: &[Detection],
    p: &IncidentalParams,
    exec: Exec,
) -> IncidentalBreakdown {
    let aois: Vec<GeoBBox> = registry.aois(p.aoi_side_m).into_iter().map(|(_, b)| b).collect();
    let cats = exec.map(reports, |r| categorize_incidental(r, &aois, detections, p));
    let mut out = IncidentalBreakdown {
        total: reports.len(),
        ..Default::default()
    };
    for (r, c) in reports.iter().zip(cats) {
        match c {
            IncidentalCategory::NonGeocodable => out.non_geocodable += 1,
            IncidentalCategory::Detected => out.detected += 1,
            IncidentalCategory::DetectedBelowThreshold => out.detected_below_threshold += 1,
            IncidentalCategory::OutsideAoi => out.outside_aoi += 1,
            IncidentalCategory::MissedInAoi => out.missed_in_aoi += 1,
        }
        out.reports.push((r.report_id.clone(), c));
    }
    out
}
