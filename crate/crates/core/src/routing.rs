//! The two dispatch protocols: regulator filter plus desk screening, and
//! advocacy radius/top-K assignment to field verifiers.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::detections::Detection;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::registry::{Org, Registry};

pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.5;
pub const DEFAULT_RADIUS_M: f64 = 25_000.0;
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreeningStatus {
    Pending,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Vegetation,
    Building,
    Roadway,
    Shadow,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningItem {
    pub detection_id: String,
    pub run_id: String,
    pub score: f64,
    pub queued_on: NaiveDate,
    pub status: ScreeningStatus,
    pub reject_reason: Option<RejectReason>,
    #[serde(default)]
    pub screener_note: String,
    #[serde(default)]
    pub decided_on: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub assignment_id: String,
    pub detection_id: String,
    pub run_id: String,
    pub org: Org,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifier_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_tag: Option<String>,
    pub dispatched_on: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_m: Option<f64>,
}

impl Assignment {
    pub fn wdnr_id(detection_id: &str) -> String {
        format!("wdnr-{detection_id}")
    }

    pub fn elpc_id(detection_id: &str, verifier_id: &str) -> String {
        format!("elpc-{detection_id}-{verifier_id}")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingPolicy {
    /// Each detection is eligible only for its nearest in-radius verifier.
    #[default]
    NearestExclusive,
    /// Each detection is eligible for every in-radius verifier.
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElpcParams {
    pub radius_m: f64,
    pub top_k: usize,
    pub policy: RoutingPolicy,
}

impl Default for ElpcParams {
    fn default() -> Self {
        ElpcParams {
            radius_m: DEFAULT_RADIUS_M,
            top_k: DEFAULT_TOP_K,
            policy: RoutingPolicy::default(),
        }
    }
}

/// Descending score, then ascending id.
fn by_score_desc(a: (&str, f64), b: (&str, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

/// Whether a detection passes the regulator filter.
pub fn wdnr_eligible(d: &Detection, registry: &Registry, threshold: f64) -> bool {
    d.score >= threshold && registry.on_any_field(&d.bbox)
}

/// Pending screening items for every detection at or above `threshold`
/// whose box touches a permitted field.
pub fn route_wdnr(
    detections: &[Detection],
    registry: &Registry,
    threshold: f64,
    queued_on: NaiveDate,
    exec: Exec,
) -> Vec<ScreeningItem> {
    let keep = exec.map(detections, |d| wdnr_eligible(d, registry, threshold));
    let mut items: Vec<ScreeningItem> = detections
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(d, _)| ScreeningItem {
            detection_id: d.detection_id.clone(),
            run_id: d.run_id.clone(),
            score: d.score,
            queued_on,
            status: ScreeningStatus::Pending,
            reject_reason: None,
            screener_note: String::new(),
            decided_on: None,
        })
        .collect();
    items.sort_by(|a, b| by_score_desc((&a.detection_id, a.score), (&b.detection_id, b.score)));
    items
}

/// Applies a desk-screening decision. Accepting creates the regulator
/// assignment dated the decision day.
pub fn decide(
    item: &ScreeningItem,
    decision: Decision,
    reason: Option<RejectReason>,
    note: Option<String>,
    decided_on: NaiveDate,
    region_tag: Option<String>,
) -> Result<(ScreeningItem, Option<Assignment>)> {
    if item.status != ScreeningStatus::Pending {
        return Err(Error::conflict(
            "already_screened",
            format!("detection '{}' already {:?}", item.detection_id, item.status).to_lowercase(),
        ));
    }
    if decided_on < item.queued_on {
        return Err(Error::validation(
            "decision_before_queue",
            "decided_on",
            format!("decided_on {decided_on} precedes queued_on {}", item.queued_on),
        ));
    }
    let mut next = item.clone();
    next.decided_on = Some(decided_on);
    next.screener_note = note.unwrap_or_default();
    match decision {
        Decision::Accept => {
            if reason.is_some() {
                return Err(Error::validation("unexpected_reason", "reason", "accepted items carry no reject reason"));
            }
            next.status = ScreeningStatus::Accepted;
            let a = Assignment {
                assignment_id: Assignment::wdnr_id(&item.detection_id),
                detection_id: item.detection_id.clone(),
                run_id: item.run_id.clone(),
                org: Org::Wdnr,
                verifier_id: None,
                region_tag: Some(region_tag.unwrap_or_else(|| "statewide".into())),
                dispatched_on: decided_on,
                rank: None,
                distance_m: None,
            };
            Ok((next, Some(a)))
        }
        Decision::Reject => {
            let Some(r) = reason else {
                return Err(Error::validation("missing_reason", "reason", "rejection requires a reason"));
            };
            next.status = ScreeningStatus::Rejected;
            next.reject_reason = Some(r);
            Ok((next, None))
        }
    }
}

/// Radius/top-K assignment. Output is ordered by verifier id, then rank.
pub fn route_elpc(
    detections: &[Detection],
    registry: &Registry,
    params: &ElpcParams,
    dispatched_on: NaiveDate,
    exec: Exec,
) -> Result<Vec<Assignment>> {
    if params.top_k < 1 {
        return Err(Error::validation("invalid_top_k", "top_k", "top_k must be at least 1"));
    }
    if !(params.radius_m.is_finite() && params.radius_m >= 0.0) {
        return Err(Error::validation("invalid_radius", "radius_m", "radius must be a non-negative length"));
    }
    let eligible = exec.map(detections, |d| {
        let near: Vec<(String, f64)> = registry
            .verifiers_within(d.centroid, params.radius_m)
            .into_iter()
            .filter(|(v, _)| v.org == Org::Elpc)
            .map(|(v, dist)| (v.verifier_id.clone(), dist))
            .collect();
        match params.policy {
            RoutingPolicy::NearestExclusive => near.into_iter().take(1).collect(),
            RoutingPolicy::Multi => near,
        }
    });

    let mut per_verifier: BTreeMap<String, Vec<(&Detection, f64)>> = BTreeMap::new();
    for (d, vs) in detections.iter().zip(eligible) {
        for (vid, dist) in vs {
            per_verifier.entry(vid).or_default().push((d, dist));
        }
    }
    let mut out = Vec::new();
    for (vid, mut cands) in per_verifier {
        cands.sort_by(|a, b| by_score_desc((&a.0.detection_id, a.0.score), (&b.0.detection_id, b.0.score)));
        for (rank, (d, dist)) in cands.into_iter().take(params.top_k).enumerate() {
            out.push(Assignment {
                assignment_id: Assignment::elpc_id(&d.detection_id, &vid),
                detection_id: d.detection_id.clone(),
                run_id: d.run_id.clone(),
                org: Org::Elpc,
                verifier_id: Some(vid.clone()),
                region_tag: None,
                dispatched_on,
                rank: Some(rank as u32 + 1),
                distance_m: Some(dist),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoBBox;
    use crate::registry::{RegistryDocs, VerifierDoc};

    fn det(id: &str, score: f64, lat: f64, lon: f64) -> Detection {
        let bbox = GeoBBox::new(lat - 0.0005, lon - 0.0005, lat + 0.0005, lon + 0.0005).unwrap();
        Detection {
            detection_id: id.into(),
            run_id: "r".into(),
            bbox,
            score,
            image_uri: format!("img://{id}"),
            summer_image_uri: None,
            nearest_facility_id: None,
            centroid: bbox.centroid(),
        }
    }

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, 2, 2).unwrap()
    }

    fn one_verifier() -> Registry {
        Registry::load(RegistryDocs {
            verifiers: vec![VerifierDoc { verifier_id: "v1".into(), lat: 43.0, lon: -89.0, org: Org::Elpc, active: true }],
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn top_five_of_seven() {
        let reg = one_verifier();
        let dets: Vec<Detection> = (0..7).map(|i| det(&format!("d{i}"), 0.3 + 0.1 * i as f64, 43.01, -89.0)).collect();
        let out = route_elpc(&dets, &reg, &ElpcParams::default(), day(), Exec::Sequential).unwrap();
        let ids: Vec<&str> = out.iter().map(|a| a.detection_id.as_str()).collect();
        assert_eq!(ids, ["d6", "d5", "d4", "d3", "d2"]);
        assert_eq!(out.iter().map(|a| a.rank.unwrap()).collect::<Vec<_>>(), [1, 2, 3, 4, 5]);
    }

    #[test]
    fn out_of_radius_not_assigned() {
        let reg = one_verifier();
        let far = det("far", 0.9, 43.5, -89.0);
        assert!(route_elpc(&[far], &reg, &ElpcParams::default(), day(), Exec::Sequential).unwrap().is_empty());
        let bad = ElpcParams { top_k: 0, ..Default::default() };
        assert!(route_elpc(&[], &reg, &bad, day(), Exec::Sequential).is_err());
    }

    #[test]
    fn screening_transitions() {
        let item = ScreeningItem {
            detection_id: "d".into(),
            run_id: "r".into(),
            score: 0.7,
            queued_on: day(),
            status: ScreeningStatus::Pending,
            reject_reason: None,
            screener_note: String::new(),
            decided_on: None,
        };
        assert_eq!(decide(&item, Decision::Reject, None, None, day(), None).unwrap_err().code(), "missing_reason");
        let (acc, a) = decide(&item, Decision::Accept, None, None, day(), None).unwrap();
        assert_eq!(acc.status, ScreeningStatus::Accepted);
        assert_eq!(a.unwrap().assignment_id, "wdnr-d");
        assert_eq!(decide(&acc, Decision::Accept, None, None, day(), None).unwrap_err().code(), "already_screened");
    }

    #[test]
    fn wdnr_threshold_inclusive() {
        let reg = one_verifier();
        let items = route_wdnr(&[det("a", 0.5, 43.0, -89.0)], &reg, 0.5, day(), Exec::Sequential);
        assert!(items.is_empty(), "no fields loaded, so nothing passes");
    }
}
