use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::event::{AssignmentsCreated, DetectionsIngested, Event, ScreeningDecided, ScreeningQueued};
use crate::compliance::classify;
use crate::config::Config;
use crate::detections::{parse_detection_file, Detection, IncidentalReport, IngestOutcome, ModelRun};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fieldops::{latency_days, Determination, FieldResponse};
use crate::geo;
use crate::registry::{LoadSummary, Org, Registry, RegistryDocs};
use crate::routing::{self, Assignment, Decision, RejectReason, RoutingPolicy, ScreeningItem, ScreeningStatus};

/// Everything the event log describes. Mutated only through [`State::apply`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct State {
    pub registry_docs: Option<RegistryDocs>,
    #[serde(skip)]
    registry: Arc<Registry>,
    pub runs: BTreeMap<String, ModelRun>,
    pub detections: BTreeMap<String, Detection>,
    /// Detection ids per run in ingestion order.
    pub run_detections: BTreeMap<String, Vec<String>>,
    pub screening: BTreeMap<String, ScreeningItem>,
    pub assignments: BTreeMap<String, Assignment>,
    pub routed: BTreeSet<(String, Org)>,
    /// Current response per assignment id.
    pub responses: BTreeMap<String, FieldResponse>,
    /// Superseded versions per assignment id, oldest first.
    pub response_history: BTreeMap<String, Vec<FieldResponse>>,
    /// Determination per assignment id.
    pub determinations: BTreeMap<String, Determination>,
    pub incidentals: BTreeMap<String, IncidentalReport>,
    pub last_seq: u64,
}

impl State {
    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn registry_arc(&self) -> Arc<Registry> {
        Arc::clone(&self.registry)
    }

    /// Rebuilds the derived registry index after deserialization.
    pub fn rebuild_registry(&mut self) -> Result<()> {
        self.registry = Arc::new(match &self.registry_docs {
            Some(d) => Registry::load(d.clone())?,
            None => Registry::default(),
        });
        Ok(())
    }

    pub fn run(&self, run_id: &str) -> Result<&ModelRun> {
        self.runs.get(run_id).ok_or_else(|| Error::not_found("run", run_id))
    }

    pub fn assignment(&self, id: &str) -> Result<&Assignment> {
        self.assignments.get(id).ok_or_else(|| Error::not_found("assignment", id))
    }

    pub fn detection(&self, id: &str) -> Result<&Detection> {
        self.detections.get(id).ok_or_else(|| Error::not_found("detection", id))
    }

    pub fn run_detections(&self, run_id: &str) -> Vec<Detection> {
        self.run_detections
            .get(run_id)
            .map(|ids| ids.iter().map(|id| self.detections[id].clone()).collect())
            .unwrap_or_default()
    }

    /// Screening items with the given status (all when `None`), score
    /// descending then id ascending.
    pub fn screening_queue(&self, status: Option<ScreeningStatus>) -> Vec<&ScreeningItem> {
        let mut v: Vec<&ScreeningItem> = self
            .screening
            .values()
            .filter(|i| status.is_none_or(|s| i.status == s))
            .collect();
        v.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.detection_id.cmp(&b.detection_id)));
        v
    }

    pub fn assignments_filtered(&self, org: Option<Org>, verifier_id: Option<&str>, run_id: Option<&str>) -> Vec<&Assignment> {
        self.assignments
            .values()
            .filter(|a| org.is_none_or(|o| a.org == o))
            .filter(|a| verifier_id.is_none_or(|v| a.verifier_id.as_deref() == Some(v)))
            .filter(|a| run_id.is_none_or(|r| a.run_id == r))
            .collect()
    }

    pub fn detection_for(&self, a: &Assignment) -> &Detection {
        &self.detections[&a.detection_id]
    }

    // Command planning: validate against current state and produce the
    // event to append. Nothing here mutates.

    pub fn plan_registry(&self, docs: RegistryDocs) -> Result<(Event, LoadSummary)> {
        let summary = Registry::load(docs.clone())?.summary();
        Ok((Event::RegistryLoaded(docs), summary))
    }

    pub fn plan_run(&self, run: ModelRun) -> Result<(Event, Vec<String>)> {
        let warnings = run.validate()?;
        if self.runs.contains_key(&run.run_id) {
            return Err(Error::conflict("duplicate_run", format!("run '{}' already registered", run.run_id)));
        }
        Ok((Event::RunRegistered(run), warnings))
    }

    pub fn plan_ingest(&self, run_id: &str, text: &str, exec: Exec) -> Result<(Option<Event>, IngestOutcome)> {
        self.run(run_id)?;
        if self.routed.iter().any(|(r, _)| r == run_id) {
            return Err(Error::conflict(
                "run_already_routed",
                format!("run '{run_id}' has been routed; its detection set is closed"),
            ));
        }
        let out = parse_detection_file(run_id, text, |id| self.detections.contains_key(id), &self.registry, exec);
        let ev = (!out.accepted.is_empty()).then(|| {
            Event::DetectionsIngested(DetectionsIngested {
                run_id: run_id.to_string(),
                detections: out.accepted.clone(),
            })
        });
        Ok((ev, out))
    }

    pub fn plan_route(&self, run_id: &str, org: Org, cfg: &Config, exec: Exec) -> Result<Event> {
        let run = self.run(run_id)?;
        if self.routed.contains(&(run_id.to_string(), org)) {
            return Err(Error::conflict("already_routed", format!("run '{run_id}' already routed for {org}")));
        }
        let dets = self.run_detections(run_id);
        Ok(match org {
            Org::Wdnr => Event::ScreeningQueued(ScreeningQueued {
                run_id: run_id.to_string(),
                items: routing::route_wdnr(&dets, &self.registry, cfg.score_threshold, run.dispatched_on, exec),
            }),
            Org::Elpc => Event::AssignmentCreated(AssignmentsCreated {
                run_id: run_id.to_string(),
                org,
                assignments: routing::route_elpc(&dets, &self.registry, &cfg.elpc_params(), run.dispatched_on, exec)?,
            }),
        })
    }

    pub fn plan_screen(
        &self,
        detection_id: &str,
        decision: Decision,
        reason: Option<RejectReason>,
        note: Option<String>,
        decided_on: NaiveDate,
    ) -> Result<Event> {
        let item = self
            .screening
            .get(detection_id)
            .ok_or_else(|| Error::not_found("screening item", detection_id))?;
        let region = self.detection(detection_id)?.nearest_facility_id.clone();
        let (item, assignment) = routing::decide(item, decision, reason, note, decided_on, region)?;
        if let Some(a) = &assignment {
            if self.assignments.contains_key(&a.assignment_id) {
                return Err(Error::conflict("duplicate_assignment", format!("assignment '{}' exists", a.assignment_id)));
            }
        }
        Ok(Event::ScreeningDecided(ScreeningDecided { item, assignment }))
    }

    pub fn plan_response(&self, mut r: FieldResponse) -> Result<Event> {
        let a = self.assignment(&r.assignment_id)?;
        r.validate(a)?;
        if self.responses.contains_key(&r.assignment_id) {
            return Err(Error::conflict(
                "duplicate_response",
                format!("assignment '{}' already has a response", r.assignment_id),
            ));
        }
        if r.response_id.is_empty() {
            r.response_id = FieldResponse::default_id(&r.assignment_id);
        }
        Ok(Event::ResponseSubmitted(r))
    }

    pub fn plan_amend(&self, mut r: FieldResponse) -> Result<Event> {
        let a = self.assignment(&r.assignment_id)?;
        r.validate(a)?;
        let prev = self
            .responses
            .get(&r.assignment_id)
            .ok_or_else(|| Error::not_found("response", &r.assignment_id))?;
        if r.response_id.is_empty() {
            r.response_id = format!("{}-v{}", prev.response_id, self.response_history.get(&r.assignment_id).map_or(0, Vec::len) + 2);
        }
        Ok(Event::ResponseAmended(r))
    }

    pub fn plan_determination(&self, mut d: Determination, cfg: &Config) -> Result<Event> {
        let a = self.assignment(&d.assignment_id)?;
        if let (true, Some(e)) = (d.manure_present, &d.event) {
            e.validate(cfg.window.animal_unit_threshold)?;
            let c = classify(e, &cfg.window);
            match d.compliance {
                None => d.compliance = Some(c),
                Some(stated) if stated != c => {
                    return Err(Error::validation(
                        "compliance_mismatch",
                        "compliance",
                        format!("stated {} but facts classify as {}", stated.as_str(), c.as_str()),
                    ))
                }
                _ => {}
            }
        }
        d.validate(a)?;
        if self.determinations.contains_key(&d.assignment_id) {
            return Err(Error::conflict(
                "duplicate_determination",
                format!("assignment '{}' already has a determination", d.assignment_id),
            ));
        }
        if d.determination_id.is_empty() {
            d.determination_id = Determination::default_id(&d.assignment_id);
        }
        Ok(Event::DeterminationSubmitted(d))
    }

    pub fn plan_incidental(&self, r: IncidentalReport) -> Result<Event> {
        r.validate()?;
        if self.incidentals.contains_key(&r.report_id) {
            return Err(Error::conflict("duplicate_report", format!("report '{}' already recorded", r.report_id)));
        }
        Ok(Event::IncidentalReported(r))
    }

    /// Applies one event. Rejects events that contradict the current state,
    /// which only happens for logs not written by this engine.
    pub fn apply(&mut self, ev: &Event) -> Result<()> {
        let bad = |msg: String| Error::conflict("invalid_event", msg);
        match ev {
            Event::RegistryLoaded(docs) => {
                self.registry = Arc::new(Registry::load(docs.clone())?);
                self.registry_docs = Some(docs.clone());
            }
            Event::RunRegistered(run) => {
                if self.runs.contains_key(&run.run_id) {
                    return Err(bad(format!("run '{}' registered twice", run.run_id)));
                }
                self.runs.insert(run.run_id.clone(), run.clone());
            }
            Event::DetectionsIngested(p) => {
                self.run(&p.run_id)?;
                if self.routed.iter().any(|(r, _)| *r == p.run_id) {
                    return Err(bad(format!("detections added to routed run '{}'", p.run_id)));
                }
                let mut seen = BTreeSet::new();
                if let Some(d) = p.detections.iter().find(|d| {
                    self.detections.contains_key(&d.detection_id) || d.run_id != p.run_id || !seen.insert(&d.detection_id)
                }) {
                    return Err(bad(format!("detection '{}' duplicated or misfiled", d.detection_id)));
                }
                let ids = self.run_detections.entry(p.run_id.clone()).or_default();
                for d in &p.detections {
                    ids.push(d.detection_id.clone());
                    self.detections.insert(d.detection_id.clone(), d.clone());
                }
            }
            Event::ScreeningQueued(p) => {
                self.run(&p.run_id)?;
                if self.routed.contains(&(p.run_id.clone(), Org::Wdnr)) {
                    return Err(bad(format!("run '{}' queued twice", p.run_id)));
                }
                let mut seen = BTreeSet::new();
                for item in &p.items {
                    if !self.detections.contains_key(&item.detection_id)
                        || self.screening.contains_key(&item.detection_id)
                        || !seen.insert(&item.detection_id)
                    {
                        return Err(bad(format!("screening item '{}' invalid", item.detection_id)));
                    }
                }
                self.routed.insert((p.run_id.clone(), Org::Wdnr));
                for item in &p.items {
                    self.screening.insert(item.detection_id.clone(), item.clone());
                }
            }
            Event::ScreeningDecided(p) => {
                match self.screening.get(&p.item.detection_id) {
                    Some(cur) if cur.status == ScreeningStatus::Pending && p.item.status != ScreeningStatus::Pending => {}
                    _ => return Err(bad(format!("screening of '{}' not pending", p.item.detection_id))),
                }
                if let Some(a) = &p.assignment {
                    if self.assignments.contains_key(&a.assignment_id) {
                        return Err(bad(format!("assignment '{}' exists", a.assignment_id)));
                    }
                    self.assignments.insert(a.assignment_id.clone(), a.clone());
                }
                self.screening.insert(p.item.detection_id.clone(), p.item.clone());
            }
            Event::AssignmentCreated(p) => {
                self.run(&p.run_id)?;
                if self.routed.contains(&(p.run_id.clone(), p.org)) {
                    return Err(bad(format!("run '{}' routed twice for {}", p.run_id, p.org)));
                }
                let mut seen = BTreeSet::new();
                for a in &p.assignments {
                    if self.assignments.contains_key(&a.assignment_id)
                        || !self.detections.contains_key(&a.detection_id)
                        || a.org != p.org
                        || !seen.insert(&a.assignment_id)
                    {
                        return Err(bad(format!("assignment '{}' invalid", a.assignment_id)));
                    }
                }
                self.routed.insert((p.run_id.clone(), p.org));
                for a in &p.assignments {
                    self.assignments.insert(a.assignment_id.clone(), a.clone());
                }
            }
            Event::ResponseSubmitted(r) => {
                if !self.assignments.contains_key(&r.assignment_id) || self.responses.contains_key(&r.assignment_id) {
                    return Err(bad(format!("response for '{}' invalid", r.assignment_id)));
                }
                self.responses.insert(r.assignment_id.clone(), r.clone());
            }
            Event::ResponseAmended(r) => {
                let Some(prev) = self.responses.insert(r.assignment_id.clone(), r.clone()) else {
                    self.responses.remove(&r.assignment_id);
                    return Err(bad(format!("amendment for '{}' without a response", r.assignment_id)));
                };
                self.response_history.entry(r.assignment_id.clone()).or_default().push(prev);
            }
            Event::DeterminationSubmitted(d) => {
                if !self.assignments.contains_key(&d.assignment_id) || self.determinations.contains_key(&d.assignment_id) {
                    return Err(bad(format!("determination for '{}' invalid", d.assignment_id)));
                }
                self.determinations.insert(d.assignment_id.clone(), d.clone());
            }
            Event::IncidentalReported(r) => {
                if self.incidentals.contains_key(&r.report_id) {
                    return Err(bad(format!("report '{}' duplicated", r.report_id)));
                }
                self.incidentals.insert(r.report_id.clone(), r.clone());
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the state, hex encoded.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("state serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Cross-module invariants; returns one message per violation.
    pub fn check_invariants(&self, cfg: &Config) -> Vec<String> {
        let mut v = Vec::new();
        for d in self.detections.values() {
            if !d.bbox.contains_point(d.centroid) {
                v.push(format!("detection {} centroid outside bbox", d.detection_id));
            }
            if !(0.0..=1.0).contains(&d.score) {
                v.push(format!("detection {} score out of range", d.detection_id));
            }
            if !self.runs.contains_key(&d.run_id) {
                v.push(format!("detection {} has no run", d.detection_id));
            }
        }
        for item in self.screening.values() {
            match self.detections.get(&item.detection_id) {
                None => v.push(format!("screening item {} has no detection", item.detection_id)),
                Some(d) if !routing::wdnr_eligible(d, &self.registry, cfg.score_threshold) => {
                    v.push(format!("screening item {} fails the filter", item.detection_id))
                }
                _ => {}
            }
            if item.status == ScreeningStatus::Rejected && item.reject_reason.is_none() {
                v.push(format!("rejected item {} lacks a reason", item.detection_id));
            }
        }
        let mut per_slot: BTreeMap<(&str, &str), Vec<&Assignment>> = BTreeMap::new();
        for a in self.assignments.values() {
            let Some(d) = self.detections.get(&a.detection_id) else {
                v.push(format!("assignment {} has no detection", a.assignment_id));
                continue;
            };
            match a.org {
                Org::Wdnr => {
                    let ok = self
                        .screening
                        .get(&a.detection_id)
                        .is_some_and(|i| i.status == ScreeningStatus::Accepted);
                    if !ok {
                        v.push(format!("wdnr assignment {} lacks an accepted screening", a.assignment_id));
                    }
                }
                Org::Elpc => {
                    let vid = a.verifier_id.as_deref().unwrap_or_default();
                    match self.registry.verifier(vid) {
                        Some(ver) if geo::haversine_m(d.centroid, ver.home) <= cfg.radius_m => {}
                        _ => v.push(format!("elpc assignment {} outside radius or verifier unknown", a.assignment_id)),
                    }
                    if !a.rank.is_some_and(|r| r >= 1 && r as usize <= cfg.top_k) {
                        v.push(format!("elpc assignment {} rank out of range", a.assignment_id));
                    }
                    per_slot.entry((vid, &a.run_id)).or_default().push(a);
                }
            }
        }
        for ((vid, run_id), assigned) in &per_slot {
            if assigned.len() > cfg.top_k {
                v.push(format!("verifier {vid} over capacity in run {run_id}"));
            }
            if cfg.routing_policy != RoutingPolicy::NearestExclusive {
                continue;
            }
            let min_assigned = assigned
                .iter()
                .map(|a| self.detections[&a.detection_id].score)
                .fold(f64::INFINITY, f64::min);
            let taken: BTreeSet<&str> = assigned.iter().map(|a| a.detection_id.as_str()).collect();
            for d in self.run_detections(run_id) {
                if taken.contains(d.detection_id.as_str()) {
                    continue;
                }
                let nearest = self
                    .registry
                    .verifiers_within(d.centroid, cfg.radius_m)
                    .into_iter()
                    .find(|(ver, _)| ver.org == Org::Elpc)
                    .map(|(ver, _)| ver.verifier_id.clone());
                if nearest.as_deref() == Some(*vid) && d.score > min_assigned {
                    v.push(format!("greedy prefix broken for {vid} in run {run_id}: {}", d.detection_id));
                }
            }
        }
        for r in self.responses.values() {
            match self.assignments.get(&r.assignment_id) {
                Some(a) if a.org == Org::Elpc => {
                    if latency_days(a, r) < 0 {
                        v.push(format!("response {} precedes dispatch", r.response_id));
                    }
                }
                _ => v.push(format!("response {} orphaned or misrouted", r.response_id)),
            }
        }
        for d in self.determinations.values() {
            if !self.assignments.get(&d.assignment_id).is_some_and(|a| a.org == Org::Wdnr) {
                v.push(format!("determination {} orphaned or misrouted", d.determination_id));
            }
            if d.manure_present != d.compliance.is_some() {
                v.push(format!("determination {} compliance presence mismatch", d.determination_id));
            }
        }
        for org in [Org::Wdnr, Org::Elpc] {
            let sent = self.assignments.values().filter(|a| a.org == org).count();
            let followed = match org {
                Org::Elpc => self.responses.len(),
                Org::Wdnr => self.determinations.len(),
            };
            if followed > sent {
                v.push(format!("{org} follow-ups exceed assignments"));
            }
        }
        v
    }
}
