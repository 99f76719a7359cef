//! Bundled pilot scenario: synthetic raw records (registry, runs, detection
//! files, screening decisions, field responses, determinations, incidental
//! reports) whose aggregates match the published trial tables.
//!
//! Nothing here writes state directly. [`Scenario::load`] drives the
//! ordinary engine commands, so routing, screening and classification are
//! the real ones and the fixture only chooses inputs.
//!
//! Layout: fifteen advocacy verifiers sit on a 3 x 5 grid, each with two
//! CAFOs about 9 km away. Regulator-only CAFOs sit in eight clusters at
//! least 50 km from any verifier, so the two routing streams only meet on
//! the detections deliberately placed on fields near a verifier.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::compliance::{EntityClass, Observation, SpreadEvent, SpreadPhase, Surface};
use crate::detections::{DetectionRecord, IncidentalReport, ModelRun};
use crate::engine::{Engine, State};
use crate::error::{Error, Result};
use crate::fieldops::{self, Determination, FieldResponse, ReporterConfidence};
use crate::geo::{GeoBBox, GeoPoint, GeoPolygon, METERS_PER_DEGREE};
use crate::registry::{field_feature, FacilityDoc, FacilityKind, Org, RegistryDocs, VerifierDoc, WastePhase};
use crate::routing::{Assignment, Decision, RejectReason};

pub const RUN_COUNT: usize = 17;
pub const TOTAL_IMAGES: u64 = 40_995;

const VERIFIER_LATS: [f64; 3] = [43.0, 44.1, 45.2];
const VERIFIER_LONS: [f64; 5] = [-91.6, -90.7, -89.8, -88.9, -88.0];
const ELPC_CAFO_OFFSETS: [(f64, f64); 2] = [(0.07, 0.05), (-0.06, -0.09)];
const WDNR_CENTERS: [(f64, f64); 8] = [
    (43.55, -91.0),
    (43.55, -89.8),
    (43.55, -88.6),
    (43.55, -87.4),
    (44.65, -91.0),
    (44.65, -89.8),
    (44.65, -88.6),
    (44.65, -87.4),
];

/// Advocacy slot sizes, cycled over (run, verifier) pairs.
const SLOT_PATTERN: [usize; 7] = [5, 3, 1, 2, 0, 4, 2];

/// Regulator stream per score bucket: (bucket, sent, accepted, confirmed).
const WDNR_BUCKETS: [(usize, usize, usize, usize); 5] =
    [(5, 200, 22, 12), (6, 130, 11, 6), (7, 95, 15, 8), (8, 70, 47, 24), (9, 38, 28, 14)];

/// Advocacy stream per bucket: (bucket, sent, followed, unreached, visible, confirmed).
const ELPC_BUCKETS: [(usize, usize, usize, usize, usize, usize); 8] = [
    (2, 30, 21, 1, 15, 1),
    (3, 42, 30, 1, 22, 3),
    (4, 50, 36, 2, 26, 5),
    (5, 110, 79, 3, 59, 8),
    (6, 100, 71, 2, 53, 14),
    (7, 84, 60, 2, 45, 20),
    (8, 70, 50, 2, 37, 24),
    (9, 50, 36, 1, 27, 18),
];

/// High-confidence count among confirmed advocacy reports, buckets 2..=9.
const HIGH_CONFIDENCE: [usize; 8] = [0, 0, 1, 2, 4, 8, 12, 11];

/// Detections sent to both organizations, per bucket 5..=9.
const OVERLAP_ELPC_ONLY: [(usize, usize); 5] = [(6, 1), (6, 2), (5, 2), (4, 2), (3, 1)];
const OVERLAP_WDNR_ONLY: [(usize, usize); 5] = [(3, 1), (3, 1), (3, 1), (3, 2), (2, 1)];
const OVERLAP_NEITHER: [usize; 5] = [5, 3, 2, 2, 2];

/// Reached-visit latency in days: (days, count).
const LATENCY: [(i64, usize); 5] = [(0, 160), (1, 180), (2, 17), (3, 9), (4, 3)];

const VIOLATION_AREAS_M2: [f64; 11] =
    [52_000.0, 140_000.0, 31_000.0, 95_000.0, 12_000.0, 61_000.0, 190_000.0, 44_000.0, 27_000.0, 88_000.0, 36_000.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    Violation,
    PreWindow,
    Unregulated,
    Other,
}

#[derive(Debug, Clone, Copy, Default)]
struct ElpcOutcome {
    followed: bool,
    reached: bool,
    visible: bool,
    confirmed: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct WdnrOutcome {
    accepted: bool,
    confirmed: bool,
}

#[derive(Debug, Clone, Copy)]
enum Place {
    /// On a field of advocacy CAFO `cafo` of verifier `v`.
    ElpcField { v: usize, cafo: usize, field: usize },
    /// Off all fields near advocacy CAFO `cafo` of verifier `v`.
    ElpcOff { v: usize, cafo: usize },
    /// Low-score candidate beyond a full verifier slot.
    ElpcDecoy { v: usize, cafo: usize },
    WdnrField { cafo: usize, field: usize },
    WdnrOff { cafo: usize },
}

#[derive(Debug, Clone)]
struct Item {
    run: usize,
    score: f64,
    place: Place,
    elpc: Option<ElpcOutcome>,
    wdnr: Option<WdnrOutcome>,
    area_m2: f64,
}

/// Screening decision to replay through the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningCall {
    pub detection_id: String,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectReason>,
    pub decided_on: NaiveDate,
}

/// Imagery time series behind one pre-window claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreWindowSeries {
    pub assignment_id: String,
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub registry: RegistryDocs,
    pub runs: Vec<ModelRun>,
    /// Detection file text per run, in run order.
    pub detection_files: Vec<(String, String)>,
    pub screenings: Vec<ScreeningCall>,
    pub responses: Vec<FieldResponse>,
    pub determinations: Vec<Determination>,
    pub incidentals: Vec<IncidentalReport>,
    pub pre_window_series: Vec<PreWindowSeries>,
    /// Advocacy assignment ids routing must produce, and nothing else.
    pub expected_elpc: BTreeSet<String>,
    /// Detection ids the regulator queue must hold, and nothing else.
    pub expected_queue: BTreeSet<String>,
}

fn date(m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, m, d).expect("valid fixture date")
}

fn run_id(r: usize) -> String {
    format!("run-{:02}", r + 1)
}

fn verifier_id(v: usize) -> String {
    format!("v{:02}", v + 1)
}

fn verifier_home(v: usize) -> (f64, f64) {
    (VERIFIER_LATS[v / 5], VERIFIER_LONS[v % 5])
}

fn elpc_cafo(v: usize, k: usize) -> (f64, f64) {
    let (lat, lon) = verifier_home(v);
    (lat + ELPC_CAFO_OFFSETS[k].0, lon + ELPC_CAFO_OFFSETS[k].1)
}

fn wdnr_cafo(i: usize) -> (f64, f64) {
    let (lat, lon) = WDNR_CENTERS[i / 9 % 8];
    let (r, c) = ((i % 9) / 3, i % 3);
    (lat + (r as f64 - 1.0) * 0.1, lon + (c as f64 - 1.0) * 0.13)
}

const WDNR_CAFO_COUNT: usize = 66;

/// Field `f` (0 or 1) north of a facility, as (min_lat, min_lon, max_lat, max_lon).
fn field_rect(at: (f64, f64), f: usize) -> (f64, f64, f64, f64) {
    let (lat, lon) = at;
    if f == 0 {
        (lat + 0.010, lon - 0.012, lat + 0.018, lon - 0.001)
    } else {
        (lat + 0.010, lon + 0.001, lat + 0.018, lon + 0.012)
    }
}

/// Small deterministic offset in [-1, 1).
fn wobble(i: usize, salt: usize) -> f64 {
    let h = (i.wrapping_mul(2_654_435_761) ^ salt.wrapping_mul(40_503)) % 2000;
    h as f64 / 1000.0 - 1.0
}

fn square(center: (f64, f64), area_m2: f64) -> GeoBBox {
    let half = area_m2.sqrt() / 2.0;
    let dlat = half / METERS_PER_DEGREE;
    let dlon = half / (METERS_PER_DEGREE * center.0.to_radians().cos());
    GeoBBox::new(center.0 - dlat, center.1 - dlon, center.0 + dlat, center.1 + dlon).expect("fixture boxes are valid")
}

fn score_in(bucket: usize, i: usize) -> f64 {
    (bucket * 100 + 5 + 5 * (i % 19)) as f64 / 1000.0
}

impl Place {
    fn center(self, i: usize) -> (f64, f64) {
        let on_field = |at: (f64, f64), f: usize| {
            let (a, b, c, d) = field_rect(at, f);
            ((a + c) / 2.0 + 0.002 * wobble(i, 1), (b + d) / 2.0 + 0.003 * wobble(i, 2))
        };
        match self {
            Place::ElpcField { v, cafo, field } => on_field(elpc_cafo(v, cafo), field),
            Place::WdnrField { cafo, field } => on_field(wdnr_cafo(cafo), field),
            Place::ElpcOff { v, cafo } => {
                let (lat, lon) = elpc_cafo(v, cafo);
                (lat - 0.015 + 0.003 * wobble(i, 3), lon - 0.015 + 0.003 * wobble(i, 4))
            }
            Place::WdnrOff { cafo } => {
                let (lat, lon) = wdnr_cafo(cafo);
                (lat - 0.015, lon - 0.015)
            }
            Place::ElpcDecoy { v, cafo } => {
                let (lat, lon) = elpc_cafo(v, cafo);
                (lat - 0.005 + 0.001 * wobble(i, 5), lon + 0.02 + 0.001 * wobble(i, 6))
            }
        }
    }
}

fn compliant_area(i: usize) -> f64 {
    10_000.0 + ((i * 7919) % 50) as f64 * 1000.0
}

/// Visits `0..n` in a fixed scrambled order.
fn scrambled(n: usize, step: usize) -> impl Iterator<Item = usize> {
    debug_assert!(n == 0 || gcd(n, step) == 1);
    (0..n).map(move |i| (i * step + 7) % n.max(1))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn coprime_step(n: usize) -> usize {
    (7919..).find(|s| gcd(n, *s) == 1).expect("a coprime step exists")
}

impl Scenario {
    pub fn build() -> Scenario {
        let mut items: Vec<Item> = Vec::new();

        // Detections sent to both organizations.
        let mut overlap: Vec<(usize, ElpcOutcome, WdnrOutcome)> = Vec::new();
        let both = |ec: bool, wc: bool| {
            (
                ElpcOutcome { followed: true, reached: true, visible: true, confirmed: ec },
                WdnrOutcome { accepted: true, confirmed: wc },
            )
        };
        for (b, ec, wc) in [(7, false, false), (8, true, true), (8, true, true), (9, true, true), (9, false, true)] {
            let (e, w) = both(ec, wc);
            overlap.push((b, e, w));
        }
        for (j, b) in (5..=9).enumerate() {
            let (n, c) = OVERLAP_ELPC_ONLY[j];
            for k in 0..n {
                let e = ElpcOutcome { followed: true, reached: true, visible: true, confirmed: k < c };
                overlap.push((b, e, WdnrOutcome::default()));
            }
            let (n, c) = OVERLAP_WDNR_ONLY[j];
            for k in 0..n {
                overlap.push((b, ElpcOutcome::default(), WdnrOutcome { accepted: true, confirmed: k < c }));
            }
            for _ in 0..OVERLAP_NEITHER[j] {
                overlap.push((b, ElpcOutcome::default(), WdnrOutcome::default()));
            }
        }

        // Advocacy stream, per bucket.
        let mut elpc_items: Vec<(usize, ElpcOutcome, Option<WdnrOutcome>)> = Vec::new();
        for &(b, sent, followed, unreached, visible, confirmed) in &ELPC_BUCKETS {
            let ov: Vec<_> = overlap.iter().filter(|o| o.0 == b).collect();
            let of = ov.iter().filter(|o| o.1.followed).count();
            let oc = ov.iter().filter(|o| o.1.confirmed).count();
            elpc_items.extend(ov.iter().map(|o| (b, o.1, Some(o.2))));
            let rest = sent - ov.len();
            let (f, v, c) = (followed - of, visible - of, confirmed - oc);
            for k in 0..rest {
                let e = if k < c {
                    ElpcOutcome { followed: true, reached: true, visible: true, confirmed: true }
                } else if k < v {
                    ElpcOutcome { followed: true, reached: true, visible: true, confirmed: false }
                } else if k < v + unreached {
                    ElpcOutcome { followed: true, reached: false, visible: false, confirmed: false }
                } else if k < f {
                    ElpcOutcome { followed: true, reached: true, visible: false, confirmed: false }
                } else {
                    ElpcOutcome::default()
                };
                elpc_items.push((b, e, None));
            }
        }

        // Slot assignment: scramble, then fill (run, verifier) slots.
        let n = elpc_items.len();
        let order: Vec<usize> = scrambled(n, coprime_step(n)).collect();
        let mut slot = 0usize;
        let mut filled = 0usize;
        let mut full_slots = Vec::new();
        let mut bucket_seen: BTreeMap<usize, usize> = BTreeMap::new();
        for idx in order {
            while filled >= SLOT_PATTERN[slot % 7] {
                slot += 1;
                filled = 0;
            }
            let (run, v) = (slot / 15, slot % 15);
            assert!(run < RUN_COUNT, "advocacy slots exhausted");
            let (b, e, w) = elpc_items[idx];
            let seq = bucket_seen.entry(b).or_default();
            let score = score_in(b, *seq);
            *seq += 1;
            let cafo = (filled + run) % 2;
            let place = match w {
                Some(_) => Place::ElpcField { v, cafo, field: filled % 2 },
                None => Place::ElpcOff { v, cafo },
            };
            items.push(Item { run, score, place, elpc: Some(e), wdnr: w, area_m2: 0.0 });
            filled += 1;
            if filled == 5 {
                full_slots.push((run, v));
            }
        }
        for (j, &(run, v)) in full_slots.iter().enumerate() {
            items.push(Item {
                run,
                score: (100 + (j % 90)) as f64 / 1000.0,
                place: Place::ElpcDecoy { v, cafo: j % 2 },
                elpc: None,
                wdnr: None,
                area_m2: 0.0,
            });
        }

        // Regulator-only stream.
        let mut w_idx = 0usize;
        for &(b, sent, accepted, confirmed) in &WDNR_BUCKETS {
            let ov: Vec<_> = overlap.iter().filter(|o| o.0 == b).collect();
            let oa = ov.iter().filter(|o| o.2.accepted).count();
            let oc = ov.iter().filter(|o| o.2.confirmed).count();
            let (a, c) = (accepted - oa, confirmed - oc);
            for k in 0..sent - ov.len() {
                let w = WdnrOutcome { accepted: k < a, confirmed: k < c };
                let score = if b == 5 && k == sent - ov.len() - 1 { 0.5 } else { score_in(b, k) };
                let cafo = (w_idx * 5) % WDNR_CAFO_COUNT;
                items.push(Item {
                    run: w_idx % RUN_COUNT,
                    score,
                    place: Place::WdnrField { cafo, field: (w_idx / WDNR_CAFO_COUNT) % 2 },
                    elpc: None,
                    wdnr: Some(w),
                    area_m2: 0.0,
                });
                w_idx += 1;
            }
        }
        // Just below the threshold on a field, and confident but off-field.
        items.push(Item { run: 0, score: 0.49, place: Place::WdnrField { cafo: 1, field: 0 }, elpc: None, wdnr: None, area_m2: 0.0 });
        items.push(Item { run: 0, score: 0.9, place: Place::WdnrOff { cafo: 2 }, elpc: None, wdnr: None, area_m2: 0.0 });

        // Compliance categories for confirmed regulator detections.
        let mut pool: Vec<Category> = std::iter::repeat_n(Category::Violation, 11)
            .chain(std::iter::repeat_n(Category::PreWindow, 27))
            .chain(std::iter::repeat_n(Category::Unregulated, 23))
            .chain(std::iter::repeat_n(Category::Other, 3))
            .collect();
        let perm: Vec<usize> = scrambled(pool.len(), 29).collect();
        pool = perm.iter().map(|&p| pool[p]).collect();
        let confirmed_idx: Vec<usize> = (0..items.len()).filter(|&i| items[i].wdnr.is_some_and(|w| w.confirmed)).collect();
        assert_eq!(confirmed_idx.len(), pool.len());
        let category: BTreeMap<usize, Category> = confirmed_idx.iter().copied().zip(pool.iter().copied()).collect();

        let mut violations = VIOLATION_AREAS_M2.iter();
        for (i, item) in items.iter_mut().enumerate() {
            item.area_m2 = match category.get(&i) {
                Some(Category::Violation) => *violations.next().expect("eleven violations"),
                _ => compliant_area(i),
            };
        }

        Self::assemble(items, category)
    }

    fn assemble(items: Vec<Item>, category: BTreeMap<usize, Category>) -> Scenario {
        let runs: Vec<ModelRun> = (0..RUN_COUNT)
            .map(|r| {
                let dispatched_on = date(2, 2) + Duration::days(2 * r as i64);
                let base = TOTAL_IMAGES / RUN_COUNT as u64;
                let extra = (r as u64) < TOTAL_IMAGES % RUN_COUNT as u64;
                ModelRun {
                    run_id: run_id(r),
                    imagery_date: dispatched_on - Duration::days(1),
                    dispatched_on,
                    images_scanned: Some(base + extra as u64),
                }
            })
            .collect();

        // Detection ids numbered within each run.
        let mut per_run = [0usize; RUN_COUNT];
        let ids: Vec<String> = items
            .iter()
            .map(|it| {
                per_run[it.run] += 1;
                format!("{}-{:04}", run_id(it.run), per_run[it.run])
            })
            .collect();
        let mut files: Vec<String> = vec![String::new(); RUN_COUNT];
        let mut centers = Vec::with_capacity(items.len());
        for (i, it) in items.iter().enumerate() {
            let center = it.place.center(i);
            centers.push(center);
            let rec = DetectionRecord {
                detection_id: ids[i].clone(),
                run_id: run_id(it.run),
                score: it.score,
                bbox: square(center, it.area_m2),
                image_uri: format!("s3://landtriage-fixture/{}/{}.png", run_id(it.run), ids[i]),
                summer_image_uri: (i % 3 != 0)
                    .then(|| format!("s3://landtriage-fixture/summer/{}.png", ids[i])),
            };
            files[it.run].push_str(&serde_json::to_string(&rec).expect("record serializes"));
            files[it.run].push('\n');
        }

        let mut expected_elpc = BTreeSet::new();
        let mut expected_queue = BTreeSet::new();
        let mut screenings = Vec::new();
        let mut responses = Vec::new();
        let mut determinations = Vec::new();
        let mut pre_window = Vec::new();

        let mut latencies: Vec<i64> = LATENCY.iter().flat_map(|&(d, n)| std::iter::repeat_n(d, n)).collect();
        let lat_perm: Vec<usize> = scrambled(latencies.len(), coprime_step(latencies.len())).collect();
        latencies = lat_perm.iter().map(|&p| latencies[p]).collect();
        let mut latencies = latencies.into_iter();
        let mut high_left = HIGH_CONFIDENCE;
        let reasons = [RejectReason::Vegetation, RejectReason::Building, RejectReason::Roadway, RejectReason::Shadow, RejectReason::Other];
        let mut rejected = 0usize;
        let mut soft = 0usize;
        let mut cat_seen: BTreeMap<&'static str, usize> = BTreeMap::new();

        for (i, it) in items.iter().enumerate() {
            let run = &runs[it.run];
            let det = &ids[i];
            if let (Some(e), Place::ElpcField { v, .. } | Place::ElpcOff { v, .. }) = (it.elpc, it.place) {
                let aid = Assignment::elpc_id(det, &verifier_id(v));
                expected_elpc.insert(aid.clone());
                if e.followed {
                    let latency = if e.reached { latencies.next().expect("one latency per visit") } else { 1 };
                    let b = (it.score * 10.0).floor() as usize;
                    let confidence = if e.confirmed {
                        if high_left[b - 2] > 0 {
                            high_left[b - 2] -= 1;
                            ReporterConfidence::High
                        } else {
                            soft += 1;
                            if soft.is_multiple_of(2) { ReporterConfidence::Low } else { ReporterConfidence::Medium }
                        }
                    } else if e.visible {
                        if i % 2 == 0 { ReporterConfidence::Medium } else { ReporterConfidence::Low }
                    } else {
                        ReporterConfidence::Low
                    };
                    responses.push(FieldResponse {
                        response_id: String::new(),
                        assignment_id: aid.clone(),
                        visited_on: run.dispatched_on + Duration::days(latency),
                        site_reached: e.reached,
                        location_visible: e.visible,
                        manure_present: e.visible.then_some(e.confirmed),
                        reporter_confidence: e.reached.then_some(confidence),
                        notes: match (e.reached, e.visible) {
                            (false, _) => "road closed".into(),
                            (true, false) => "view blocked from public road".into(),
                            _ => String::new(),
                        },
                        photo_uris: if e.confirmed { vec![format!("photo://{aid}/1.jpg")] } else { Vec::new() },
                    });
                }
            }
            let Some(w) = it.wdnr else { continue };
            expected_queue.insert(det.clone());
            let decided_on = run.dispatched_on + Duration::days(1);
            screenings.push(ScreeningCall {
                detection_id: det.clone(),
                decision: if w.accepted { Decision::Accept } else { Decision::Reject },
                reason: (!w.accepted).then(|| {
                    rejected += 1;
                    reasons[rejected % reasons.len()]
                }),
                decided_on,
            });
            if !w.accepted {
                continue;
            }
            let aid = Assignment::wdnr_id(det);
            let ruled_on = decided_on + Duration::days(3 + (i % 4) as i64);
            let event = category.get(&i).map(|c| {
                let key = match c {
                    Category::Violation => "violation",
                    Category::PreWindow => "pre_window",
                    Category::Unregulated => "unregulated",
                    Category::Other => "other",
                };
                let j = {
                    let n = cat_seen.entry(key).or_default();
                    *n += 1;
                    *n - 1
                };
                let in_window = run.imagery_date;
                match c {
                    Category::Violation => SpreadEvent {
                        event_date: in_window,
                        entity_class: EntityClass::Cafo,
                        animal_units: Some(1000.0 + (j * 370) as f64),
                        waste_phase: SpreadPhase::Liquid,
                        surface: if j % 3 == 0 { Surface::Frozen } else { Surface::SnowCovered },
                        emergency_approved: false,
                        claimed_pre_window: false,
                    },
                    Category::PreWindow => {
                        pre_window.push(PreWindowSeries { assignment_id: aid.clone(), observations: series(j) });
                        SpreadEvent {
                            event_date: date(1, 20) + Duration::days((j % 10) as i64),
                            entity_class: EntityClass::Cafo,
                            animal_units: Some(1200.0 + (j * 55) as f64),
                            waste_phase: SpreadPhase::Liquid,
                            surface: Surface::Frozen,
                            emergency_approved: false,
                            claimed_pre_window: true,
                        }
                    }
                    Category::Unregulated => SpreadEvent {
                        event_date: in_window,
                        entity_class: EntityClass::Afo,
                        animal_units: Some(300.0 + ((j * 70) % 691) as f64),
                        waste_phase: SpreadPhase::Liquid,
                        surface: Surface::SnowCovered,
                        emergency_approved: false,
                        claimed_pre_window: false,
                    },
                    Category::Other => SpreadEvent {
                        event_date: in_window,
                        entity_class: EntityClass::Cafo,
                        animal_units: Some(2500.0),
                        waste_phase: SpreadPhase::Solid,
                        surface: Surface::BareUnfrozen,
                        emergency_approved: false,
                        claimed_pre_window: false,
                    },
                }
            });
            determinations.push(Determination {
                determination_id: String::new(),
                assignment_id: aid,
                decided_on: ruled_on,
                manure_present: w.confirmed,
                compliance: None,
                method_notes: if w.confirmed { "site inspection".into() } else { "no manure observed on inspection".into() },
                event,
            });
        }

        let decoys: Vec<usize> = (0..items.len()).filter(|&i| matches!(items[i].place, Place::ElpcDecoy { .. })).collect();
        let incidentals = incidentals(&decoys.iter().take(2).map(|&i| centers[i]).collect::<Vec<_>>());

        Scenario {
            registry: registry_docs(),
            runs,
            detection_files: (0..RUN_COUNT).map(|r| (run_id(r), files[r].clone())).collect(),
            screenings,
            responses,
            determinations,
            incidentals,
            pre_window_series: pre_window,
            expected_elpc,
            expected_queue,
        }
    }

    /// Replays the scenario through the engine's command surface.
    pub fn load(&self, engine: &mut Engine) -> Result<()> {
        engine.load_registry(self.registry.clone())?;
        for (run, (run_id, text)) in self.runs.iter().zip(&self.detection_files) {
            engine.register_run(run.clone())?;
            let out = engine.ingest_detections(run_id, text)?;
            if let Some(r) = out.rejected.first() {
                return Err(Error::validation("fixture_rejected", r.line.to_string(), r.message.clone()));
            }
            engine.route(run_id, Org::Wdnr)?;
            engine.route(run_id, Org::Elpc)?;
        }
        for s in &self.screenings {
            engine.screen(&s.detection_id, s.decision, s.reason, None, s.decided_on)?;
        }
        for r in &self.responses {
            engine.submit_response(r.clone())?;
        }
        for d in &self.determinations {
            engine.submit_determination(d.clone())?;
        }
        for r in &self.incidentals {
            engine.add_incidental(r.clone())?;
        }
        Ok(())
    }

    /// Differences between what routing produced and what the scenario
    /// was built to produce.
    pub fn verify(&self, state: &State) -> Vec<String> {
        let mut out = Vec::new();
        let elpc: BTreeSet<String> =
            state.assignments.values().filter(|a| a.org == Org::Elpc).map(|a| a.assignment_id.clone()).collect();
        let queue: BTreeSet<String> = state.screening.keys().cloned().collect();
        for (name, got, want) in [("advocacy assignment", &elpc, &self.expected_elpc), ("screening item", &queue, &self.expected_queue)] {
            for id in want.difference(got) {
                out.push(format!("missing {name} {id}"));
            }
            for id in got.difference(want) {
                out.push(format!("unexpected {name} {id}"));
            }
        }
        out
    }

    /// Writes the raw input files an operator would feed the CLI.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("detections"))?;
        std::fs::write(dir.join("facilities.json"), pretty(&self.registry.facilities)?)?;
        std::fs::write(dir.join("fields.geojson"), pretty(&self.registry.fields)?)?;
        std::fs::write(dir.join("verifiers.json"), pretty(&self.registry.verifiers)?)?;
        std::fs::write(dir.join("runs.json"), pretty(&self.runs)?)?;
        for (run_id, text) in &self.detection_files {
            std::fs::write(dir.join("detections").join(format!("{run_id}.jsonl")), text)?;
        }
        std::fs::write(dir.join("responses.csv"), fieldops::to_response_csv(&self.responses)?)?;
        std::fs::write(dir.join("screening.jsonl"), jsonl(&self.screenings)?)?;
        std::fs::write(dir.join("determinations.jsonl"), jsonl(&self.determinations)?)?;
        std::fs::write(dir.join("incidentals.jsonl"), jsonl(&self.incidentals)?)?;
        std::fs::write(dir.join("pre_window_series.json"), pretty(&self.pre_window_series)?)?;
        Ok(())
    }
}

fn pretty<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn jsonl<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Observation series for the `j`-th pre-window claim. The first eleven
/// show manure before the window opens, the next seven first show it just
/// after opening with a clear image two days earlier or less, five show a
/// clear in-window image before the first sighting, and four are too
/// sparse to say.
fn series(j: usize) -> Vec<Observation> {
    let o = |m, d, seen| Observation { observed_on: date(m, d), manure_visible: seen, usable: true };
    match j {
        0..=10 => vec![o(1, 10, false), o(1, 18 + (j % 5) as u32, false), o(1, 26 + (j % 4) as u32, true), o(2, 3, true)],
        11..=17 => vec![o(1, 20, false), o(1, 30 + (j % 2) as u32, false), o(2, 2, true), o(2, 7, true)],
        18..=22 => vec![o(1, 22, false), o(2, 1 + (j % 3) as u32, false), o(2, 6, true)],
        _ if j.is_multiple_of(2) => vec![
            o(1, 15, false),
            Observation { observed_on: date(1, 25), manure_visible: true, usable: false },
            o(2, 4, false),
        ],
        _ => vec![o(1, 20, false), o(2, 5, true)],
    }
}

fn incidentals(decoy_centers: &[(f64, f64)]) -> Vec<IncidentalReport> {
    let mut out = Vec::new();
    let mut push = |loc: Option<(f64, f64)>, notes: &str| {
        let n = out.len();
        out.push(IncidentalReport {
            report_id: format!("inc-{:03}", n + 1),
            reporter_verifier_id: verifier_id(n % 15),
            observed_on: date(2, 3) + Duration::days((n % 30) as i64),
            location: loc.map(|(lat, lon)| GeoPoint { lat, lon }),
            notes: notes.to_string(),
        });
    };
    for _ in 0..5 {
        push(None, "described by road names only");
    }
    for &c in decoy_centers {
        push(Some(c), "spreading seen while driving");
    }
    for k in 0..14 {
        push(Some((46.2 + 0.02 * k as f64, -90.5 + 0.05 * k as f64)), "north of the monitored area");
    }
    for k in 0..13 {
        let (lat, lon) = wdnr_cafo(k * 5);
        push(Some((lat + 0.022, lon - 0.03)), "spreading seen while driving");
    }
    out
}

fn registry_docs() -> RegistryDocs {
    let mut facilities = Vec::new();
    let mut features = Vec::new();
    let cafo = |id: String, at: (f64, f64), i: usize| FacilityDoc {
        facility_id: id.clone(),
        lat: at.0,
        lon: at.1,
        kind: FacilityKind::Cafo,
        animal_units: Some(1000.0 + ((i * 373) % 4000) as f64),
        waste_phase: Some(if i.is_multiple_of(3) { WastePhase::Both } else { WastePhase::Liquid }),
        permit_id: Some(format!("WI-{:07}", 30_000 + i)),
    };
    let mut add_fields = |fid: &str, at: (f64, f64)| {
        for f in 0..2 {
            let (a, b, c, d) = field_rect(at, f);
            let ring = vec![
                GeoPoint { lat: a, lon: b },
                GeoPoint { lat: a, lon: d },
                GeoPoint { lat: c, lon: d },
                GeoPoint { lat: c, lon: b },
            ];
            let poly = GeoPolygon::new(ring, Vec::new()).expect("fixture fields are valid");
            features.push(field_feature(&format!("NMP-{fid}-{}", ['a', 'b'][f]), fid, &poly));
        }
    };
    let mut i = 0;
    for v in 0..15 {
        for k in 0..2 {
            let id = format!("F-E{:02}{}", v + 1, ['a', 'b'][k]);
            let at = elpc_cafo(v, k);
            facilities.push(cafo(id.clone(), at, i));
            add_fields(&id, at);
            i += 1;
        }
    }
    for c in 0..WDNR_CAFO_COUNT {
        let id = format!("F-W{:02}", c + 1);
        let at = wdnr_cafo(c);
        facilities.push(cafo(id.clone(), at, i));
        add_fields(&id, at);
        i += 1;
    }
    for (n, (lat, lon)) in [(43.55, -90.4), (44.65, -88.0)].into_iter().enumerate() {
        facilities.push(FacilityDoc {
            facility_id: format!("A-{:02}", n + 1),
            lat,
            lon,
            kind: FacilityKind::Afo,
            animal_units: Some(450.0 + 200.0 * n as f64),
            waste_phase: Some(WastePhase::Solid),
            permit_id: None,
        });
    }
    for (n, (lat, lon)) in [(45.05, -87.15), (44.95, -87.25)].into_iter().enumerate() {
        facilities.push(FacilityDoc {
            facility_id: format!("U-{:02}", n + 1),
            lat,
            lon,
            kind: FacilityKind::Unknown,
            animal_units: None,
            waste_phase: None,
            permit_id: None,
        });
    }
    let mut verifiers: Vec<VerifierDoc> = (0..15)
        .map(|v| {
            let (lat, lon) = verifier_home(v);
            VerifierDoc { verifier_id: verifier_id(v), lat, lon, org: Org::Elpc, active: true }
        })
        .collect();
    verifiers.push(VerifierDoc { verifier_id: "v16".into(), lat: 44.1, lon: -89.9, org: Org::Elpc, active: false });
    verifiers.push(VerifierDoc { verifier_id: "w01".into(), lat: 43.07, lon: -89.4, org: Org::Wdnr, active: true });
    RegistryDocs {
        facilities,
        fields: serde_json::json!({"type": "FeatureCollection", "features": features}),
        verifiers,
    }
}
