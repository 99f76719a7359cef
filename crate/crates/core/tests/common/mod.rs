//! Independent oracles shared by the property suites and the acceptance
//! runner. None of these call the code paths they check.

#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use landtriage_core::compliance::{classify, Compliance, EntityClass, RuleWindow, SpreadEvent, SpreadPhase, Surface};
use landtriage_core::config::Durability;
use landtriage_core::detections::{Detection, IncidentalReport, ModelRun};
use landtriage_core::engine::{Clock, Engine, EventRecord};
use landtriage_core::eventlog::LOG_FILE;
use landtriage_core::fieldops::{Determination, FieldResponse, ReporterConfidence};
use landtriage_core::geo::{self, GeoBBox, GeoPoint, GeoPolygon};
use landtriage_core::registry::{field_feature, FacilityDoc, FacilityKind, Org, Registry, RegistryDocs, VerifierDoc};
use landtriage_core::routing::{self, Decision, ElpcParams, RejectReason, RoutingPolicy};
use landtriage_core::{Config, Exec};

// ---------------------------------------------------------------- geometry

/// Great-circle distance by the spherical law of cosines, in extended
/// working precision via a compensated dot product.
pub fn law_of_cosines_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dl = (b.lon - a.lon).to_radians();
    let c = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
    geo::EARTH_RADIUS_M * c.clamp(-1.0, 1.0).acos()
}

/// Scanline rasterization of a polygon (even-odd over all rings) onto an
/// `n` x `n` grid spanning `frame`. Cell `(i, j)` is row `i` from the
/// bottom, column `j` from the left, filled when its center is inside.
pub struct Raster {
    pub frame: GeoBBox,
    pub n: usize,
    pub cells: Vec<bool>,
}

impl Raster {
    pub fn new(poly: &GeoPolygon, frame: GeoBBox, n: usize) -> Raster {
        let mut cells = vec![false; n * n];
        let rings: Vec<&[GeoPoint]> = std::iter::once(poly.exterior()).chain(poly.holes().iter().map(Vec::as_slice)).collect();
        for i in 0..n {
            let y = frame.min_lat + (i as f64 + 0.5) * (frame.max_lat - frame.min_lat) / n as f64;
            let mut xs = Vec::new();
            for ring in &rings {
                for k in 0..ring.len() {
                    let (p, q) = (ring[k], ring[(k + 1) % ring.len()]);
                    if (p.lat > y) != (q.lat > y) {
                        xs.push(p.lon + (y - p.lat) / (q.lat - p.lat) * (q.lon - p.lon));
                    }
                }
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks(2) {
                let [x0, x1] = pair else { continue };
                for j in 0..n {
                    let x = frame.min_lon + (j as f64 + 0.5) * (frame.max_lon - frame.min_lon) / n as f64;
                    if x >= *x0 && x <= *x1 {
                        cells[i * n + j] = true;
                    }
                }
            }
        }
        Raster { frame, n, cells }
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (
            (self.frame.max_lat - self.frame.min_lat) / self.n as f64,
            (self.frame.max_lon - self.frame.min_lon) / self.n as f64,
        )
    }

    pub fn at(&self, p: GeoPoint) -> Option<bool> {
        let (h, w) = self.cell_size();
        let i = ((p.lat - self.frame.min_lat) / h).floor();
        let j = ((p.lon - self.frame.min_lon) / w).floor();
        if i < 0.0 || j < 0.0 || i >= self.n as f64 || j >= self.n as f64 {
            return Some(false);
        }
        Some(self.cells[i as usize * self.n + j as usize])
    }

    /// Whether any filled cell has its center inside `b`.
    pub fn overlaps(&self, b: &GeoBBox) -> bool {
        let (h, w) = self.cell_size();
        (0..self.n).any(|i| {
            let y = self.frame.min_lat + (i as f64 + 0.5) * h;
            y >= b.min_lat
                && y <= b.max_lat
                && (0..self.n).any(|j| {
                    let x = self.frame.min_lon + (j as f64 + 0.5) * w;
                    x >= b.min_lon && x <= b.max_lon && self.cells[i * self.n + j]
                })
        })
    }
}

fn seg_point_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

fn segments_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let orient = |p: (f64, f64), q: (f64, f64), r: (f64, f64)| (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0);
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0)
}

fn seg_seg_dist(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> f64 {
    if segments_cross(a, b, c, d) {
        return 0.0;
    }
    seg_point_dist(a, c, d).min(seg_point_dist(b, c, d)).min(seg_point_dist(c, a, b)).min(seg_point_dist(d, a, b))
}

fn edges(poly: &GeoPolygon) -> Vec<((f64, f64), (f64, f64))> {
    std::iter::once(poly.exterior())
        .chain(poly.holes().iter().map(Vec::as_slice))
        .flat_map(|r| (0..r.len()).map(move |k| ((r[k].lon, r[k].lat), (r[(k + 1) % r.len()].lon, r[(k + 1) % r.len()].lat))))
        .collect()
}

/// Degree distance from `p` to the polygon boundary.
pub fn boundary_dist(p: GeoPoint, poly: &GeoPolygon) -> f64 {
    edges(poly).iter().map(|&(a, b)| seg_point_dist((p.lon, p.lat), a, b)).fold(f64::INFINITY, f64::min)
}

/// Degree distance between the box outline and the polygon boundary.
pub fn outline_dist(b: &GeoBBox, poly: &GeoPolygon) -> f64 {
    let c = [(b.min_lon, b.min_lat), (b.max_lon, b.min_lat), (b.max_lon, b.max_lat), (b.min_lon, b.max_lat)];
    let pe = edges(poly);
    (0..4)
        .flat_map(|k| pe.iter().map(move |&(p, q)| seg_seg_dist(c[k], c[(k + 1) % 4], p, q)))
        .fold(f64::INFINITY, f64::min)
}

/// Random simple polygon: a star-shaped ring around `center`, optionally
/// with a small square hole at the center.
pub fn random_polygon(rng: &mut ChaCha8Rng, center: (f64, f64), radius: f64, with_hole: bool) -> GeoPolygon {
    let k = rng.gen_range(4..12);
    let step = std::f64::consts::TAU / k as f64;
    // Every angular gap stays below pi, so the ring is star-shaped about
    // the center and therefore simple.
    let angles: Vec<f64> = (0..k).map(|i| (i as f64 + rng.gen_range(0.0..0.5)) * step).collect();
    let ring: Vec<GeoPoint> = angles
        .iter()
        .map(|a| {
            let r = radius * rng.gen_range(0.5..1.0);
            GeoPoint { lat: center.0 + r * a.sin(), lon: center.1 + r * a.cos() }
        })
        .collect();
    let holes = if with_hole {
        let h = radius * 0.15;
        vec![vec![
            GeoPoint { lat: center.0 - h, lon: center.1 - h },
            GeoPoint { lat: center.0 - h, lon: center.1 + h },
            GeoPoint { lat: center.0 + h, lon: center.1 + h },
            GeoPoint { lat: center.0 + h, lon: center.1 - h },
        ]]
    } else {
        Vec::new()
    };
    GeoPolygon::new(ring, holes).expect("star polygons are valid")
}

/// IoU by row-wise integration: each of `rows` latitude strips contributes
/// its exact longitude overlap weighted by cos(latitude).
pub fn strip_iou(a: &GeoBBox, b: &GeoBBox, rows: usize) -> f64 {
    let lo = a.min_lat.min(b.min_lat);
    let hi = a.max_lat.max(b.max_lat);
    let h = (hi - lo) / rows as f64;
    let span = |x: &GeoBBox, y: f64| if y >= x.min_lat && y <= x.max_lat { Some((x.min_lon, x.max_lon)) } else { None };
    let (mut inter, mut union) = (0.0, 0.0);
    for i in 0..rows {
        let y = lo + (i as f64 + 0.5) * h;
        let w = y.to_radians().cos();
        let (sa, sb) = (span(a, y), span(b, y));
        let la = sa.map_or(0.0, |(l, r)| r - l);
        let lb = sb.map_or(0.0, |(l, r)| r - l);
        let li = match (sa, sb) {
            (Some((l1, r1)), Some((l2, r2))) => (r1.min(r2) - l1.max(l2)).max(0.0),
            _ => 0.0,
        };
        inter += li * w;
        union += (la + lb - li) * w;
    }
    if union == 0.0 {
        0.0
    } else {
        inter / union
    }
}

// ----------------------------------------------------------------- routing

pub struct RoutingInstance {
    pub registry: Registry,
    pub detections: Vec<Detection>,
    pub params: ElpcParams,
}

pub fn random_routing_instance(rng: &mut ChaCha8Rng) -> RoutingInstance {
    let nv = rng.gen_range(1..5);
    let verifiers: Vec<VerifierDoc> = (0..nv)
        .map(|i| VerifierDoc {
            verifier_id: format!("v{i}"),
            lat: 44.0 + rng.gen_range(-0.3..0.3),
            lon: -89.0 + rng.gen_range(-0.4..0.4),
            org: if rng.gen_bool(0.85) { Org::Elpc } else { Org::Wdnr },
            active: rng.gen_bool(0.85),
        })
        .collect();
    let registry = Registry::load(RegistryDocs { verifiers, ..Default::default() }).expect("valid registry");
    let nd = rng.gen_range(0..14);
    let detections = (0..nd)
        .map(|i| {
            let lat = 44.0 + rng.gen_range(-0.45..0.45);
            let lon = -89.0 + rng.gen_range(-0.6..0.6);
            // Coarse scores so ties occur and exercise the id tiebreak.
            let score = rng.gen_range(0..10) as f64 / 10.0;
            let bbox = GeoBBox::new(lat - 0.001, lon - 0.001, lat + 0.001, lon + 0.001).unwrap();
            Detection {
                detection_id: format!("d{:02}", rng.gen_range(0..100) * 100 + i),
                run_id: "r".into(),
                bbox,
                score,
                image_uri: "img".into(),
                summer_image_uri: None,
                nearest_facility_id: None,
                centroid: bbox.centroid(),
            }
        })
        .collect();
    let params = ElpcParams {
        radius_m: rng.gen_range(5_000.0..40_000.0),
        top_k: rng.gen_range(1..6),
        policy: if rng.gen_bool(0.5) { RoutingPolicy::NearestExclusive } else { RoutingPolicy::Multi },
    };
    RoutingInstance { registry, detections, params }
}

/// Exhaustive oracle: per verifier, enumerates every subset of eligible
/// detections of the required size and keeps the unique one in which each
/// member outranks each non-member.
pub fn oracle_route(inst: &RoutingInstance) -> Vec<(String, String, u32)> {
    let vs: Vec<_> = inst.registry.verifiers().iter().filter(|v| v.active && v.org == Org::Elpc).collect();
    let mut eligible: BTreeMap<String, Vec<&Detection>> = BTreeMap::new();
    for d in &inst.detections {
        let mut near: Vec<(f64, &str)> = vs
            .iter()
            .map(|v| (law_of_cosines_m(d.centroid, v.home), v.verifier_id.as_str()))
            .filter(|(dist, _)| *dist <= inst.params.radius_m)
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        let take = match inst.params.policy {
            RoutingPolicy::NearestExclusive => near.len().min(1),
            RoutingPolicy::Multi => near.len(),
        };
        for (_, v) in &near[..take] {
            eligible.entry(v.to_string()).or_default().push(d);
        }
    }
    let outranks = |a: &Detection, b: &Detection| a.score > b.score || (a.score == b.score && a.detection_id < b.detection_id);
    let mut out = Vec::new();
    for (v, cands) in eligible {
        let n = cands.len();
        let m = n.min(inst.params.top_k);
        let mut winners = Vec::new();
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != m {
                continue;
            }
            let ok = (0..n).all(|i| {
                mask & (1 << i) == 0 || (0..n).all(|j| mask & (1 << j) != 0 || outranks(cands[i], cands[j]))
            });
            if ok {
                winners.push(mask);
            }
        }
        assert_eq!(winners.len(), 1, "selection must be unique");
        let mut chosen: Vec<&Detection> = (0..n).filter(|i| winners[0] & (1 << i) != 0).map(|i| cands[i]).collect();
        chosen.sort_by(|a, b| if outranks(a, b) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater });
        for (r, d) in chosen.iter().enumerate() {
            out.push((v.clone(), d.detection_id.clone(), r as u32 + 1));
        }
    }
    out.sort();
    out
}

pub fn implementation_route(inst: &RoutingInstance, exec: Exec) -> Vec<(String, String, u32)> {
    let mut out: Vec<_> = routing::route_elpc(&inst.detections, &inst.registry, &inst.params, NaiveDate::MIN, exec)
        .expect("valid params")
        .into_iter()
        .map(|a| (a.verifier_id.unwrap(), a.detection_id, a.rank.unwrap()))
        .collect();
    out.sort();
    out
}

/// Runs `n` random instances from `seed`; returns the number of mismatches.
pub fn routing_mismatches(n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .filter(|i| {
            let mut inst = random_routing_instance(&mut rng);
            inst.detections.sort_by(|a, b| a.detection_id.cmp(&b.detection_id));
            inst.detections.dedup_by(|a, b| a.detection_id == b.detection_id);
            let exec = if i % 2 == 0 { Exec::Sequential } else { Exec::Parallel };
            oracle_route(&inst) != implementation_route(&inst, exec)
        })
        .count()
}

// -------------------------------------------------------------- compliance

#[derive(Debug, Clone, Copy)]
pub enum DatePos {
    Before,
    Inside,
    After,
}

/// Expected classification written as a truth table over possibilities.
pub fn oracle_classify(entity: EntityClass, au: Option<f64>, phase: SpreadPhase, surface: Surface, when: DatePos, emergency: bool) -> Compliance {
    if !matches!(when, DatePos::Inside) {
        return Compliance::CompliantPreWindow;
    }
    let small = matches!(au, Some(x) if x < 1000.0);
    if entity == EntityClass::Afo || small {
        return Compliance::CompliantUnregulatedEntity;
    }
    if emergency {
        return Compliance::CompliantOther;
    }
    if entity == EntityClass::Unknown {
        return Compliance::Indeterminate;
    }
    let liquid_possible = phase != SpreadPhase::Solid;
    let solid_possible = phase != SpreadPhase::Liquid;
    let restricted_possible = surface != Surface::BareUnfrozen;
    let bare_possible = matches!(surface, Surface::BareUnfrozen | Surface::Unknown);
    // A violation is possible when some completion is liquid or restricted;
    // compliance is possible when some completion is solid on bare ground.
    let can_violate = liquid_possible || restricted_possible;
    let can_comply = solid_possible && bare_possible;
    match (can_violate, can_comply) {
        (true, false) => Compliance::Violation,
        (false, true) => Compliance::CompliantOther,
        _ => Compliance::Indeterminate,
    }
}

/// Every combination of the classification inputs; returns (cells, mismatches).
pub fn classify_grid() -> (usize, Vec<String>) {
    let w = RuleWindow::default();
    let entities = [EntityClass::Cafo, EntityClass::Afo, EntityClass::Unknown];
    let units = [None, Some(500.0), Some(1500.0)];
    let phases = [SpreadPhase::Liquid, SpreadPhase::Solid, SpreadPhase::Unknown];
    let surfaces = [Surface::SnowCovered, Surface::Frozen, Surface::BareUnfrozen, Surface::Unknown];
    let whens = [(DatePos::Before, w.start - Duration::days(1)), (DatePos::Inside, w.start), (DatePos::After, w.end + Duration::days(1))];
    let mut cells = 0;
    let mut bad = Vec::new();
    for &entity in &entities {
        for &au in &units {
            for &phase in &phases {
                for &surface in &surfaces {
                    for &(pos, date) in &whens {
                        for emergency in [false, true] {
                            let e = SpreadEvent {
                                event_date: date,
                                entity_class: entity,
                                animal_units: au,
                                waste_phase: phase,
                                surface,
                                emergency_approved: emergency,
                                claimed_pre_window: false,
                            };
                            if e.validate(w.animal_unit_threshold).is_err() {
                                continue;
                            }
                            cells += 1;
                            let want = oracle_classify(entity, au, phase, surface, pos, emergency);
                            let got = classify(&e, &w);
                            if got != want {
                                bad.push(format!("{e:?}: got {got:?}, want {want:?}"));
                            }
                        }
                    }
                }
            }
        }
    }
    (cells, bad)
}

// ------------------------------------------------------------------ replay

fn random_registry(rng: &mut ChaCha8Rng) -> RegistryDocs {
    let mut facilities = Vec::new();
    let mut features = Vec::new();
    for i in 0..rng.gen_range(2..6) {
        let (lat, lon) = (44.0 + rng.gen_range(-0.2..0.2), -89.0 + rng.gen_range(-0.2..0.2));
        let id = format!("F{i}");
        facilities.push(FacilityDoc {
            facility_id: id.clone(),
            lat,
            lon,
            kind: FacilityKind::Cafo,
            animal_units: Some(1500.0),
            waste_phase: None,
            permit_id: None,
        });
        let ring = vec![
            GeoPoint { lat: lat + 0.01, lon: lon - 0.01 },
            GeoPoint { lat: lat + 0.01, lon: lon + 0.01 },
            GeoPoint { lat: lat + 0.02, lon: lon + 0.01 },
            GeoPoint { lat: lat + 0.02, lon: lon - 0.01 },
        ];
        features.push(field_feature(&format!("N{i}"), &id, &GeoPolygon::new(ring, Vec::new()).unwrap()));
    }
    let verifiers = (0..rng.gen_range(1..4))
        .map(|i| VerifierDoc {
            verifier_id: format!("v{i}"),
            lat: 44.0 + rng.gen_range(-0.2..0.2),
            lon: -89.0 + rng.gen_range(-0.2..0.2),
            org: Org::Elpc,
            active: true,
        })
        .collect();
    RegistryDocs {
        facilities,
        fields: serde_json::json!({"type": "FeatureCollection", "features": features}),
        verifiers,
    }
}

fn random_detection_file(rng: &mut ChaCha8Rng, run_id: &str, docs: &RegistryDocs, n: usize) -> String {
    let mut out = String::new();
    for i in 0..n {
        let f = &docs.facilities[rng.gen_range(0..docs.facilities.len())];
        let (lat, lon) = (f.lat + rng.gen_range(-0.02..0.03), f.lon + rng.gen_range(-0.02..0.02));
        let score = if rng.gen_bool(0.05) { 1.5 } else { (rng.gen_range(0..1000) as f64) / 1000.0 };
        out.push_str(&format!(
            "{{\"detection_id\":\"{run_id}-{i}\",\"run_id\":\"{run_id}\",\"score\":{score},\"bbox\":{{\"min_lat\":{},\"min_lon\":{},\"max_lat\":{},\"max_lon\":{}}},\"image_uri\":\"img://{i}\"}}\n",
            lat - 0.001,
            lon - 0.001,
            lat + 0.001,
            lon + 0.001
        ));
    }
    out
}

/// Drives a random mix of commands (valid and invalid) against a logged
/// engine in `dir`; invalid commands are refused and leave no trace.
pub fn random_session(rng: &mut ChaCha8Rng, dir: &std::path::Path, steps: usize) -> Engine {
    let cfg = Config {
        data_dir: dir.to_path_buf(),
        durability: Durability::Flush,
        snapshot_every: rng.gen_range(0..20),
        ..Config::default()
    };
    let t0 = chrono::DateTime::parse_from_rfc3339("2023-02-01T00:00:00Z").unwrap().to_utc();
    let mut e = Engine::open(cfg).unwrap().with_clock(Clock::Fixed(t0));
    let docs = random_registry(rng);
    e.load_registry(docs.clone()).unwrap();
    let base = NaiveDate::from_ymd_opt(2023, 1, 25).unwrap();
    let mut runs = 0;
    for _ in 0..steps {
        let st = e.state();
        match rng.gen_range(0..9) {
            0 => {
                let d = base + Duration::days(rng.gen_range(0..60));
                let run = ModelRun {
                    run_id: format!("r{}", if rng.gen_bool(0.1) { 0 } else { runs }),
                    imagery_date: d,
                    dispatched_on: d + Duration::days(rng.gen_range(0..3)),
                    images_scanned: Some(rng.gen_range(100..1000)),
                };
                if e.register_run(run).is_ok() {
                    runs += 1;
                }
            }
            1 if runs > 0 => {
                let r = format!("r{}", rng.gen_range(0..runs));
                let n = rng.gen_range(0..25);
                let text = random_detection_file(rng, &r, &docs, n);
                let _ = e.ingest_detections(&r, &text);
            }
            2 if runs > 0 => {
                let r = format!("r{}", rng.gen_range(0..runs));
                let org = if rng.gen_bool(0.5) { Org::Wdnr } else { Org::Elpc };
                let _ = e.route(&r, org);
            }
            3 => {
                let Some(item) = pick(rng, st.screening.values().collect()) else { continue };
                let id = item.detection_id.clone();
                let accept = rng.gen_bool(0.5);
                let reason = (!accept || rng.gen_bool(0.1)).then_some(RejectReason::Vegetation);
                let when = item.queued_on + Duration::days(rng.gen_range(0..3));
                let decision = if accept { Decision::Accept } else { Decision::Reject };
                let _ = e.screen(&id, decision, reason, None, when);
            }
            4 | 5 => {
                let Some(a) = pick(rng, st.assignments.values().filter(|a| a.org == Org::Elpc).collect()) else { continue };
                let reached = rng.gen_bool(0.9);
                let visible = reached && rng.gen_bool(0.7);
                let r = FieldResponse {
                    response_id: String::new(),
                    assignment_id: a.assignment_id.clone(),
                    visited_on: a.dispatched_on + Duration::days(rng.gen_range(-1..5)),
                    site_reached: reached,
                    location_visible: visible,
                    manure_present: visible.then(|| rng.gen_bool(0.4)),
                    reporter_confidence: Some(ReporterConfidence::ALL[rng.gen_range(0..3)]),
                    notes: String::new(),
                    photo_uris: Vec::new(),
                };
                if st.responses.contains_key(&a.assignment_id) && rng.gen_bool(0.5) {
                    let _ = e.amend_response(r);
                } else {
                    let _ = e.submit_response(r);
                }
            }
            6 | 7 => {
                let Some(a) = pick(rng, st.assignments.values().filter(|a| a.org == Org::Wdnr).collect()) else { continue };
                let manure = rng.gen_bool(0.5);
                let event = manure.then(|| SpreadEvent {
                    event_date: base + Duration::days(rng.gen_range(0..70)),
                    entity_class: [EntityClass::Cafo, EntityClass::Afo, EntityClass::Unknown][rng.gen_range(0..3)],
                    animal_units: None,
                    waste_phase: [SpreadPhase::Liquid, SpreadPhase::Solid, SpreadPhase::Unknown][rng.gen_range(0..3)],
                    surface: [Surface::SnowCovered, Surface::Frozen, Surface::BareUnfrozen, Surface::Unknown][rng.gen_range(0..4)],
                    emergency_approved: rng.gen_bool(0.05),
                    claimed_pre_window: false,
                });
                let d = Determination {
                    determination_id: String::new(),
                    assignment_id: a.assignment_id.clone(),
                    decided_on: a.dispatched_on + Duration::days(rng.gen_range(-1..6)),
                    manure_present: manure,
                    compliance: None,
                    method_notes: String::new(),
                    event,
                };
                let _ = e.submit_determination(d);
            }
            _ => {
                let r = IncidentalReport {
                    report_id: format!("i{}", rng.gen_range(0..20)),
                    reporter_verifier_id: "v0".into(),
                    observed_on: base,
                    location: rng.gen_bool(0.8).then(|| GeoPoint { lat: 44.0, lon: -89.0 }),
                    notes: String::new(),
                };
                let _ = e.add_incidental(r);
            }
        }
    }
    e
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: Vec<&'a T>) -> Option<&'a T> {
    (!items.is_empty()).then(|| items[rng.gen_range(0..items.len())])
}

pub fn read_log(dir: &std::path::Path) -> Vec<EventRecord> {
    std::fs::read_to_string(dir.join(LOG_FILE))
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Fuzzes `n` logs; each must replay twice to the live digest, reopen from
/// disk to the same digest, and pass every invariant.
pub fn replay_fuzz(n: usize, seed: u64) -> Result<(), String> {
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + i as u64);
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let e = random_session(&mut rng, dir.path(), 60);
        let live = e.state().digest();
        let cfg = e.config().clone();
        if let Some(v) = e.state().check_invariants(&cfg).first() {
            return Err(format!("log {i}: invariant violated: {v}"));
        }
        drop(e);
        let records = read_log(dir.path());
        let a = Engine::replay(&records).map_err(|e| format!("log {i}: {e}"))?.digest();
        let b = Engine::replay(&records).map_err(|e| format!("log {i}: {e}"))?.digest();
        let reopened = Engine::open(cfg).map_err(|e| format!("log {i}: {e}"))?.state().digest();
        if a != b || a != live || reopened != live {
            return Err(format!("log {i}: digests differ (live {live}, replay {a}/{b}, reopened {reopened})"));
        }
    }
    Ok(())
}
