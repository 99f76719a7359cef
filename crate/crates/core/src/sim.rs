//! Seeded trial simulator with retained ground truth.
//!
//! Facilities sit on a jittered grid and verifiers at random homes.
//! Detection scores are uniform and each detection is real with
//! probability `curve(score)`, so P(real | score) follows the curve.
//! Everything downstream goes through the engine.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{self, BucketedRates};
use crate::compliance::{EntityClass, SpreadEvent, SpreadPhase, Surface};
use crate::config::Config;
use crate::detections::ModelRun;
use crate::engine::{Clock, Engine};
use crate::error::{Error, Result};
use crate::fieldops::{Determination, FieldResponse, ReporterConfidence};
use crate::geo::{GeoBBox, GeoPoint, GeoPolygon};
use crate::registry::{field_feature, FacilityDoc, FacilityKind, Org, RegistryDocs, VerifierDoc};
use crate::routing::{Decision, RejectReason, ScreeningStatus};

/// Piecewise-linear P(real | score), flat beyond its end points.
#[derive(Debug, Clone, PartialEq)]
pub struct TprCurve {
    points: Vec<(f64, f64)>,
}

impl TprCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<TprCurve> {
        let bad = |m: String| Error::validation("invalid_curve", "tpr_curve", m);
        if points.is_empty() {
            return Err(bad("curve needs at least one point".into()));
        }
        for &(x, y) in &points {
            if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                return Err(bad(format!("point ({x}, {y}) outside the unit square")));
            }
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(bad("scores must be strictly ascending".into()));
        }
        Ok(TprCurve { points })
    }

    pub fn eval(&self, s: f64) -> f64 {
        let p = &self.points;
        if s <= p[0].0 {
            return p[0].1;
        }
        for w in p.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if s <= x1 {
                return y0 + (s - x0) / (x1 - x0) * (y1 - y0);
            }
        }
        p[p.len() - 1].1
    }

    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[1].1 >= w[0].1)
    }
}

impl Default for TprCurve {
    fn default() -> Self {
        TprCurve { points: vec![(0.0, 0.01), (0.5, 0.08), (1.0, 0.6)] }
    }
}

impl FromStr for TprCurve {
    type Err = Error;

    /// `score:rate` pairs separated by commas, e.g. `0:0.01,0.5:0.08,1:0.6`,
    /// or `linear` for the identity.
    fn from_str(s: &str) -> Result<TprCurve> {
        if s.trim() == "linear" {
            return TprCurve::new(vec![(0.0, 0.0), (1.0, 1.0)]);
        }
        let pts = s
            .split(',')
            .map(|pair| {
                let (x, y) = pair
                    .split_once(':')
                    .ok_or_else(|| Error::validation("invalid_curve", "tpr_curve", format!("'{pair}' is not score:rate")))?;
                let num = |t: &str| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::validation("invalid_curve", "tpr_curve", format!("'{t}': {e}")))
                };
                Ok((num(x)?, num(y)?))
            })
            .collect::<Result<Vec<_>>>()?;
        TprCurve::new(pts)
    }
}

impl fmt::Display for TprCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.points.iter().map(|(x, y)| format!("{x}:{y}")).collect();
        f.write_str(&parts.join(","))
    }
}

impl Serialize for TprCurve {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TprCurve {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub seed: u64,
    pub facilities: usize,
    pub runs: usize,
    pub detections_per_run: usize,
    pub tpr_curve: TprCurve,
    /// Share of advocacy assignments that get a response.
    pub follow_rate: f64,
    pub reach_rate: f64,
    pub visible_rate: f64,
    /// Chance a screener accepts a false detection, and rejects a real one.
    pub screen_error: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            seed: 0,
            facilities: 40,
            runs: 6,
            detections_per_run: 120,
            tpr_curve: TprCurve::default(),
            follow_rate: 0.7,
            reach_rate: 0.95,
            visible_rate: 0.77,
            screen_error: 0.1,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if self.facilities == 0 || self.runs == 0 {
            return Err(Error::validation("invalid_sim", "facilities", "facilities and runs must be positive"));
        }
        for (v, name) in [
            (self.follow_rate, "follow_rate"),
            (self.reach_rate, "reach_rate"),
            (self.visible_rate, "visible_rate"),
            (self.screen_error, "screen_error"),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation("invalid_sim", name, format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub detection_id: String,
    pub score: f64,
    pub real: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub params: SimParams,
    pub truth: Vec<Truth>,
    pub elpc: BucketedRates,
    pub wdnr: BucketedRates,
    pub wdnr_screened: BucketedRates,
    pub state_digest: String,
}

fn field_ring(lat: f64, lon: f64) -> Vec<GeoPoint> {
    vec![
        GeoPoint { lat: lat + 0.010, lon: lon - 0.010 },
        GeoPoint { lat: lat + 0.010, lon: lon + 0.010 },
        GeoPoint { lat: lat + 0.020, lon: lon + 0.010 },
        GeoPoint { lat: lat + 0.020, lon: lon - 0.010 },
    ]
}

/// Runs one simulated trial and returns the engine with its outputs.
pub fn simulate(p: &SimParams) -> Result<(Engine, SimOutput)> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let t0 = DateTime::from_timestamp(1_675_209_600, 0).expect("valid epoch");
    let mut e = Engine::in_memory(Config { snapshot_every: 0, ..Config::default() })?.with_clock(Clock::Fixed(t0));

    let side = (p.facilities as f64).sqrt().ceil() as usize;
    let mut facilities = Vec::with_capacity(p.facilities);
    let mut features = Vec::with_capacity(p.facilities);
    for i in 0..p.facilities {
        let lat = 43.0 + (i / side) as f64 * 0.15 + rng.gen_range(-0.03..0.03);
        let lon = -91.0 + (i % side) as f64 * 0.2 + rng.gen_range(-0.03..0.03);
        let id = format!("SF{i:04}");
        facilities.push(FacilityDoc {
            facility_id: id.clone(),
            lat,
            lon,
            kind: FacilityKind::Cafo,
            animal_units: Some(rng.gen_range(1000..5000) as f64),
            waste_phase: None,
            permit_id: None,
        });
        let poly = GeoPolygon::new(field_ring(lat, lon), Vec::new())?;
        features.push(field_feature(&format!("SN{i:04}"), &id, &poly));
    }
    let (lat_hi, lon_hi) = (43.0 + side as f64 * 0.15, -91.0 + side as f64 * 0.2);
    let verifiers = (0..(p.facilities / 4).max(2))
        .map(|i| VerifierDoc {
            verifier_id: format!("sv{i:03}"),
            lat: rng.gen_range(43.0..lat_hi),
            lon: rng.gen_range(-91.0..lon_hi),
            org: Org::Elpc,
            active: true,
        })
        .collect();
    e.load_registry(RegistryDocs {
        facilities: facilities.clone(),
        fields: serde_json::json!({"type": "FeatureCollection", "features": features}),
        verifiers,
    })?;

    let mut truth = Vec::new();
    let base = NaiveDate::from_ymd_opt(2023, 2, 2).expect("valid date");
    for r in 0..p.runs {
        let run_id = format!("sim-{:03}", r + 1);
        let dispatched_on = base + Duration::days(2 * r as i64);
        e.register_run(ModelRun {
            run_id: run_id.clone(),
            imagery_date: dispatched_on - Duration::days(1),
            dispatched_on,
            images_scanned: Some(p.detections_per_run as u64 * 50),
        })?;
        let mut text = String::new();
        for k in 0..p.detections_per_run {
            let f = &facilities[rng.gen_range(0..facilities.len())];
            let (lat, lon) = if rng.gen_bool(0.6) {
                (f.lat + 0.015 + rng.gen_range(-0.003..0.003), f.lon + rng.gen_range(-0.006..0.006))
            } else {
                (f.lat - 0.02 + rng.gen_range(-0.004..0.004), f.lon - 0.02 + rng.gen_range(-0.004..0.004))
            };
            let score = rng.gen_range(0..=1000) as f64 / 1000.0;
            let real = rng.gen_bool(p.tpr_curve.eval(score));
            let h = rng.gen_range(0.0005..0.0015);
            let id = format!("{run_id}-{k:05}");
            let bbox = GeoBBox::new(lat - h, lon - h, lat + h, lon + h)?;
            let rec = crate::detections::DetectionRecord {
                detection_id: id.clone(),
                run_id: run_id.clone(),
                score,
                bbox,
                image_uri: format!("sim://{id}"),
                summer_image_uri: None,
            };
            text.push_str(&serde_json::to_string(&rec)?);
            text.push('\n');
            truth.push(Truth { detection_id: id, score, real });
        }
        e.ingest_detections(&run_id, &text)?;
        e.route(&run_id, Org::Wdnr)?;
        e.route(&run_id, Org::Elpc)?;
    }
    let real: std::collections::HashMap<&str, bool> = truth.iter().map(|t| (t.detection_id.as_str(), t.real)).collect();

    let pending: Vec<(String, NaiveDate)> = e
        .state()
        .screening_queue(Some(ScreeningStatus::Pending))
        .into_iter()
        .map(|i| (i.detection_id.clone(), i.queued_on))
        .collect();
    for (id, queued_on) in pending {
        let is_real = real[id.as_str()];
        let accept = is_real != rng.gen_bool(p.screen_error);
        let (decision, reason) = if accept { (Decision::Accept, None) } else { (Decision::Reject, Some(RejectReason::Other)) };
        let item = e.screen(&id, decision, reason, None, queued_on + Duration::days(1))?;
        if item.status != ScreeningStatus::Accepted {
            continue;
        }
        let event = is_real.then(|| SpreadEvent {
            event_date: queued_on,
            entity_class: if rng.gen_bool(0.7) { EntityClass::Cafo } else { EntityClass::Afo },
            animal_units: None,
            waste_phase: SpreadPhase::Liquid,
            surface: Surface::SnowCovered,
            emergency_approved: false,
            claimed_pre_window: false,
        });
        e.submit_determination(Determination {
            determination_id: String::new(),
            assignment_id: crate::routing::Assignment::wdnr_id(&id),
            decided_on: queued_on + Duration::days(3),
            manure_present: is_real,
            compliance: None,
            method_notes: String::new(),
            event,
        })?;
    }

    let elpc: Vec<(String, String, NaiveDate)> = e
        .state()
        .assignments_filtered(Some(Org::Elpc), None, None)
        .into_iter()
        .map(|a| (a.assignment_id.clone(), a.detection_id.clone(), a.dispatched_on))
        .collect();
    for (aid, det, dispatched_on) in elpc {
        if !rng.gen_bool(p.follow_rate) {
            continue;
        }
        let reached = rng.gen_bool(p.reach_rate);
        let visible = reached && rng.gen_bool(p.visible_rate);
        let score = e.state().detections[&det].score;
        e.submit_response(FieldResponse {
            response_id: String::new(),
            assignment_id: aid,
            visited_on: dispatched_on + Duration::days(rng.gen_range(0..3)),
            site_reached: reached,
            location_visible: visible,
            manure_present: visible.then(|| real[det.as_str()]),
            reporter_confidence: reached.then_some(if score >= 0.8 { ReporterConfidence::High } else { ReporterConfidence::Medium }),
            notes: String::new(),
            photo_uris: Vec::new(),
        })?;
    }

    let edges = analytics::default_edges();
    let out = SimOutput {
        params: p.clone(),
        truth,
        elpc: analytics::confirmation_by_bucket(e.state(), Org::Elpc, false, &edges)?,
        wdnr: analytics::confirmation_by_bucket(e.state(), Org::Wdnr, false, &edges)?,
        wdnr_screened: analytics::confirmation_by_bucket(e.state(), Org::Wdnr, true, &edges)?,
        state_digest: e.state().digest(),
    };
    Ok((e, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_parse_eval() {
        let c: TprCurve = "0:0,0.5:0.2,1:1".parse().unwrap();
        assert_eq!(c.eval(0.25), 0.1);
        assert_eq!(c.eval(1.0), 1.0);
        assert_eq!(c.to_string().parse::<TprCurve>().unwrap(), c);
        assert!(c.is_monotone());
        assert!("1:0,0:1".parse::<TprCurve>().is_err());
        assert!("0:2".parse::<TprCurve>().is_err());
        assert!("x".parse::<TprCurve>().is_err());
    }

    #[test]
    fn small_run_is_deterministic() {
        let p = SimParams { seed: 3, facilities: 9, runs: 2, detections_per_run: 30, ..Default::default() };
        let (_, a) = simulate(&p).unwrap();
        let (_, b) = simulate(&p).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
