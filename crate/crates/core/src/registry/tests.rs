use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::*;

fn fac(id: &str, lat: f64, lon: f64) -> FacilityDoc {
    FacilityDoc {
        facility_id: id.into(),
        lat,
        lon,
        kind: FacilityKind::Cafo,
        animal_units: Some(1500.0),
        waste_phase: Some(WastePhase::Liquid),
        permit_id: None,
    }
}

fn square_feature(id: &str, owner: &str, lat: f64, lon: f64, half: f64) -> Value {
    let poly = GeoPolygon::new(
        vec![
            GeoPoint { lat: lat - half, lon: lon - half },
            GeoPoint { lat: lat - half, lon: lon + half },
            GeoPoint { lat: lat + half, lon: lon + half },
            GeoPoint { lat: lat + half, lon: lon - half },
        ],
        vec![],
    )
    .unwrap();
    field_feature(id, owner, &poly)
}

use serde_json::Value;

fn collection(features: Vec<Value>) -> Value {
    json!({"type": "FeatureCollection", "features": features})
}

#[test]
fn empty_documents_load() {
    let r = Registry::load(RegistryDocs::default()).unwrap();
    assert_eq!(r.summary(), LoadSummary { facilities: 0, fields: 0, verifiers: 0 });
    let b = GeoBBox::new(43.0, -89.0, 43.1, -88.9).unwrap();
    assert!(r.fields_intersecting(&b).is_empty());
}

#[test]
fn duplicate_facility_id_is_named() {
    let docs = RegistryDocs {
        facilities: vec![fac("F1", 43.0, -89.0), fac("F2", 43.1, -89.0), fac("F1", 43.2, -89.0)],
        ..Default::default()
    };
    let err = Registry::load(docs).unwrap_err();
    assert_eq!(err.code(), "duplicate_id");
    assert!(err.to_string().contains("'F1'"), "{err}");
}

#[test]
fn dangling_permittee_rejected() {
    let docs = RegistryDocs {
        facilities: vec![fac("F1", 43.0, -89.0)],
        fields: collection(vec![square_feature("A", "F9", 43.0, -89.0, 0.01)]),
        verifiers: vec![],
    };
    assert_eq!(Registry::load(docs).unwrap_err().code(), "unknown_permittee");
}

#[test]
fn malformed_geometry_reports_feature_index() {
    let bad = json!({
        "type": "Feature",
        "properties": {"field_id": "B", "permittee_facility_id": "F1"},
        "geometry": {"type": "Polygon", "coordinates": [[[-89.0, 43.0], [-88.9, 43.1]]]},
    });
    let docs = RegistryDocs {
        facilities: vec![fac("F1", 43.0, -89.0)],
        fields: collection(vec![square_feature("A", "F1", 43.0, -89.0, 0.01), bad]),
        verifiers: vec![],
    };
    match Registry::load(docs).unwrap_err() {
        Error::Validation { code, field, .. } => {
            assert_eq!(code, "invalid_geometry");
            assert_eq!(field, "fields.features[1]");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn cafo_animal_unit_floor_enforced() {
    let mut f = fac("F1", 43.0, -89.0);
    f.animal_units = Some(999.0);
    let docs = RegistryDocs { facilities: vec![f], ..Default::default() };
    assert_eq!(Registry::load(docs).unwrap_err().code(), "animal_units_kind_mismatch");
}

#[test]
fn multipolygon_fields_parse() {
    let mp = json!({
        "type": "Feature",
        "properties": {"field_id": "M", "permittee_facility_id": "F1"},
        "geometry": {"type": "MultiPolygon", "coordinates": [
            [[[-89.0, 43.0], [-88.99, 43.0], [-88.99, 43.01], [-89.0, 43.01], [-89.0, 43.0]]],
            [[[-88.9, 43.0], [-88.89, 43.0], [-88.89, 43.01], [-88.9, 43.01], [-88.9, 43.0]]]
        ]},
    });
    let docs = RegistryDocs { facilities: vec![fac("F1", 43.0, -89.0)], fields: collection(vec![mp]), verifiers: vec![] };
    let r = Registry::load(docs).unwrap();
    let second_part = GeoBBox::new(43.004, -88.896, 43.005, -88.895).unwrap();
    assert_eq!(r.fields_intersecting(&second_part).len(), 1);
    let gap = GeoBBox::new(43.004, -88.95, 43.005, -88.94).unwrap();
    assert!(r.fields_intersecting(&gap).is_empty());
}

#[test]
fn verifier_radius_boundaries() {
    let docs = RegistryDocs {
        verifiers: vec![
            VerifierDoc { verifier_id: "v1".into(), lat: 43.0, lon: -89.0, org: Org::Elpc, active: true },
            VerifierDoc { verifier_id: "v0".into(), lat: 43.0, lon: -89.0, org: Org::Elpc, active: false },
        ],
        ..Default::default()
    };
    let r = Registry::load(docs).unwrap();
    let at = GeoPoint { lat: 43.0, lon: -89.0 };
    let hits = r.verifiers_within(at, 0.0);
    assert_eq!(hits.len(), 1, "co-located active verifier only");
    assert_eq!(hits[0].1, 0.0);
    assert!(r.verifiers_within(GeoPoint { lat: 43.001, lon: -89.0 }, 0.0).is_empty());
}

fn random_registry(rng: &mut ChaCha8Rng) -> Registry {
    let nf = rng.gen_range(1..12);
    let facilities: Vec<FacilityDoc> = (0..nf)
        .map(|i| fac(&format!("F{i:02}"), 43.0 + rng.gen::<f64>() * 0.5, -89.5 + rng.gen::<f64>() * 0.5))
        .collect();
    let features = (0..rng.gen_range(0..60))
        .map(|i| {
            let owner = &facilities[rng.gen_range(0..facilities.len())].facility_id;
            square_feature(
                &format!("fld{i:03}"),
                owner,
                43.0 + rng.gen::<f64>() * 0.5,
                -89.5 + rng.gen::<f64>() * 0.5,
                0.002 + rng.gen::<f64>() * 0.03,
            )
        })
        .collect();
    let verifiers = (0..rng.gen_range(0..25))
        .map(|i| VerifierDoc {
            verifier_id: format!("v{i:02}"),
            lat: 43.0 + rng.gen::<f64>() * 0.5,
            lon: -89.5 + rng.gen::<f64>() * 0.5,
            org: Org::Elpc,
            active: rng.gen_bool(0.85),
        })
        .collect();
    Registry::load(RegistryDocs { facilities, fields: collection(features), verifiers }).unwrap()
}

#[test]
fn lookups_match_linear_scan_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let r = random_registry(&mut rng);
        for _ in 0..20 {
            let lat = 42.95 + rng.gen::<f64>() * 0.6;
            let lon = -89.55 + rng.gen::<f64>() * 0.6;
            let q = GeoBBox::new(lat, lon, lat + rng.gen::<f64>() * 0.08, lon + rng.gen::<f64>() * 0.08).unwrap();
            let got: Vec<&str> = r.fields_intersecting(&q).iter().map(|f| f.field_id.as_str()).collect();
            let mut want: Vec<&str> = r
                .fields()
                .iter()
                .filter(|f| f.geometry.iter().any(|p| geo::bbox_intersects_polygon(&q, p)))
                .map(|f| f.field_id.as_str())
                .collect();
            want.sort();
            assert_eq!(got, want);

            let pt = GeoPoint { lat, lon };
            let radius = rng.gen::<f64>() * 30_000.0;
            let got: Vec<&str> = r.verifiers_within(pt, radius).iter().map(|(v, _)| v.verifier_id.as_str()).collect();
            let mut want: Vec<(f64, &str)> = r
                .verifiers()
                .iter()
                .filter(|v| v.active)
                .map(|v| (geo::haversine_m(pt, v.home), v.verifier_id.as_str()))
                .filter(|(d, _)| *d <= radius)
                .collect();
            want.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
            assert_eq!(got, want.into_iter().map(|(_, id)| id).collect::<Vec<_>>());
        }
    }
}

proptest! {
    #[test]
    fn enlarging_query_never_shrinks_result(seed in 0u64..500, grow in 0.0f64..0.05) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_registry(&mut rng);
        let lat = 43.0 + rng.gen::<f64>() * 0.5;
        let lon = -89.5 + rng.gen::<f64>() * 0.5;
        let small = GeoBBox::new(lat, lon, lat + 0.01, lon + 0.01).unwrap();
        let big = GeoBBox::new(lat - grow, lon - grow, lat + 0.01 + grow, lon + 0.01 + grow).unwrap();
        let s: BTreeSet<String> = r.fields_intersecting(&small).iter().map(|f| f.field_id.clone()).collect();
        let b: BTreeSet<String> = r.fields_intersecting(&big).iter().map(|f| f.field_id.clone()).collect();
        prop_assert!(s.is_subset(&b));
    }
}
