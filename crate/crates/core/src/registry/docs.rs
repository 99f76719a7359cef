//! Registry source document formats.
//!
//! - facilities: JSON array of `{facility_id, lat, lon, kind, animal_units?, waste_phase?, permit_id?}`
//! - fields: GeoJSON FeatureCollection of Polygon/MultiPolygon features with
//!   properties `{field_id, permittee_facility_id}`
//! - verifiers: JSON array of `{verifier_id, lat, lon, org, active}`

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Facility, FacilityKind, NmpField, Org, Verifier, WastePhase, CAFO_ANIMAL_UNITS};
use crate::error::{Error, Result};
use crate::geo::{GeoPoint, GeoPolygon};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacilityDoc {
    pub facility_id: String,
    pub lat: f64,
    pub lon: f64,
    pub kind: FacilityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub animal_units: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waste_phase: Option<WastePhase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permit_id: Option<String>,
}

impl FacilityDoc {
    pub(super) fn to_facility(&self) -> Result<Facility> {
        if self.facility_id.trim().is_empty() {
            return Err(Error::validation("missing_id", "facility_id", "facility_id must be non-empty"));
        }
        let location = GeoPoint::new(self.lat, self.lon)?;
        if let Some(au) = self.animal_units {
            if !au.is_finite() || au < 0.0 {
                return Err(Error::validation("invalid_animal_units", "animal_units", format!("{au} is not a non-negative number")));
            }
            match self.kind {
                FacilityKind::Cafo if au < CAFO_ANIMAL_UNITS => {
                    return Err(Error::validation(
                        "animal_units_kind_mismatch",
                        "animal_units",
                        format!("cafo '{}' reports {au} animal units, below {CAFO_ANIMAL_UNITS}", self.facility_id),
                    ))
                }
                FacilityKind::Afo if au >= CAFO_ANIMAL_UNITS => {
                    return Err(Error::validation(
                        "animal_units_kind_mismatch",
                        "animal_units",
                        format!("afo '{}' reports {au} animal units, at or above {CAFO_ANIMAL_UNITS}", self.facility_id),
                    ))
                }
                _ => {}
            }
        }
        Ok(Facility {
            facility_id: self.facility_id.clone(),
            location,
            kind: self.kind,
            animal_units: self.animal_units,
            waste_phase: self.waste_phase.unwrap_or_default(),
            permit_id: self.permit_id.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierDoc {
    pub verifier_id: String,
    pub lat: f64,
    pub lon: f64,
    pub org: Org,
    pub active: bool,
}

impl VerifierDoc {
    pub(super) fn to_verifier(&self) -> Result<Verifier> {
        if self.verifier_id.trim().is_empty() {
            return Err(Error::validation("missing_id", "verifier_id", "verifier_id must be non-empty"));
        }
        Ok(Verifier {
            verifier_id: self.verifier_id.clone(),
            home: GeoPoint::new(self.lat, self.lon)?,
            org: self.org,
            active: self.active,
        })
    }
}

/// The three source documents, kept verbatim so a registry can be rebuilt
/// from the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryDocs {
    pub facilities: Vec<FacilityDoc>,
    pub fields: Value,
    pub verifiers: Vec<VerifierDoc>,
}

impl Default for RegistryDocs {
    fn default() -> Self {
        RegistryDocs {
            facilities: Vec::new(),
            fields: serde_json::json!({"type": "FeatureCollection", "features": []}),
            verifiers: Vec::new(),
        }
    }
}

impl RegistryDocs {
    /// Parses the three documents from their text form.
    pub fn from_json(facilities: &str, fields: &str, verifiers: &str) -> Result<Self> {
        let facilities = serde_json::from_str(facilities)
            .map_err(|e| Error::validation("malformed_document", "facilities", e.to_string()))?;
        let fields = serde_json::from_str(fields).map_err(|e| Error::validation("malformed_document", "fields", e.to_string()))?;
        let verifiers = serde_json::from_str(verifiers)
            .map_err(|e| Error::validation("malformed_document", "verifiers", e.to_string()))?;
        Ok(RegistryDocs { facilities, fields, verifiers })
    }
}

fn geometry_error(i: usize, message: impl Into<String>) -> Error {
    Error::validation("invalid_geometry", format!("fields.features[{i}]"), message)
}

pub(super) fn parse_fields(doc: &Value) -> Result<Vec<NmpField>> {
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::validation("malformed_document", "fields", "expected a GeoJSON FeatureCollection"));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::validation("malformed_document", "fields.features", "missing features array"))?;
    let mut out = Vec::with_capacity(features.len());
    for (i, feat) in features.iter().enumerate() {
        let props = feat.get("properties").unwrap_or(&Value::Null);
        let field_id = props
            .get("field_id")
            .and_then(Value::as_str)
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| Error::validation("missing_id", format!("fields.features[{i}].properties.field_id"), "field_id required"))?;
        let permittee = props
            .get("permittee_facility_id")
            .and_then(Value::as_str)
            .ok_or_else(|| {
                Error::validation(
                    "missing_id",
                    format!("fields.features[{i}].properties.permittee_facility_id"),
                    "permittee_facility_id required",
                )
            })?;
        let geom = feat.get("geometry").ok_or_else(|| geometry_error(i, "missing geometry"))?;
        let coords = geom.get("coordinates").ok_or_else(|| geometry_error(i, "missing coordinates"))?;
        let parts = match geom.get("type").and_then(Value::as_str) {
            Some("Polygon") => vec![parse_polygon(coords).map_err(|m| geometry_error(i, m))?],
            Some("MultiPolygon") => coords
                .as_array()
                .ok_or_else(|| geometry_error(i, "MultiPolygon coordinates must be an array"))?
                .iter()
                .map(|p| parse_polygon(p).map_err(|m| geometry_error(i, m)))
                .collect::<Result<Vec<_>>>()?,
            other => return Err(geometry_error(i, format!("unsupported geometry type {other:?}"))),
        };
        if parts.is_empty() {
            return Err(geometry_error(i, "empty MultiPolygon"));
        }
        out.push(NmpField {
            field_id: field_id.to_string(),
            geometry: parts,
            permittee_facility_id: permittee.to_string(),
        });
    }
    Ok(out)
}

fn parse_polygon(v: &Value) -> std::result::Result<GeoPolygon, String> {
    let rings = v.as_array().ok_or("polygon coordinates must be an array of rings")?;
    let mut parsed = Vec::with_capacity(rings.len());
    for ring in rings {
        let pts = ring.as_array().ok_or("ring must be an array of positions")?;
        let mut out = Vec::with_capacity(pts.len());
        for p in pts {
            let pos = p.as_array().ok_or("position must be [lon, lat]")?;
            let (lon, lat) = match (pos.first().and_then(Value::as_f64), pos.get(1).and_then(Value::as_f64)) {
                (Some(lon), Some(lat)) => (lon, lat),
                _ => return Err("position must be [lon, lat]".into()),
            };
            out.push(GeoPoint::new(lat, lon).map_err(|e| e.to_string())?);
        }
        parsed.push(out);
    }
    let mut rings = parsed.into_iter();
    let exterior = rings.next().ok_or("polygon has no rings")?;
    GeoPolygon::new(exterior, rings.collect()).map_err(|e| e.to_string())
}

/// GeoJSON Polygon feature for a field, used by fixtures and exports.
pub fn field_feature(field_id: &str, permittee: &str, polygon: &GeoPolygon) -> Value {
    let ring = |r: &[GeoPoint]| {
        let mut v: Vec<Value> = r.iter().map(|p| serde_json::json!([p.lon, p.lat])).collect();
        if let Some(first) = r.first() {
            v.push(serde_json::json!([first.lon, first.lat]));
        }
        Value::Array(v)
    };
    let mut rings = vec![ring(polygon.exterior())];
    rings.extend(polygon.holes().iter().map(|h| ring(h)));
    serde_json::json!({
        "type": "Feature",
        "properties": {"field_id": field_id, "permittee_facility_id": permittee},
        "geometry": {"type": "Polygon", "coordinates": rings},
    })
}
