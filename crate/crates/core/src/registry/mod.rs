//! Facility, permitted-field and verifier registry with spatial lookups.
//!
//! A [`Registry`] is built once from its source documents and never mutated;
//! reloading produces a new value that the engine swaps in whole.

mod docs;
mod grid;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use docs::{field_feature, FacilityDoc, RegistryDocs, VerifierDoc};
pub use grid::{GridIndex, CELL_DEG};

use crate::error::{Error, Result};
use crate::geo::{self, GeoBBox, GeoPoint, GeoPolygon, EARTH_RADIUS_M};

/// Permitting threshold separating CAFOs from smaller operations.
pub const CAFO_ANIMAL_UNITS: f64 = 1_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Org {
    Wdnr,
    Elpc,
}

impl Org {
    pub fn as_str(self) -> &'static str {
        match self {
            Org::Wdnr => "wdnr",
            Org::Elpc => "elpc",
        }
    }
}

impl std::fmt::Display for Org {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Org {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wdnr" => Ok(Org::Wdnr),
            "elpc" => Ok(Org::Elpc),
            other => Err(Error::validation("invalid_org", "org", format!("unknown org '{other}' (expected wdnr|elpc)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FacilityKind {
    Cafo,
    CafoSatellite,
    Afo,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WastePhase {
    Liquid,
    Solid,
    Both,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facility {
    pub facility_id: String,
    pub location: GeoPoint,
    pub kind: FacilityKind,
    pub animal_units: Option<f64>,
    pub waste_phase: WastePhase,
    pub permit_id: Option<String>,
}

/// A field listed in a nutrient management plan. MultiPolygon features keep
/// all their parts; the field matches if any part does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmpField {
    pub field_id: String,
    pub geometry: Vec<GeoPolygon>,
    pub permittee_facility_id: String,
}

impl NmpField {
    pub fn bbox(&self) -> GeoBBox {
        let corners: Vec<GeoPoint> = self
            .geometry
            .iter()
            .flat_map(|p| {
                let b = p.bbox();
                [GeoPoint { lat: b.min_lat, lon: b.min_lon }, GeoPoint { lat: b.max_lat, lon: b.max_lon }]
            })
            .collect();
        GeoBBox::covering(&corners).expect("field has at least one part")
    }

    pub fn intersects_bbox(&self, b: &GeoBBox) -> bool {
        self.geometry.iter().any(|p| geo::bbox_intersects_polygon(b, p))
    }

    pub fn contains_point(&self, pt: GeoPoint) -> bool {
        self.geometry.iter().any(|p| geo::point_in_polygon(pt, p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verifier {
    pub verifier_id: String,
    pub home: GeoPoint,
    pub org: Org,
    pub active: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct LoadSummary {
    pub facilities: usize,
    pub fields: usize,
    pub verifiers: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    facilities: Vec<Facility>,
    facility_pos: BTreeMap<String, usize>,
    fields: Vec<NmpField>,
    field_boxes: Vec<GeoBBox>,
    field_grid: GridIndex,
    verifiers: Vec<Verifier>,
    verifier_grid: GridIndex,
    docs: RegistryDocs,
}

impl Registry {
    /// Parses, validates and indexes the three registry documents.
    pub fn load(docs: RegistryDocs) -> Result<Registry> {
        let mut facilities = Vec::with_capacity(docs.facilities.len());
        let mut seen = BTreeSet::new();
        for (i, d) in docs.facilities.iter().enumerate() {
            let f = d.to_facility().map_err(|e| prefix_field(e, &format!("facilities[{i}]")))?;
            if !seen.insert(f.facility_id.clone()) {
                return Err(Error::validation(
                    "duplicate_id",
                    format!("facilities[{i}].facility_id"),
                    format!("duplicate facility_id '{}'", f.facility_id),
                ));
            }
            facilities.push(f);
        }
        facilities.sort_by(|a, b| a.facility_id.cmp(&b.facility_id));
        let facility_pos = facilities
            .iter()
            .enumerate()
            .map(|(i, f)| (f.facility_id.clone(), i))
            .collect::<BTreeMap<_, _>>();

        let mut fields = docs::parse_fields(&docs.fields)?;
        let mut field_ids = BTreeSet::new();
        for f in &fields {
            if !field_ids.insert(f.field_id.clone()) {
                return Err(Error::validation("duplicate_id", "fields.field_id", format!("duplicate field_id '{}'", f.field_id)));
            }
            if !facility_pos.contains_key(&f.permittee_facility_id) {
                return Err(Error::validation(
                    "unknown_permittee",
                    "fields.permittee_facility_id",
                    format!("field '{}' references unknown facility '{}'", f.field_id, f.permittee_facility_id),
                ));
            }
        }
        fields.sort_by(|a, b| a.field_id.cmp(&b.field_id));
        let field_boxes: Vec<GeoBBox> = fields.iter().map(NmpField::bbox).collect();
        let field_grid = GridIndex::build(field_boxes.iter());

        let mut verifiers = Vec::with_capacity(docs.verifiers.len());
        let mut vseen = BTreeSet::new();
        for (i, d) in docs.verifiers.iter().enumerate() {
            let v = d.to_verifier().map_err(|e| prefix_field(e, &format!("verifiers[{i}]")))?;
            if !vseen.insert(v.verifier_id.clone()) {
                return Err(Error::validation(
                    "duplicate_id",
                    format!("verifiers[{i}].verifier_id"),
                    format!("duplicate verifier_id '{}'", v.verifier_id),
                ));
            }
            verifiers.push(v);
        }
        verifiers.sort_by(|a, b| a.verifier_id.cmp(&b.verifier_id));
        let homes: Vec<GeoBBox> = verifiers.iter().map(|v| GeoBBox::from_point(v.home)).collect();
        let verifier_grid = GridIndex::build(homes.iter());

        Ok(Registry {
            facilities,
            facility_pos,
            fields,
            field_boxes,
            field_grid,
            verifiers,
            verifier_grid,
            docs,
        })
    }

    pub fn summary(&self) -> LoadSummary {
        LoadSummary {
            facilities: self.facilities.len(),
            fields: self.fields.len(),
            verifiers: self.verifiers.len(),
        }
    }

    pub fn docs(&self) -> &RegistryDocs {
        &self.docs
    }

    pub fn facilities(&self) -> &[Facility] {
        &self.facilities
    }

    pub fn fields(&self) -> &[NmpField] {
        &self.fields
    }

    pub fn verifiers(&self) -> &[Verifier] {
        &self.verifiers
    }

    pub fn facility(&self, id: &str) -> Option<&Facility> {
        self.facility_pos.get(id).map(|&i| &self.facilities[i])
    }

    pub fn verifier(&self, id: &str) -> Option<&Verifier> {
        self.verifiers
            .binary_search_by(|v| v.verifier_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.verifiers[i])
    }

    /// All fields whose geometry touches `b`, ordered by `field_id`.
    pub fn fields_intersecting(&self, b: &GeoBBox) -> Vec<&NmpField> {
        self.field_grid
            .candidates(b)
            .into_iter()
            .map(|i| i as usize)
            .filter(|&i| self.field_boxes[i].intersects(b) && self.fields[i].intersects_bbox(b))
            .map(|i| &self.fields[i])
            .collect()
    }

    /// Cheaper existence form of [`Registry::fields_intersecting`].
    pub fn on_any_field(&self, b: &GeoBBox) -> bool {
        self.field_grid
            .candidates(b)
            .into_iter()
            .map(|i| i as usize)
            .any(|i| self.field_boxes[i].intersects(b) && self.fields[i].intersects_bbox(b))
    }

    /// Active verifiers within `radius_m` of `pt` (inclusive), nearest
    /// first, ties broken by `verifier_id`.
    pub fn verifiers_within(&self, pt: GeoPoint, radius_m: f64) -> Vec<(&Verifier, f64)> {
        let candidates: Vec<u32> = match search_box(pt, radius_m) {
            Some(b) => self.verifier_grid.candidates(&b),
            None => (0..self.verifiers.len() as u32).collect(),
        };
        let mut out: Vec<(&Verifier, f64)> = candidates
            .into_iter()
            .map(|i| &self.verifiers[i as usize])
            .filter(|v| v.active)
            .map(|v| (v, geo::haversine_m(pt, v.home)))
            .filter(|(_, d)| *d <= radius_m)
            .collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.verifier_id.cmp(&b.0.verifier_id)));
        out
    }

    /// Nearest facility by great-circle distance.
    pub fn nearest_facility(&self, pt: GeoPoint) -> Option<(&Facility, f64)> {
        self.facilities
            .iter()
            .map(|f| (f, geo::haversine_m(pt, f.location)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.facility_id.cmp(&b.0.facility_id)))
    }

    /// Search areas around every facility, in facility order. Facilities
    /// too close to a pole for a box are skipped.
    pub fn aois(&self, side_m: f64) -> Vec<(&Facility, GeoBBox)> {
        self.facilities
            .iter()
            .filter_map(|f| geo::make_aoi(f.location, side_m).ok().map(|b| (f, b)))
            .collect()
    }
}

/// Degree box guaranteed to contain the spherical cap of `radius_m` around
/// `pt`, or `None` when the cap reaches a pole or the antimeridian.
fn search_box(pt: GeoPoint, radius_m: f64) -> Option<GeoBBox> {
    let ang = radius_m / EARTH_RADIUS_M;
    let dlat = ang.to_degrees() * 1.001 + 1e-9;
    if pt.lat.abs() + dlat >= 89.0 || ang >= std::f64::consts::FRAC_PI_2 {
        return None;
    }
    let dlon = (ang.sin() / pt.lat.to_radians().cos()).min(1.0).asin().to_degrees() * 1.001 + 1e-9;
    if pt.lon - dlon < -180.0 || pt.lon + dlon > 180.0 {
        return None;
    }
    Some(GeoBBox {
        min_lat: pt.lat - dlat,
        min_lon: pt.lon - dlon,
        max_lat: pt.lat + dlat,
        max_lon: pt.lon + dlon,
    })
}

fn prefix_field(e: Error, prefix: &str) -> Error {
    match e {
        Error::Validation { code, field, message } => Error::Validation {
            code,
            field: format!("{prefix}.{field}"),
            message,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests;
