//! Geographic primitives: points, boxes, polygons, great-circle distance,
//! local-equirectangular areas, and the containment/intersection tests the
//! routing filters rely on.
//!
//! Planar tests run in degree space with `x = lon`, `y = lat`. Boundary
//! contact always counts as inside/intersecting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius used for great-circle distances.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Meters per degree of latitude (and of longitude at the equator) for the
/// local equirectangular approximation.
pub const METERS_PER_DEGREE: f64 = 111_320.0;

/// Side of the square search area drawn around each facility.
pub const DEFAULT_AOI_SIDE_M: f64 = 6_000.0;

/// AOI construction is refused this close to a pole.
const POLE_MARGIN_DEG: f64 = 1.0;

/// Tolerance (degrees) for the on-segment test; about 0.1 micrometre.
const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = GeoPoint { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lat.is_finite() || !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::validation("invalid_latitude", "lat", format!("latitude {} outside [-90, 90]", self.lat)));
        }
        if !self.lon.is_finite() || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::validation("invalid_longitude", "lon", format!("longitude {} outside [-180, 180]", self.lon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl GeoBBox {
    pub fn new(min_lat: f64, min_lon: f64, max_lat: f64, max_lon: f64) -> Result<Self> {
        let b = GeoBBox { min_lat, min_lon, max_lat, max_lon };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        GeoPoint { lat: self.min_lat, lon: self.min_lon }.validate()?;
        GeoPoint { lat: self.max_lat, lon: self.max_lon }.validate()?;
        if self.min_lat > self.max_lat {
            return Err(Error::validation("invalid_bbox", "bbox", "min_lat exceeds max_lat"));
        }
        if self.min_lon > self.max_lon {
            return Err(Error::validation("invalid_bbox", "bbox", "min_lon exceeds max_lon"));
        }
        Ok(())
    }

    /// Degenerate box covering a single point.
    pub fn from_point(p: GeoPoint) -> Self {
        GeoBBox { min_lat: p.lat, min_lon: p.lon, max_lat: p.lat, max_lon: p.lon }
    }

    /// Smallest box covering all points; `None` for an empty slice.
    pub fn covering(points: &[GeoPoint]) -> Option<Self> {
        let first = points.first()?;
        let mut b = GeoBBox::from_point(*first);
        for p in &points[1..] {
            b.min_lat = b.min_lat.min(p.lat);
            b.min_lon = b.min_lon.min(p.lon);
            b.max_lat = b.max_lat.max(p.lat);
            b.max_lon = b.max_lon.max(p.lon);
        }
        Some(b)
    }

    pub fn centroid(&self) -> GeoPoint {
        GeoPoint {
            lat: (self.min_lat + self.max_lat) / 2.0,
            lon: (self.min_lon + self.max_lon) / 2.0,
        }
    }

    pub fn contains_point(&self, p: GeoPoint) -> bool {
        p.lat >= self.min_lat && p.lat <= self.max_lat && p.lon >= self.min_lon && p.lon <= self.max_lon
    }

    /// Closed-box overlap; shared edges count.
    pub fn intersects(&self, other: &GeoBBox) -> bool {
        self.min_lat <= other.max_lat
            && other.min_lat <= self.max_lat
            && self.min_lon <= other.max_lon
            && other.min_lon <= self.max_lon
    }

    pub fn intersection(&self, other: &GeoBBox) -> Option<GeoBBox> {
        if !self.intersects(other) {
            return None;
        }
        Some(GeoBBox {
            min_lat: self.min_lat.max(other.min_lat),
            min_lon: self.min_lon.max(other.min_lon),
            max_lat: self.max_lat.min(other.max_lat),
            max_lon: self.max_lon.min(other.max_lon),
        })
    }

    /// Grow the box by `meters` on every side using the equirectangular
    /// scale at the box's widest-latitude edge.
    pub fn expand_m(&self, meters: f64) -> GeoBBox {
        let dlat = meters / METERS_PER_DEGREE;
        let widest = self.min_lat.abs().max(self.max_lat.abs()).min(89.0).to_radians();
        let dlon = meters / (METERS_PER_DEGREE * widest.cos());
        GeoBBox {
            min_lat: (self.min_lat - dlat).max(-90.0),
            min_lon: (self.min_lon - dlon).max(-180.0),
            max_lat: (self.max_lat + dlat).min(90.0),
            max_lon: (self.max_lon + dlon).min(180.0),
        }
    }

    fn corners(&self) -> [Xy; 4] {
        [
            Xy { x: self.min_lon, y: self.min_lat },
            Xy { x: self.max_lon, y: self.min_lat },
            Xy { x: self.max_lon, y: self.max_lat },
            Xy { x: self.min_lon, y: self.max_lat },
        ]
    }
}

/// Simple polygon with optional holes. Rings are stored open (the closing
/// vertex is implicit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolygonRings", into = "PolygonRings")]
pub struct GeoPolygon {
    exterior: Vec<GeoPoint>,
    holes: Vec<Vec<GeoPoint>>,
    bbox: GeoBBox,
}

#[derive(Serialize, Deserialize)]
struct PolygonRings {
    exterior: Vec<GeoPoint>,
    #[serde(default)]
    holes: Vec<Vec<GeoPoint>>,
}

impl TryFrom<PolygonRings> for GeoPolygon {
    type Error = Error;

    fn try_from(r: PolygonRings) -> Result<Self> {
        GeoPolygon::new(r.exterior, r.holes)
    }
}

impl From<GeoPolygon> for PolygonRings {
    fn from(p: GeoPolygon) -> Self {
        PolygonRings { exterior: p.exterior, holes: p.holes }
    }
}

impl GeoPolygon {
    /// Builds and validates a polygon. A trailing vertex equal to the first
    /// is dropped, as are consecutive duplicates.
    pub fn new(exterior: Vec<GeoPoint>, holes: Vec<Vec<GeoPoint>>) -> Result<Self> {
        let exterior = normalize_ring(exterior);
        validate_ring(&exterior, "exterior")?;
        if signed_area(&exterior).abs() <= 0.0 {
            return Err(Error::validation("invalid_geometry", "exterior", "exterior ring has zero area"));
        }
        let mut normalized_holes = Vec::with_capacity(holes.len());
        for (i, h) in holes.into_iter().enumerate() {
            let h = normalize_ring(h);
            validate_ring(&h, &format!("holes[{i}]"))?;
            normalized_holes.push(h);
        }
        let bbox = GeoBBox::covering(&exterior).expect("ring validated non-empty");
        Ok(GeoPolygon { exterior, holes: normalized_holes, bbox })
    }

    pub fn exterior(&self) -> &[GeoPoint] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<GeoPoint>] {
        &self.holes
    }

    pub fn bbox(&self) -> GeoBBox {
        self.bbox
    }

    fn rings(&self) -> impl Iterator<Item = &[GeoPoint]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(Vec::as_slice))
    }

    /// Vertex centroid of the exterior ring.
    pub fn vertex_centroid(&self) -> GeoPoint {
        let n = self.exterior.len() as f64;
        let (lat, lon) = self
            .exterior
            .iter()
            .fold((0.0, 0.0), |(a, b), p| (a + p.lat, b + p.lon));
        GeoPoint { lat: lat / n, lon: lon / n }
    }
}

/// Great-circle distance on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Square area of interest of side `side_m` centered on `center`.
pub fn make_aoi(center: GeoPoint, side_m: f64) -> Result<GeoBBox> {
    center.validate()?;
    if !side_m.is_finite() || side_m < 0.0 {
        return Err(Error::validation("invalid_side", "side_m", format!("side {side_m} must be a non-negative finite length")));
    }
    if center.lat.abs() > 90.0 - POLE_MARGIN_DEG {
        return Err(Error::validation(
            "polar_aoi",
            "center",
            format!("latitude {} is within {POLE_MARGIN_DEG} degree of a pole", center.lat),
        ));
    }
    let half_lat = side_m / 2.0 / METERS_PER_DEGREE;
    let half_lon = side_m / 2.0 / (METERS_PER_DEGREE * center.lat.to_radians().cos());
    GeoBBox::new(
        center.lat - half_lat,
        center.lon - half_lon,
        center.lat + half_lat,
        center.lon + half_lon,
    )
}

/// Equirectangular box area with longitude scaled by cos(mid-latitude).
pub fn bbox_area_m2(b: &GeoBBox) -> f64 {
    let mid = ((b.min_lat + b.max_lat) / 2.0).to_radians();
    let h = (b.max_lat - b.min_lat) * METERS_PER_DEGREE;
    let w = (b.max_lon - b.min_lon) * METERS_PER_DEGREE * mid.cos();
    (h * w).max(0.0)
}

/// Intersection-over-union in the same metric as [`bbox_area_m2`].
pub fn bbox_iou(a: &GeoBBox, b: &GeoBBox) -> f64 {
    let Some(inter) = a.intersection(b) else {
        return 0.0;
    };
    let i = bbox_area_m2(&inter);
    let union = bbox_area_m2(a) + bbox_area_m2(b) - i;
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    (i / union).clamp(0.0, 1.0)
}

/// Ray-casting containment; boundary points (including hole boundaries)
/// count as inside, hole interiors do not.
pub fn point_in_polygon(pt: GeoPoint, p: &GeoPolygon) -> bool {
    let q = Xy::from(pt);
    if !p.bbox().contains_point(pt) {
        return false;
    }
    if p.rings().any(|r| on_ring_boundary(q, r)) {
        return true;
    }
    ring_contains(q, &p.exterior) && !p.holes.iter().any(|h| ring_contains(q, h))
}

/// True iff the closed box and the closed polygon share at least one point.
pub fn bbox_intersects_polygon(b: &GeoBBox, p: &GeoPolygon) -> bool {
    if !b.intersects(&p.bbox()) {
        return false;
    }
    for ring in p.rings() {
        for (a, c) in ring_edges(ring) {
            if segment_touches_box(a, c, b) {
                return true;
            }
        }
    }
    // No ring edge reaches the box, so the box lies wholly on one side of
    // every ring: either entirely inside the polygon or entirely outside.
    let corner = GeoPoint { lat: b.min_lat, lon: b.min_lon };
    point_in_polygon(corner, p)
}

// ---------------------------------------------------------------------------
// planar helpers

#[derive(Debug, Clone, Copy, PartialEq)]
struct Xy {
    x: f64,
    y: f64,
}

impl From<GeoPoint> for Xy {
    fn from(p: GeoPoint) -> Self {
        Xy { x: p.lon, y: p.lat }
    }
}

fn ring_edges(ring: &[GeoPoint]) -> impl Iterator<Item = (Xy, Xy)> + '_ {
    let n = ring.len();
    (0..n).map(move |i| (Xy::from(ring[i]), Xy::from(ring[(i + 1) % n])))
}

fn orient(a: Xy, b: Xy, c: Xy) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn within_span(a: Xy, b: Xy, p: Xy) -> bool {
    p.x >= a.x.min(b.x) - BOUNDARY_EPS
        && p.x <= a.x.max(b.x) + BOUNDARY_EPS
        && p.y >= a.y.min(b.y) - BOUNDARY_EPS
        && p.y <= a.y.max(b.y) + BOUNDARY_EPS
}

fn on_segment(a: Xy, b: Xy, p: Xy) -> bool {
    let len = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
    orient(a, b, p).abs() <= BOUNDARY_EPS * len.max(1.0) && within_span(a, b, p)
}

fn segments_intersect(p1: Xy, p2: Xy, q1: Xy, q2: Xy) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(q1, q2, p1) || on_segment(q1, q2, p2) || on_segment(p1, p2, q1) || on_segment(p1, p2, q2)
}

fn segment_touches_box(a: Xy, c: Xy, b: &GeoBBox) -> bool {
    let inside = |p: Xy| p.x >= b.min_lon && p.x <= b.max_lon && p.y >= b.min_lat && p.y <= b.max_lat;
    if inside(a) || inside(c) {
        return true;
    }
    let k = b.corners();
    (0..4).any(|i| segments_intersect(a, c, k[i], k[(i + 1) % 4]))
}

fn on_ring_boundary(q: Xy, ring: &[GeoPoint]) -> bool {
    ring_edges(ring).any(|(a, b)| on_segment(a, b, q))
}

fn ring_contains(q: Xy, ring: &[GeoPoint]) -> bool {
    let mut inside = false;
    for (a, b) in ring_edges(ring) {
        if (a.y > q.y) != (b.y > q.y) {
            let x_cross = (b.x - a.x) * (q.y - a.y) / (b.y - a.y) + a.x;
            if q.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

fn signed_area(ring: &[GeoPoint]) -> f64 {
    ring_edges(ring).map(|(a, b)| a.x * b.y - b.x * a.y).sum::<f64>() / 2.0
}

fn normalize_ring(mut ring: Vec<GeoPoint>) -> Vec<GeoPoint> {
    ring.dedup();
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring
}

fn validate_ring(ring: &[GeoPoint], field: &str) -> Result<()> {
    if ring.len() < 3 {
        return Err(Error::validation("invalid_geometry", field, "ring needs at least 3 distinct vertices"));
    }
    for p in ring {
        p.validate().map_err(|e| match e {
            Error::Validation { code, message, .. } => Error::Validation { code, field: field.to_string(), message },
            other => other,
        })?;
    }
    let edges: Vec<(Xy, Xy)> = ring_edges(ring).collect();
    let n = edges.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(edges[i].0, edges[i].1, edges[j].0, edges[j].1) {
                return Err(Error::validation(
                    "self_intersecting_ring",
                    field,
                    format!("edges {i} and {j} intersect"),
                ));
            }
        }
    }
    Ok(())
}
