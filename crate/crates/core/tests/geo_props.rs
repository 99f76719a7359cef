mod common;

use landtriage_core::geo::{self, GeoBBox, GeoPoint};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pt() -> impl Strategy<Value = GeoPoint> {
    (-80.0f64..80.0, -179.0f64..179.0).prop_map(|(lat, lon)| GeoPoint { lat, lon })
}

fn small_box() -> impl Strategy<Value = GeoBBox> {
    (40.0f64..48.0, -95.0f64..-85.0, 0.0001f64..0.05, 0.0001f64..0.05)
        .prop_map(|(lat, lon, h, w)| GeoBBox::new(lat, lon, lat + h, lon + w).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn haversine_matches_law_of_cosines(a in pt(), dlat in -0.5f64..0.5, dlon in -0.5f64..0.5) {
        let b = GeoPoint { lat: a.lat + dlat, lon: a.lon + dlon };
        let d = geo::haversine_m(a, b);
        prop_assert!((d - common::law_of_cosines_m(a, b)).abs() < 1e-3, "d = {d}");
        prop_assert!((d - geo::haversine_m(b, a)).abs() < 1e-9);
    }

    #[test]
    fn aoi_extent_matches_side(lat in -70.0f64..70.0, lon in -170.0f64..170.0, side in 10.0f64..20_000.0) {
        let c = GeoPoint { lat, lon };
        let b = geo::make_aoi(c, side).unwrap();
        prop_assert!(b.contains_point(c));
        let ns = (b.max_lat - b.min_lat) * geo::METERS_PER_DEGREE;
        let ew = (b.max_lon - b.min_lon) * geo::METERS_PER_DEGREE * lat.to_radians().cos();
        prop_assert!((ns - side).abs() < 1e-6 * side);
        prop_assert!((ew - side).abs() < 1e-6 * side);
        // Along the center parallel the great-circle width is close to the side.
        let w = geo::haversine_m(GeoPoint { lat, lon: b.min_lon }, GeoPoint { lat, lon: b.max_lon });
        prop_assert!((w - side).abs() / side < 0.01, "w = {w}");
    }

    #[test]
    fn area_invariant_under_longitude_translation(b in small_box(), shift in -60.0f64..60.0) {
        let moved = GeoBBox::new(b.min_lat, b.min_lon + shift, b.max_lat, b.max_lon + shift).unwrap();
        let (a0, a1) = (geo::bbox_area_m2(&b), geo::bbox_area_m2(&moved));
        prop_assert!((a0 - a1).abs() <= 1e-9 * a0.max(1.0));
    }

    #[test]
    fn iou_bounds_and_symmetry(a in small_box(), b in small_box()) {
        let i = geo::bbox_iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&i));
        prop_assert!((i - geo::bbox_iou(&b, &a)).abs() < 1e-12);
        prop_assert!((geo::bbox_iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou_matches_strip_integration(a in small_box(), dx in -0.01f64..0.01, dy in -0.01f64..0.01) {
        let b = GeoBBox::new(a.min_lat + dy, a.min_lon + dx, a.max_lat + dy, a.max_lon + dx).unwrap();
        prop_assert!((geo::bbox_iou(&a, &b) - common::strip_iou(&a, &b, 2_000)).abs() < 2e-3);
    }

    #[test]
    fn point_in_polygon_agrees_with_raster(seed in any::<u64>(), hole in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let poly = common::random_polygon(&mut rng, (44.0, -89.0), 0.1, hole);
        let frame = poly.bbox().expand_m(500.0);
        let raster = common::Raster::new(&poly, frame, 60);
        let (h, w) = raster.cell_size();
        let cell = h.max(w);
        for i in 0..60 {
            for j in 0..60 {
                let p = GeoPoint {
                    lat: frame.min_lat + (i as f64 + 0.5) * h,
                    lon: frame.min_lon + (j as f64 + 0.5) * w,
                };
                if common::boundary_dist(p, &poly) < 1e-9 * cell {
                    continue;
                }
                prop_assert_eq!(geo::point_in_polygon(p, &poly), raster.at(p).unwrap(), "at {:?}", p);
            }
        }
    }

    #[test]
    fn box_polygon_agrees_with_raster(seed in any::<u64>(), hole in any::<bool>(), bh in 0.003f64..0.05, bw in 0.003f64..0.05) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let poly = common::random_polygon(&mut rng, (44.0, -89.0), 0.1, hole);
        let frame = poly.bbox().expand_m(3_000.0);
        let raster = common::Raster::new(&poly, frame, 200);
        let (h, w) = raster.cell_size();
        let cell = h.max(w);
        use rand::Rng;
        for _ in 0..20 {
            let lat = rng.gen_range(frame.min_lat..frame.max_lat - bh);
            let lon = rng.gen_range(frame.min_lon..frame.max_lon - bw);
            let b = GeoBBox::new(lat, lon, lat + bh, lon + bw).unwrap();
            if common::outline_dist(&b, &poly) < 2.0 * cell {
                continue;
            }
            prop_assert_eq!(geo::bbox_intersects_polygon(&b, &poly), raster.overlaps(&b), "box {:?}", b);
        }
    }
}

#[test]
fn aoi_rejects_polar_and_negative() {
    assert!(geo::make_aoi(GeoPoint { lat: 89.9, lon: 0.0 }, 1000.0).is_err());
    assert!(geo::make_aoi(GeoPoint { lat: 10.0, lon: 0.0 }, -1.0).is_err());
    assert!(geo::make_aoi(GeoPoint { lat: 10.0, lon: 0.0 }, f64::NAN).is_err());
}

#[test]
fn haversine_frozen_values() {
    // One degree of latitude on the mean sphere.
    let d = geo::haversine_m(GeoPoint { lat: 0.0, lon: 0.0 }, GeoPoint { lat: 1.0, lon: 0.0 });
    assert!((d - 111_194.926_644_558_7).abs() < 1e-6, "{d}");
    // Madison to Milwaukee.
    let d = geo::haversine_m(GeoPoint { lat: 43.0731, lon: -89.4012 }, GeoPoint { lat: 43.0389, lon: -87.9065 });
    assert!((d - 121_590.0).abs() < 200.0, "{d}");
}
