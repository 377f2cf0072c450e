//! Rasterization checked against an independent scanline implementation and
//! against shapes whose pixel coverage can be written down directly.

mod common;

use mutagen_core::error::Error;
use mutagen_core::image::rasterize_polygons;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::scanline_mask;

/// Random polygon on the quarter-unit grid, overhanging the canvas a little
/// so clipping paths are exercised too.
fn random_polygon(rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let vertices = rng.gen_range(3..=12);
    (0..vertices)
        .map(|_| {
            (
                rng.gen_range(-16..=272) as f64 / 4.0,
                rng.gen_range(-16..=272) as f64 / 4.0,
            )
        })
        .collect()
}

#[test]
fn hundred_random_polygons_match_the_scanline_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut covered_total = 0usize;
    for case in 0..100 {
        let polys = vec![random_polygon(&mut rng)];
        let mask = rasterize_polygons(&polys, 64, 64).unwrap();
        let oracle = scanline_mask(&polys, 64, 64);
        assert_eq!(mask.bits(), &oracle[..], "case {case}: {:?}", polys[0]);
        covered_total += mask.count();
    }
    // Random dozen-vertex outlines over a 64x64 canvas are not all empty.
    assert!(covered_total > 1000, "suspiciously empty masks");
}

#[test]
fn polygon_unions_match_the_scanline_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    for case in 0..20 {
        let polys = vec![random_polygon(&mut rng), random_polygon(&mut rng)];
        let mask = rasterize_polygons(&polys, 64, 64).unwrap();
        let oracle = scanline_mask(&polys, 64, 64);
        assert_eq!(mask.bits(), &oracle[..], "case {case}: {polys:?}");
    }
}

#[test]
fn integer_rectangles_cover_exact_pixel_spans() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    for _ in 0..50 {
        let xa = rng.gen_range(0..20u32);
        let xb = rng.gen_range(xa..24);
        let ya = rng.gen_range(0..12u32);
        let yb = rng.gen_range(ya..16);
        // Corners at pixel boundaries: covers [xa..=xb] x [ya..=yb] exactly.
        let poly = vec![
            (f64::from(xa), f64::from(ya)),
            (f64::from(xb + 1), f64::from(ya)),
            (f64::from(xb + 1), f64::from(yb + 1)),
            (f64::from(xa), f64::from(yb + 1)),
        ];
        let mask = rasterize_polygons(&[poly], 24, 16).unwrap();
        for y in 0..16 {
            for x in 0..24 {
                let inside = (xa..=xb).contains(&x) && (ya..=yb).contains(&y);
                assert_eq!(mask.get(x, y), inside, "rect ({xa},{ya})-({xb},{yb}) at ({x},{y})");
            }
        }
    }
}

#[test]
fn right_triangle_coverage_matches_the_half_plane_formula() {
    // Triangle (0,0), (10,0), (0,10). A center (x+0.5, y+0.5) lies inside or
    // on the hypotenuse x+y=10 exactly when x+y <= 9.
    let poly = vec![(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
    let mask = rasterize_polygons(&[poly], 16, 16).unwrap();
    let mut count = 0;
    for y in 0..16 {
        for x in 0..16 {
            let inside = x + y <= 9;
            assert_eq!(mask.get(x, y), inside, "({x},{y})");
            count += usize::from(inside);
        }
    }
    assert_eq!(count, 55);
    assert_eq!(mask.count(), 55);
}

#[test]
fn self_intersecting_outline_follows_the_even_odd_rule() {
    // Bowtie: the pinch region is crossed twice, so it stays empty.
    let polys = vec![vec![(0.0, 0.0), (12.0, 12.0), (12.0, 0.0), (0.0, 12.0)]];
    let mask = rasterize_polygons(&polys, 16, 16).unwrap();
    let oracle = scanline_mask(&polys, 16, 16);
    assert_eq!(mask.bits(), &oracle[..]);
    assert!(mask.count() > 0);
    // The two filled lobes cover less than the bounding box.
    assert!(mask.count() < 12 * 12);
}

#[test]
fn degenerate_polygons_are_rejected() {
    let err = rasterize_polygons(&[vec![(0.0, 0.0), (5.0, 5.0)]], 8, 8).unwrap_err();
    assert!(matches!(err, Error::DegeneratePolygon(2)));
}
