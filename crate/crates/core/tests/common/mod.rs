//! Helpers shared by the integration test binaries.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use mutagen_core::pipeline::PipelineConfig;

/// The bundled corpus at the workspace root.
pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("..")
        .join("..")
        .join("fixtures")
}

/// The bundled run configuration, redirected to a scratch output directory.
pub fn fixture_config(output_dir: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(fixtures_dir().join("config.toml"))
        .expect("fixture config loads");
    cfg.output_dir = output_dir.to_path_buf();
    cfg
}

/// Independent rasterization route for comparison against the library.
///
/// Where the library tests each pixel center against each polygon, this
/// computes per-row edge crossings and fills by parity, with every
/// center-on-edge decision made in exact integer arithmetic. Inputs must lie
/// on the quarter-unit grid so the scaling by 4 is lossless; the convention
/// matches the library's: even-odd fill per polygon, union across polygons,
/// centers exactly on an edge count as inside.
pub fn scanline_mask(polys: &[Vec<(f64, f64)>], width: u32, height: u32) -> Vec<bool> {
    let scaled: Vec<Vec<(i64, i64)>> = polys
        .iter()
        .map(|poly| poly.iter().map(|&(x, y)| (scale4(x), scale4(y))).collect())
        .collect();

    let mut mask = vec![false; width as usize * height as usize];
    for y in 0..height {
        let py = 4 * i64::from(y) + 2;
        for x in 0..width {
            let px = 4 * i64::from(x) + 2;
            if scaled.iter().any(|poly| point_covered(px, py, poly)) {
                mask[y as usize * width as usize + x as usize] = true;
            }
        }
    }
    mask
}

fn scale4(v: f64) -> i64 {
    let scaled = v * 4.0;
    assert!(
        scaled.fract() == 0.0,
        "oracle inputs must sit on the quarter grid, got {v}"
    );
    scaled as i64
}

fn point_covered(px: i64, py: i64, poly: &[(i64, i64)]) -> bool {
    let n = poly.len();
    let mut crossings_right = 0usize;
    for i in 0..n {
        let (x1, y1) = poly[i];
        let (x2, y2) = poly[(i + 1) % n];
        if on_segment(px, py, x1, y1, x2, y2) {
            return true;
        }
        if (y1 > py) != (y2 > py) {
            // Crossing x minus px has the sign of numer/dy; exact since all
            // terms are integers.
            let dy = y2 - y1;
            let numer = (x1 - px) * dy + (py - y1) * (x2 - x1);
            if numer != 0 && (numer > 0) == (dy > 0) {
                crossings_right += 1;
            }
        }
    }
    crossings_right % 2 == 1
}

fn on_segment(px: i64, py: i64, x1: i64, y1: i64, x2: i64, y2: i64) -> bool {
    let cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1);
    cross == 0
        && px >= x1.min(x2)
        && px <= x1.max(x2)
        && py >= y1.min(y2)
        && py <= y1.max(y2)
}
