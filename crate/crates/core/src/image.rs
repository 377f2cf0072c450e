//! Mutant image production: polygon rasterization, instance removal with a
//! pluggable inpainting hook, and in-mask color inversion.
//!
//! Rasterization samples each pixel at its center (x+0.5, y+0.5) under the
//! even-odd rule; a center exactly on a polygon edge counts as inside. The
//! winding direction of the input polygons therefore never matters, and
//! self-intersecting outlines are handled without special cases.

use crate::error::{Error, Result};
use crate::io::ppm;
use crate::model::{InstanceAnnotation, MutationKind, RasterImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::process::Command;

/// Row-major binary pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if width == 0 || height == 0 || bits.len() != expected {
            return Err(Error::DimensionMismatch {
                expected: format!("{width}x{height} = {expected} bits"),
                actual: format!("{}", bits.len()),
            });
        }
        Ok(PixelMask {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: u32, height: u32) -> Result<Self> {
        Self::new(width, height, vec![false; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    /// Number of set pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// In-place union with another mask of the same dimensions.
    pub fn union_with(&mut self, other: &PixelMask) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", self.width, self.height),
                actual: format!("{}x{}", other.width, other.height),
            });
        }
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    fn matches_image(&self, img: &RasterImage) -> Result<()> {
        if (self.width, self.height) != (img.width(), img.height()) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", img.width(), img.height()),
                actual: format!("{}x{}", self.width, self.height),
            });
        }
        Ok(())
    }
}

/// Strategy for filling removed instance regions.
///
/// The default fills with white. An external command can be plugged in to
/// produce photorealistic fills; it receives the white-filled image and the
/// mask as temp files and must write its result to the output path, exiting 0.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum InpaintHook {
    #[default]
    WhiteFill,
    ExternalCommand { template: String },
}

impl InpaintHook {
    /// Builds an external-command hook, checking that the template names all
    /// three of `{masked}`, `{mask}`, and `{out}`.
    pub fn external(template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        for placeholder in ["{masked}", "{mask}", "{out}"] {
            if !template.contains(placeholder) {
                return Err(Error::InvalidConfig(format!(
                    "inpaint command template is missing {placeholder}"
                )));
            }
        }
        Ok(InpaintHook::ExternalCommand { template })
    }
}

/// True if the point lies on the closed segment (x1,y1)-(x2,y2).
fn on_segment(px: f64, py: f64, x1: f64, y1: f64, x2: f64, y2: f64) -> bool {
    let dx = x2 - x1;
    let dy = y2 - y1;
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return (px - x1).abs() < 1e-9 && (py - y1).abs() < 1e-9;
    }
    let cross = dx * (py - y1) - dy * (px - x1);
    if cross.abs() > 1e-9 * len2.sqrt().max(1.0) {
        return false;
    }
    let dot = (px - x1) * dx + (py - y1) * dy;
    (0.0..=len2).contains(&dot)
}

/// Even-odd point-in-polygon test with boundary points counted as inside.
fn point_in_polygon(px: f64, py: f64, poly: &[(f64, f64)]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let (x1, y1) = poly[i];
        let (x2, y2) = poly[(i + 1) % n];
        if on_segment(px, py, x1, y1, x2, y2) {
            return true;
        }
        // Half-open rule on y so a ray through a vertex toggles exactly once.
        if (y1 > py) != (y2 > py) {
            let x_cross = x1 + (py - y1) / (y2 - y1) * (x2 - x1);
            if px < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Rasterizes polygons onto a width x height grid.
///
/// A pixel is set iff its center lies inside any of the polygons under the
/// even-odd rule; centers exactly on an edge are inside.
pub fn rasterize_polygons(
    polys: &[Vec<(f64, f64)>],
    width: u32,
    height: u32,
) -> Result<PixelMask> {
    for poly in polys {
        if poly.len() < 3 {
            return Err(Error::DegeneratePolygon(poly.len()));
        }
    }
    let mut mask = PixelMask::empty(width, height)?;
    for y in 0..height {
        let py = y as f64 + 0.5;
        for x in 0..width {
            let px = x as f64 + 0.5;
            if polys.iter().any(|p| point_in_polygon(px, py, p)) {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}

/// Union mask of every polygon of the given instances.
pub fn instances_mask(
    instances: &[&InstanceAnnotation],
    width: u32,
    height: u32,
) -> Result<PixelMask> {
    let polys: Vec<Vec<(f64, f64)>> = instances
        .iter()
        .flat_map(|inst| inst.polygons.iter().cloned())
        .collect();
    rasterize_polygons(&polys, width, height)
}

/// Fills masked pixels, leaving the rest of the image untouched.
///
/// With [`InpaintHook::WhiteFill`] the masked pixels become (255,255,255).
/// With an external command the white-filled image and the mask are handed to
/// the command through temp files; any hook failure falls back to white fill
/// and the returned warning says what went wrong.
pub fn remove_instances_checked(
    img: &RasterImage,
    mask: &PixelMask,
    hook: &InpaintHook,
) -> Result<(RasterImage, Option<String>)> {
    mask.matches_image(img)?;
    let mut filled = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            if mask.get(x, y) {
                filled.set_pixel(x, y, (255, 255, 255));
            }
        }
    }
    match hook {
        InpaintHook::WhiteFill => Ok((filled, None)),
        InpaintHook::ExternalCommand { template } => {
            match run_inpaint_command(template, &filled, mask) {
                Ok(out) => {
                    if (out.width(), out.height()) != (img.width(), img.height()) {
                        let warning = format!(
                            "inpaint hook produced a {}x{} image for a {}x{} input; \
                             falling back to white fill",
                            out.width(),
                            out.height(),
                            img.width(),
                            img.height()
                        );
                        Ok((filled, Some(warning)))
                    } else {
                        Ok((out, None))
                    }
                }
                Err(e) => {
                    let warning = format!("inpaint hook failed ({e}); falling back to white fill");
                    Ok((filled, Some(warning)))
                }
            }
        }
    }
}

/// [`remove_instances_checked`] with the warning sent to stderr.
pub fn remove_instances(
    img: &RasterImage,
    mask: &PixelMask,
    hook: &InpaintHook,
) -> Result<RasterImage> {
    let (out, warning) = remove_instances_checked(img, mask, hook)?;
    if let Some(w) = warning {
        eprintln!("warning: {w}");
    }
    Ok(out)
}

fn run_inpaint_command(
    template: &str,
    masked: &RasterImage,
    mask: &PixelMask,
) -> Result<RasterImage> {
    let dir = tempfile::tempdir().map_err(|e| Error::io("inpaint-tempdir", e))?;
    let masked_path = dir.path().join("masked.ppm");
    let mask_path = dir.path().join("mask.pgm");
    let out_path = dir.path().join("out.ppm");
    ppm::write_ppm(&masked_path, masked)?;
    ppm::write_pgm(&mask_path, mask)?;

    let substitute = |tok: &str| {
        tok.replace("{masked}", &masked_path.to_string_lossy())
            .replace("{mask}", &mask_path.to_string_lossy())
            .replace("{out}", &out_path.to_string_lossy())
    };
    let mut parts = template.split_whitespace();
    let program = parts
        .next()
        .ok_or_else(|| Error::HookFailed("empty command template".to_string()))?;
    let args: Vec<String> = parts.map(substitute).collect();

    let status = Command::new(substitute(program))
        .args(&args)
        .status()
        .map_err(|e| Error::HookFailed(format!("could not run {program:?}: {e}")))?;
    if !status.success() {
        return Err(Error::HookFailed(format!("command exited with {status}")));
    }
    ppm::read_ppm(&out_path)
}

/// Complements the RGB value of every masked pixel. Applying it twice with
/// the same mask restores the original image.
pub fn invert_colors_in_mask(img: &RasterImage, mask: &PixelMask) -> Result<RasterImage> {
    mask.matches_image(img)?;
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            if mask.get(x, y) {
                let (r, g, b) = img.pixel(x, y);
                out.set_pixel(x, y, (255 - r, 255 - g, 255 - b));
            }
        }
    }
    Ok(out)
}

/// What an image mutation did: how many target instances were touched out of
/// how many were present, and which ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageMutationMeta {
    pub m: usize,
    pub total: usize,
    pub target: String,
    pub instance_ids: Vec<u64>,
    /// Warning from a failed inpaint hook, if any.
    pub warning: Option<String>,
}

/// Applies a removal or color-inversion mutation targeting one object
/// category.
///
/// Removal draws m uniformly from 0..=total (further capped by `m_cap` when
/// given, so count answers can stay non-negative) and fills the union mask of
/// the chosen instances. Color inversion always flips every instance of the
/// target. The same seed always picks the same instances.
pub fn apply_image_mutation(
    img: &RasterImage,
    instances: &[InstanceAnnotation],
    target: &str,
    kind: MutationKind,
    hook: &InpaintHook,
    seed: u64,
    m_cap: Option<usize>,
) -> Result<(RasterImage, PixelMask, ImageMutationMeta)> {
    let mut candidates: Vec<&InstanceAnnotation> = instances
        .iter()
        .filter(|inst| inst.category == target)
        .collect();
    candidates.sort_by_key(|inst| inst.instance_id);
    let total = candidates.len();
    if total == 0 {
        return Err(Error::NoCandidateObjects);
    }

    match kind {
        MutationKind::Removal => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let upper = m_cap.map_or(total, |cap| cap.min(total));
            let m = rng.gen_range(0..=upper);
            let mut order: Vec<usize> = (0..total).collect();
            order.shuffle(&mut rng);
            order.truncate(m);
            order.sort_unstable();
            let chosen: Vec<&InstanceAnnotation> =
                order.iter().map(|&i| candidates[i]).collect();
            let mask = instances_mask(&chosen, img.width(), img.height())?;
            let (out, warning) = remove_instances_checked(img, &mask, hook)?;
            let meta = ImageMutationMeta {
                m,
                total,
                target: target.to_string(),
                instance_ids: chosen.iter().map(|inst| inst.instance_id).collect(),
                warning,
            };
            Ok((out, mask, meta))
        }
        MutationKind::ColorInversion => {
            let mask = instances_mask(&candidates, img.width(), img.height())?;
            let out = invert_colors_in_mask(img, &mask)?;
            let meta = ImageMutationMeta {
                m: total,
                total,
                target: target.to_string(),
                instance_ids: candidates.iter().map(|inst| inst.instance_id).collect(),
                warning: None,
            };
            Ok((out, mask, meta))
        }
        other => Err(Error::UnsupportedKind(other.label().to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<(f64, f64)> {
        vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    }

    #[test]
    fn unit_square_rasterizes_nine_pixels() {
        let mask = rasterize_polygons(&[square(0.0, 0.0, 3.0, 3.0)], 4, 4).unwrap();
        assert_eq!(mask.count(), 9);
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(mask.get(x, y), x < 3 && y < 3, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn polygon_outside_bounds_gives_empty_mask() {
        let mask = rasterize_polygons(&[square(10.0, 10.0, 20.0, 20.0)], 4, 4).unwrap();
        assert_eq!(mask.count(), 0);
    }

    #[test]
    fn disjoint_triangles_union() {
        let t1 = vec![(0.0, 0.0), (3.0, 0.0), (0.0, 3.0)];
        let t2 = vec![(5.0, 5.0), (8.0, 5.0), (5.0, 8.0)];
        let both = rasterize_polygons(&[t1.clone(), t2.clone()], 10, 10).unwrap();
        let mut union = rasterize_polygons(&[t1], 10, 10).unwrap();
        union
            .union_with(&rasterize_polygons(&[t2], 10, 10).unwrap())
            .unwrap();
        assert_eq!(both, union);
    }

    #[test]
    fn boundary_center_counts_as_inside() {
        // Edge passes exactly through the center of pixel (1, 0).
        let poly = vec![(1.5, 0.0), (1.5, 3.0), (0.0, 3.0), (0.0, 0.0)];
        let mask = rasterize_polygons(&[poly], 4, 4).unwrap();
        assert!(mask.get(1, 0));
        assert!(mask.get(0, 0));
        assert!(!mask.get(2, 0));
    }

    #[test]
    fn degenerate_polygon_rejected() {
        let err = rasterize_polygons(&[vec![(0.0, 0.0), (1.0, 1.0)]], 4, 4).unwrap_err();
        assert!(matches!(err, Error::DegeneratePolygon(2)));
    }

    #[test]
    fn empty_mask_removal_is_identity() {
        let img = RasterImage::filled(4, 4, (10, 20, 30)).unwrap();
        let mask = PixelMask::empty(4, 4).unwrap();
        let out = remove_instances(&img, &mask, &InpaintHook::WhiteFill).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn full_mask_removal_whitens_everything() {
        let img = RasterImage::filled(3, 2, (0, 0, 0)).unwrap();
        let mask = PixelMask::new(3, 2, vec![true; 6]).unwrap();
        let out = remove_instances(&img, &mask, &InpaintHook::WhiteFill).unwrap();
        assert_eq!(out, RasterImage::filled(3, 2, (255, 255, 255)).unwrap());
    }

    #[test]
    fn single_pixel_removal() {
        let img = RasterImage::filled(3, 3, (0, 0, 0)).unwrap();
        let mut mask = PixelMask::empty(3, 3).unwrap();
        mask.set(1, 1, true);
        let out = remove_instances(&img, &mask, &InpaintHook::WhiteFill).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                let expected = if (x, y) == (1, 1) {
                    (255, 255, 255)
                } else {
                    (0, 0, 0)
                };
                assert_eq!(out.pixel(x, y), expected);
            }
        }
    }

    #[test]
    fn inversion_complements_and_is_involution() {
        let mut img = RasterImage::filled(2, 1, (255, 255, 255)).unwrap();
        img.set_pixel(1, 0, (255, 255, 0));
        let mask = PixelMask::new(2, 1, vec![true, true]).unwrap();
        let once = invert_colors_in_mask(&img, &mask).unwrap();
        assert_eq!(once.pixel(0, 0), (0, 0, 0));
        assert_eq!(once.pixel(1, 0), (0, 0, 255));
        let twice = invert_colors_in_mask(&once, &mask).unwrap();
        assert_eq!(twice, img);
    }

    #[test]
    fn inversion_leaves_unmasked_pixels_alone() {
        let img = RasterImage::filled(2, 1, (7, 8, 9)).unwrap();
        let mask = PixelMask::new(2, 1, vec![false, true]).unwrap();
        let out = invert_colors_in_mask(&img, &mask).unwrap();
        assert_eq!(out.pixel(0, 0), (7, 8, 9));
        assert_eq!(out.pixel(1, 0), (248, 247, 246));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let img = RasterImage::filled(2, 2, (0, 0, 0)).unwrap();
        let mask = PixelMask::empty(3, 3).unwrap();
        assert!(invert_colors_in_mask(&img, &mask).is_err());
        assert!(remove_instances(&img, &mask, &InpaintHook::WhiteFill).is_err());
    }

    fn person(instance_id: u64, x0: f64) -> InstanceAnnotation {
        InstanceAnnotation {
            image_id: 1,
            category: "person".to_string(),
            polygons: vec![square(x0, 1.0, x0 + 2.0, 5.0)],
            is_crowd: false,
            instance_id,
        }
    }

    #[test]
    fn removal_mutation_is_deterministic_and_in_range() {
        let img = RasterImage::filled(8, 8, (50, 50, 50)).unwrap();
        let instances = [person(1, 1.0), person(2, 5.0)];
        let (out1, mask1, meta1) = apply_image_mutation(
            &img,
            &instances,
            "person",
            MutationKind::Removal,
            &InpaintHook::WhiteFill,
            99,
            None,
        )
        .unwrap();
        let (out2, mask2, meta2) = apply_image_mutation(
            &img,
            &instances,
            "person",
            MutationKind::Removal,
            &InpaintHook::WhiteFill,
            99,
            None,
        )
        .unwrap();
        assert_eq!(out1, out2);
        assert_eq!(mask1, mask2);
        assert_eq!(meta1, meta2);
        assert_eq!(meta1.total, 2);
        assert!(meta1.m <= 2);
        assert_eq!(meta1.instance_ids.len(), meta1.m);
    }

    #[test]
    fn removal_m_cap_respected() {
        let img = RasterImage::filled(8, 8, (50, 50, 50)).unwrap();
        let instances = [person(1, 1.0), person(2, 5.0)];
        for seed in 0..20 {
            let (_, _, meta) = apply_image_mutation(
                &img,
                &instances,
                "person",
                MutationKind::Removal,
                &InpaintHook::WhiteFill,
                seed,
                Some(1),
            )
            .unwrap();
            assert!(meta.m <= 1, "seed {seed} drew m = {}", meta.m);
        }
    }

    #[test]
    fn color_inversion_touches_every_target_instance() {
        let img = RasterImage::filled(8, 8, (10, 10, 10)).unwrap();
        let instances = [person(1, 1.0), person(2, 5.0)];
        let (out, mask, meta) = apply_image_mutation(
            &img,
            &instances,
            "person",
            MutationKind::ColorInversion,
            &InpaintHook::WhiteFill,
            0,
            None,
        )
        .unwrap();
        assert_eq!(meta.m, 2);
        assert_eq!(meta.instance_ids, vec![1, 2]);
        for y in 0..8 {
            for x in 0..8 {
                let expected = if mask.get(x, y) {
                    (245, 245, 245)
                } else {
                    (10, 10, 10)
                };
                assert_eq!(out.pixel(x, y), expected);
            }
        }
    }

    #[test]
    fn missing_target_category_is_an_error() {
        let img = RasterImage::filled(8, 8, (10, 10, 10)).unwrap();
        let instances = [person(1, 1.0)];
        let err = apply_image_mutation(
            &img,
            &instances,
            "zebra",
            MutationKind::Removal,
            &InpaintHook::WhiteFill,
            0,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NoCandidateObjects));
    }

    #[test]
    fn hook_template_requires_all_placeholders() {
        assert!(InpaintHook::external("cmd {masked} {mask} {out}").is_ok());
        assert!(InpaintHook::external("cmd {masked} {mask}").is_err());
    }

    #[test]
    fn failing_hook_falls_back_to_white_fill() {
        let img = RasterImage::filled(2, 2, (0, 0, 0)).unwrap();
        let mut mask = PixelMask::empty(2, 2).unwrap();
        mask.set(0, 0, true);
        let hook = InpaintHook::external("false {masked} {mask} {out}").unwrap();
        let (out, warning) = remove_instances_checked(&img, &mask, &hook).unwrap();
        assert!(warning.is_some());
        assert_eq!(out.pixel(0, 0), (255, 255, 255));
        assert_eq!(out.pixel(1, 1), (0, 0, 0));
    }

    #[cfg(unix)]
    #[test]
    fn successful_hook_output_is_used() {
        use std::os::unix::fs::PermissionsExt;

        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("inpaint.sh");
        std::fs::write(&script, "#!/bin/sh\ncp \"$1\" \"$3\"\n").unwrap();
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();

        let img = RasterImage::filled(2, 2, (1, 2, 3)).unwrap();
        let mut mask = PixelMask::empty(2, 2).unwrap();
        mask.set(0, 0, true);
        let hook =
            InpaintHook::external(format!("{} {{masked}} {{mask}} {{out}}", script.display()))
                .unwrap();
        let (out, warning) = remove_instances_checked(&img, &mask, &hook).unwrap();
        assert_eq!(warning, None);
        assert_eq!(out.pixel(0, 0), (255, 255, 255));
        assert_eq!(out.pixel(1, 1), (1, 2, 3));
    }
}
