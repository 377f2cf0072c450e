//! Optional PNG support, enabled by the `png` cargo feature.

use crate::error::{Error, Result};
use crate::model::RasterImage;
use image::{ImageFormat, ImageReader, RgbImage};
use std::path::Path;

pub fn read_png(path: &Path) -> Result<RasterImage> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let decoded = reader
        .decode()
        .map_err(|e| Error::format("png", e.to_string()))?;
    let rgb = decoded.to_rgb8();
    let (width, height) = rgb.dimensions();
    let pixels = rgb.pixels().map(|p| (p.0[0], p.0[1], p.0[2])).collect();
    RasterImage::new(width, height, pixels)
}

pub fn write_png(path: &Path, img: &RasterImage) -> Result<()> {
    let mut out = RgbImage::new(img.width(), img.height());
    for (dest, &(r, g, b)) in out.pixels_mut().zip(img.pixels()) {
        dest.0 = [r, g, b];
    }
    out.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::format("png", e.to_string()))
}
