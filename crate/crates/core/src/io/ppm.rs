//! Binary PPM (P6) raster images and P5 PGM masks.
//!
//! PPM is the mandatory on-disk image format; the mask side of the inpaint
//! hook protocol is written as P5 with 0/255 values.

use crate::error::{Error, Result};
use crate::image::PixelMask;
use crate::model::RasterImage;
use std::io::Write;
use std::path::Path;

/// Reads one header token, skipping whitespace and `#` comments.
fn next_token(data: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format("ppm", "unexpected end of header"));
    }
    Ok(String::from_utf8_lossy(&data[start..*pos]).into_owned())
}

fn parse_header(data: &[u8], magic: &str) -> Result<(u32, u32, usize)> {
    let mut pos = 0usize;
    let found = next_token(data, &mut pos)?;
    if found != magic {
        return Err(Error::format(
            "ppm",
            format!("expected magic {magic}, got {found}"),
        ));
    }
    let width: u32 = next_token(data, &mut pos)?
        .parse()
        .map_err(|_| Error::format("ppm", "bad width"))?;
    let height: u32 = next_token(data, &mut pos)?
        .parse()
        .map_err(|_| Error::format("ppm", "bad height"))?;
    let maxval: u32 = next_token(data, &mut pos)?
        .parse()
        .map_err(|_| Error::format("ppm", "bad maxval"))?;
    if maxval != 255 {
        return Err(Error::format("ppm", format!("unsupported maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(Error::format("ppm", "missing raster separator"));
    }
    Ok((width, height, pos + 1))
}

pub fn decode_ppm(data: &[u8]) -> Result<RasterImage> {
    let (width, height, offset) = parse_header(data, "P6")?;
    let n = width as usize * height as usize;
    let raster = &data[offset..];
    if raster.len() < n * 3 {
        return Err(Error::format(
            "ppm",
            format!("raster too short: {} < {}", raster.len(), n * 3),
        ));
    }
    let pixels = raster[..n * 3]
        .chunks_exact(3)
        .map(|c| (c[0], c[1], c[2]))
        .collect();
    RasterImage::new(width, height, pixels)
}

pub fn encode_ppm(img: &RasterImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.pixels().len() * 3 + 32);
    write!(out, "P6\n{} {}\n255\n", img.width(), img.height()).unwrap();
    for &(r, g, b) in img.pixels() {
        out.extend_from_slice(&[r, g, b]);
    }
    out
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&data)
}

pub fn write_ppm(path: impl AsRef<Path>, img: &RasterImage) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path, e))
}

/// Encodes a mask as binary PGM (P5), 255 inside the mask, 0 outside.
pub fn encode_pgm(mask: &PixelMask) -> Vec<u8> {
    let mut out = Vec::with_capacity(mask.bits().len() + 32);
    write!(out, "P5\n{} {}\n255\n", mask.width(), mask.height()).unwrap();
    out.extend(mask.bits().iter().map(|&b| if b { 255u8 } else { 0u8 }));
    out
}

pub fn decode_pgm(data: &[u8]) -> Result<PixelMask> {
    let (width, height, offset) = parse_header(data, "P5")?;
    let n = width as usize * height as usize;
    let raster = &data[offset..];
    if raster.len() < n {
        return Err(Error::format("ppm", "PGM raster too short"));
    }
    PixelMask::new(width, height, raster[..n].iter().map(|&v| v >= 128).collect())
}

pub fn write_pgm(path: impl AsRef<Path>, mask: &PixelMask) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(mask)).map_err(|e| Error::io(path, e))
}
