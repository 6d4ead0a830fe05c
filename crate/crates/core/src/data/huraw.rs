//! HURAW1: a minimal 16-bit CT raster container.
//!
//! Layout, all little-endian:
//!
//! | bytes | field              |
//! |-------|--------------------|
//! | 6     | magic `HURAW1`     |
//! | 2     | version (u16 = 1)  |
//! | 4     | width (u32)        |
//! | 4     | height (u32)       |
//! | 8     | rescale slope (f64)|
//! | 8     | rescale intercept (f64) |
//! | 2·h·w | stored values (i16), row-major |
//!
//! Readers apply `HU = slope·stored + intercept`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::windowing::HuImage;

pub const MAGIC: &[u8; 6] = b"HURAW1";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 6 + 2 + 4 + 4 + 8 + 8;

pub fn encode_hu(img: &HuImage) -> Result<Vec<u8>> {
    let (slope, intercept) = (img.rescale_slope, img.rescale_intercept);
    if !(slope.is_finite() && slope != 0.0 && intercept.is_finite()) {
        return Err(Error::InvalidImage(format!("bad rescale slope {slope} / intercept {intercept}")));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 2 * img.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    out.extend_from_slice(&slope.to_le_bytes());
    out.extend_from_slice(&intercept.to_le_bytes());
    for &hu in img.values() {
        let raw = ((hu - intercept) / slope).round();
        if !(i16::MIN as f64..=i16::MAX as f64).contains(&raw) {
            return Err(Error::NotRepresentable { hu, slope, intercept });
        }
        out.extend_from_slice(&(raw as i16).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_hu(bytes: &[u8]) -> Result<HuImage> {
    const WHAT: &str = "HURAW1 file";
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 6 && &bytes[..6] != MAGIC {
            return Err(Error::BadMagic { what: WHAT, expected: "HURAW1" });
        }
        return Err(Error::Truncated {
            what: WHAT,
            detail: format!("{} header bytes, need {HEADER_LEN}", bytes.len()),
        });
    }
    if &bytes[..6] != MAGIC {
        return Err(Error::BadMagic { what: WHAT, expected: "HURAW1" });
    }
    let version = u16::from_le_bytes([bytes[6], bytes[7]]);
    if version != VERSION {
        return Err(Error::UnsupportedVersion { what: WHAT, version });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let (width, height) = (u32_at(8), u32_at(12));
    let (slope, intercept) = (f64_at(16), f64_at(24));
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Malformed { what: WHAT, detail: format!("dimensions {width}x{height} overflow") })?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < 2 * n {
        return Err(Error::Truncated {
            what: WHAT,
            detail: format!("{} payload bytes, need {}", payload.len(), 2 * n),
        });
    }
    if payload.len() > 2 * n {
        return Err(Error::Malformed { what: WHAT, detail: format!("{} trailing bytes", payload.len() - 2 * n) });
    }
    if !(slope.is_finite() && intercept.is_finite()) {
        return Err(Error::Malformed { what: WHAT, detail: format!("rescale slope {slope} / intercept {intercept}") });
    }
    let values = payload.chunks_exact(2).map(|c| slope * i16::from_le_bytes([c[0], c[1]]) as f64 + intercept).collect();
    HuImage::new(height, width, values)
        .map(|img| img.with_rescale(slope, intercept))
        .map_err(|e| Error::Malformed { what: WHAT, detail: e.to_string() })
}

pub fn write_hu_file(img: &HuImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_hu(img)?).map_err(|e| Error::io(path, e))
}

pub fn read_hu_file(path: impl AsRef<Path>) -> Result<HuImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_hu(&bytes)
}
