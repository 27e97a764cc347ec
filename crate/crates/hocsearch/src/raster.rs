//! Depth maps as a JSON sidecar plus raw little-endian f32 samples (NaN for
//! no return), and masks as binary PBM.

use std::path::{Path, PathBuf};

use hoc_core::render::{DepthMap, Mask};
use serde::{Deserialize, Serialize};

use crate::error::{self, FormatError, Result};

pub const DEPTH_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSidecar {
    pub version: u64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
    /// Raw sample file, relative to the sidecar.
    pub data: String,
}

/// Writes `<stem>.json` and `<stem>.f32` next to each other.
pub fn write_depth(dir: &Path, stem: &str, depth: &DepthMap) -> Result<PathBuf> {
    let data = format!("{stem}.f32");
    let mut bytes = Vec::with_capacity(depth.as_slice().len() * 4);
    for &d in depth.as_slice() {
        bytes.extend_from_slice(&d.to_le_bytes());
    }
    error::write(&dir.join(&data), &bytes)?;
    let sidecar =
        DepthSidecar { version: DEPTH_VERSION, width: depth.width, height: depth.height, near: depth.near, far: depth.far, data };
    let path = dir.join(format!("{stem}.json"));
    error::write_json(&path, &sidecar)?;
    Ok(path)
}

pub fn read_depth(sidecar_path: &Path) -> Result<DepthMap> {
    let s: DepthSidecar = error::read_versioned(sidecar_path, DEPTH_VERSION)?;
    let data_path = sidecar_path.parent().unwrap_or(Path::new(".")).join(&s.data);
    let bytes = error::read(&data_path)?;
    let want = s.width * s.height * 4;
    if bytes.len() != want {
        return Err(FormatError::parse(
            &data_path,
            bytes.len().min(want),
            format!("expected {want} bytes for {}x{} samples, found {}", s.width, s.height, bytes.len()),
        ));
    }
    let depth = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    DepthMap::from_raw(s.width, s.height, s.near, s.far, depth).map_err(|e| FormatError::invalid(sidecar_path, e))
}

pub fn mask_to_pbm(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P4\n{} {}\n", mask.width, mask.height).into_bytes();
    let row_bytes = mask.width.div_ceil(8);
    for y in 0..mask.height {
        let mut row = vec![0u8; row_bytes];
        for x in 0..mask.width {
            if mask.get(y * mask.width + x) {
                row[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    out
}

/// Binary PBM with `#` comments allowed in the header.
pub fn mask_from_pbm(path: &Path, bytes: &[u8]) -> Result<Mask> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(3);
    while fields.len() < 3 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(FormatError::parse(path, pos, "truncated PBM header"));
        }
        fields.push((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
    }
    if fields[0].1 != "P4" {
        return Err(FormatError::parse(path, 0, "not a binary PBM (P4) file"));
    }
    let dim = |i: usize| -> Result<usize> {
        let (at, ref s) = fields[i];
        s.parse().map_err(|_| FormatError::parse(path, at, format!("bad dimension '{s}'")))
    };
    let (width, height) = (dim(1)?, dim(2)?);
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let row_bytes = width.div_ceil(8);
    let need = row_bytes * height;
    if bytes.len() < pos + need {
        return Err(FormatError::parse(path, bytes.len(), format!("raster needs {need} bytes")));
    }
    let raster = &bytes[pos..pos + need];
    let bits =
        (0..height).flat_map(|y| (0..width).map(move |x| raster[y * row_bytes + x / 8] & (0x80 >> (x % 8)) != 0)).collect();
    Mask::from_bits(width, height, bits).map_err(|e| FormatError::invalid(path, e))
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    error::write(path, &mask_to_pbm(mask))
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    mask_from_pbm(path, &error::read(path)?)
}
