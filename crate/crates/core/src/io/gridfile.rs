//! Binary sampling-grid interchange format.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic   4 bytes  "SGRD"
//! version u16      1
//! height  u32
//! width   u32
//! flags   u8       bit 0 = clamped
//! data    height·width pairs of f32 (x, y), row-major
//! ```
//!
//! Total length is `15 + 8·height·width` bytes. Files round-trip
//! byte-identically.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{NormCoord, SamplingGrid};
use crate::io::write_atomic;

pub const MAGIC: [u8; 4] = *b"SGRD";
pub const VERSION: u16 = 1;

pub fn encode(grid: &SamplingGrid) -> Vec<u8> {
    let (h, w) = grid.dims();
    let mut out = Vec::with_capacity(15 + 8 * h * w);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.push(grid.is_clamped() as u8);
    for c in grid.coords() {
        out.extend_from_slice(&(c.x as f32).to_le_bytes());
        out.extend_from_slice(&(c.y as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<SamplingGrid> {
    if bytes.len() < 15 {
        return Err(Error::Format("grid file too short".into()));
    }
    if bytes[0..4] != MAGIC {
        return Err(Error::Format("bad grid file magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported grid file version {version}"
        )));
    }
    let h = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    let w = u32::from_le_bytes([bytes[10], bytes[11], bytes[12], bytes[13]]) as usize;
    let flags = bytes[14];
    let expected = 15 + 8 * h * w;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "grid file length {} does not match header ({expected} for {h}x{w})",
            bytes.len()
        )));
    }
    let mut coords = Vec::with_capacity(h * w);
    let mut off = 15;
    for _ in 0..h * w {
        let x = f32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]);
        let y = f32::from_le_bytes([
            bytes[off + 4],
            bytes[off + 5],
            bytes[off + 6],
            bytes[off + 7],
        ]);
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Format("non-finite grid coordinate".into()));
        }
        coords.push(NormCoord {
            x: x as f64,
            y: y as f64,
        });
        off += 8;
    }
    SamplingGrid::new(h, w, coords, flags & 1 != 0)
}

pub fn write_grid(path: &Path, grid: &SamplingGrid) -> Result<()> {
    write_atomic(path, &encode(grid))
}

pub fn read_grid(path: &Path) -> Result<SamplingGrid> {
    decode(&std::fs::read(path)?)
}
