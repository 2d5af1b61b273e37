//! File formats: detection JSON, binary sampling grids, rasters, and the
//! run configuration.

pub mod config;
pub mod detections;
pub mod gridfile;
pub mod raster;

use std::path::Path;

use crate::error::Result;

/// Write a file atomically: contents go to a temporary file in the target's
/// directory, which is then renamed over the destination.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
