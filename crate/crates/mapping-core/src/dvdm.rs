//! The DVDM binary mapping file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "DVDM" (44 56 44 4D)
//! 4       1     version, must be 1
//! 5       1     dtype, must be 1 (f32 little-endian)
//! 6       2     reserved, must be 0
//! 8       4     height (u32)
//! 12      4     width (u32)
//! 16      4     channels (u32), must be 2
//! 20      ...   height*width*2 f32 values, row-major, per-cell (x, y)
//! ```
//!
//! Readers reject unknown magic, version, dtype, nonzero reserved bytes,
//! channel counts other than 2, and length mismatches.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;

use crate::{GridMapping, MappingError, Result};

const MAGIC: [u8; 4] = *b"DVDM";
const VERSION: u8 = 1;
const DTYPE_F32LE: u8 = 1;

/// Serializes a mapping into a writer. Coordinates are narrowed to f32 as
/// the format dictates.
pub fn write_dvdm_to<W: Write>(map: &GridMapping, mut w: W) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&[VERSION, DTYPE_F32LE])?;
    w.write_all(&0u16.to_le_bytes())?;
    w.write_all(&(map.height() as u32).to_le_bytes())?;
    w.write_all(&(map.width() as u32).to_le_bytes())?;
    w.write_all(&2u32.to_le_bytes())?;
    for u in 0..map.height() {
        for v in 0..map.width() {
            let (x, y) = map.at(u, v);
            w.write_all(&(x as f32).to_le_bytes())?;
            w.write_all(&(y as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Writes a mapping to a file at `path`.
pub fn write_dvdm(map: &GridMapping, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_dvdm_to(map, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Parses a mapping from a reader, validating the full header and that the
/// payload length matches the declared dimensions exactly.
pub fn read_dvdm_from<R: Read>(mut r: R) -> Result<GridMapping> {
    let mut header = [0u8; 20];
    r.read_exact(&mut header)
        .map_err(|e| MappingError::Format(format!("truncated header: {e}")))?;
    if header[0..4] != MAGIC {
        return Err(MappingError::Format(format!(
            "bad magic {:02x?}, expected {:02x?}",
            &header[0..4],
            MAGIC
        )));
    }
    if header[4] != VERSION {
        return Err(MappingError::Format(format!(
            "unsupported version {}, expected {VERSION}",
            header[4]
        )));
    }
    if header[5] != DTYPE_F32LE {
        return Err(MappingError::Format(format!(
            "unsupported dtype {}, expected {DTYPE_F32LE}",
            header[5]
        )));
    }
    if header[6] != 0 || header[7] != 0 {
        return Err(MappingError::Format("reserved bytes must be zero".into()));
    }
    let h = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let c = u32::from_le_bytes(header[16..20].try_into().unwrap()) as usize;
    if c != 2 {
        return Err(MappingError::Format(format!(
            "mapping must have 2 channels, file declares {c}"
        )));
    }
    if h == 0 || w == 0 {
        return Err(MappingError::Format("zero-sized mapping".into()));
    }
    let n_bytes = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| MappingError::Format("dimension overflow".into()))?;
    let mut payload = vec![0u8; n_bytes];
    r.read_exact(&mut payload)
        .map_err(|e| MappingError::Format(format!("truncated payload: {e}")))?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(MappingError::Format("trailing bytes after payload".into()));
    }
    let mut coords = Array3::zeros((h, w, 2));
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let val = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        let cell = i / 2;
        coords[[cell / w, cell % w, i % 2]] = val;
    }
    GridMapping::new(coords)
}

/// Reads a mapping from a file at `path`.
pub fn read_dvdm(path: &Path) -> Result<GridMapping> {
    let file = File::open(path)?;
    read_dvdm_from(BufReader::new(file))
}
