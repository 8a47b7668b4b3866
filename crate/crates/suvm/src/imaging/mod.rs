//! Image ingestion: scale pyramids, patch sampling, HOG descriptors, PCA.

mod hog;
mod pca;
mod pyramid;

pub use hog::{hog, HogParams};
pub use pca::{fit_pca, fit_pca_from_moments, CovAccumulator, PcaProjection};
pub use pyramid::{
    build_pyramid, dense_count, sample_patches, Patch, PyramidLayer, SampleMode, ScalePyramid,
};

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const DESC_MAGIC: &[u8; 4] = b"SUVD";
const DESC_VERSION: u32 = 1;

/// Write descriptors as a flat little-endian f32 matrix with a 16-byte
/// header: magic, version, rows, cols.
pub fn write_descriptor_matrix(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut buf = Vec::with_capacity(16 + rows.len() * cols * 4);
    buf.extend_from_slice(DESC_MAGIC);
    buf.extend_from_slice(&DESC_VERSION.to_le_bytes());
    buf.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(cols as u32).to_le_bytes());
    for r in rows {
        assert_eq!(r.len(), cols, "ragged descriptor matrix");
        for &v in r {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    f.write_all(&buf).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_descriptor_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    if bytes.len() < 16 || &bytes[0..4] != DESC_MAGIC {
        return Err(Error::ModelFormat(format!(
            "{path:?} is not a descriptor matrix file"
        )));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != DESC_VERSION {
        return Err(Error::ModelFormat(format!(
            "descriptor matrix version {version} unsupported (expected {DESC_VERSION})"
        )));
    }
    let rows = word(8) as usize;
    let cols = word(12) as usize;
    if bytes.len() != 16 + rows * cols * 4 {
        return Err(Error::ModelFormat("descriptor matrix truncated".into()));
    }
    let mut out = Vec::with_capacity(rows);
    let mut off = 16;
    for _ in 0..rows {
        let mut row = Vec::with_capacity(cols);
        for _ in 0..cols {
            row.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64);
            off += 4;
        }
        out.push(row);
    }
    Ok(out)
}
