//! On-disk operator cache.
//!
//! Layout (little endian):
//!
//! ```text
//! magic   [u8; 8]  = "TOMOROP\0"
//! version u32      = 1
//! rows    u64
//! cols    u64
//! nnz     u64
//! nnz x (row u32, col u32, weight f64)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{build_radon_matrix, ProjectionGeometry, SparseOperator};
use tomo_core::error::{Error, Result};
use tomo_core::sparse::CsrMatrix;

const MAGIC: &[u8; 8] = b"TOMOROP\0";
const VERSION: u32 = 1;

/// Content hash of a geometry, used as the cache file stem.
pub fn geometry_key(geom: &ProjectionGeometry) -> String {
    let mut h = Sha256::new();
    h.update(VERSION.to_le_bytes());
    h.update(serde_json::to_vec(geom).expect("geometry serializes"));
    h.finalize()
        .iter()
        .take(12)
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn write_operator(path: &Path, op: &SparseOperator) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(op.rows() as u64).to_le_bytes())?;
    w.write_all(&(op.cols() as u64).to_le_bytes())?;
    w.write_all(&(op.matrix().nnz() as u64).to_le_bytes())?;
    for (r, c, v) in op.triples() {
        w.write_all(&(r as u32).to_le_bytes())?;
        w.write_all(&(c as u32).to_le_bytes())?;
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an operator file written for `geom`.
pub fn read_operator(path: &Path, geom: &ProjectionGeometry) -> Result<SparseOperator> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::malformed(path, "bad magic"));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::malformed(
            path,
            format!("unsupported version {version}"),
        ));
    }
    let mut next_u64 = |r: &mut BufReader<File>| -> Result<u64> {
        r.read_exact(&mut b8)?;
        Ok(u64::from_le_bytes(b8))
    };
    let rows = next_u64(&mut r)? as usize;
    let cols = next_u64(&mut r)? as usize;
    let nnz = next_u64(&mut r)? as usize;
    let side = geom.image_side();
    if rows != geom.ray_count() || cols != side * side {
        return Err(Error::malformed(
            path,
            format!("{rows}x{cols} operator does not match the geometry"),
        ));
    }
    let mut triples = Vec::with_capacity(nnz.min(1 << 26));
    let mut rec = [0u8; 16];
    for _ in 0..nnz {
        r.read_exact(&mut rec)?;
        let row = u32::from_le_bytes(rec[0..4].try_into().unwrap()) as usize;
        let col = u32::from_le_bytes(rec[4..8].try_into().unwrap()) as usize;
        let w = f64::from_le_bytes(rec[8..16].try_into().unwrap());
        if row >= rows || col >= cols {
            return Err(Error::malformed(path, "entry index out of range"));
        }
        triples.push((row, col, w));
    }
    let matrix = CsrMatrix::from_triples(rows, cols, &triples);
    SparseOperator::new(
        matrix,
        geom.angles_deg().to_vec(),
        geom.detector_count(),
        side,
        side,
    )
}

/// Loads `R` from `dir` if a file for this geometry exists, otherwise
/// builds it and stores it there.
pub fn cached_radon_matrix(dir: &Path, geom: &ProjectionGeometry) -> Result<SparseOperator> {
    let path: PathBuf = dir.join(format!("radon-{}.op", geometry_key(geom)));
    if path.exists() {
        if let Ok(op) = read_operator(&path, geom) {
            return Ok(op);
        }
    }
    let op = build_radon_matrix(geom);
    std::fs::create_dir_all(dir)?;
    let tmp = path.with_extension("op.tmp");
    write_operator(&tmp, &op)?;
    std::fs::rename(&tmp, &path)?;
    Ok(op)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::build_geometry;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let geom = build_geometry(7, 0.0, 16).unwrap();
        let op = build_radon_matrix(&geom);
        let path = dir.path().join("a.op");
        write_operator(&path, &op).unwrap();
        assert_eq!(read_operator(&path, &geom).unwrap(), op);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 8 + 4 + 24 + 16 * op.matrix().nnz());
    }

    #[test]
    fn cache_hit_returns_same_operator() {
        let dir = tempfile::tempdir().unwrap();
        let geom = build_geometry(4, 10.0, 12).unwrap();
        let a = cached_radon_matrix(dir.path(), &geom).unwrap();
        let b = cached_radon_matrix(dir.path(), &geom).unwrap();
        assert_eq!(a, b);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn keys_differ_between_geometries() {
        let a = build_geometry(4, 0.0, 12).unwrap();
        let b = build_geometry(5, 0.0, 12).unwrap();
        assert_ne!(geometry_key(&a), geometry_key(&b));
        assert_eq!(geometry_key(&a), geometry_key(&a.clone()));
    }

    #[test]
    fn rejects_mismatched_geometry_and_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let geom = build_geometry(4, 0.0, 12).unwrap();
        let path = dir.path().join("a.op");
        write_operator(&path, &build_radon_matrix(&geom)).unwrap();
        let other = build_geometry(5, 0.0, 12).unwrap();
        assert!(matches!(
            read_operator(&path, &other),
            Err(Error::Malformed { .. })
        ));
        std::fs::write(&path, b"nonsense-bytes-here").unwrap();
        assert!(read_operator(&path, &geom).is_err());
    }
}
