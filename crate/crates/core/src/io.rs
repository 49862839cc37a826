//! Binary tables: little-endian `f64` payloads with a JSON header carrying
//! shape and sha256 digest. Writes go through a temporary file and a rename.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coefficients::CoefficientField;
use crate::error::{FrdError, Result};
use crate::solver::KernelColumn;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableHeader {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub sha256: String,
    #[serde(default)]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn to_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn from_bytes(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(FrdError::Integrity(format!("payload length {} is not a multiple of 8", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn header_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Writes `<path>` (payload) and `<path>.json` (header); returns the header.
pub fn write_table(
    path: &Path,
    shape: &[usize],
    values: &[f64],
    meta: serde_json::Map<String, serde_json::Value>,
) -> Result<TableHeader> {
    let expected: usize = shape.iter().product();
    if expected != values.len() {
        return Err(FrdError::LengthMismatch { expected, got: values.len() });
    }
    let bytes = to_bytes(values);
    let header = TableHeader { shape: shape.to_vec(), dtype: "f64le".into(), sha256: sha256_hex(&bytes), meta };
    atomic_write(path, &bytes)?;
    atomic_write(&header_path(path), serde_json::to_string_pretty(&header)?.as_bytes())?;
    Ok(header)
}

/// Reads a table and checks its shape and digest.
pub fn read_table(path: &Path) -> Result<(TableHeader, Vec<f64>)> {
    let header: TableHeader = serde_json::from_slice(
        &fs::read(header_path(path)).map_err(|e| FrdError::Integrity(format!("{}: {e}", path.display())))?,
    )
    .map_err(|e| FrdError::Integrity(format!("{}: bad header: {e}", path.display())))?;
    let bytes = fs::read(path).map_err(|e| FrdError::Integrity(format!("{}: {e}", path.display())))?;
    let digest = sha256_hex(&bytes);
    if digest != header.sha256 {
        return Err(FrdError::Integrity(format!("{}: sha256 mismatch", path.display())));
    }
    let values = from_bytes(&bytes)?;
    let expected: usize = header.shape.iter().product();
    if values.len() != expected {
        return Err(FrdError::Integrity(format!(
            "{}: {} values for shape {:?}",
            path.display(),
            values.len(),
            header.shape
        )));
    }
    Ok((header, values))
}

/// Coefficients as a `sites x md x md` table.
pub fn write_coefficients(path: &Path, a: &CoefficientField) -> Result<TableHeader> {
    let t = a.torus();
    let md = a.md();
    let mut meta = serde_json::Map::new();
    meta.insert("torus".into(), serde_json::to_value(t.params())?);
    meta.insert("c0".into(), a.c0().into());
    meta.insert("c1".into(), a.c1().into());
    write_table(path, &[t.sites(), md, md], a.data(), meta)
}

/// Kernel column as a `sites x m x m` table with source and tolerance in the header.
pub fn write_kernel(path: &Path, k: &KernelColumn, level: usize) -> Result<TableHeader> {
    let m = k.m();
    let mut meta = serde_json::Map::new();
    meta.insert("source".into(), k.source.into());
    meta.insert("level".into(), level.into());
    meta.insert("tol".into(), k.tol.into());
    meta.insert("tag".into(), k.tag.clone().into());
    write_table(path, &[k.torus.sites(), m, m], &k.blocks, meta)
}
