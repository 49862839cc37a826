//! Decomposition archives: `manifest.json`, the coefficient table, and one
//! kernel table per (level, source).
//!
//! The manifest digest covers every field except the build timestamp, so two
//! builds of the same configuration share it. The timestamp is taken from
//! `SOURCE_DATE_EPOCH` when set, which makes whole archives byte-identical.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::error::{FrdError, Result};
use crate::frd::{Decomposition, DecompositionPlan};
use crate::io::{atomic_write, read_table, sha256_hex, write_coefficients, write_kernel};
use crate::lattice::{Torus, TorusParams};
use crate::solver::{EllipticOperator, KernelColumn};

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;
const COEFFICIENT_TABLE: &str = "coefficients.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelEntry {
    pub level: usize,
    pub source: usize,
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveTolerances {
    pub solver: f64,
    pub range: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: u32,
    pub torus: TorusParams,
    pub plan: DecompositionPlan,
    pub coefficient_hash: String,
    pub coefficient_file: String,
    pub coefficient_sha256: String,
    /// Reference `A0` of the coefficient field, when it has one.
    pub reference: Option<Vec<f64>>,
    pub budget: Option<f64>,
    pub tolerances: ArchiveTolerances,
    pub sources: Vec<usize>,
    pub kernels: Vec<KernelEntry>,
    /// Seconds since the Unix epoch; excluded from the digest.
    pub timestamp: u64,
    /// sha256 of the manifest serialized with `timestamp = 0` and this field empty.
    pub digest: String,
}

impl Manifest {
    pub fn compute_digest(&self) -> Result<String> {
        let stripped = Manifest { timestamp: 0, digest: String::new(), ..self.clone() };
        Ok(sha256_hex(serde_json::to_string(&stripped)?.as_bytes()))
    }
}

pub fn build_timestamp() -> u64 {
    if let Some(v) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok()) {
        return v;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn kernel_file(level: usize, source: usize) -> String {
    format!("kernel-L{level:02}-S{source:06}.bin")
}

/// Writes the archive into `dir`, manifest last.
pub fn write_archive(dir: &Path, dec: &Decomposition, range_rel: f64, timestamp: u64) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let a = dec.operator().coefficients();
    let coeff = write_coefficients(&dir.join(COEFFICIENT_TABLE), a)?;
    let mut kernels = Vec::new();
    for (i, &s) in dec.sources().iter().enumerate() {
        for k in 1..=dec.levels() {
            let file = kernel_file(k, s);
            let h = write_kernel(&dir.join(&file), dec.kernel(i, k), k)?;
            kernels.push(KernelEntry { level: k, source: s, file, sha256: h.sha256 });
        }
    }
    let mut manifest = Manifest {
        format: FORMAT_VERSION,
        torus: dec.torus().params(),
        plan: dec.plan().clone(),
        coefficient_hash: a.hash(),
        coefficient_file: COEFFICIENT_TABLE.into(),
        coefficient_sha256: coeff.sha256,
        reference: a.reference().map(|r| r.to_vec()),
        budget: a.budget(),
        tolerances: ArchiveTolerances { solver: dec.plan().tol, range: range_rel },
        sources: dec.sources().to_vec(),
        kernels,
        timestamp,
        digest: String::new(),
    };
    manifest.digest = manifest.compute_digest()?;
    atomic_write(&dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let bytes = std::fs::read(&path).map_err(|e| FrdError::Integrity(format!("{}: {e}", path.display())))?;
    let m: Manifest =
        serde_json::from_slice(&bytes).map_err(|e| FrdError::Integrity(format!("{}: {e}", path.display())))?;
    if m.format != FORMAT_VERSION {
        return Err(FrdError::Integrity(format!("unsupported archive format {}", m.format)));
    }
    if m.compute_digest()? != m.digest {
        return Err(FrdError::Integrity("manifest digest mismatch".into()));
    }
    Ok(m)
}

#[derive(Clone, Debug)]
pub struct Archive {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub decomposition: Decomposition,
}

impl Archive {
    /// Loads and checks every digest; any mismatch is an integrity error.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir)?;
        let t = Torus::from_params(manifest.torus)?;
        let (ch, data) = read_table(&dir.join(&manifest.coefficient_file))?;
        if ch.sha256 != manifest.coefficient_sha256 {
            return Err(FrdError::Integrity("coefficient table does not match manifest".into()));
        }
        let mut a = CoefficientField::new(t, data)?;
        if let Some(r) = &manifest.reference {
            a = a.with_reference(r.clone(), manifest.budget)?;
        }
        if a.hash() != manifest.coefficient_hash {
            return Err(FrdError::Integrity("coefficient hash mismatch".into()));
        }
        let mut kernels: Vec<Vec<Option<KernelColumn>>> = vec![vec![None; manifest.plan.levels()]; manifest.sources.len()];
        for e in &manifest.kernels {
            let (h, blocks) = read_table(&dir.join(&e.file))?;
            if h.sha256 != e.sha256 {
                return Err(FrdError::Integrity(format!("{} does not match manifest", e.file)));
            }
            let i = manifest
                .sources
                .iter()
                .position(|&s| s == e.source)
                .ok_or_else(|| FrdError::Integrity(format!("{}: unknown source {}", e.file, e.source)))?;
            if e.level == 0 || e.level > manifest.plan.levels() {
                return Err(FrdError::Integrity(format!("{}: level {} out of range", e.file, e.level)));
            }
            let m = t.comps();
            if h.shape != [t.sites(), m, m] {
                return Err(FrdError::Integrity(format!("{}: shape {:?}", e.file, h.shape)));
            }
            let tag = h.meta.get("tag").and_then(|v| v.as_str()).unwrap_or("stored").to_string();
            let tol = h.meta.get("tol").and_then(|v| v.as_f64()).unwrap_or(manifest.plan.tol);
            kernels[i][e.level - 1] = Some(KernelColumn { torus: t, source: e.source, blocks, tag, tol });
        }
        let kernels = kernels
            .into_iter()
            .map(|row| row.into_iter().collect::<Option<Vec<_>>>())
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| FrdError::Integrity("missing kernel tables".into()))?;
        let op = EllipticOperator::new(a);
        let decomposition = Decomposition::from_parts(&op, manifest.plan.clone(), manifest.sources.clone(), kernels)?;
        Ok(Archive { dir: dir.to_path_buf(), manifest, decomposition })
    }
}
