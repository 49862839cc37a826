//! Gaussian fields `phi = sum_k phi_k` with `phi_k` centered of covariance `C_k`,
//! drawn from dense per-level factorizations.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dense::MAX_DENSE_SITES;
use crate::error::{FrdError, Result};
use crate::frd::Decomposition;
use crate::io::write_table;
use crate::lattice::{Field, Torus};
use crate::report::CheckRecord;

/// Most negative eigenvalue a level may have before sampling refuses it.
pub const DEFAULT_CLIP_SLACK: f64 = 1e-7;

/// Standard errors allowed per covariance entry.
pub const COVARIANCE_SIGMAS: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipLog {
    pub level: usize,
    pub min_eig: f64,
    /// Sum of the magnitudes of the eigenvalues set to zero.
    pub clipped: f64,
    pub count: usize,
}

#[derive(Clone, Debug)]
pub struct Sampler {
    torus: Torus,
    /// `V sqrt(max(Lambda, 0))` per level.
    factors: Vec<DMatrix<f64>>,
    clips: Vec<ClipLog>,
}

impl Sampler {
    /// Factorizes every assembled level; fails if a level is negative beyond `slack`.
    pub fn new(dec: &Decomposition, slack: f64) -> Result<Self> {
        let t = *dec.torus();
        if t.sites() > MAX_DENSE_SITES {
            return Err(FrdError::SizeLimit { sites: t.sites(), limit: MAX_DENSE_SITES });
        }
        let n = t.len();
        let mut factors = Vec::with_capacity(dec.levels());
        let mut clips = Vec::with_capacity(dec.levels());
        for (k, mat) in dec.assemble_levels()?.into_iter().enumerate() {
            let m = DMatrix::from_row_slice(n, n, &mat);
            let sym = (&m + m.transpose()) * 0.5;
            let eig = SymmetricEigen::new(sym);
            let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            if min_eig < -slack {
                return Err(FrdError::NotPositive { level: k + 1, min_eig });
            }
            let mut clipped = 0.0;
            let mut count = 0;
            let roots = eig.eigenvalues.map(|l| {
                if l < 0.0 {
                    clipped += -l;
                    count += 1;
                    0.0
                } else {
                    l.sqrt()
                }
            });
            factors.push(&eig.eigenvectors * DMatrix::from_diagonal(&roots));
            clips.push(ClipLog { level: k + 1, min_eig, clipped, count });
        }
        Ok(Sampler { torus: t, factors, clips })
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn clips(&self) -> &[ClipLog] {
        &self.clips
    }

    pub fn levels(&self) -> usize {
        self.factors.len()
    }

    /// One draw per level, each from `n` standard normals in level order.
    pub fn draw_levels(&self, rng: &mut ChaCha8Rng) -> Vec<Field> {
        let n = self.torus.len();
        self.factors
            .iter()
            .map(|f| {
                let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
                let v = f * z;
                // The covariance is `P0 C_k P0`; round-off in the null direction is removed.
                Field::new(self.torus, v.as_slice().to_vec()).expect("length matches torus").project_mean_zero()
            })
            .collect()
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Field {
        let mut total = vec![0.0; self.torus.len()];
        for lv in self.draw_levels(rng) {
            for (t, v) in total.iter_mut().zip(lv.values()) {
                *t += v;
            }
        }
        Field::new(self.torus, total).expect("length matches torus")
    }

    /// `count` total fields from a ChaCha8 stream seeded with `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Field> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.draw(&mut rng)).collect()
    }

    pub fn clip_records(&self) -> Vec<CheckRecord> {
        self.clips
            .iter()
            .map(|c| {
                CheckRecord::info("sampling_clip", format!("k={}", c.level), c.clipped, -c.min_eig.min(0.0))
                    .with_note(format!("{} eigenvalues clipped", c.count))
            })
            .collect()
    }
}

/// Writes one table per sample, `sample-00000.bin` and so on; nothing for an empty list.
pub fn write_samples(dir: &Path, samples: &[Field], seed: u64) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        let t = s.torus();
        let mut meta = serde_json::Map::new();
        meta.insert("seed".into(), seed.into());
        meta.insert("index".into(), i.into());
        meta.insert("torus".into(), serde_json::to_value(t.params())?);
        write_table(&dir.join(format!("sample-{i:05}.bin")), &[t.sites(), t.comps()], s.values(), meta)?;
    }
    Ok(())
}

/// Entrywise `|C_hat_ij - C_ij| <= sigmas * sqrt((C_ii C_jj + C_ij^2) / n)` for the
/// known-mean estimator `C_hat = n^{-1} sum phi phi^T`.
pub fn covariance_check(samples: &[Field], reference: &DMatrix<f64>, sigmas: f64) -> Result<CheckRecord> {
    let n = reference.nrows();
    if samples.is_empty() {
        return Err(FrdError::InvalidParameter("no samples".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.values().len() != n) {
        return Err(FrdError::LengthMismatch { expected: n, got: s.values().len() });
    }
    let count = samples.len() as f64;
    let mut emp = DMatrix::<f64>::zeros(n, n);
    for s in samples {
        let v = DVector::from_column_slice(s.values());
        emp.ger(1.0, &v, &v, 1.0);
    }
    emp /= count;
    let mut worst = 0.0_f64;
    let mut outside = 0usize;
    for i in 0..n {
        for j in 0..n {
            let c = reference[(i, j)];
            let se = ((reference[(i, i)] * reference[(j, j)] + c * c) / count).sqrt();
            let z = (emp[(i, j)] - c).abs() / se;
            worst = worst.max(z);
            if z > sigmas {
                outside += 1;
            }
        }
    }
    Ok(CheckRecord::verdict(
        "sample_covariance",
        format!("samples={} entries={}", samples.len(), n * n),
        worst,
        sigmas,
        outside == 0,
    )
    .with_note(format!("{outside} entries outside")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientField;
    use crate::dense::DenseOracle;
    use crate::frd::DecompositionPlan;
    use crate::solver::EllipticOperator;

    fn sampler() -> (Sampler, DenseOracle) {
        let t = Torus::new(2, 1, 3, 1).unwrap();
        let op = EllipticOperator::new(CoefficientField::identity(t));
        let dec = Decomposition::new(&op, DecompositionPlan::default_for(&t)).unwrap();
        (Sampler::new(&dec, DEFAULT_CLIP_SLACK).unwrap(), DenseOracle::new(&op).unwrap())
    }

    #[test]
    fn factors_reproduce_the_green_matrix() {
        let (s, oracle) = sampler();
        let mut sum = DMatrix::<f64>::zeros(9, 9);
        for f in &s.factors {
            sum += f * f.transpose();
        }
        assert!((sum - oracle.green()).abs().max() < 1e-8);
    }

    #[test]
    fn samples_are_deterministic_and_mean_zero() {
        let (s, _) = sampler();
        let a = s.sample(5, 7);
        let b = s.sample(5, 7);
        assert_eq!(a, b);
        assert_ne!(a, s.sample(5, 8));
        for f in &a {
            assert!(f.mean_deviation() < 1e-10);
        }
        assert!(s.sample(0, 7).is_empty());
    }

    #[test]
    fn empirical_covariance_converges() {
        let (s, oracle) = sampler();
        let samples = s.sample(4000, 3);
        let rec = covariance_check(&samples, oracle.green(), COVARIANCE_SIGMAS).unwrap();
        assert!(rec.pass, "{rec:?}");
        // A wrong reference is caught.
        let wrong = oracle.green() * 1.5;
        assert!(!covariance_check(&samples, &wrong, COVARIANCE_SIGMAS).unwrap().pass);
    }

    #[test]
    fn empty_sample_list_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        write_samples(dir.path(), &[], 0).unwrap();
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
        let (s, _) = sampler();
        write_samples(dir.path(), &s.sample(2, 1), 1).unwrap();
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 4);
    }
}
