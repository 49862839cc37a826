//! Coefficient fields `x -> A(x)`, symmetric maps on `R^{m x d}`.
//!
//! `A(x)` is stored as a row-major `(md) x (md)` matrix per site, where the
//! entry `F_{ij}` of `F in R^{m x d}` has flat index `i * d + j`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FrdError, Result};
use crate::lattice::{MultiIndex, Torus, DEFAULT_ORDER_CAP};
use crate::linalg;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct CoefficientField {
    torus: Torus,
    data: Vec<f64>,
    c0: f64,
    c1: f64,
    reference: Option<Vec<f64>>,
    e_norm_perturbation: Option<f64>,
    budget: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Sin,
    Cos,
}

/// One term `amplitude * sin(2 pi <frequency, theta>)` (or cos) of a trigonometric profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub frequency: Vec<i64>,
    /// Symmetric `(md) x (md)` matrix, row-major.
    pub amplitude: Vec<f64>,
    #[serde(default = "default_kind")]
    pub kind: ModeKind,
}

fn default_kind() -> ModeKind {
    ModeKind::Sin
}

impl Mode {
    fn value(&self, theta: &[f64]) -> f64 {
        let phase: f64 = self
            .frequency
            .iter()
            .zip(theta)
            .map(|(&k, &t)| k as f64 * t)
            .sum::<f64>()
            * std::f64::consts::TAU;
        match self.kind {
            ModeKind::Sin => phase.sin(),
            ModeKind::Cos => phase.cos(),
        }
    }
}

/// `A(x) = A0 + epsilon * B(x / side)` with `B` a finite trigonometric sum.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSpec {
    pub a0: Vec<f64>,
    pub epsilon: f64,
    pub modes: Vec<Mode>,
    /// Declared bound on `||A - A0||_E`; unchecked when absent.
    pub budget: Option<f64>,
}

impl PerturbationSpec {
    pub fn constant(a0: Vec<f64>) -> Self {
        PerturbationSpec { a0, epsilon: 0.0, modes: Vec::new(), budget: None }
    }

    /// `A0 = I`, one sine mode along the first axis with amplitude `I`.
    pub fn single_sine(md: usize, dim: usize, epsilon: f64) -> Self {
        let mut frequency = vec![0; dim];
        frequency[0] = 1;
        PerturbationSpec {
            a0: identity(md),
            epsilon,
            modes: vec![Mode { frequency, amplitude: identity(md), kind: ModeKind::Sin }],
            budget: None,
        }
    }

    /// Default budget `0.05 * c0(A0)`.
    pub fn default_budget(&self) -> Result<f64> {
        let md = (self.a0.len() as f64).sqrt() as usize;
        let (lo, _) = linalg::sym_eig_extremes(&self.a0, md);
        Ok(0.05 * lo)
    }

    /// Upper bound on `epsilon * sum_{|g| <= 3} sup |D^g B|` of the continuum
    /// profile, summed mode by mode.
    pub fn profile_c3_bound(&self) -> f64 {
        let mut total = 0.0;
        for mode in &self.modes {
            let md = (mode.amplitude.len() as f64).sqrt() as usize;
            let amp = linalg::sym_spectral_norm(&mode.amplitude, md);
            let dim = mode.frequency.len();
            let mut s = 0.0;
            for g in MultiIndex::up_to(dim, DEFAULT_ORDER_CAP) {
                let mut p = 1.0;
                for (&e, &k) in g.exps().iter().zip(&mode.frequency) {
                    p *= (std::f64::consts::TAU * k as f64).abs().powi(e as i32);
                }
                s += p;
            }
            total += amp * s;
        }
        self.epsilon.abs() * total
    }
}

pub fn identity(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    v
}

/// Per-site smallest and largest eigenvalue, minimised and maximised over sites.
fn extremes(data: &[f64], md: usize) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for block in data.chunks(md * md) {
        let (a, b) = site_extremes(block, md);
        lo = lo.min(a);
        hi = hi.max(b);
    }
    (lo, hi)
}

fn site_extremes(block: &[f64], md: usize) -> (f64, f64) {
    if md == 1 {
        return (block[0], block[0]);
    }
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(md, md, block));
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn spectral(block: &[f64], md: usize) -> f64 {
    let (lo, hi) = site_extremes(block, md);
    lo.abs().max(hi.abs())
}

/// `sup_x sup_{|b| <= 3} side^{|b|} ||nabla^b Q(x)||` for a per-site symmetric field `Q`.
pub fn e_norm_of(torus: &Torus, data: &[f64]) -> f64 {
    let md = torus.comps() * torus.dim();
    let block = md * md;
    debug_assert_eq!(data.len(), torus.sites() * block);
    let side = torus.side() as f64;
    let mut best = 0.0_f64;
    for beta in MultiIndex::up_to(torus.dim(), DEFAULT_ORDER_CAP) {
        let mut cur = data.to_vec();
        for (axis, &e) in beta.exps().iter().enumerate() {
            for _ in 0..e {
                let mut next = vec![0.0; cur.len()];
                for x in 0..torus.sites() {
                    let xp = torus.step(x, axis, true);
                    for k in 0..block {
                        next[x * block + k] = cur[xp * block + k] - cur[x * block + k];
                    }
                }
                cur = next;
            }
        }
        let scale = side.powi(beta.order() as i32);
        for b in cur.chunks(block) {
            best = best.max(scale * spectral(b, md));
        }
    }
    best
}

impl CoefficientField {
    /// Validates symmetry and ellipticity of raw per-site matrices.
    pub fn new(torus: Torus, data: Vec<f64>) -> Result<Self> {
        let md = torus.comps() * torus.dim();
        if data.len() != torus.sites() * md * md {
            return Err(FrdError::LengthMismatch { expected: torus.sites() * md * md, got: data.len() });
        }
        let residual = data
            .chunks(md * md)
            .map(|b| linalg::symmetry_residual(b, md))
            .fold(0.0, f64::max);
        if residual > SYMMETRY_TOL {
            return Err(FrdError::NotSymmetric { residual });
        }
        let (c0, c1) = extremes(&data, md);
        if c0 <= 0.0 {
            return Err(FrdError::NotElliptic { c0 });
        }
        Ok(CoefficientField {
            torus,
            data,
            c0,
            c1,
            reference: None,
            e_norm_perturbation: None,
            budget: None,
        })
    }

    pub fn constant(torus: Torus, a0: &[f64]) -> Result<Self> {
        let md = torus.comps() * torus.dim();
        if a0.len() != md * md {
            return Err(FrdError::LengthMismatch { expected: md * md, got: a0.len() });
        }
        let data = a0.iter().copied().cycle().take(torus.sites() * md * md).collect();
        let mut f = CoefficientField::new(torus, data)?;
        f.reference = Some(a0.to_vec());
        f.e_norm_perturbation = Some(0.0);
        Ok(f)
    }

    pub fn identity(torus: Torus) -> Self {
        let md = torus.comps() * torus.dim();
        CoefficientField::constant(torus, &identity(md)).expect("identity is elliptic")
    }

    /// Realizes `A0 + epsilon * B(x / side)` and checks ellipticity and the
    /// declared budget.
    pub fn make_perturbed(spec: &PerturbationSpec, torus: Torus) -> Result<Self> {
        let md = torus.comps() * torus.dim();
        let block = md * md;
        if spec.a0.len() != block {
            return Err(FrdError::LengthMismatch { expected: block, got: spec.a0.len() });
        }
        let (a0_lo, _) = linalg::sym_eig_extremes(&spec.a0, md);
        if a0_lo <= 0.0 {
            return Err(FrdError::NotElliptic { c0: a0_lo });
        }
        for mode in &spec.modes {
            if mode.frequency.len() != torus.dim() {
                return Err(FrdError::LengthMismatch { expected: torus.dim(), got: mode.frequency.len() });
            }
            if mode.amplitude.len() != block {
                return Err(FrdError::LengthMismatch { expected: block, got: mode.amplitude.len() });
            }
        }
        let side = torus.side() as f64;
        let mut data = Vec::with_capacity(torus.sites() * block);
        for x in 0..torus.sites() {
            let c = torus.coords(x);
            let theta: Vec<f64> = c[..torus.dim()].iter().map(|&v| v as f64 / side).collect();
            let mut a = spec.a0.clone();
            for mode in &spec.modes {
                let w = spec.epsilon * mode.value(&theta);
                for (ak, sk) in a.iter_mut().zip(&mode.amplitude) {
                    *ak += w * sk;
                }
            }
            data.extend(a);
        }
        let mut f = CoefficientField::new(torus, data)?;
        f.reference = Some(spec.a0.clone());
        let pert = f.compute_e_norm_perturbation().unwrap_or(0.0);
        f.e_norm_perturbation = Some(pert);
        if let Some(budget) = spec.budget {
            if pert > budget {
                return Err(FrdError::BudgetExceeded { norm: pert, budget });
            }
            f.budget = Some(budget);
        }
        Ok(f)
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }
    pub fn md(&self) -> usize {
        self.torus.comps() * self.torus.dim()
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn at(&self, site: usize) -> &[f64] {
        let b = self.md() * self.md();
        &self.data[site * b..(site + 1) * b]
    }
    pub fn c0(&self) -> f64 {
        self.c0
    }
    pub fn c1(&self) -> f64 {
        self.c1
    }
    pub fn reference(&self) -> Option<&[f64]> {
        self.reference.as_deref()
    }
    pub fn budget(&self) -> Option<f64> {
        self.budget
    }

    pub fn ellipticity_constants(&self) -> (f64, f64) {
        (self.c0, self.c1)
    }

    /// `||A||_E` of the field itself.
    pub fn e_norm(&self) -> f64 {
        e_norm_of(&self.torus, &self.data)
    }

    /// Cached `||A - A0||_E`, present when a reference `A0` is attached.
    pub fn e_norm_perturbation(&self) -> Option<f64> {
        self.e_norm_perturbation
    }

    /// Recomputes `||A - A0||_E` from the stored data.
    pub fn compute_e_norm_perturbation(&self) -> Option<f64> {
        let a0 = self.reference.as_ref()?;
        let diff: Vec<f64> = self
            .data
            .chunks(a0.len())
            .flat_map(|b| b.iter().zip(a0).map(|(x, y)| x - y))
            .collect();
        Some(e_norm_of(&self.torus, &diff))
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        if s <= 0.0 {
            return Err(FrdError::InvalidParameter(format!("scale {s} must be positive")));
        }
        let mut f = CoefficientField::new(self.torus, self.data.iter().map(|v| v * s).collect())?;
        f.reference = self.reference.as_ref().map(|r| r.iter().map(|v| v * s).collect());
        f.e_norm_perturbation = self.e_norm_perturbation.map(|e| e * s);
        Ok(f)
    }

    /// `A + h * dir`, keeping the reference of `A`. Fails if ellipticity is lost.
    pub fn shifted(&self, dir: &[f64], h: f64) -> Result<Self> {
        if dir.len() != self.data.len() {
            return Err(FrdError::LengthMismatch { expected: self.data.len(), got: dir.len() });
        }
        let data = self.data.iter().zip(dir).map(|(a, b)| a + h * b).collect();
        let mut f = CoefficientField::new(self.torus, data)?;
        f.reference = self.reference.clone();
        f.e_norm_perturbation = f.compute_e_norm_perturbation();
        Ok(f)
    }

    /// Attaches a reference `A0` (and optionally a budget, checked), as when reloading stored data.
    pub fn with_reference(mut self, a0: Vec<f64>, budget: Option<f64>) -> Result<Self> {
        if a0.len() != self.md() * self.md() {
            return Err(FrdError::LengthMismatch { expected: self.md() * self.md(), got: a0.len() });
        }
        self.reference = Some(a0);
        let pert = self.compute_e_norm_perturbation().unwrap_or(0.0);
        self.e_norm_perturbation = Some(pert);
        if let Some(b) = budget {
            if pert > b {
                return Err(FrdError::BudgetExceeded { norm: pert, budget: b });
            }
        }
        self.budget = budget;
        Ok(self)
    }

    /// Hex sha256 of the little-endian bytes of the data.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.data {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus2() -> Torus {
        Torus::new(2, 1, 3, 2).unwrap()
    }

    #[test]
    fn identity_constants() {
        let a = CoefficientField::identity(torus2());
        assert_eq!(a.ellipticity_constants(), (1.0, 1.0));
        assert_eq!(a.e_norm(), 1.0);
        assert_eq!(a.e_norm_perturbation(), Some(0.0));
    }

    #[test]
    fn diagonal_constants() {
        let a = CoefficientField::constant(torus2(), &[2.0, 0.0, 0.0, 0.5]).unwrap();
        assert_eq!(a.ellipticity_constants(), (0.5, 2.0));
        assert_eq!(a.e_norm(), 2.0);
    }

    #[test]
    fn rejects_bad_fields() {
        let t = torus2();
        assert!(matches!(
            CoefficientField::constant(t, &[1.0, 0.1, 0.0, 1.0]),
            Err(FrdError::NotSymmetric { .. })
        ));
        assert!(matches!(
            CoefficientField::constant(t, &[1.0, 0.0, 0.0, -1.0]),
            Err(FrdError::NotElliptic { .. })
        ));
        let mut spec = PerturbationSpec::single_sine(2, 2, 1.5);
        assert!(matches!(CoefficientField::make_perturbed(&spec, t), Err(FrdError::NotElliptic { .. })));
        spec.epsilon = 0.05;
        spec.budget = Some(1e-3);
        assert!(matches!(CoefficientField::make_perturbed(&spec, t), Err(FrdError::BudgetExceeded { .. })));
    }

    #[test]
    fn perturbed_constants() {
        let t = torus2();
        let a = CoefficientField::make_perturbed(&PerturbationSpec::single_sine(2, 2, 0.1), t).unwrap();
        let (c0, c1) = a.ellipticity_constants();
        assert!((0.9..=1.0).contains(&c0) && (1.0..=1.1).contains(&c1));
        let b = CoefficientField::make_perturbed(&PerturbationSpec::single_sine(2, 2, 0.05), t).unwrap();
        assert!(b.c0() >= 0.95);
        let z = CoefficientField::make_perturbed(&PerturbationSpec::single_sine(2, 2, 0.0), t).unwrap();
        assert_eq!(z.e_norm_perturbation(), Some(0.0));
        assert_eq!(z.data(), CoefficientField::identity(t).data());
    }

    #[test]
    fn e_norm_homogeneous_and_cached() {
        let t = torus2();
        let a = CoefficientField::make_perturbed(&PerturbationSpec::single_sine(2, 2, 0.05), t).unwrap();
        let b = CoefficientField::make_perturbed(&PerturbationSpec::single_sine(2, 2, 0.025), t).unwrap();
        let (ea, eb) = (a.e_norm_perturbation().unwrap(), b.e_norm_perturbation().unwrap());
        assert!((ea / eb - 2.0).abs() < 1e-9);
        assert!((a.compute_e_norm_perturbation().unwrap() - ea).abs() <= 1e-12 * ea);
        assert!(ea <= PerturbationSpec::single_sine(2, 2, 0.05).profile_c3_bound());
    }

    #[test]
    fn e_norm_single_sine_by_hand() {
        // B = sin(2 pi x1 / 9) I: forward differences of a sampled sine have
        // closed forms, so the supremum of side^k |nabla_1^k sin| is explicit.
        let t = torus2();
        let eps = 0.05;
        let a = CoefficientField::make_perturbed(&PerturbationSpec::single_sine(2, 2, eps), t).unwrap();
        let side = 9.0_f64;
        let w = std::f64::consts::TAU / side;
        let mut best = 0.0_f64;
        for k in 0..=3 {
            let amp = (2.0 * (w / 2.0).sin()).powi(k);
            // nabla^k sin(w x) = amp * sin(w x + k (w + pi) / 2)
            let sup = (0..9)
                .map(|x| (w * x as f64 + k as f64 * (w + std::f64::consts::PI) / 2.0).sin().abs())
                .fold(0.0, f64::max);
            best = best.max(side.powi(k) * amp * sup);
        }
        let got = a.e_norm_perturbation().unwrap();
        assert!((got - eps * best).abs() < 1e-12 * got, "{got} vs {}", eps * best);
    }

    #[test]
    fn scaling_scales_constants() {
        let t = torus2();
        let a = CoefficientField::make_perturbed(&PerturbationSpec::single_sine(2, 2, 0.1), t).unwrap();
        let b = a.scaled(3.0).unwrap();
        assert!((b.c0() - 3.0 * a.c0()).abs() < 1e-12);
        assert!((b.c1() - 3.0 * a.c1()).abs() < 1e-12);
    }

    #[test]
    fn hash_tracks_data() {
        let t = torus2();
        let a = CoefficientField::identity(t);
        let b = a.scaled(1.0 + 1e-15).unwrap();
        assert_eq!(a.hash(), CoefficientField::identity(t).hash());
        assert_eq!(a.hash().len(), 64);
        assert_ne!(a.hash(), b.hash());
    }
}
