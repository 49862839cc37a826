//! The operator `A = nabla^* A(x) nabla`, its Dirichlet form and mean-zero Green solves.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::error::{FrdError, Result};
use crate::lattice::{subtract_mean, Field, Torus};
use crate::linalg;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 20_000;

const SITE_CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `||A u - f||_2 / ||f||_2`, recomputed from the returned iterate.
    pub residual: f64,
    pub tol: f64,
}

#[derive(Clone, Debug)]
pub struct EllipticOperator {
    coeffs: Arc<CoefficientField>,
    diag: Vec<f64>,
    settings: SolverSettings,
}

impl EllipticOperator {
    pub fn new(coeffs: CoefficientField) -> Self {
        EllipticOperator::with_settings(coeffs, SolverSettings::default())
    }

    pub fn with_settings(coeffs: CoefficientField, settings: SolverSettings) -> Self {
        let diag = jacobi_diagonal(&coeffs);
        EllipticOperator { coeffs: Arc::new(coeffs), diag, settings }
    }

    pub fn torus(&self) -> &Torus {
        self.coeffs.torus()
    }
    pub fn coefficients(&self) -> &CoefficientField {
        &self.coeffs
    }
    pub fn settings(&self) -> SolverSettings {
        self.settings
    }
    pub fn tol(&self) -> f64 {
        self.settings.tol
    }
    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn with_tol(&self, tol: f64) -> Self {
        EllipticOperator {
            coeffs: Arc::clone(&self.coeffs),
            diag: self.diag.clone(),
            settings: SolverSettings { tol, ..self.settings },
        }
    }

    pub fn apply(&self, phi: &Field) -> Result<Field> {
        self.check(phi)?;
        let mut out = vec![0.0; phi.values().len()];
        self.apply_slice(phi.values(), &mut out);
        let mut f = Field::new(*self.torus(), out)?;
        f.set_mean_zero_tag(true);
        Ok(f)
    }

    /// `out = nabla^*(A nabla phi)` on raw site-major values.
    pub fn apply_slice(&self, phi: &[f64], out: &mut [f64]) {
        let t = *self.torus();
        let (m, d) = (t.comps(), t.dim());
        let md = m * d;
        let mut flux = vec![0.0; t.sites() * md];
        let coeffs = &*self.coeffs;
        flux.par_chunks_mut(SITE_CHUNK * md).enumerate().for_each(|(c, chunk)| {
            let mut g = vec![0.0; md];
            for (k, fx) in chunk.chunks_mut(md).enumerate() {
                let x = c * SITE_CHUNK + k;
                for j in 0..d {
                    let xp = t.step(x, j, true);
                    for i in 0..m {
                        g[i * d + j] = phi[xp * m + i] - phi[x * m + i];
                    }
                }
                let a = coeffs.at(x);
                for (r, fr) in fx.iter_mut().enumerate() {
                    *fr = linalg_row_dot(&a[r * md..(r + 1) * md], &g);
                }
            }
        });
        out.par_chunks_mut(SITE_CHUNK * m).enumerate().for_each(|(c, chunk)| {
            for (k, ox) in chunk.chunks_mut(m).enumerate() {
                let x = c * SITE_CHUNK + k;
                for (i, o) in ox.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for j in 0..d {
                        let xm = t.step(x, j, false);
                        s += flux[xm * md + i * d + j] - flux[x * md + i * d + j];
                    }
                    *o = s;
                }
            }
        });
    }

    /// `sum_x <A(x) nabla phi(x), nabla psi(x)>`.
    pub fn dirichlet_form(&self, phi: &Field, psi: &Field) -> Result<f64> {
        self.check(phi)?;
        self.check(psi)?;
        let t = *self.torus();
        let (m, d) = (t.comps(), t.dim());
        let md = m * d;
        let mut gp = vec![0.0; md];
        let mut gq = vec![0.0; md];
        let (p, q) = (phi.values(), psi.values());
        let mut total = 0.0;
        for x in 0..t.sites() {
            for j in 0..d {
                let xp = t.step(x, j, true);
                for i in 0..m {
                    gp[i * d + j] = p[xp * m + i] - p[x * m + i];
                    gq[i * d + j] = q[xp * m + i] - q[x * m + i];
                }
            }
            let a = self.coeffs.at(x);
            for r in 0..md {
                total += gq[r] * linalg_row_dot(&a[r * md..(r + 1) * md], &gp);
            }
        }
        Ok(total)
    }

    /// `sum_x |nabla phi(x)|^2`.
    pub fn gradient_energy(&self, phi: &Field) -> f64 {
        let t = *phi.torus();
        let m = t.comps();
        let v = phi.values();
        let mut s = 0.0;
        for x in 0..t.sites() {
            for j in 0..t.dim() {
                let xp = t.step(x, j, true);
                for i in 0..m {
                    let g = v[xp * m + i] - v[x * m + i];
                    s += g * g;
                }
            }
        }
        s
    }

    /// Solves `A u = f` for mean-zero `f`, returning the mean-zero solution.
    pub fn solve_green(&self, f: &Field) -> Result<(Field, SolveReport)> {
        self.check(f)?;
        if !f.is_mean_zero() {
            return Err(FrdError::NotMeanZero { deviation: f.mean_deviation() });
        }
        let (u, rep) = self.solve_slice(f.values(), self.settings.tol)?;
        let mut out = Field::new(*self.torus(), u)?;
        out.set_mean_zero_tag(true);
        Ok((out, rep))
    }

    /// `C P0 f`: mean of `f` removed first, so any input is accepted.
    pub fn green_projected(&self, f: &[f64], tol: f64) -> Result<Vec<f64>> {
        let mut g = f.to_vec();
        subtract_mean(&mut g, self.torus().comps());
        Ok(self.solve_slice(&g, tol)?.0)
    }

    /// Jacobi-preconditioned conjugate gradients on the mean-zero subspace.
    ///
    /// `f` must already be mean-zero; the iterate, residual and preconditioned
    /// residual are re-projected each step.
    pub fn solve_slice(&self, f: &[f64], tol: f64) -> Result<(Vec<f64>, SolveReport)> {
        let m = self.torus().comps();
        let n = f.len();
        let fnorm = linalg::norm2(f);
        let mut x = vec![0.0; n];
        if fnorm == 0.0 {
            return Ok((x, SolveReport { iterations: 0, residual: 0.0, tol }));
        }
        let mut r = f.to_vec();
        subtract_mean(&mut r, m);
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(a, b)| a / b).collect();
        subtract_mean(&mut z, m);
        let mut p = z.clone();
        let mut q = vec![0.0; n];
        let mut rz = linalg::dot(&r, &z);
        let mut iterations = 0;
        let target = tol * fnorm;
        while linalg::norm2(&r) > target {
            if iterations >= self.settings.max_iter {
                break;
            }
            self.apply_slice(&p, &mut q);
            let pq = linalg::dot(&p, &q);
            if pq <= 0.0 {
                break;
            }
            let alpha = rz / pq;
            linalg::axpy(alpha, &p, &mut x);
            linalg::axpy(-alpha, &q, &mut r);
            iterations += 1;
            if iterations % 50 == 0 {
                // refresh the recursive residual against drift
                self.apply_slice(&x, &mut q);
                for ((ri, fi), qi) in r.iter_mut().zip(f).zip(&q) {
                    *ri = fi - qi;
                }
            }
            subtract_mean(&mut r, m);
            for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&self.diag) {
                *zi = ri / di;
            }
            subtract_mean(&mut z, m);
            let rz_new = linalg::dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        subtract_mean(&mut x, m);
        self.apply_slice(&x, &mut q);
        let residual = linalg::norm2(&linalg::sub(&q, f)) / fnorm;
        // The recursive residual may sit slightly below the true one; allow a
        // small factor before declaring failure.
        if residual > 10.0 * tol {
            return Err(FrdError::NoConvergence { iterations, residual });
        }
        Ok((x, SolveReport { iterations, residual, tol }))
    }

    /// Green kernel column `y -> K(x0, y)` with source `(delta_{x0} - L^{-Nd}) e_a`.
    pub fn green_column(&self, x0: usize) -> Result<KernelColumn> {
        self.green_column_tol(x0, self.settings.tol)
    }

    pub fn green_column_tol(&self, x0: usize, tol: f64) -> Result<KernelColumn> {
        let t = *self.torus();
        let mut cols = Vec::with_capacity(t.comps());
        for a in 0..t.comps() {
            let src = Field::green_source(t, x0, a);
            cols.push(self.solve_slice(src.values(), tol)?.0);
        }
        Ok(KernelColumn::from_columns(t, x0, &cols, "green", tol))
    }

    fn check(&self, phi: &Field) -> Result<()> {
        if phi.torus() != self.torus() {
            Err(FrdError::TorusMismatch)
        } else {
            Ok(())
        }
    }
}

#[inline]
fn linalg_row_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact diagonal `<A delta_{x,i}, delta_{x,i}>` of the operator.
fn jacobi_diagonal(coeffs: &CoefficientField) -> Vec<f64> {
    let t = *coeffs.torus();
    let (m, d) = (t.comps(), t.dim());
    let md = m * d;
    let mut diag = vec![0.0; t.len()];
    for x in 0..t.sites() {
        let a = coeffs.at(x);
        for i in 0..m {
            let mut s = 0.0;
            for j in 0..d {
                for jj in 0..d {
                    s += a[(i * d + j) * md + i * d + jj];
                }
                let xm = t.step(x, j, false);
                let b = coeffs.at(xm);
                s += b[(i * d + j) * md + i * d + j];
            }
            diag[x * m + i] = s;
        }
    }
    diag
}

/// Per-site `m x m` blocks `y -> K(x0, y)`; entry `(b, a)` of the block at `y`
/// is component `b` at `y` of the response to a source in direction `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelColumn {
    pub torus: Torus,
    pub source: usize,
    pub blocks: Vec<f64>,
    pub tag: String,
    pub tol: f64,
}

impl KernelColumn {
    pub fn from_columns(torus: Torus, source: usize, cols: &[Vec<f64>], tag: &str, tol: f64) -> Self {
        let m = torus.comps();
        let mut blocks = vec![0.0; torus.sites() * m * m];
        for (a, col) in cols.iter().enumerate() {
            for y in 0..torus.sites() {
                for b in 0..m {
                    blocks[y * m * m + b * m + a] = col[y * m + b];
                }
            }
        }
        KernelColumn { torus, source, blocks, tag: tag.to_string(), tol }
    }

    pub fn m(&self) -> usize {
        self.torus.comps()
    }

    pub fn block(&self, y: usize) -> &[f64] {
        let mm = self.m() * self.m();
        &self.blocks[y * mm..(y + 1) * mm]
    }

    /// Response field for source direction `a`.
    pub fn column(&self, a: usize) -> Field {
        let m = self.m();
        let vals = (0..self.torus.sites())
            .flat_map(|y| (0..m).map(move |b| (y, b)))
            .map(|(y, b)| self.blocks[y * m * m + b * m + a])
            .collect();
        Field::new(self.torus, vals).expect("length matches torus")
    }

    /// Kernel viewed as an `m*m`-component field, for applying differences in `y`.
    pub fn as_block_field(&self) -> Field {
        let mm = self.m() * self.m();
        let t = Torus::new(self.torus.dim(), mm, self.torus.base(), self.torus.depth())
            .expect("same geometry");
        Field::new(t, self.blocks.clone()).expect("length matches")
    }

    pub fn frobenius_at(&self, y: usize) -> f64 {
        linalg::norm2(self.block(y))
    }

    pub fn max_frobenius(&self) -> f64 {
        (0..self.torus.sites()).map(|y| self.frobenius_at(y)).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.blocks)
    }

    pub fn sub(&self, other: &KernelColumn) -> KernelColumn {
        KernelColumn {
            torus: self.torus,
            source: self.source,
            blocks: linalg::sub(&self.blocks, &other.blocks),
            tag: format!("{}-{}", self.tag, other.tag),
            tol: self.tol.max(other.tol),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::PerturbationSpec;
    use crate::lattice::{backward_diff, forward_diff};

    fn rand_field(t: Torus, seed: u64) -> Field {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Field::new(t, (0..t.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn perturbed(t: Torus) -> EllipticOperator {
        let md = t.comps() * t.dim();
        let mut spec = PerturbationSpec::single_sine(md, t.dim(), 0.2);
        spec.modes[0].amplitude[1] = 0.3;
        spec.modes[0].amplitude[md] = 0.3;
        EllipticOperator::new(CoefficientField::make_perturbed(&spec, t).unwrap())
    }

    #[test]
    fn laplacian_stencil() {
        let t = Torus::new(2, 1, 5, 1).unwrap();
        let op = EllipticOperator::new(CoefficientField::identity(t));
        let out = op.apply(&Field::delta(t, 0, 0)).unwrap();
        assert_eq!(out.at(0)[0], 4.0);
        for nb in [t.index(&[1, 0]), t.index(&[4, 0]), t.index(&[0, 1]), t.index(&[0, 4])] {
            assert_eq!(out.at(nb)[0], -1.0);
        }
        assert_eq!(out.values().iter().filter(|v| **v != 0.0).count(), 5);
        assert_eq!(op.apply(&Field::constant(t, &[3.0])).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn apply_matches_difference_composition() {
        let t = Torus::new(2, 2, 3, 1).unwrap();
        let op = perturbed(t);
        let phi = rand_field(t, 3);
        let (m, d) = (2, 2);
        let md = m * d;
        let grads: Vec<Field> = (0..d).map(|j| forward_diff(&phi, j).unwrap()).collect();
        let mut expect = Field::zeros(t);
        for j in 0..d {
            let flux = Field::from_fn(t, |c, v| {
                let x = t.index(&c.iter().map(|&u| u as i64).collect::<Vec<_>>());
                let a = op.coefficients().at(x);
                for i in 0..m {
                    v[i] = (0..md).map(|r| a[(i * d + j) * md + r] * grads[r % d].at(x)[r / d]).sum();
                }
            });
            expect = expect.add(&backward_diff(&flux, j).unwrap()).unwrap();
        }
        let got = op.apply(&phi).unwrap();
        assert!(got.sub(&expect).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn form_matches_apply_and_is_coercive() {
        let t = Torus::new(2, 2, 3, 1).unwrap();
        let op = perturbed(t);
        for s in 0..5 {
            let (p, q) = (rand_field(t, s), rand_field(t, 100 + s));
            let form = op.dirichlet_form(&p, &q).unwrap();
            let via = op.apply(&p).unwrap().dot(&q);
            assert!((form - via).abs() <= 1e-10 * p.norm() * q.norm());
            let sym = op.apply(&q).unwrap().dot(&p);
            assert!((via - sym).abs() <= 1e-10 * p.norm() * q.norm());
            let e = op.dirichlet_form(&p, &p).unwrap();
            assert!(e >= op.coefficients().c0() * op.gradient_energy(&p) * (1.0 - 1e-12));
        }
        let d1 = Torus::new(1, 1, 3, 1).unwrap();
        let op1 = EllipticOperator::new(CoefficientField::identity(d1));
        let phi = Field::new(d1, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(op1.dirichlet_form(&phi, &phi).unwrap(), 2.0);
    }

    #[test]
    fn diagonal_is_exact() {
        let t = Torus::new(2, 2, 3, 1).unwrap();
        let op = perturbed(t);
        for x in [0, 4, 8] {
            for i in 0..2 {
                let e = Field::delta(t, x, i);
                let exact = op.apply(&e).unwrap().at(x)[i];
                assert!((op.diagonal()[x * 2 + i] - exact).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn solve_round_trip() {
        let t = Torus::new(3, 1, 3, 2).unwrap();
        let op = perturbed(t);
        let phi = rand_field(t, 9);
        let (u, rep) = op.solve_green(&op.apply(&phi).unwrap()).unwrap();
        assert!(rep.residual <= 10.0 * rep.tol);
        let target = phi.clone().project_mean_zero();
        assert!(u.sub(&target).unwrap().norm() <= 1e-7 * target.norm());
        let zero = op.solve_green(&Field::zeros(t)).unwrap().0;
        assert_eq!(zero.max_abs(), 0.0);
        assert!(matches!(op.solve_green(&Field::delta(t, 0, 0)), Err(FrdError::NotMeanZero { .. })));
    }

    #[test]
    fn solve_reports_non_convergence() {
        let t = Torus::new(2, 1, 3, 2).unwrap();
        let op = EllipticOperator::with_settings(
            CoefficientField::identity(t),
            SolverSettings { tol: 1e-12, max_iter: 2 },
        );
        let f = Field::green_source(t, 0, 0);
        assert!(matches!(op.solve_green(&f), Err(FrdError::NoConvergence { .. })));
    }

    #[test]
    fn green_column_is_translation_invariant_and_symmetric() {
        let t = Torus::new(2, 1, 3, 2).unwrap();
        let op = EllipticOperator::new(CoefficientField::identity(t));
        let z = t.index(&[2, 5]);
        let c0 = op.green_column(0).unwrap();
        let cz = op.green_column(z).unwrap();
        for y in 0..t.sites() {
            let shifted = t.offset(y, &[2, 5]);
            assert!((c0.block(y)[0] - cz.block(shifted)[0]).abs() <= 2.0 * op.tol() * c0.max_abs().max(1.0));
        }
        let p = perturbed(Torus::new(2, 2, 3, 1).unwrap());
        let (x, y) = (1, 5);
        let kx = p.green_column(x).unwrap();
        let ky = p.green_column(y).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert!((kx.block(y)[b * 2 + a] - ky.block(x)[a * 2 + b]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn green_column_decays_along_ray() {
        let t = Torus::new(3, 1, 3, 2).unwrap();
        let op = EllipticOperator::new(CoefficientField::identity(t));
        let col = op.green_column(0).unwrap();
        let ray: Vec<f64> = (0..=4).map(|r| col.block(t.index(&[r, 0, 0]))[0]).collect();
        assert!(ray.windows(2).all(|w| w[1] < w[0]), "{ray:?}");
    }
}
