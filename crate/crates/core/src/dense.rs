//! Dense assemblies of the operators on small tori.
//!
//! Everything here is built from explicit matrices and shares no code with
//! the matrix-free paths, so the two can be compared against each other.

use nalgebra::{DMatrix, DVector};

use crate::error::{FrdError, Result};
use crate::lattice::{Cube, DofConvention, Torus};
use crate::solver::EllipticOperator;

pub const MAX_DENSE_SITES: usize = 4096;

#[derive(Clone, Debug)]
pub struct DenseOracle {
    torus: Torus,
    a: DMatrix<f64>,
    green: DMatrix<f64>,
    conv: DofConvention,
}

impl DenseOracle {
    pub fn new(op: &EllipticOperator) -> Result<Self> {
        let t = *op.torus();
        if t.sites() > MAX_DENSE_SITES {
            return Err(FrdError::SizeLimit { sites: t.sites(), limit: MAX_DENSE_SITES });
        }
        let (m, d) = (t.comps(), t.dim());
        let n = t.len();
        let md = m * d;
        let mut a = DMatrix::<f64>::zeros(n, n);
        // A = sum_x G_x^T A(x) G_x with G_x the gradient at x; each row of G_x
        // has the two entries +1 at x + e_j and -1 at x.
        let mut nz: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * md);
        for x in 0..t.sites() {
            let ax = op.coefficients().at(x);
            nz.clear();
            for i in 0..m {
                for j in 0..d {
                    let xp = t.step(x, j, true);
                    nz.push((i * d + j, xp * m + i, 1.0));
                    nz.push((i * d + j, x * m + i, -1.0));
                }
            }
            for &(r1, c1, s1) in &nz {
                for &(r2, c2, s2) in &nz {
                    a[(c1, c2)] += s1 * s2 * ax[r1 * md + r2];
                }
            }
        }
        let p = constants_projector(&t);
        let shifted = &a + &p;
        let inv = shifted
            .clone()
            .cholesky()
            .ok_or(FrdError::NotElliptic { c0: 0.0 })?
            .inverse();
        let green = inv - p;
        Ok(DenseOracle { torus: t, a, green, conv: DofConvention::default() })
    }

    pub fn with_convention(mut self, conv: DofConvention) -> Self {
        self.conv = conv;
        self
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }
    pub fn operator(&self) -> &DMatrix<f64> {
        &self.a
    }
    /// Pseudo-inverse of the operator on mean-zero fields.
    pub fn green(&self) -> &DMatrix<f64> {
        &self.green
    }

    pub fn mean_zero_projector(&self) -> DMatrix<f64> {
        DMatrix::identity(self.torus.len(), self.torus.len()) - constants_projector(&self.torus)
    }

    /// `Pi_Q = E A_DD^{-1} A_{D,:}` on the Dirichlet degrees of freedom `D`.
    pub fn projection(&self, cube: &Cube) -> DMatrix<f64> {
        if cube.is_whole(&self.torus) {
            return self.mean_zero_projector();
        }
        let n = self.torus.len();
        let mut out = DMatrix::<f64>::zeros(n, n);
        self.add_projection(cube, &mut out);
        out
    }

    fn add_projection(&self, cube: &Cube, out: &mut DMatrix<f64>) {
        let m = self.torus.comps();
        let dofs: Vec<usize> = cube
            .dof_sites(&self.torus, self.conv)
            .into_iter()
            .flat_map(|s| (0..m).map(move |i| s * m + i))
            .collect();
        if dofs.is_empty() {
            return;
        }
        let n = self.torus.len();
        let k = dofs.len();
        let mut add = DMatrix::<f64>::zeros(k, k);
        let mut rows = DMatrix::<f64>::zeros(k, n);
        for (r, &i) in dofs.iter().enumerate() {
            for (c, &j) in dofs.iter().enumerate() {
                add[(r, c)] = self.a[(i, j)];
            }
            rows.set_row(r, &self.a.row(i));
        }
        let sol = add.cholesky().expect("local block is positive definite").solve(&rows);
        for (r, &i) in dofs.iter().enumerate() {
            let mut row = out.row_mut(i);
            row += sol.row(r);
        }
    }

    /// `P0 (1/l^d) sum_Q Pi_Q` over all anchor translates of side `l`.
    pub fn averaging(&self, l: usize) -> Result<DMatrix<f64>> {
        let t = self.torus;
        if l == 0 || l > t.side() {
            return Err(FrdError::CubeSide { side: l, max: t.side() });
        }
        if l == t.side() {
            return Ok(self.mean_zero_projector());
        }
        let n = t.len();
        let mut sum = DMatrix::<f64>::zeros(n, n);
        for anchor in 0..t.sites() {
            self.add_projection(&Cube::new(&t, anchor, l)?, &mut sum);
        }
        sum /= (l as f64).powi(t.dim() as i32);
        Ok(self.mean_zero_projector() * sum)
    }

    pub fn remainder(&self, l: usize) -> Result<DMatrix<f64>> {
        let n = self.torus.len();
        Ok(DMatrix::identity(n, n) - self.averaging(l)?)
    }

    /// `D_0 = C` and `D_j = R_1 .. R_j R_j .. R_1 C`.
    pub fn chain(&self, sides: &[usize]) -> Result<Vec<DMatrix<f64>>> {
        let rs: Vec<DMatrix<f64>> = sides.iter().map(|&l| self.remainder(l)).collect::<Result<_>>()?;
        let n = self.torus.len();
        let mut out = vec![self.green.clone()];
        // left = R_1..R_j, right = R_j..R_1
        let mut left = DMatrix::<f64>::identity(n, n);
        let mut right = DMatrix::<f64>::identity(n, n);
        for r in &rs {
            left = &left * r;
            right = r * &right;
            out.push(&left * &right * &self.green);
        }
        Ok(out)
    }

    /// Level operators `C_k = D_{k-1} - D_k` and `C_{N+1} = D_N`.
    pub fn levels(&self, sides: &[usize]) -> Result<Vec<DMatrix<f64>>> {
        let ds = self.chain(sides)?;
        let mut out: Vec<DMatrix<f64>> = ds.windows(2).map(|w| &w[0] - &w[1]).collect();
        out.push(ds.last().expect("nonempty").clone());
        Ok(out)
    }
}

pub fn constants_projector(t: &Torus) -> DMatrix<f64> {
    let m = t.comps();
    let n = t.len();
    let w = 1.0 / t.sites() as f64;
    DMatrix::from_fn(n, n, |i, j| if i % m == j % m { w } else { 0.0 })
}

pub fn apply(mat: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (mat * DVector::from_column_slice(v)).iter().copied().collect()
}

/// Extreme eigenvalues of the symmetric part of `mat`.
pub fn sym_extremes(mat: &DMatrix<f64>) -> (f64, f64) {
    let s = (mat + mat.transpose()) * 0.5;
    let eig = s.symmetric_eigen();
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientField;

    #[test]
    fn green_inverts_on_mean_zero() {
        let t = Torus::new(2, 1, 3, 1).unwrap();
        let o = DenseOracle::new(&EllipticOperator::new(CoefficientField::identity(t))).unwrap();
        let prod = o.operator() * o.green();
        assert!((prod - o.mean_zero_projector()).abs().max() < 1e-12);
    }

    #[test]
    fn one_dimensional_pseudo_inverse() {
        let t = Torus::new(1, 1, 3, 1).unwrap();
        let o = DenseOracle::new(&EllipticOperator::new(CoefficientField::identity(t))).unwrap();
        // Laplacian on Z/3 has eigenvalue 3 on the mean-zero plane.
        let expect = o.mean_zero_projector() / 3.0;
        assert!((o.green() - expect).abs().max() < 1e-14);
    }

    #[test]
    fn whole_torus_projection_is_mean_removal() {
        let t = Torus::new(2, 1, 5, 1).unwrap();
        let o = DenseOracle::new(&EllipticOperator::new(CoefficientField::identity(t))).unwrap();
        let r = o.remainder(5).unwrap();
        assert!((r - constants_projector(&t)).abs().max() < 1e-14);
    }

    #[test]
    fn size_limit() {
        let t = Torus::new(3, 1, 3, 3).unwrap();
        assert!(matches!(
            DenseOracle::new(&EllipticOperator::new(CoefficientField::identity(t))),
            Err(FrdError::SizeLimit { .. })
        ));
    }
}
