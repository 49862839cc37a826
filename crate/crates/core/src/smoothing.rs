//! Local Dirichlet projections `Pi_Q`, their translate average `T` and `R = Id - T`.
//!
//! By default `Pi_Q` projects onto fields vanishing off `Q = anchor + [0, l)^d`.
//! Gradients of such fields live on `Q` and its backward shifts, so the
//! translate average satisfies `0 <= T <= 1 + d/l` in the energy form, which
//! is at most 2 and keeps every level of the decomposition positive. The
//! interior convention (unknowns on `anchor + [1, l)^d`) gives `T <= 1`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{FrdError, Result};
use crate::lattice::{subtract_mean, Cube, DofConvention, Field, Torus};
use crate::linalg;
use crate::solver::EllipticOperator;

/// Largest total number of cached factor entries before falling back to local CG.
const DENSE_CACHE_LIMIT: usize = 1 << 24;
/// Largest uncached local system that is still factored rather than iterated.
const DENSE_SINGLE_LIMIT: usize = 256;
const CUBE_GROUP: usize = 256;

/// Dirichlet problems on all translates of a cube of side `l < side`.
///
/// Local work happens on the box `[-1, l)^d` relative to the anchor, which
/// holds every site where a gradient of a cube-supported field can be nonzero.
#[derive(Clone, Debug)]
pub struct CubeSolver {
    op: EllipticOperator,
    l: usize,
    conv: DofConvention,
    /// Relative coordinates of the box, row-major.
    rel: Vec<Vec<i64>>,
    /// Local unknown number of each box site, `usize::MAX` off the unknowns.
    dof_of_box: Vec<usize>,
    dof_boxes: Vec<usize>,
    bstride: Vec<usize>,
    factors: Option<Vec<Cholesky<f64, Dyn>>>,
    local_tol: f64,
}

impl CubeSolver {
    pub fn new(op: &EllipticOperator, l: usize, conv: DofConvention, cache: bool) -> Result<Self> {
        let t = *op.torus();
        if l == 0 || l >= t.side() {
            return Err(FrdError::CubeSide { side: l, max: t.side() - 1 });
        }
        let d = t.dim();
        let w = l + 1;
        let nbox = w.pow(d as u32);
        let lo = conv.offset() as i64;
        let mut rel = Vec::with_capacity(nbox);
        let mut dof_of_box = vec![usize::MAX; nbox];
        let mut dof_boxes = Vec::new();
        for b in 0..nbox {
            let mut r = vec![0i64; d];
            let mut q = b;
            for j in (0..d).rev() {
                r[j] = (q % w) as i64 - 1;
                q /= w;
            }
            if r.iter().all(|&c| c >= lo) {
                dof_of_box[b] = dof_boxes.len();
                dof_boxes.push(b);
            }
            rel.push(r);
        }
        let bstride = (0..d).map(|j| w.pow((d - 1 - j) as u32)).collect();
        let mut s = CubeSolver {
            op: op.clone(),
            l,
            conv,
            rel,
            dof_of_box,
            dof_boxes,
            bstride,
            factors: None,
            local_tol: op.tol() / 10.0,
        };
        let k = s.local_len();
        if cache && k > 0 && t.sites().saturating_mul(k * k) <= DENSE_CACHE_LIMIT {
            let factors: Vec<_> = (0..t.sites())
                .into_par_iter()
                .map(|a| s.factor(a))
                .collect::<Result<_>>()?;
            s.factors = Some(factors);
        }
        Ok(s)
    }

    pub fn convention(&self) -> DofConvention {
        self.conv
    }

    pub fn side(&self) -> usize {
        self.l
    }

    pub fn is_dense(&self) -> bool {
        self.factors.is_some()
    }

    /// Number of local unknowns.
    pub fn local_len(&self) -> usize {
        self.dof_boxes.len() * self.op.torus().comps()
    }

    fn box_sites(&self, anchor: usize) -> Vec<usize> {
        let t = self.op.torus();
        self.rel.iter().map(|r| t.offset(anchor, r)).collect()
    }

    pub fn dof_sites(&self, anchor: usize) -> Vec<usize> {
        let t = self.op.torus();
        self.dof_boxes.iter().map(|&b| t.offset(anchor, &self.rel[b])).collect()
    }

    fn factor(&self, anchor: usize) -> Result<Cholesky<f64, Dyn>> {
        let t = *self.op.torus();
        let (m, d) = (t.comps(), t.dim());
        let md = m * d;
        let k = self.local_len();
        let sites = self.box_sites(anchor);
        let mut mat = DMatrix::<f64>::zeros(k, k);
        let mut nz: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * md);
        for (b, &site) in sites.iter().enumerate() {
            nz.clear();
            for j in 0..d {
                let up = if self.rel[b][j] + 1 < self.l as i64 {
                    self.dof_of_box[b + self.bstride[j]]
                } else {
                    usize::MAX
                };
                let here = self.dof_of_box[b];
                for i in 0..m {
                    if up != usize::MAX {
                        nz.push((i * d + j, up * m + i, 1.0));
                    }
                    if here != usize::MAX {
                        nz.push((i * d + j, here * m + i, -1.0));
                    }
                }
            }
            let a = self.op.coefficients().at(site);
            for &(r1, c1, s1) in &nz {
                for &(r2, c2, s2) in &nz {
                    mat[(c1, c2)] += s1 * s2 * a[r1 * md + r2];
                }
            }
        }
        Cholesky::new(mat).ok_or(FrdError::NotElliptic { c0: 0.0 })
    }

    /// Solves the local problem on the cube at `anchor`; `rhs` and the result
    /// are indexed by local degree of freedom.
    pub fn solve(&self, anchor: usize, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.iter().all(|v| *v == 0.0) {
            return Ok(vec![0.0; rhs.len()]);
        }
        if let Some(f) = &self.factors {
            return Ok(f[anchor].solve(&DVector::from_column_slice(rhs)).iter().copied().collect());
        }
        if self.local_len() <= DENSE_SINGLE_LIMIT {
            let f = self.factor(anchor)?;
            return Ok(f.solve(&DVector::from_column_slice(rhs)).iter().copied().collect());
        }
        self.solve_cg(anchor, rhs)
    }

    fn solve_cg(&self, anchor: usize, rhs: &[f64]) -> Result<Vec<f64>> {
        let t = *self.op.torus();
        let m = t.comps();
        let sites = self.box_sites(anchor);
        let k = rhs.len();
        let diag: Vec<f64> = self
            .dof_boxes
            .iter()
            .flat_map(|&b| (0..m).map(move |i| (b, i)))
            .map(|(b, i)| self.op.diagonal()[sites[b] * m + i])
            .collect();
        let rnorm = linalg::norm2(rhs);
        let mut x = vec![0.0; k];
        let mut r = rhs.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, b)| a / b).collect();
        let mut p = z.clone();
        let mut q = vec![0.0; k];
        let mut rz = linalg::dot(&r, &z);
        let mut it = 0;
        let max_iter = self.op.settings().max_iter;
        while linalg::norm2(&r) > self.local_tol * rnorm {
            if it >= max_iter {
                return Err(FrdError::NoConvergence { iterations: it, residual: linalg::norm2(&r) / rnorm });
            }
            self.local_apply(&sites, &p, &mut q);
            let alpha = rz / linalg::dot(&p, &q);
            for i in 0..k {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            for i in 0..k {
                z[i] = r[i] / diag[i];
            }
            let rz_new = linalg::dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..k {
                p[i] = z[i] + beta * p[i];
            }
            it += 1;
        }
        Ok(x)
    }

    /// Local operator on degree-of-freedom vectors, matrix-free.
    fn local_apply(&self, sites: &[usize], u: &[f64], out: &mut [f64]) {
        let t = *self.op.torus();
        let (m, d) = (t.comps(), t.dim());
        let md = m * d;
        let nbox = sites.len();
        let val = |b: usize, i: usize| -> f64 {
            let dof = self.dof_of_box[b];
            if dof == usize::MAX {
                0.0
            } else {
                u[dof * m + i]
            }
        };
        let mut flux = vec![0.0; nbox * md];
        let mut g = vec![0.0; md];
        for b in 0..nbox {
            for j in 0..d {
                let up = self.rel[b][j] + 1 < self.l as i64;
                for i in 0..m {
                    let hi = if up { val(b + self.bstride[j], i) } else { 0.0 };
                    g[i * d + j] = hi - val(b, i);
                }
            }
            let a = self.op.coefficients().at(sites[b]);
            for r in 0..md {
                flux[b * md + r] = a[r * md..(r + 1) * md].iter().zip(&g).map(|(x, y)| x * y).sum();
            }
        }
        for (n, &b) in self.dof_boxes.iter().enumerate() {
            for i in 0..m {
                let mut s = 0.0;
                for j in 0..d {
                    s += flux[(b - self.bstride[j]) * md + i * d + j] - flux[b * md + i * d + j];
                }
                out[n * m + i] = s;
            }
        }
    }

    /// `Pi_Q phi` for the cube at `anchor`, given `r = A phi`.
    fn project_from_residual(&self, anchor: usize, r: &[f64]) -> Result<(Vec<usize>, Vec<f64>)> {
        let m = self.op.torus().comps();
        let dofs = self.dof_sites(anchor);
        let rhs: Vec<f64> = dofs.iter().flat_map(|&s| (0..m).map(move |i| r[s * m + i])).collect();
        Ok((dofs, self.solve(anchor, &rhs)?))
    }

    /// `(1/l^d) sum_Q Pi_Q` applied to the field whose image under the operator is `r`.
    pub fn sweep(&self, r: &[f64]) -> Result<Vec<f64>> {
        let t = *self.op.torus();
        let m = t.comps();
        let mut out = vec![0.0; t.len()];
        let anchors: Vec<usize> = (0..t.sites()).collect();
        for group in anchors.chunks(CUBE_GROUP) {
            let sols: Vec<(Vec<usize>, Vec<f64>)> = group
                .par_iter()
                .map(|&a| self.project_from_residual(a, r))
                .collect::<Result<_>>()?;
            // fixed-order accumulation keeps the result independent of threads
            for (dofs, sol) in sols {
                for (n, &s) in dofs.iter().enumerate() {
                    for i in 0..m {
                        out[s * m + i] += sol[n * m + i];
                    }
                }
            }
        }
        let w = 1.0 / (self.l as f64).powi(t.dim() as i32);
        for v in out.iter_mut() {
            *v *= w;
        }
        Ok(out)
    }
}

/// `Pi_Q phi`: the energy projection of `phi` onto fields vanishing off `Q`.
/// For `Q` the whole torus this is removal of the mean.
pub fn project_cube(op: &EllipticOperator, cube: &Cube, phi: &Field) -> Result<Field> {
    project_cube_with(op, cube, DofConvention::default(), phi)
}

pub fn project_cube_with(op: &EllipticOperator, cube: &Cube, conv: DofConvention, phi: &Field) -> Result<Field> {
    let t = *op.torus();
    if phi.torus() != &t {
        return Err(FrdError::TorusMismatch);
    }
    if cube.is_whole(&t) {
        let r = op.apply(phi)?;
        let (u, _) = op.solve_slice(r.values(), op.tol() / 10.0)?;
        let mut f = Field::new(t, u)?;
        f.set_mean_zero_tag(true);
        return Ok(f);
    }
    let solver = CubeSolver::new(op, cube.side, conv, false)?;
    let r = op.apply(phi)?;
    let (dofs, sol) = if solver.local_len() <= 4 * DENSE_SINGLE_LIMIT {
        let m = t.comps();
        let dofs = solver.dof_sites(cube.anchor);
        let rv = r.values();
        let rhs: Vec<f64> = dofs.iter().flat_map(|&s| (0..m).map(move |i| rv[s * m + i])).collect();
        let f = solver.factor(cube.anchor)?;
        (dofs, f.solve(&DVector::from_column_slice(&rhs)).iter().copied().collect())
    } else {
        solver.project_from_residual(cube.anchor, r.values())?
    };
    let m = t.comps();
    let mut out = vec![0.0; t.len()];
    for (n, &s) in dofs.iter().enumerate() {
        for i in 0..m {
            out[s * m + i] = sol[n * m + i];
        }
    }
    Field::new(t, out)
}

/// `P_Q phi = phi - Pi_Q phi`, which is A-harmonic on the interior of `Q`.
pub fn complement_cube(op: &EllipticOperator, cube: &Cube, phi: &Field) -> Result<Field> {
    phi.sub(&project_cube(op, cube, phi)?)
}

/// The averaged projection `T` of a fixed cube side and `R = Id - T`.
#[derive(Clone, Debug)]
pub struct AveragingOperator {
    op: EllipticOperator,
    l: usize,
    cubes: Option<CubeSolver>,
}

impl AveragingOperator {
    pub fn new(op: &EllipticOperator, l: usize) -> Result<Self> {
        AveragingOperator::with_convention(op, l, DofConvention::default())
    }

    pub fn with_convention(op: &EllipticOperator, l: usize, conv: DofConvention) -> Result<Self> {
        let t = op.torus();
        if l == 0 || l > t.side() {
            return Err(FrdError::CubeSide { side: l, max: t.side() });
        }
        let cubes = if l == t.side() { None } else { Some(CubeSolver::new(op, l, conv, true)?) };
        Ok(AveragingOperator { op: op.clone(), l, cubes })
    }

    pub fn side(&self) -> usize {
        self.l
    }
    pub fn operator(&self) -> &EllipticOperator {
        &self.op
    }
    pub fn is_whole(&self) -> bool {
        self.cubes.is_none()
    }
    pub fn cube_solver(&self) -> Option<&CubeSolver> {
        self.cubes.as_ref()
    }

    fn torus(&self) -> Torus {
        *self.op.torus()
    }

    /// `(1/l^d) sum_Q Pi_Q phi` without the final mean projection.
    pub fn t_raw_slice(&self, phi: &[f64]) -> Result<Vec<f64>> {
        let mut r = vec![0.0; phi.len()];
        self.op.apply_slice(phi, &mut r);
        match &self.cubes {
            Some(c) => c.sweep(&r),
            None => Ok(self.op.solve_slice(&r, self.op.tol() / 10.0)?.0),
        }
    }

    pub fn t_slice(&self, phi: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.t_raw_slice(phi)?;
        subtract_mean(&mut out, self.torus().comps());
        Ok(out)
    }

    pub fn r_slice(&self, phi: &[f64]) -> Result<Vec<f64>> {
        let t = self.t_slice(phi)?;
        Ok(linalg::sub(phi, &t))
    }

    pub fn apply_t(&self, phi: &Field) -> Result<Field> {
        self.check(phi)?;
        let mut f = Field::new(self.torus(), self.t_slice(phi.values())?)?;
        f.set_mean_zero_tag(true);
        Ok(f)
    }

    /// The local average itself, which may carry a constant.
    pub fn apply_t_raw(&self, phi: &Field) -> Result<Field> {
        self.check(phi)?;
        Field::new(self.torus(), self.t_raw_slice(phi.values())?)
    }

    pub fn apply_r(&self, phi: &Field) -> Result<Field> {
        self.check(phi)?;
        let mut f = Field::new(self.torus(), self.r_slice(phi.values())?)?;
        f.set_mean_zero_tag(phi.is_tagged_mean_zero());
        Ok(f)
    }

    /// `R' phi = A R C phi` for mean-zero `phi`.
    pub fn apply_r_dual(&self, phi: &Field) -> Result<Field> {
        self.check(phi)?;
        if !phi.is_mean_zero() {
            return Err(FrdError::NotMeanZero { deviation: phi.mean_deviation() });
        }
        let (c, _) = self.op.solve_slice(phi.values(), self.op.tol())?;
        let r = self.r_slice(&c)?;
        let mut out = vec![0.0; r.len()];
        self.op.apply_slice(&r, &mut out);
        let mut f = Field::new(self.torus(), out)?;
        f.set_mean_zero_tag(true);
        Ok(f)
    }

    fn check(&self, phi: &Field) -> Result<()> {
        if phi.torus() != self.op.torus() {
            Err(FrdError::TorusMismatch)
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientField, PerturbationSpec};
    use crate::dense::{self, DenseOracle};
    use rand::{Rng, SeedableRng};

    fn rand_field(t: Torus, seed: u64) -> Field {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Field::new(t, (0..t.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn perturbed(t: Torus, eps: f64) -> EllipticOperator {
        let md = t.comps() * t.dim();
        let spec = PerturbationSpec::single_sine(md, t.dim(), eps);
        EllipticOperator::new(CoefficientField::make_perturbed(&spec, t).unwrap())
    }

    const CONVENTIONS: [DofConvention; 2] = [DofConvention::Closed, DofConvention::Interior];

    #[test]
    fn projection_is_supported_galerkin_and_idempotent() {
        let t = Torus::new(2, 2, 3, 2).unwrap();
        let op = perturbed(t, 0.3);
        let cube = Cube::new(&t, t.index(&[7, 2]), 4).unwrap();
        let phi = rand_field(t, 1);
        for conv in CONVENTIONS {
            let u = project_cube_with(&op, &cube, conv, &phi).unwrap();
            let dofs = cube.dof_sites(&t, conv);
            for x in 0..t.sites() {
                if !dofs.contains(&x) {
                    assert_eq!(u.at(x), &[0.0, 0.0]);
                }
            }
            let diff = phi.sub(&u).unwrap();
            for &s in &dofs {
                for i in 0..2 {
                    let psi = Field::delta(t, s, i);
                    assert!(op.dirichlet_form(&diff, &psi).unwrap().abs() < 1e-11);
                }
            }
            let uu = project_cube_with(&op, &cube, conv, &u).unwrap();
            assert!(uu.sub(&u).unwrap().max_abs() < 1e-12);
            let e_u = op.dirichlet_form(&u, &u).unwrap();
            assert!(e_u <= op.dirichlet_form(&phi, &phi).unwrap());
        }
    }

    #[test]
    fn cg_backend_matches_factorization() {
        let t = Torus::new(2, 1, 3, 2).unwrap();
        let op = perturbed(t, 0.3).with_tol(1e-13);
        for conv in CONVENTIONS {
            let dense = CubeSolver::new(&op, 5, conv, true).unwrap();
            assert!(dense.is_dense());
            let iter = CubeSolver { factors: None, ..dense.clone() };
            let r = rand_field(t, 5);
            let a = dense.project_from_residual(11, r.values()).unwrap().1;
            let rhs: Vec<f64> = dense.dof_sites(11).iter().map(|&s| r.values()[s]).collect();
            let c = iter.solve_cg(11, &rhs).unwrap();
            for (x, y) in a.iter().zip(&c) {
                assert!((x - y).abs() < 1e-10);
            }
            assert!(iter.solve(11, &vec![0.0; rhs.len()]).unwrap().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn harmonic_input_projects_to_zero() {
        let t = Torus::new(2, 1, 3, 2).unwrap();
        let op = perturbed(t, 0.2).with_tol(1e-13);
        // a dipole Green function with both poles outside Q is A-harmonic on Q
        let mut f = Field::delta(t, t.index(&[0, 0]), 0);
        f.values_mut()[t.index(&[1, 8])] = -1.0;
        let u = op.solve_green(&f).unwrap().0;
        let cube = Cube::new(&t, t.index(&[3, 3]), 4).unwrap();
        let p = project_cube(&op, &cube, &u).unwrap();
        assert!(p.max_abs() < 1e-10 * u.max_abs(), "{}", p.max_abs());
    }

    #[test]
    fn projection_matches_dense_assembly() {
        let t = Torus::new(2, 2, 3, 1).unwrap();
        let op = perturbed(t, 0.3).with_tol(1e-13);
        let phi = rand_field(t, 4);
        for conv in CONVENTIONS {
            let o = DenseOracle::new(&op).unwrap().with_convention(conv);
            for l in [1, 2, 3] {
                let cube = Cube::new(&t, 4, l).unwrap();
                let u = project_cube_with(&op, &cube, conv, &phi).unwrap();
                let expect = dense::apply(&o.projection(&cube), phi.values());
                assert!(linalg::max_abs(&linalg::sub(u.values(), &expect)) < 1e-10, "{conv:?} l={l}");
            }
        }
    }

    #[test]
    fn whole_torus_projection_removes_mean() {
        let t = Torus::new(2, 1, 5, 1).unwrap();
        let op = perturbed(t, 0.2).with_tol(1e-13);
        let phi = rand_field(t, 2);
        let cube = Cube::new(&t, 0, 5).unwrap();
        let u = project_cube(&op, &cube, &phi).unwrap();
        let o = DenseOracle::new(&op).unwrap();
        let expect = dense::apply(&o.projection(&cube), phi.values());
        assert!(linalg::max_abs(&linalg::sub(u.values(), &expect)) < 1e-10);
        assert!(u.sub(&phi.clone().project_mean_zero()).unwrap().max_abs() < 1e-10);
        let avg = AveragingOperator::new(&op, 5).unwrap();
        let r = avg.apply_r(&phi).unwrap();
        let mean = phi.mean()[0];
        assert!(r.values().iter().all(|v| (v - mean).abs() < 1e-10));
        let z = avg.apply_r(&phi.clone().project_mean_zero()).unwrap();
        assert!(z.max_abs() < 1e-10);
    }

    #[test]
    fn t_plus_r_is_identity() {
        let t = Torus::new(2, 1, 3, 2).unwrap();
        let op = perturbed(t, 0.3);
        let avg = AveragingOperator::new(&op, 3).unwrap();
        for s in 0..3 {
            let phi = rand_field(t, s).project_mean_zero();
            let tp = avg.apply_t(&phi).unwrap();
            let rp = avg.apply_r(&phi).unwrap();
            assert!(tp.add(&rp).unwrap().sub(&phi).unwrap().max_abs() <= 1e-14 * phi.max_abs());
            assert!(rp.is_mean_zero());
        }
        assert_eq!(avg.apply_t(&Field::zeros(t)).unwrap().max_abs(), 0.0);
    }

    /// `<T phi, phi>_+ / <phi, phi>_+` over random mean-zero fields.
    fn energy_ratios(avg: &AveragingOperator, t: Torus) -> (f64, f64) {
        let op = avg.operator();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in 0..6 {
            let phi = rand_field(t, 40 + s).project_mean_zero();
            let q = op.dirichlet_form(&avg.apply_t(&phi).unwrap(), &phi).unwrap();
            let e = op.dirichlet_form(&phi, &phi).unwrap();
            lo = lo.min(q / e);
            hi = hi.max(q / e);
        }
        (lo, hi)
    }

    #[test]
    fn interior_average_is_an_energy_contraction() {
        let t = Torus::new(2, 1, 3, 2).unwrap();
        let op = perturbed(t, 0.3);
        for l in [2, 3, 5] {
            let avg = AveragingOperator::with_convention(&op, l, DofConvention::Interior).unwrap();
            let (lo, hi) = energy_ratios(&avg, t);
            assert!(lo >= -1e-12 && hi <= 1.0 + 1e-12, "l={l}: [{lo}, {hi}]");
        }
    }

    #[test]
    fn closed_average_is_bounded_by_overlap_count() {
        let t = Torus::new(2, 1, 3, 2).unwrap();
        let op = perturbed(t, 0.3);
        for l in [1, 2, 3, 5] {
            let avg = AveragingOperator::new(&op, l).unwrap();
            let (lo, hi) = energy_ratios(&avg, t);
            let bound = (1.0 + 2.0 / l as f64).min(2.0);
            assert!(lo >= -1e-12 && hi <= bound + 1e-12, "l={l}: [{lo}, {hi}]");
        }
        // the highest checkerboard-like mode of the Laplacian exceeds one at l = 1
        let lap = EllipticOperator::new(CoefficientField::identity(t));
        let avg = AveragingOperator::new(&lap, 1).unwrap();
        let w = std::f64::consts::TAU * 4.0 / 9.0;
        let mode = Field::from_fn(t, |c, v| v[0] = (w * (c[0] + c[1]) as f64).cos());
        let q = lap.dirichlet_form(&avg.apply_t(&mode).unwrap(), &mode).unwrap();
        let e = lap.dirichlet_form(&mode, &mode).unwrap();
        assert!(q / e > 1.9 && q / e < 2.0, "{}", q / e);
    }

    #[test]
    fn t_is_local() {
        let t = Torus::new(2, 1, 3, 2).unwrap();
        let op = perturbed(t, 0.3);
        for conv in CONVENTIONS {
            for l in [1, 2, 3, 4] {
                let avg = AveragingOperator::with_convention(&op, l, conv).unwrap();
                let x0 = t.index(&[4, 4]);
                let raw = avg.apply_t_raw(&Field::delta(t, x0, 0)).unwrap();
                let reach = raw.support(0.0).iter().map(|&y| t.dist_inf(x0, y)).max().unwrap_or(0);
                assert!(reach <= l, "l={l}: {reach}");
            }
        }
    }

    #[test]
    fn constant_coefficient_modes_are_scaled() {
        let t = Torus::new(2, 1, 3, 2).unwrap();
        let op = EllipticOperator::new(CoefficientField::identity(t));
        let avg = AveragingOperator::new(&op, 3).unwrap();
        let w = std::f64::consts::TAU / 9.0;
        let mode = Field::from_fn(t, |c, v| v[0] = (w * (2.0 * c[0] as f64 + c[1] as f64)).cos());
        let out = avg.apply_t(&mode).unwrap();
        let s = out.dot(&mode) / mode.dot(&mode);
        assert!(s > 0.0);
        assert!(out.sub(&mode.scaled(s)).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn dual_identities() {
        let t = Torus::new(2, 1, 3, 2).unwrap();
        let op = perturbed(t, 0.3).with_tol(1e-13);
        let avg = AveragingOperator::new(&op, 3).unwrap();
        let phi = rand_field(t, 7).project_mean_zero();
        let psi = rand_field(t, 8).project_mean_zero();
        let lhs = avg.apply_r_dual(&phi).unwrap().dot(&psi);
        let rhs = phi.dot(&avg.apply_r(&psi).unwrap());
        assert!((lhs - rhs).abs() < 1e-9 * phi.norm() * psi.norm());
        let a = op.solve_green(&avg.apply_r_dual(&phi).unwrap()).unwrap().0;
        let b = avg.apply_r(&op.solve_green(&phi).unwrap().0).unwrap();
        assert!(a.sub(&b).unwrap().norm() < 1e-9 * b.norm());
        assert_eq!(avg.apply_r_dual(&Field::zeros(t)).unwrap().max_abs(), 0.0);
        // (R' phi, phi)_- = <R C phi, C phi>_+ > 0
        let c = op.solve_green(&phi).unwrap().0;
        let form = op.dirichlet_form(&avg.apply_r(&c).unwrap(), &c).unwrap();
        assert!(form > 0.0);
    }
}
