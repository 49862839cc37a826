//! The decomposition `C = C_1 + ... + C_{N+1}`.
//!
//! With `D_0 = C` and `D_j = R_1..R_j R_j..R_1 C`, the levels are
//! `C_k = D_{k-1} - D_k` for `k <= N` and `C_{N+1} = D_N`. Dual operators
//! never appear: `C R' = R C` turns every sandwich into `R`-applications
//! after a single Green solve.
//!
//! Kernel columns use a second, local route. Writing a state as
//! `c * C P0 f + h`, one application of `R` keeps `c` and replaces `h` by
//! `h - S(c f + A h)`, where `S` is the raw translate average of local
//! solves. Since `S(A C P0 f) = S(P0 f)` differs from `S(f)` only through the
//! mean of `f`, this agrees with the first route up to constants on
//! mean-zero inputs. For `f = delta` the levels `k <= N` reduce to
//! `h_{k-1} - h_k`, which needs no global solve and has exactly finite support.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense;
use crate::error::{FrdError, Result};
use crate::lattice::{grad_multi, subtract_mean, DofConvention, Field, MultiIndex, Torus};
use crate::linalg;
use crate::report::CheckRecord;
use crate::smoothing::AveragingOperator;
use crate::solver::{EllipticOperator, KernelColumn};

/// Far-field variation allowed per unit of solver tolerance and level count.
pub const RANGE_SLACK_FACTOR: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionPlan {
    /// Cube sides `l_1 < ... < l_N`.
    pub sides: Vec<usize>,
    /// Claimed range radii, one per side.
    pub radii: Vec<f64>,
    pub tol: f64,
    #[serde(default)]
    pub convention: DofConvention,
}

impl DecompositionPlan {
    /// `l_k = L^{k-1}` capped at the torus side, radii `L^k / 2`.
    pub fn default_for(t: &Torus) -> Self {
        let (base, n) = (t.base(), t.depth());
        let sides = (0..n).map(|k| base.pow(k as u32).min(t.side())).collect();
        let radii = (1..=n).map(|k| 0.5 * (base as f64).powi(k as i32)).collect();
        DecompositionPlan { sides, radii, tol: crate::solver::DEFAULT_TOL, convention: DofConvention::Closed }
    }

    /// `l_k = L^k`, so the last cube is the whole torus.
    pub fn powers(t: &Torus) -> Self {
        let mut p = DecompositionPlan::default_for(t);
        p.sides = (1..=t.depth()).map(|k| t.base().pow(k as u32).min(t.side())).collect();
        p
    }

    pub fn with_sides(t: &Torus, sides: Vec<usize>) -> Self {
        let mut p = DecompositionPlan::default_for(t);
        p.radii = (1..=sides.len()).map(|k| 0.5 * (t.base() as f64).powi(k as i32)).collect();
        p.sides = sides;
        p
    }

    pub fn validate(&self, t: &Torus) -> Result<()> {
        if self.sides.is_empty() {
            return Err(FrdError::InvalidPlan("no cube sides".into()));
        }
        if self.sides.len() != self.radii.len() {
            return Err(FrdError::InvalidPlan(format!(
                "{} sides but {} radii",
                self.sides.len(),
                self.radii.len()
            )));
        }
        if self.sides[0] == 0 || self.sides.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FrdError::InvalidPlan(format!("sides {:?} must be positive and strictly increasing", self.sides)));
        }
        if *self.sides.last().expect("nonempty") > t.side() {
            return Err(FrdError::InvalidPlan(format!("largest side exceeds torus side {}", t.side())));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(FrdError::InvalidPlan(format!("tolerance {} outside (0, 1)", self.tol)));
        }
        Ok(())
    }

    /// Number of levels, `N + 1`.
    pub fn levels(&self) -> usize {
        self.sides.len() + 1
    }

    /// Sup-distance beyond which the local kernel of level `k <= N` vanishes.
    pub fn support_radius(&self, k: usize) -> usize {
        let reach: usize = self.sides[..k]
            .iter()
            .map(|&l| match self.convention {
                DofConvention::Closed => l,
                DofConvention::Interior => l.saturating_sub(1),
            })
            .sum();
        (2 * reach).saturating_sub(1)
    }
}

/// A local-route state `c * C P0 f + h`.
#[derive(Clone, Debug)]
struct State {
    c: f64,
    h: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    op: EllipticOperator,
    plan: DecompositionPlan,
    avgs: Vec<AveragingOperator>,
    sources: Vec<usize>,
    kernels: Vec<Vec<KernelColumn>>,
}

impl Decomposition {
    /// Operator closures only, no kernels.
    pub fn new(op: &EllipticOperator, plan: DecompositionPlan) -> Result<Self> {
        plan.validate(op.torus())?;
        let op = op.with_tol(plan.tol);
        let avgs = plan
            .sides
            .iter()
            .map(|&l| AveragingOperator::with_convention(&op, l, plan.convention))
            .collect::<Result<_>>()?;
        Ok(Decomposition { op, plan, avgs, sources: Vec::new(), kernels: Vec::new() })
    }

    /// Closures plus kernel columns of every level for each source.
    pub fn build(op: &EllipticOperator, plan: DecompositionPlan, sources: &[usize]) -> Result<Self> {
        let mut dec = Decomposition::new(op, plan)?;
        for &s in sources {
            if s >= op.torus().sites() {
                return Err(FrdError::InvalidParameter(format!("source {s} is not a site")));
            }
        }
        let kernels = sources
            .par_iter()
            .map(|&s| dec.level_columns(s))
            .collect::<Result<Vec<_>>>()?;
        dec.sources = sources.to_vec();
        dec.kernels = kernels;
        Ok(dec)
    }

    /// Reassembles a decomposition from stored kernels.
    pub fn from_parts(
        op: &EllipticOperator,
        plan: DecompositionPlan,
        sources: Vec<usize>,
        kernels: Vec<Vec<KernelColumn>>,
    ) -> Result<Self> {
        let mut dec = Decomposition::new(op, plan)?;
        if kernels.len() != sources.len() || kernels.iter().any(|k| k.len() != dec.levels()) {
            return Err(FrdError::Integrity("kernel tables do not match sources and levels".into()));
        }
        dec.sources = sources;
        dec.kernels = kernels;
        Ok(dec)
    }

    pub fn operator(&self) -> &EllipticOperator {
        &self.op
    }
    pub fn plan(&self) -> &DecompositionPlan {
        &self.plan
    }
    pub fn torus(&self) -> &Torus {
        self.op.torus()
    }
    pub fn levels(&self) -> usize {
        self.plan.levels()
    }
    pub fn sources(&self) -> &[usize] {
        &self.sources
    }
    pub fn averaging(&self, j: usize) -> &AveragingOperator {
        &self.avgs[j - 1]
    }

    /// Stored kernel of level `k` (1-based) for the `i`-th source.
    pub fn kernel(&self, i: usize, k: usize) -> &KernelColumn {
        &self.kernels[i][k - 1]
    }

    pub fn kernels(&self) -> &[Vec<KernelColumn>] {
        &self.kernels
    }

    fn check_level(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.levels() {
            Err(FrdError::LevelOutOfRange { k, max: self.levels() })
        } else {
            Ok(())
        }
    }

    /// `D_0 phi, ..., D_N phi` for mean-zero `phi`.
    pub fn chain(&self, phi: &Field) -> Result<Vec<Vec<f64>>> {
        if phi.torus() != self.torus() {
            return Err(FrdError::TorusMismatch);
        }
        if !phi.is_mean_zero() {
            return Err(FrdError::NotMeanZero { deviation: phi.mean_deviation() });
        }
        let (c, _) = self.op.solve_slice(phi.values(), self.plan.tol)?;
        self.chain_from_green(c)
    }

    /// Chain starting from an already computed `C phi`.
    pub fn chain_from_green(&self, c: Vec<f64>) -> Result<Vec<Vec<f64>>> {
        let n = self.avgs.len();
        let mut out = Vec::with_capacity(n + 1);
        let mut inner = c;
        out.push(inner.clone());
        for j in 0..n {
            inner = self.avgs[j].r_slice(&inner)?;
            let mut v = inner.clone();
            for i in (0..=j).rev() {
                v = self.avgs[i].r_slice(&v)?;
            }
            out.push(v);
        }
        Ok(out)
    }

    /// `C_k phi` for every level.
    pub fn apply_all_levels(&self, phi: &Field) -> Result<Vec<Field>> {
        let ds = self.chain(phi)?;
        levels_from_chain(*self.torus(), &ds)
    }

    /// `C_k phi`, computed from a fresh chain.
    pub fn apply_level(&self, k: usize, phi: &Field) -> Result<Field> {
        self.check_level(k)?;
        let ds = self.chain(phi)?;
        let v = if k <= self.plan.sides.len() { linalg::sub(&ds[k - 1], &ds[k]) } else { ds[k - 1].clone() };
        let mut f = Field::new(*self.torus(), v)?;
        f.set_mean_zero_tag(true);
        Ok(f)
    }

    fn r_local(&self, j: usize, f: &[f64], s: &State) -> Result<State> {
        let avg = &self.avgs[j];
        let m = self.torus().comps();
        match avg.cube_solver() {
            None => {
                let mut h = s.h.clone();
                let mut mean = s.h.clone();
                subtract_mean(&mut mean, m);
                for (hi, mi) in h.iter_mut().zip(&mean) {
                    *hi -= mi;
                }
                Ok(State { c: 0.0, h })
            }
            Some(cubes) => {
                let mut r = vec![0.0; f.len()];
                self.op.apply_slice(&s.h, &mut r);
                if s.c != 0.0 {
                    linalg::axpy(s.c, f, &mut r);
                }
                let sw = cubes.sweep(&r)?;
                Ok(State { c: s.c, h: linalg::sub(&s.h, &sw) })
            }
        }
    }

    /// Local-route levels for an arbitrary source field `f`.
    pub fn local_levels(&self, f: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = self.avgs.len();
        let mut states = Vec::with_capacity(n + 1);
        let mut inner = State { c: 1.0, h: vec![0.0; f.len()] };
        states.push(inner.clone());
        for j in 0..n {
            inner = self.r_local(j, f, &inner)?;
            let mut v = inner.clone();
            for i in (0..=j).rev() {
                v = self.r_local(i, f, &v)?;
            }
            states.push(v);
        }
        let mut green: Option<Vec<f64>> = None;
        let mut out = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let (c, h) = if k < n {
                (states[k].c - states[k + 1].c, linalg::sub(&states[k].h, &states[k + 1].h))
            } else {
                (states[n].c, states[n].h.clone())
            };
            let mut v = h;
            if c != 0.0 {
                if green.is_none() {
                    green = Some(self.op.green_projected(f, self.plan.tol)?);
                }
                linalg::axpy(c, green.as_ref().expect("computed"), &mut v);
            }
            out.push(v);
        }
        Ok(out)
    }

    /// Kernel columns `y -> K_k(x0, y)` of every level, local route.
    pub fn level_columns(&self, x0: usize) -> Result<Vec<KernelColumn>> {
        let t = *self.torus();
        let m = t.comps();
        let per_comp: Vec<Vec<Vec<f64>>> = (0..m)
            .map(|a| self.local_levels(Field::delta(t, x0, a).values()))
            .collect::<Result<_>>()?;
        Ok((0..self.levels())
            .map(|k| {
                let cols: Vec<Vec<f64>> = per_comp.iter().map(|lv| lv[k].clone()).collect();
                KernelColumn::from_columns(t, x0, &cols, &format!("level-{}", k + 1), self.plan.tol)
            })
            .collect())
    }

    pub fn level_kernel_column(&self, k: usize, x0: usize) -> Result<KernelColumn> {
        self.check_level(k)?;
        Ok(self.level_columns(x0)?.swap_remove(k - 1))
    }

    /// Kernel columns from the Green-source route, `C_k (delta_{x0} - L^{-Nd}) e_a`.
    pub fn projected_level_columns(&self, x0: usize) -> Result<Vec<KernelColumn>> {
        let t = *self.torus();
        let per_comp: Vec<Vec<Field>> = (0..t.comps())
            .map(|a| self.apply_all_levels(&Field::green_source(t, x0, a)))
            .collect::<Result<_>>()?;
        Ok((0..self.levels())
            .map(|k| {
                let cols: Vec<Vec<f64>> = per_comp.iter().map(|lv| lv[k].values().to_vec()).collect();
                KernelColumn::from_columns(t, x0, &cols, &format!("level-{}-projected", k + 1), self.plan.tol)
            })
            .collect())
    }

    /// Far region of level `k`: sites at sup-distance at least the claimed radius from all `poles`.
    pub fn far_region(&self, k: usize, poles: &[usize]) -> Vec<usize> {
        let t = self.torus();
        if k > self.plan.radii.len() {
            return Vec::new();
        }
        let r = self.plan.radii[k - 1];
        (0..t.sites())
            .filter(|&y| poles.iter().all(|&p| t.dist_inf(p, y) as f64 >= r))
            .collect()
    }

    fn range_radius(&self, k: usize) -> f64 {
        self.plan.radii.get(k - 1).copied().unwrap_or(f64::INFINITY)
    }

    /// Far-field variation of a level kernel column against `rel * max |K|`.
    pub fn check_range(&self, k: usize, col: &KernelColumn, rel: f64) -> CheckRecord {
        let far = self.far_region(k, &[col.source]);
        let params = format!("k={} x0={} r={}", k, col.source, self.range_radius(k));
        let scale = col.max_abs();
        let (sd, c) = far_field_spread(col, &far);
        let rhs = rel * scale;
        if k == self.levels() {
            return CheckRecord::info("range", params, sd, rhs)
                .with_note(format!("top level, not claimed; C={c:e}"));
        }
        if far.is_empty() {
            return CheckRecord::info("range", params, 0.0, rhs).with_note("far region empty");
        }
        CheckRecord::bound("range", params, sd, rhs).with_note(format!("C={c:e} far_sites={}", far.len()))
    }

    /// Default range slack `100 N tol`, relative to the kernel maximum.
    pub fn default_range_rel(&self) -> f64 {
        RANGE_SLACK_FACTOR * self.plan.sides.len() as f64 * self.plan.tol
    }

    /// Range of the Green-source route on the dipole `delta_{x0} - delta_{x0 + e_1}`,
    /// where no gauge choice enters.
    pub fn check_range_dipole(&self, k: usize, x0: usize, rel: f64) -> Result<Vec<CheckRecord>> {
        self.check_level(k)?;
        let t = *self.torus();
        let x1 = t.step(x0, 0, true);
        let far = self.far_region(k, &[x0, x1]);
        let mut out = Vec::new();
        for a in 0..t.comps() {
            let mut f = Field::delta(t, x0, a);
            f.values_mut()[x1 * t.comps() + a] = -1.0;
            let lv = self.apply_level(k, &f)?;
            let col = KernelColumn::from_columns(t, x0, &[lv.values().to_vec()], "dipole", self.plan.tol);
            let (sd, _) = far_field_spread(&col, &far);
            let params = format!("k={k} x0={x0} a={a}");
            let rhs = rel * col.max_abs();
            out.push(if k == self.levels() {
                CheckRecord::info("range_dipole", params, sd, rhs).with_note("top level, not claimed")
            } else if far.is_empty() {
                CheckRecord::info("range_dipole", params, 0.0, rhs).with_note("far region empty")
            } else {
                CheckRecord::bound("range_dipole", params, sd, rhs)
            });
        }
        Ok(out)
    }

    /// `|sum_k C_k phi - C phi| / |C phi|` over probes, with an independent Green solve.
    pub fn check_reconstruction(&self, probes: &[Field], bound: f64) -> Result<CheckRecord> {
        let mut worst = 0.0_f64;
        for phi in probes {
            let mut sum = vec![0.0; phi.values().len()];
            for k in 1..=self.levels() {
                let lv = self.apply_level(k, phi)?;
                for (s, v) in sum.iter_mut().zip(lv.values()) {
                    *s += v;
                }
            }
            let (c, _) = self.op.solve_green(phi)?;
            let err = linalg::norm2(&linalg::sub(&sum, c.values())) / c.norm().max(f64::MIN_POSITIVE);
            worst = worst.max(err);
        }
        Ok(CheckRecord::bound("reconstruction", format!("probes={}", probes.len()), worst, bound))
    }

    /// Smallest `<C_k phi, phi> / |phi|^2` per level over the probes.
    pub fn min_rayleigh(&self, probes: &[Field]) -> Result<Vec<f64>> {
        let mut mins = vec![f64::INFINITY; self.levels()];
        for phi in probes {
            let lv = self.apply_all_levels(phi)?;
            let nn = phi.dot(phi);
            for (k, l) in lv.iter().enumerate() {
                mins[k] = mins[k].min(l.dot(phi) / nn);
            }
        }
        Ok(mins)
    }

    pub fn check_positivity(&self, probes: &[Field], slack: f64) -> Result<Vec<CheckRecord>> {
        let mins = self.min_rayleigh(probes)?;
        Ok(mins
            .iter()
            .enumerate()
            .map(|(k, &q)| {
                CheckRecord::verdict(
                    "positivity_rayleigh",
                    format!("k={} probes={}", k + 1, probes.len()),
                    -q,
                    slack,
                    q >= -slack,
                )
            })
            .collect())
    }

    /// Level operators assembled column by column from the matrix-free route,
    /// as `P0 C_k P0` in row-major order.
    pub fn assemble_levels(&self) -> Result<Vec<Vec<f64>>> {
        let t = *self.torus();
        if t.sites() > dense::MAX_DENSE_SITES {
            return Err(FrdError::SizeLimit { sites: t.sites(), limit: dense::MAX_DENSE_SITES });
        }
        let n = t.len();
        let cols: Vec<Vec<Field>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let s = i / t.comps();
                self.apply_all_levels(&Field::green_source(t, s, i % t.comps()))
            })
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(self.levels());
        for k in 0..self.levels() {
            let mut mat = vec![0.0; n * n];
            for (j, lv) in cols.iter().enumerate() {
                let v = lv[k].values();
                for i in 0..n {
                    mat[i * n + j] = v[i];
                }
            }
            out.push(mat);
        }
        Ok(out)
    }

    /// Smallest eigenvalue of each assembled level against `-slack`.
    pub fn check_positivity_dense(&self, slack: f64) -> Result<Vec<CheckRecord>> {
        let n = self.torus().len();
        let mats = self.assemble_levels()?;
        Ok(mats
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let sym: Vec<f64> = (0..n * n)
                    .map(|p| 0.5 * (m[p] + m[(p % n) * n + p / n]))
                    .collect();
                let (lo, _) = linalg::sym_eig_extremes(&sym, n);
                CheckRecord::verdict("positivity_dense", format!("k={}", k + 1), -lo, slack, lo >= -slack)
            })
            .collect())
    }

    /// `|<C_k phi, psi> - <phi, C_k psi>|` relative to `|phi| |psi| max_k |C_k|`.
    pub fn check_symmetry(&self, phi: &Field, psi: &Field, rel: f64) -> Result<Vec<CheckRecord>> {
        let a = self.apply_all_levels(phi)?;
        let b = self.apply_all_levels(psi)?;
        Ok((0..self.levels())
            .map(|k| {
                let x = a[k].dot(psi);
                let y = phi.dot(&b[k]);
                let scale = x.abs().max(y.abs()).max(f64::MIN_POSITIVE);
                CheckRecord::bound("symmetry", format!("k={}", k + 1), (x - y).abs() / scale, rel)
            })
            .collect())
    }

    /// Far-field constant `C_{A,k}`: mean block over the far region, zero if empty.
    pub fn far_constant(&self, k: usize, col: &KernelColumn) -> Vec<f64> {
        let far = self.far_region(k, &[col.source]);
        far_field_spread_full(col, &far).1
    }

    /// `max_y max_{|alpha| = order} |nabla^alpha_y (K_k(x0, y) - C_{A,k})|_F` for every level.
    pub fn level_maxima(&self, source_index: usize, order: usize) -> Result<Vec<f64>> {
        (1..=self.levels())
            .map(|k| {
                let col = self.kernel(source_index, k);
                level_maximum(col, &self.far_constant(k, col), order)
            })
            .collect()
    }
}

fn levels_from_chain(t: Torus, ds: &[Vec<f64>]) -> Result<Vec<Field>> {
    let n = ds.len() - 1;
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let v = if k < n { linalg::sub(&ds[k], &ds[k + 1]) } else { ds[n].clone() };
        let mut f = Field::new(t, v)?;
        f.set_mean_zero_tag(true);
        out.push(f);
    }
    Ok(out)
}

/// Root-mean-square deviation of blocks from their mean over `far`, and the mean.
fn far_field_spread_full(col: &KernelColumn, far: &[usize]) -> (f64, Vec<f64>) {
    let mm = col.m() * col.m();
    let mut mean = vec![0.0; mm];
    if far.is_empty() {
        return (0.0, mean);
    }
    for &y in far {
        for (c, v) in mean.iter_mut().zip(col.block(y)) {
            *c += v;
        }
    }
    for c in mean.iter_mut() {
        *c /= far.len() as f64;
    }
    let mut ss = 0.0;
    for &y in far {
        for (c, v) in mean.iter().zip(col.block(y)) {
            ss += (v - c) * (v - c);
        }
    }
    ((ss / far.len() as f64).sqrt(), mean)
}

fn far_field_spread(col: &KernelColumn, far: &[usize]) -> (f64, f64) {
    let (sd, mean) = far_field_spread_full(col, far);
    (sd, linalg::max_abs(&mean))
}

pub fn level_maximum(col: &KernelColumn, constant: &[f64], order: usize) -> Result<f64> {
    let mut f = col.as_block_field();
    if order == 0 {
        let mm = constant.len();
        for (i, v) in f.values_mut().iter_mut().enumerate() {
            *v -= constant[i % mm];
        }
    }
    let mm = col.m() * col.m();
    let mut best = 0.0_f64;
    for alpha in MultiIndex::of_order(col.torus.dim(), order) {
        let g = grad_multi(&f, &alpha)?;
        for block in g.values().chunks(mm) {
            best = best.max(linalg::norm2(block));
        }
    }
    Ok(best)
}
