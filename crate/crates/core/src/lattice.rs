//! Torus geometry, lattice fields and discrete calculus.
//!
//! Sites of `(Z / side Z)^d` are stored with a row-major linear index: the
//! first coordinate is the slowest. Field values are site-major, so component
//! `i` of site `x` lives at `x * m + i`.

use serde::{Deserialize, Serialize};

use crate::error::{FrdError, Result};
use crate::linalg;

pub const MAX_DIM: usize = 6;

/// Default cap on multi-index order, matching the C^3 smoothness class.
pub const DEFAULT_ORDER_CAP: usize = 3;

/// Torus parameters as they appear in configs and manifests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusParams {
    pub d: usize,
    pub m: usize,
    #[serde(rename = "L")]
    pub base: usize,
    #[serde(rename = "N")]
    pub depth: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Torus {
    dim: usize,
    comps: usize,
    base: usize,
    depth: usize,
    side: usize,
    sites: usize,
    strides: [usize; MAX_DIM],
}

impl Torus {
    /// Torus `(Z / L^N Z)^d` carrying `m`-component fields.
    ///
    /// `d = 1` is accepted for solver tests; decay statements need `d >= 3`.
    pub fn new(dim: usize, comps: usize, base: usize, depth: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(FrdError::InvalidTorus(format!("dimension {dim} not in 1..={MAX_DIM}")));
        }
        if comps == 0 {
            return Err(FrdError::InvalidTorus("m must be at least 1".into()));
        }
        if base < 3 || base % 2 == 0 {
            return Err(FrdError::InvalidTorus(format!("L = {base} must be odd and >= 3")));
        }
        if depth == 0 {
            return Err(FrdError::InvalidTorus("N must be at least 1".into()));
        }
        let side = u32::try_from(depth)
            .ok()
            .and_then(|n| base.checked_pow(n))
            .ok_or_else(|| FrdError::InvalidTorus("L^N overflows".into()))?;
        let sites = u32::try_from(dim)
            .ok()
            .and_then(|d| side.checked_pow(d))
            .and_then(|s| s.checked_mul(comps).map(|_| s))
            .ok_or_else(|| FrdError::InvalidTorus("L^(Nd) overflows".into()))?;
        let mut strides = [0usize; MAX_DIM];
        let mut s = 1;
        for j in (0..dim).rev() {
            strides[j] = s;
            s *= side;
        }
        Ok(Torus { dim, comps, base, depth, side, sites, strides })
    }

    pub fn from_params(p: TorusParams) -> Result<Self> {
        Torus::new(p.d, p.m, p.base, p.depth)
    }

    pub fn params(&self) -> TorusParams {
        TorusParams { d: self.dim, m: self.comps, base: self.base, depth: self.depth }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn comps(&self) -> usize {
        self.comps
    }
    pub fn base(&self) -> usize {
        self.base
    }
    pub fn depth(&self) -> usize {
        self.depth
    }
    pub fn side(&self) -> usize {
        self.side
    }
    pub fn sites(&self) -> usize {
        self.sites
    }
    /// Number of scalar unknowns, `sites * m`.
    pub fn len(&self) -> usize {
        self.sites * self.comps
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn coord(&self, site: usize, axis: usize) -> usize {
        (site / self.strides[axis]) % self.side
    }

    pub fn coords(&self, site: usize) -> [usize; MAX_DIM] {
        let mut c = [0; MAX_DIM];
        for (j, cj) in c.iter_mut().enumerate().take(self.dim) {
            *cj = self.coord(site, j);
        }
        c
    }

    /// Linear index of arbitrary integer coordinates, wrapped onto the torus.
    pub fn index(&self, coords: &[i64]) -> usize {
        debug_assert_eq!(coords.len(), self.dim);
        let s = self.side as i64;
        coords
            .iter()
            .zip(&self.strides)
            .map(|(&c, &st)| c.rem_euclid(s) as usize * st)
            .sum()
    }

    /// Site moved by one step along `axis`.
    #[inline]
    pub fn step(&self, site: usize, axis: usize, forward: bool) -> usize {
        let st = self.strides[axis];
        let c = (site / st) % self.side;
        if forward {
            if c + 1 == self.side {
                site + st - self.side * st
            } else {
                site + st
            }
        } else if c == 0 {
            site + self.side * st - st
        } else {
            site - st
        }
    }

    /// Site translated by an integer offset.
    pub fn offset(&self, site: usize, delta: &[i64]) -> usize {
        let s = self.side as i64;
        let mut out = 0;
        for j in 0..self.dim {
            let c = (self.coord(site, j) as i64 + delta[j]).rem_euclid(s) as usize;
            out += c * self.strides[j];
        }
        out
    }

    /// Per-axis torus distance.
    pub fn axis_dist(&self, a: usize, b: usize) -> usize {
        let diff = a.abs_diff(b);
        diff.min(self.side - diff)
    }

    /// Sup-norm distance minimised over torus translates.
    pub fn dist_inf(&self, x: usize, y: usize) -> usize {
        (0..self.dim)
            .map(|j| self.axis_dist(self.coord(x, j), self.coord(y, j)))
            .max()
            .unwrap_or(0)
    }

    /// Euclidean distance minimised over torus translates.
    pub fn dist_euclid(&self, x: usize, y: usize) -> f64 {
        (0..self.dim)
            .map(|j| {
                let a = self.axis_dist(self.coord(x, j), self.coord(y, j)) as f64;
                a * a
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn origin(&self) -> usize {
        0
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.dim {
            Err(FrdError::AxisOutOfRange { axis, dim: self.dim })
        } else {
            Ok(())
        }
    }
}

/// A map from the torus to `R^m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    torus: Torus,
    values: Vec<f64>,
    mean_zero: bool,
}

impl Field {
    pub fn new(torus: Torus, values: Vec<f64>) -> Result<Self> {
        if values.len() != torus.len() {
            return Err(FrdError::LengthMismatch { expected: torus.len(), got: values.len() });
        }
        Ok(Field { torus, values, mean_zero: false })
    }

    pub fn zeros(torus: Torus) -> Self {
        Field { torus, values: vec![0.0; torus.len()], mean_zero: true }
    }

    pub fn constant(torus: Torus, value: &[f64]) -> Self {
        let values = (0..torus.sites()).flat_map(|_| value.iter().copied()).collect();
        Field { torus, values, mean_zero: false }
    }

    /// Field with `f(coords)` written into each site's component slice.
    pub fn from_fn(torus: Torus, mut f: impl FnMut(&[usize], &mut [f64])) -> Self {
        let m = torus.comps();
        let mut values = vec![0.0; torus.len()];
        for x in 0..torus.sites() {
            let c = torus.coords(x);
            f(&c[..torus.dim()], &mut values[x * m..(x + 1) * m]);
        }
        Field { torus, values, mean_zero: false }
    }

    /// Unit vector `e_comp` placed at `site`.
    pub fn delta(torus: Torus, site: usize, comp: usize) -> Self {
        let mut values = vec![0.0; torus.len()];
        values[site * torus.comps() + comp] = 1.0;
        Field { torus, values, mean_zero: false }
    }

    /// `(delta_site - L^{-Nd}) e_comp`, the right-hand side of the Green kernel equation.
    pub fn green_source(torus: Torus, site: usize, comp: usize) -> Self {
        let mut f = Field::delta(torus, site, comp);
        let w = 1.0 / torus.sites() as f64;
        for x in 0..torus.sites() {
            f.values[x * torus.comps() + comp] -= w;
        }
        f.mean_zero = true;
        f
    }

    /// Mean-zero field built from `values`, rejected if the per-component sums
    /// exceed the default tolerance.
    pub fn mean_zero_checked(torus: Torus, values: Vec<f64>) -> Result<Self> {
        let mut f = Field::new(torus, values)?;
        let dev = f.mean_deviation();
        if dev > f.mean_zero_tolerance() {
            return Err(FrdError::NotMeanZero { deviation: dev });
        }
        f.mean_zero = true;
        Ok(f)
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        self.mean_zero = false;
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn is_tagged_mean_zero(&self) -> bool {
        self.mean_zero
    }
    pub(crate) fn set_mean_zero_tag(&mut self, tag: bool) {
        self.mean_zero = tag;
    }

    pub fn at(&self, site: usize) -> &[f64] {
        let m = self.torus.comps();
        &self.values[site * m..(site + 1) * m]
    }

    /// Per-component site sums.
    pub fn component_sums(&self) -> Vec<f64> {
        let m = self.torus.comps();
        let mut s = vec![0.0; m];
        for (k, v) in self.values.iter().enumerate() {
            s[k % m] += v;
        }
        s
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.torus.sites() as f64;
        self.component_sums().into_iter().map(|s| s / n).collect()
    }

    /// Largest absolute per-component site sum.
    pub fn mean_deviation(&self) -> f64 {
        linalg::max_abs(&self.component_sums())
    }

    /// `1e-10 * ||phi||_2 * sqrt(sites)`, with a floor for the zero field.
    pub fn mean_zero_tolerance(&self) -> f64 {
        (1e-10 * self.norm() * (self.torus.sites() as f64).sqrt()).max(1e-300)
    }

    pub fn is_mean_zero(&self) -> bool {
        self.mean_deviation() <= self.mean_zero_tolerance()
    }

    pub fn project_mean_zero(mut self) -> Self {
        subtract_mean(&mut self.values, self.torus.comps());
        self.mean_zero = true;
        self
    }

    pub fn dot(&self, other: &Field) -> f64 {
        linalg::dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        linalg::norm2(&self.values)
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.values)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Field { torus: self.torus, values, mean_zero: self.mean_zero && other.mean_zero })
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.check_same(other)?;
        let values = linalg::sub(&self.values, &other.values);
        Ok(Field { torus: self.torus, values, mean_zero: self.mean_zero && other.mean_zero })
    }

    pub fn scaled(&self, s: f64) -> Field {
        Field {
            torus: self.torus,
            values: self.values.iter().map(|v| v * s).collect(),
            mean_zero: self.mean_zero,
        }
    }

    pub fn check_same(&self, other: &Field) -> Result<()> {
        if self.torus != other.torus {
            Err(FrdError::TorusMismatch)
        } else {
            Ok(())
        }
    }

    /// Sites where some component is nonzero.
    pub fn support(&self, threshold: f64) -> Vec<usize> {
        (0..self.torus.sites())
            .filter(|&x| self.at(x).iter().any(|v| v.abs() > threshold))
            .collect()
    }
}

pub(crate) fn subtract_mean(values: &mut [f64], m: usize) {
    let n = (values.len() / m) as f64;
    let mut sums = vec![0.0; m];
    for (k, v) in values.iter().enumerate() {
        sums[k % m] += v;
    }
    for (k, v) in values.iter_mut().enumerate() {
        *v -= sums[k % m] / n;
    }
}

/// Forward difference `phi(x + e_j) - phi(x)`.
pub fn forward_diff(phi: &Field, axis: usize) -> Result<Field> {
    let t = *phi.torus();
    t.check_axis(axis)?;
    let m = t.comps();
    let mut out = vec![0.0; t.len()];
    for x in 0..t.sites() {
        let xp = t.step(x, axis, true);
        for i in 0..m {
            out[x * m + i] = phi.values[xp * m + i] - phi.values[x * m + i];
        }
    }
    // Differences always telescope to zero on the torus.
    Ok(Field { torus: t, values: out, mean_zero: true })
}

/// Backward difference `phi(x - e_j) - phi(x)`, the adjoint of [`forward_diff`].
pub fn backward_diff(phi: &Field, axis: usize) -> Result<Field> {
    let t = *phi.torus();
    t.check_axis(axis)?;
    let m = t.comps();
    let mut out = vec![0.0; t.len()];
    for x in 0..t.sites() {
        let xm = t.step(x, axis, false);
        for i in 0..m {
            out[x * m + i] = phi.values[xm * m + i] - phi.values[x * m + i];
        }
    }
    Ok(Field { torus: t, values: out, mean_zero: true })
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    exps: Vec<usize>,
}

impl MultiIndex {
    pub fn new(exps: Vec<usize>, cap: usize) -> Result<Self> {
        let order: usize = exps.iter().sum();
        if order > cap {
            return Err(FrdError::MultiIndexCap { order, cap });
        }
        Ok(MultiIndex { exps })
    }

    pub fn zero(dim: usize) -> Self {
        MultiIndex { exps: vec![0; dim] }
    }

    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut exps = vec![0; dim];
        exps[axis] = 1;
        MultiIndex { exps }
    }

    pub fn exps(&self) -> &[usize] {
        &self.exps
    }

    pub fn order(&self) -> usize {
        self.exps.iter().sum()
    }

    /// All multi-indices in `dim` variables of exactly the given order.
    pub fn of_order(dim: usize, order: usize) -> Vec<MultiIndex> {
        fn rec(dim: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
            if cur.len() + 1 == dim {
                cur.push(left);
                out.push(MultiIndex { exps: cur.clone() });
                cur.pop();
                return;
            }
            for e in (0..=left).rev() {
                cur.push(e);
                rec(dim, left - e, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(dim, order, &mut Vec::new(), &mut out);
        out
    }

    /// All multi-indices of order at most `cap`.
    pub fn up_to(dim: usize, cap: usize) -> Vec<MultiIndex> {
        (0..=cap).flat_map(|k| MultiIndex::of_order(dim, k)).collect()
    }
}

/// `nabla^alpha phi`, applying forward differences axis by axis in ascending order.
pub fn grad_multi(phi: &Field, alpha: &MultiIndex) -> Result<Field> {
    grad_multi_capped(phi, alpha, DEFAULT_ORDER_CAP)
}

pub fn grad_multi_capped(phi: &Field, alpha: &MultiIndex, cap: usize) -> Result<Field> {
    if alpha.order() > cap {
        return Err(FrdError::MultiIndexCap { order: alpha.order(), cap });
    }
    if alpha.exps.len() != phi.torus().dim() {
        return Err(FrdError::LengthMismatch { expected: phi.torus().dim(), got: alpha.exps.len() });
    }
    let mut out = phi.clone();
    for (axis, &e) in alpha.exps.iter().enumerate() {
        for _ in 0..e {
            out = forward_diff(&out, axis)?;
        }
    }
    Ok(out)
}

/// Which sites of a cube carry Dirichlet unknowns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DofConvention {
    /// Every site of the cube; fields vanish off the cube.
    #[default]
    Closed,
    /// Sites whose backward neighbours all lie in the cube, so that forward
    /// gradients of fields supported there stay inside the cube.
    Interior,
}

impl DofConvention {
    /// Offset of the first unknown along each axis of the cube.
    pub fn offset(self) -> usize {
        match self {
            DofConvention::Closed => 0,
            DofConvention::Interior => 1,
        }
    }
}

/// Axis-aligned cube `anchor + [0, side)^d`, wrapped onto the torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Cube {
    pub anchor: usize,
    pub side: usize,
}

impl Cube {
    pub fn new(torus: &Torus, anchor: usize, side: usize) -> Result<Self> {
        if side == 0 || side > torus.side() {
            return Err(FrdError::CubeSide { side, max: torus.side() });
        }
        if anchor >= torus.sites() {
            return Err(FrdError::InvalidParameter(format!("anchor {anchor} is not a site")));
        }
        Ok(Cube { anchor, side })
    }

    /// Cube of the given side whose center is `center` (for odd sides) or
    /// whose upper-middle site is `center` (for even sides).
    pub fn centered(torus: &Torus, center: usize, side: usize) -> Result<Self> {
        let back = (side / 2) as i64;
        let anchor = torus.offset(center, &vec![-back; torus.dim()]);
        Cube::new(torus, anchor, side)
    }

    pub fn is_whole(&self, torus: &Torus) -> bool {
        self.side == torus.side()
    }

    pub fn sites(&self, torus: &Torus) -> Vec<usize> {
        box_sites(torus, self.anchor, self.side, 0)
    }

    /// Dirichlet degrees of freedom of the cube under a convention.
    pub fn dof_sites(&self, torus: &Torus, conv: DofConvention) -> Vec<usize> {
        if self.is_whole(torus) {
            return (0..torus.sites()).collect();
        }
        box_sites(torus, self.anchor, self.side, conv.offset())
    }

    pub fn contains(&self, torus: &Torus, site: usize) -> bool {
        (0..torus.dim()).all(|j| {
            let a = torus.coord(self.anchor, j);
            let c = torus.coord(site, j);
            (c + torus.side() - a) % torus.side() < self.side
        })
    }

    /// Sup-distance from `site` to the complement of the cube (0 outside).
    pub fn dist_to_complement(&self, torus: &Torus, site: usize) -> usize {
        if !self.contains(torus, site) {
            return 0;
        }
        if self.is_whole(torus) {
            return torus.side();
        }
        (0..torus.dim())
            .map(|j| {
                let a = torus.coord(self.anchor, j);
                let rel = (torus.coord(site, j) + torus.side() - a) % torus.side();
                (rel + 1).min(self.side - rel)
            })
            .min()
            .unwrap_or(0)
    }
}

/// Sites `anchor + c` for `c` in `[skip, side)^d`, in row-major order of `c`.
fn box_sites(torus: &Torus, anchor: usize, side: usize, skip: usize) -> Vec<usize> {
    let d = torus.dim();
    let w = side.saturating_sub(skip);
    let count = w.pow(d as u32);
    let mut out = Vec::with_capacity(count);
    let mut rel = vec![0usize; d];
    for _ in 0..count {
        let delta: Vec<i64> = rel.iter().map(|&r| (r + skip) as i64).collect();
        out.push(torus.offset(anchor, &delta));
        for j in (0..d).rev() {
            rel[j] += 1;
            if rel[j] < w {
                break;
            }
            rel[j] = 0;
        }
    }
    out
}

/// Sites of the cube of side `l` anchored at `anchor`.
pub fn cube_sites(torus: &Torus, anchor: usize, l: usize) -> Result<Vec<usize>> {
    Ok(Cube::new(torus, anchor, l)?.sites(torus))
}

/// `{x : dist_inf(x, set) <= 1}`, sorted.
pub fn closure(torus: &Torus, set: &[usize]) -> Vec<usize> {
    let mut mark = vec![false; torus.sites()];
    let d = torus.dim();
    let n3 = 3usize.pow(d as u32);
    for &s in set {
        for k in 0..n3 {
            let mut delta = vec![0i64; d];
            let mut r = k;
            for dj in delta.iter_mut() {
                *dj = (r % 3) as i64 - 1;
                r /= 3;
            }
            mark[torus.offset(s, &delta)] = true;
        }
    }
    (0..torus.sites()).filter(|&x| mark[x]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(d: usize, base: usize, depth: usize) -> Torus {
        Torus::new(d, 1, base, depth).unwrap()
    }

    #[test]
    fn torus_validation() {
        assert!(Torus::new(2, 1, 4, 1).is_err());
        assert!(Torus::new(2, 1, 1, 1).is_err());
        assert!(Torus::new(2, 1, 3, 0).is_err());
        assert!(Torus::new(2, 0, 3, 1).is_err());
        assert!(Torus::new(3, 1, 3, 40).is_err());
        let tor = t(3, 3, 2);
        assert_eq!(tor.side(), 9);
        assert_eq!(tor.sites(), 729);
    }

    #[test]
    fn dist_examples() {
        let tor = t(1, 3, 2);
        assert_eq!(tor.dist_inf(4, 4), 0);
        assert_eq!(tor.dist_inf(0, 8), 1);
        let tor2 = t(2, 3, 2);
        assert_eq!(tor2.dist_inf(tor2.index(&[0, 0]), tor2.index(&[4, 5])), 4);
    }

    #[test]
    fn dist_matches_translate_enumeration() {
        let tor = t(2, 3, 2);
        let s = tor.side() as i64;
        for x in 0..tor.sites() {
            for y in (0..tor.sites()).step_by(7) {
                let (cx, cy) = (tor.coords(x), tor.coords(y));
                let mut best = i64::MAX;
                for z0 in -1..=1 {
                    for z1 in -1..=1 {
                        let a = (cx[0] as i64 - cy[0] as i64 + z0 * s).abs();
                        let b = (cx[1] as i64 - cy[1] as i64 + z1 * s).abs();
                        best = best.min(a.max(b));
                    }
                }
                assert_eq!(tor.dist_inf(x, y) as i64, best);
            }
        }
    }

    #[test]
    fn dist_is_a_metric_exhaustively() {
        for tor in [t(1, 3, 2), t(2, 3, 1), t(2, 5, 1)] {
            let n = tor.sites();
            for x in 0..n {
                for y in 0..n {
                    assert_eq!(tor.dist_inf(x, y), tor.dist_inf(y, x));
                    assert_eq!(tor.dist_inf(x, y) == 0, x == y);
                    for z in 0..n {
                        assert!(tor.dist_inf(x, z) <= tor.dist_inf(x, y) + tor.dist_inf(y, z));
                    }
                }
            }
        }
        // the side-9 planar torus, triangle inequality through a sample of pivots
        let tor = t(2, 3, 2);
        for x in 0..tor.sites() {
            for y in 0..tor.sites() {
                for z in [0, 10, 40, 80] {
                    assert!(tor.dist_inf(x, y) <= tor.dist_inf(x, z) + tor.dist_inf(z, y));
                }
                assert!(tor.dist_inf(x, y) <= tor.side() / 2);
            }
        }
    }

    #[test]
    fn difference_stencils() {
        let tor = t(1, 3, 1);
        let phi = Field::new(tor, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(forward_diff(&phi, 0).unwrap().values(), &[1.0, -1.0, 0.0]);
        assert_eq!(backward_diff(&phi, 0).unwrap().values(), &[0.0, -1.0, 1.0]);
        assert!(forward_diff(&phi, 1).is_err());
        let c = Field::constant(tor, &[2.5]);
        assert_eq!(forward_diff(&c, 0).unwrap().max_abs(), 0.0);
        assert_eq!(backward_diff(&c, 0).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(MultiIndex::of_order(3, 2).len(), 6);
        assert_eq!(MultiIndex::up_to(3, 3).len(), 20);
        assert!(MultiIndex::new(vec![2, 2], 3).is_err());
    }

    #[test]
    fn grad_multi_basics() {
        let tor = t(2, 3, 1);
        let phi = Field::from_fn(tor, |c, v| v[0] = (c[0] * 7 + c[1] * c[1]) as f64);
        let same = grad_multi(&phi, &MultiIndex::zero(2)).unwrap();
        assert_eq!(same, phi);
        let e1 = grad_multi(&phi, &MultiIndex::unit(2, 1)).unwrap();
        assert_eq!(e1, forward_diff(&phi, 1).unwrap());
        assert!(grad_multi(&phi, &MultiIndex { exps: vec![2, 2] }).is_err());
    }

    #[test]
    fn cube_examples() {
        let tor = t(2, 3, 2);
        assert_eq!(cube_sites(&tor, 0, 9).unwrap().len(), 81);
        assert_eq!(closure(&tor, &cube_sites(&tor, 0, 9).unwrap()).len(), 81);
        let q = cube_sites(&tor, 0, 3).unwrap();
        assert_eq!(q.len(), 9);
        assert_eq!(closure(&tor, &q).len(), 25);
        let single = cube_sites(&tor, 40, 1).unwrap();
        assert_eq!(single, vec![40]);
        assert_eq!(closure(&tor, &single).len(), 9);
        assert!(cube_sites(&tor, 0, 0).is_err());
        assert!(cube_sites(&tor, 0, 10).is_err());
    }

    #[test]
    fn cube_interior_and_distance() {
        let tor = t(2, 3, 2);
        let cube = Cube::new(&tor, tor.index(&[8, 8]), 4).unwrap();
        assert_eq!(cube.dof_sites(&tor, DofConvention::Closed).len(), 16);
        let interior = cube.dof_sites(&tor, DofConvention::Interior);
        assert_eq!(interior.len(), 9);
        assert!(interior.contains(&tor.index(&[0, 0])));
        assert!(!interior.contains(&tor.index(&[8, 0])));
        assert!(cube.contains(&tor, tor.index(&[2, 2])));
        assert!(!cube.contains(&tor, tor.index(&[3, 2])));
        assert_eq!(cube.dist_to_complement(&tor, tor.index(&[0, 0])), 2);
        assert_eq!(cube.dist_to_complement(&tor, tor.index(&[8, 0])), 1);
        assert_eq!(cube.dist_to_complement(&tor, tor.index(&[4, 4])), 0);
    }
}
