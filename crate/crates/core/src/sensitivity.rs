//! First-order dependence of Green kernels and decomposition levels on the
//! coefficient field, by central differences along a direction `Adot`.

use serde::{Deserialize, Serialize};

use crate::coefficients::{e_norm_of, CoefficientField};
use crate::error::{FrdError, Result};
use crate::frd::{level_maximum, Decomposition, DecompositionPlan};
use crate::lattice::{Field, Torus};
use crate::linalg;
use crate::report::CheckRecord;
use crate::solver::{EllipticOperator, KernelColumn};

/// Solver tolerance for probes; differences are divided by `h`, so solves must be tight.
pub const PROBE_TOL: f64 = 1e-13;

/// Accepted band for the ratio of successive central-difference changes.
pub const RICHARDSON_BAND: (f64, f64) = (3.0, 5.0);

/// Accepted deviation of the log-log distance slope from one.
pub const LIPSCHITZ_SLOPE_TOL: f64 = 0.1;

/// Accepted relative deviation of the doubled-direction distance ratio from two.
pub const HOMOGENEITY_TOL: f64 = 0.05;

const DIRECTION_NORM_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct DirectionalProbe {
    pub base: CoefficientField,
    /// Per-site symmetric `(md) x (md)` matrices, laid out like the coefficient data.
    pub direction: Vec<f64>,
    /// Step sizes, largest first; consecutive steps give the Richardson ratios.
    pub steps: Vec<f64>,
    /// Level `k`, or `None` for the full Green kernel.
    pub level: Option<usize>,
    pub source: usize,
    pub tol: f64,
}

/// Ellipticity and size margins at one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMargin {
    pub h: f64,
    pub c0_minus: f64,
    pub c0_plus: f64,
    /// `h ||Adot||_E`.
    pub e_norm: f64,
}

#[derive(Clone, Debug)]
pub struct DerivativeEstimate {
    pub level: Option<usize>,
    pub steps: Vec<f64>,
    /// Central differences, one per step.
    pub estimates: Vec<KernelColumn>,
    /// `|D(h_i) - D(h_{i+1})|_inf / |D(h_{i+1}) - D(h_{i+2})|_inf`, undefined when a change vanishes.
    pub richardson: Vec<Option<f64>>,
    pub margins: Vec<StepMargin>,
}

impl DerivativeEstimate {
    /// Estimate at the largest step.
    pub fn leading(&self) -> &KernelColumn {
        &self.estimates[0]
    }

    pub fn finest(&self) -> &KernelColumn {
        self.estimates.last().expect("at least one step")
    }

    pub fn richardson_records(&self) -> Vec<CheckRecord> {
        let (lo, hi) = RICHARDSON_BAND;
        self.richardson
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let params = format!("level={} h={:e}", level_label(self.level), self.steps[i]);
                match r {
                    Some(r) => CheckRecord::verdict("richardson_ratio", params, *r, hi, (lo..=hi).contains(r))
                        .with_note(format!("band=[{lo}, {hi}]")),
                    None => CheckRecord::info("richardson_ratio", params, f64::NAN, hi).with_note("vanishing change"),
                }
            })
            .collect()
    }
}

fn level_label(level: Option<usize>) -> String {
    level.map_or_else(|| "green".to_string(), |k| k.to_string())
}

/// Repeats one symmetric matrix at every site.
pub fn constant_direction(t: &Torus, s: &[f64]) -> Vec<f64> {
    s.iter().copied().cycle().take(s.len() * t.sites()).collect()
}

/// `||Adot||_E` after validating shape and symmetry.
pub fn direction_norm(t: &Torus, dir: &[f64]) -> Result<f64> {
    let md = t.comps() * t.dim();
    if dir.len() != t.sites() * md * md {
        return Err(FrdError::LengthMismatch { expected: t.sites() * md * md, got: dir.len() });
    }
    let residual = dir.chunks(md * md).map(|b| linalg::symmetry_residual(b, md)).fold(0.0, f64::max);
    if residual > 1e-12 {
        return Err(FrdError::NotSymmetric { residual });
    }
    Ok(e_norm_of(t, dir))
}

/// `h` with `h ||Adot||_E = c0 / 100`.
pub fn default_step(base: &CoefficientField, dir: &[f64]) -> Result<f64> {
    let n = direction_norm(base.torus(), dir)?;
    if n == 0.0 {
        return Ok(1e-3);
    }
    Ok(base.c0() / (100.0 * n))
}

impl DirectionalProbe {
    pub fn new(base: CoefficientField, direction: Vec<f64>, h: f64, level: Option<usize>, source: usize) -> Self {
        DirectionalProbe { base, direction, steps: vec![h, h / 2.0, h / 4.0], level, source, tol: PROBE_TOL }
    }

    /// Direction shape, symmetry and `||Adot||_E <= 1`; ellipticity of `A0 +- h Adot` at every step.
    pub fn validate(&self) -> Result<Vec<StepMargin>> {
        let t = self.base.torus();
        if self.source >= t.sites() {
            return Err(FrdError::InvalidParameter(format!("source {} is not a site", self.source)));
        }
        if self.steps.is_empty() || self.steps.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(FrdError::InvalidParameter(format!("steps {:?} must be positive", self.steps)));
        }
        let n = direction_norm(t, &self.direction)?;
        if n > 1.0 + DIRECTION_NORM_TOL {
            return Err(FrdError::InvalidParameter(format!("direction norm {n} exceeds 1")));
        }
        self.steps
            .iter()
            .map(|&h| {
                let minus = self.base.shifted(&self.direction, -h)?;
                let plus = self.base.shifted(&self.direction, h)?;
                Ok(StepMargin { h, c0_minus: minus.c0(), c0_plus: plus.c0(), e_norm: h * n })
            })
            .collect()
    }
}

/// Kernel columns at `A`: the Green kernel alone, or all decomposition levels.
fn columns(a: &CoefficientField, plan: Option<&DecompositionPlan>, x0: usize, tol: f64) -> Result<Vec<KernelColumn>> {
    let op = EllipticOperator::new(a.clone()).with_tol(tol);
    match plan {
        None => Ok(vec![op.green_column_tol(x0, tol)?]),
        Some(p) => {
            let plan = DecompositionPlan { tol, ..p.clone() };
            Decomposition::new(&op, plan)?.level_columns(x0)
        }
    }
}

fn scaled_diff(a: &KernelColumn, b: &KernelColumn, s: f64) -> KernelColumn {
    let mut d = a.sub(b);
    d.blocks.iter_mut().for_each(|v| *v *= s);
    d
}

/// Central differences for every column returned at one coefficient field.
fn central_differences(
    probe: &DirectionalProbe,
    plan: Option<&DecompositionPlan>,
) -> Result<(Vec<Vec<KernelColumn>>, Vec<StepMargin>)> {
    let margins = probe.validate()?;
    let mut per_step = Vec::with_capacity(probe.steps.len());
    for &h in &probe.steps {
        let plus = columns(&probe.base.shifted(&probe.direction, h)?, plan, probe.source, probe.tol)?;
        let minus = columns(&probe.base.shifted(&probe.direction, -h)?, plan, probe.source, probe.tol)?;
        per_step.push(plus.iter().zip(&minus).map(|(p, m)| scaled_diff(p, m, 0.5 / h)).collect());
    }
    Ok((per_step, margins))
}

fn estimate(level: Option<usize>, steps: &[f64], estimates: Vec<KernelColumn>, margins: Vec<StepMargin>) -> DerivativeEstimate {
    let changes: Vec<f64> = estimates.windows(2).map(|w| w[0].sub(&w[1]).max_abs()).collect();
    let richardson = changes
        .windows(2)
        .map(|w| if w[1] > 0.0 && w[0] > 0.0 { Some(w[0] / w[1]) } else { None })
        .collect();
    DerivativeEstimate { level, steps: steps.to_vec(), estimates, richardson, margins }
}

/// Central-difference derivative of the probed kernel along `Adot`.
pub fn directional_derivative(probe: &DirectionalProbe, plan: &DecompositionPlan) -> Result<DerivativeEstimate> {
    match probe.level {
        None => {
            let (cols, margins) = central_differences(probe, None)?;
            Ok(estimate(None, &probe.steps, cols.into_iter().map(|mut c| c.swap_remove(0)).collect(), margins))
        }
        Some(k) => {
            if k == 0 || k > plan.levels() {
                return Err(FrdError::LevelOutOfRange { k, max: plan.levels() });
            }
            Ok(level_derivatives(probe, plan)?.swap_remove(k - 1))
        }
    }
}

/// Derivatives of every level from one pair of builds per step; `probe.level` is ignored.
pub fn level_derivatives(probe: &DirectionalProbe, plan: &DecompositionPlan) -> Result<Vec<DerivativeEstimate>> {
    let (cols, margins) = central_differences(probe, Some(plan))?;
    Ok((0..plan.levels())
        .map(|k| {
            let est = cols.iter().map(|lv| lv[k].clone()).collect();
            estimate(Some(k + 1), &probe.steps, est, margins.clone())
        })
        .collect())
}

/// `nabla^* (Adot nabla phi)` for a direction that need not be elliptic.
pub fn apply_direction(t: &Torus, dir: &[f64], phi: &[f64]) -> Vec<f64> {
    let (m, d) = (t.comps(), t.dim());
    let md = m * d;
    let mut flux = vec![0.0; t.sites() * md];
    let mut g = vec![0.0; md];
    for x in 0..t.sites() {
        for j in 0..d {
            let xp = t.step(x, j, true);
            for i in 0..m {
                g[i * d + j] = phi[xp * m + i] - phi[x * m + i];
            }
        }
        let a = &dir[x * md * md..(x + 1) * md * md];
        for r in 0..md {
            flux[x * md + r] = linalg::dot(&a[r * md..(r + 1) * md], &g);
        }
    }
    let mut out = vec![0.0; t.sites() * m];
    for x in 0..t.sites() {
        for i in 0..m {
            for j in 0..d {
                let xm = t.step(x, j, false);
                out[x * m + i] += flux[xm * md + i * d + j] - flux[x * md + i * d + j];
            }
        }
    }
    out
}

/// Exact first-order perturbation `-C (nabla^* Adot nabla) C` applied to the Green source at `x0`.
pub fn resolvent_oracle(base: &CoefficientField, dir: &[f64], x0: usize, tol: f64) -> Result<KernelColumn> {
    let t = *base.torus();
    direction_norm(&t, dir)?;
    let op = EllipticOperator::new(base.clone()).with_tol(tol);
    let mut cols = Vec::with_capacity(t.comps());
    for a in 0..t.comps() {
        let u = op.solve_slice(Field::green_source(t, x0, a).values(), tol)?.0;
        let w = apply_direction(&t, dir, &u);
        let v = op.green_projected(&w, tol)?;
        cols.push(v.into_iter().map(|x| -x).collect());
    }
    Ok(KernelColumn::from_columns(t, x0, &cols, "resolvent", tol))
}

/// `|D - oracle|_inf <= rel |oracle|_inf`.
pub fn check_against_oracle(est: &KernelColumn, oracle: &KernelColumn, rel: f64) -> CheckRecord {
    let err = est.sub(oracle).max_abs();
    let scale = oracle.max_abs();
    let lhs = if scale > 0.0 { err / scale } else { err };
    CheckRecord::bound("resolvent_oracle", format!("source={}", est.source), lhs, rel)
}

/// `max_y |D K_k(x0, y)|_F` per level, asserted strictly decreasing in `k`.
pub fn derivative_decay_check(levels: &[DerivativeEstimate]) -> Result<CheckRecord> {
    let mut maxima = Vec::with_capacity(levels.len());
    for lv in levels {
        let col = lv.leading();
        maxima.push(level_maximum(col, &vec![0.0; col.m() * col.m()], 0)?);
    }
    let strict = maxima.windows(2).all(|w| w[1] < w[0]);
    let worst = maxima.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    Ok(CheckRecord::verdict("derivative_decay", format!("levels={}", levels.len()), worst, 1.0, strict)
        .with_note(format!("maxima={maxima:?}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub level: Option<usize>,
    pub steps: Vec<f64>,
    /// `|K[A0 + h Adot] - K[A0]|_inf` per step.
    pub distances: Vec<f64>,
    /// Log-log slope over the positive steps.
    pub slope: Option<f64>,
}

impl LipschitzReport {
    pub fn record(&self) -> CheckRecord {
        let params = format!("level={} steps={:?}", level_label(self.level), self.steps);
        match self.slope {
            Some(s) => CheckRecord::verdict("lipschitz_slope", params, s, 1.0, (s - 1.0).abs() <= LIPSCHITZ_SLOPE_TOL)
                .with_note(format!("distances={:?}", self.distances)),
            None => CheckRecord::info("lipschitz_slope", params, f64::NAN, 1.0).with_note("fewer than two positive steps"),
        }
    }
}

fn distance_at(
    base: &CoefficientField,
    dir: &[f64],
    h: f64,
    plan: Option<&DecompositionPlan>,
    k: usize,
    x0: usize,
    tol: f64,
    reference: &KernelColumn,
) -> Result<f64> {
    if h == 0.0 {
        return Ok(0.0);
    }
    let cols = columns(&base.shifted(dir, h)?, plan, x0, tol)?;
    Ok(cols[k].sub(reference).max_abs())
}

/// Kernel distance against `h`; the slope is fitted in log-log coordinates.
pub fn lipschitz_scan(
    base: &CoefficientField,
    dir: &[f64],
    plan: &DecompositionPlan,
    level: Option<usize>,
    x0: usize,
    steps: &[f64],
    tol: f64,
) -> Result<LipschitzReport> {
    direction_norm(base.torus(), dir)?;
    let (p, k) = target(plan, level)?;
    let reference = columns(base, p, x0, tol)?.swap_remove(k);
    let distances = steps
        .iter()
        .map(|&h| distance_at(base, dir, h, p, k, x0, tol, &reference))
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = steps
        .iter()
        .zip(&distances)
        .filter(|(h, d)| **h > 0.0 && **d > 0.0)
        .map(|(h, d)| (h.ln(), d.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        Some(linalg::linear_fit(&xs, &ys).0)
    } else {
        None
    };
    Ok(LipschitzReport { level, steps: steps.to_vec(), distances, slope })
}

fn target(plan: &DecompositionPlan, level: Option<usize>) -> Result<(Option<&DecompositionPlan>, usize)> {
    match level {
        None => Ok((None, 0)),
        Some(k) if k >= 1 && k <= plan.levels() => Ok((Some(plan), k - 1)),
        Some(k) => Err(FrdError::LevelOutOfRange { k, max: plan.levels() }),
    }
}

/// Distance at `h` along `2 Adot` over the distance along `Adot`, asserted within 5% of two.
pub fn homogeneity_check(
    base: &CoefficientField,
    dir: &[f64],
    plan: &DecompositionPlan,
    level: Option<usize>,
    x0: usize,
    h: f64,
    tol: f64,
) -> Result<CheckRecord> {
    let doubled: Vec<f64> = dir.iter().map(|v| 2.0 * v).collect();
    let (p, k) = target(plan, level)?;
    let reference = columns(base, p, x0, tol)?.swap_remove(k);
    let one = distance_at(base, dir, h, p, k, x0, tol, &reference)?;
    let two = distance_at(base, &doubled, h, p, k, x0, tol, &reference)?;
    let r = crate::report::ratio(two, one);
    Ok(CheckRecord::verdict(
        "homogeneity",
        format!("level={} h={h:e}", level_label(level)),
        r,
        2.0,
        (r / 2.0 - 1.0).abs() <= HOMOGENEITY_TOL,
    ))
}
