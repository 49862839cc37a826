//! Pointwise bounds on Green kernels and on their images under cube projections.

use crate::error::{FrdError, Result};
use crate::lattice::{grad_multi, Cube, Field, MultiIndex};
use crate::report::CheckRecord;
use crate::smoothing::{complement_cube, project_cube};
use crate::solver::{EllipticOperator, KernelColumn};

use super::norms::{bmo_norm, weak_norm_cube};
use super::{site_abs, NormReport};

/// `max_{|alpha| = j} |nabla^alpha u|` at every site.
fn grad_magnitude(u: &Field, j: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0_f64; u.torus().sites()];
    for alpha in MultiIndex::of_order(u.torus().dim(), j) {
        let g = site_abs(&grad_multi(u, &alpha)?);
        for (o, v) in out.iter_mut().zip(g) {
            *o = o.max(v);
        }
    }
    Ok(out)
}

/// Green kernel decay `|K(x0, y)| |x0 - y|^{d-2} <= C` over `1 <= |x0 - y| <= rmax`, and
/// monotone decrease of the diagonal entries along each coordinate ray out to `rmax`.
pub fn green_decay_check(k: &KernelColumn, rmax: usize, constant: f64) -> Vec<CheckRecord> {
    let t = k.torus;
    let d = t.dim();
    let x0 = k.source;
    let mut worst = 0.0_f64;
    let mut least = f64::INFINITY;
    for y in 0..t.sites() {
        let r = t.dist_euclid(x0, y);
        if r >= 1.0 && r <= rmax as f64 {
            let v = k.frobenius_at(y) * r.powi(d as i32 - 2);
            worst = worst.max(v);
            least = least.min(v);
        }
    }
    let bound = NormReport::new("green_decay", format!("d={d} side={} rmax={rmax}", t.side()), worst, 1.0, constant);
    let mut violations = 0usize;
    let mut rays = 0usize;
    for j in 0..d {
        for forward in [true, false] {
            for a in 0..k.m() {
                rays += 1;
                let mut y = x0;
                let mut prev = k.block(y)[a * k.m() + a];
                for _ in 0..rmax.min(t.side() / 2) {
                    y = t.step(y, j, forward);
                    let v = k.block(y)[a * k.m() + a];
                    if v >= prev {
                        violations += 1;
                    }
                    prev = v;
                }
            }
        }
    }
    vec![
        bound.to_record(),
        CheckRecord::info("green_decay_lower", format!("d={d} rmax={rmax}"), least, worst)
            .with_note("smallest scaled value, not claimed"),
        CheckRecord::verdict("green_monotone_rays", format!("rays={rays} rmax={rmax}"), violations as f64, 0.0, violations == 0),
    ]
}

/// `u = P_{Q_1} ... P_{Q_k} K(x0, .)` for the first component of the source.
pub fn projected_kernel(op: &EllipticOperator, cubes: &[Cube], x0: usize) -> Result<Field> {
    let t = *op.torus();
    let mut u = op.solve_green(&Field::green_source(t, x0, 0))?.0;
    for q in cubes.iter().rev() {
        u = complement_cube(op, q, &u)?;
    }
    Ok(u)
}

/// `sup_y |nabla^j u(y)| / (2^k max(|x0-y|, dist(x0, T \ Q_i))^{2-d+j}) <= C` for `y` in every `Q_i`.
pub fn projection_bound_check(
    op: &EllipticOperator,
    cubes: &[Cube],
    x0: usize,
    j: usize,
    constant: f64,
) -> Result<NormReport> {
    let t = *op.torus();
    let d = t.dim();
    if d < 3 {
        return Err(FrdError::InvalidParameter("projection bound needs d >= 3".into()));
    }
    let u = projected_kernel(op, cubes, x0)?;
    let g = grad_magnitude(&u, j)?;
    let reach = cubes.iter().map(|q| q.dist_to_complement(&t, x0)).max().unwrap_or(0) as f64;
    let scale = 2f64.powi(cubes.len() as i32);
    let mut worst = 0.0_f64;
    for y in (0..t.sites()).filter(|&y| cubes.iter().all(|q| q.contains(&t, y))) {
        let r = t.dist_euclid(x0, y).max(reach).max(1.0);
        worst = worst.max(g[y] / (scale * r.powi(2 - d as i32 + j as i32)));
    }
    let sides: Vec<usize> = cubes.iter().map(|q| q.side).collect();
    Ok(NormReport::new(
        "projection_bound",
        format!("d={d} j={j} k={} sides={sides:?}", cubes.len()),
        worst,
        1.0,
        constant,
    ))
}

/// `||Pi_Q f||_{q,inf,Q} <= C ||f||_{p,inf,Q'}` with `Q'` the cube grown by one site on
/// each side, the region `Pi_Q f` depends on.
pub fn weak_interpolation_check(op: &EllipticOperator, q: &Cube, f: &Field, p: f64, qq: f64, constant: f64) -> Result<NormReport> {
    let t = *op.torus();
    let tf = project_cube(op, q, f)?;
    let grown = if q.side + 2 >= t.side() {
        Cube::new(&t, 0, t.side())?
    } else {
        Cube::new(&t, t.offset(q.anchor, &vec![-1; t.dim()]), q.side + 2)?
    };
    Ok(NormReport::new(
        "weak_interpolation",
        format!("side={} p={p} q={qq}", q.side),
        weak_norm_cube(&tf, qq, q),
        weak_norm_cube(f, p, &grown),
        constant,
    ))
}

/// Field of all gradient components `nabla_j u_i` at each site.
fn gradient_field(u: &Field) -> Result<Field> {
    let t = *u.torus();
    let (m, d) = (t.comps(), t.dim());
    let grads: Vec<Field> = (0..d).map(|j| crate::lattice::forward_diff(u, j)).collect::<Result<_>>()?;
    let mut vals = Vec::with_capacity(t.sites() * m * d);
    for s in 0..t.sites() {
        for i in 0..m {
            for g in &grads {
                vals.push(g.values()[s * m + i]);
            }
        }
    }
    let gt = crate::lattice::Torus::new(d, m * d, t.base(), t.depth())?;
    Field::new(gt, vals)
}

/// `||grad C f||_BMO / ||f||_inf`; reported only.
pub fn bmo_gradient_report(op: &EllipticOperator, f: &Field) -> Result<CheckRecord> {
    let u = op.solve_green(&f.clone().project_mean_zero())?.0;
    let b = bmo_norm(&gradient_field(&u)?);
    Ok(CheckRecord::info("bmo_gradient", format!("side={}", f.torus().side()), b, f.max_abs()))
}

/// `||grad u||_s / (||f||_p + ||g||_q)` for `A u = f + nabla^* g`; reported only.
pub fn solvability_report(op: &EllipticOperator, f: &Field, g: &[Field], exps: (f64, f64, f64)) -> Result<CheckRecord> {
    let t = *op.torus();
    let (s, p, q) = exps;
    let mut rhs = f.clone().project_mean_zero();
    for (j, gj) in g.iter().enumerate() {
        rhs = rhs.add(&crate::lattice::backward_diff(gj, j)?)?;
    }
    let u = op.solve_green(&rhs.project_mean_zero())?.0;
    let gu = gradient_field(&u)?;
    let lp = |h: &Field, e: f64| super::norms::lp_norm(h, e);
    let gnorm: f64 = g.iter().map(|gj| lp(gj, q).powf(q)).sum::<f64>().powf(1.0 / q);
    Ok(CheckRecord::info(
        "solvability",
        format!("side={} s={s} p={p} q={q}", t.side()),
        lp(&gu, s),
        lp(f, p) + gnorm,
    ))
}
