//! Discrete Sobolev inequalities on a cube `Q_n`.
//!
//! Norms are unnormalized sums over the cube. Difference quotients `nabla^alpha f(x)`
//! enter only where the whole stencil `x .. x + alpha` lies in the cube.

use serde::{Deserialize, Serialize};

use crate::error::{FrdError, Result};
use crate::lattice::{grad_multi_capped, Cube, Field, MultiIndex};

use super::{lp_over, rel_coords, site_abs, NormReport};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "lowercase")]
pub enum SobolevCase {
    /// `n^{-d/q} |f|_q <= C n^{-d/2} |f|_2 + C n^{1-d/p} |grad f|_p`, `1 <= p <= d`, `q <= p*`.
    I { p: f64, q: f64 },
    /// `|f(x) - f(y)| <= C n^{1-d/p} |grad f|_p` for `p > d`.
    Ii { p: f64 },
    /// Order-`order` version of (i): `q <= p_order`, `1 <= p <= d / order`.
    Iii { order: usize, p: f64, q: f64 },
    /// `max |f| <= C n^{-d/2} sum_{k <= M} |(n grad)^k f|_2`, `M = floor((d+2)/2)`.
    Iv,
}

impl SobolevCase {
    pub fn label(&self) -> String {
        match self {
            SobolevCase::I { p, q } => format!("sobolev_i p={p} q={q}"),
            SobolevCase::Ii { p } => format!("sobolev_ii p={p}"),
            SobolevCase::Iii { order, p, q } => format!("sobolev_iii order={order} p={p} q={q}"),
            SobolevCase::Iv => "sobolev_iv".into(),
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let df = d as f64;
        let bad = |msg: String| Err(FrdError::InvalidParameter(msg));
        match *self {
            SobolevCase::I { p, q } => {
                if !(1.0..=df).contains(&p) {
                    return bad(format!("case (i) needs 1 <= p <= d, got p={p}"));
                }
                let star = if p == df { f64::INFINITY } else { df * p / (df - p) };
                if !(q >= 1.0 && q <= star && q.is_finite()) {
                    return bad(format!("case (i) needs 1 <= q <= p* = {star}, q finite, got q={q}"));
                }
            }
            SobolevCase::Ii { p } => {
                if !(p > df) {
                    return bad(format!("case (ii) needs p > d, got p={p}"));
                }
            }
            SobolevCase::Iii { order, p, q } => {
                if order == 0 || !(p >= 1.0 && p * order as f64 <= df) {
                    return bad(format!("case (iii) needs order >= 1 and 1 <= p <= d/order, got order={order} p={p}"));
                }
                let inv = 1.0 / p - order as f64 / df;
                let pm = if inv <= 0.0 { f64::INFINITY } else { 1.0 / inv };
                if !(q >= 1.0 && q <= pm && q.is_finite()) {
                    return bad(format!("case (iii) needs q <= p_m = {pm}, q finite, got q={q}"));
                }
            }
            SobolevCase::Iv => {}
        }
        Ok(())
    }
}

/// Sites of `q` where the stencil of `alpha` stays inside the cube.
fn stencil_sites(f: &Field, q: &Cube, alpha: &MultiIndex) -> Vec<usize> {
    let t = f.torus();
    q.sites(t)
        .into_iter()
        .filter(|&s| {
            let r = rel_coords(t, q, s).expect("site of the cube");
            alpha.exps().iter().enumerate().all(|(j, &a)| r[j] + a < q.side)
        })
        .collect()
}

/// `(sum_{|alpha| = k} sum_x |nabla^alpha f(x)|^p)^(1/p)` over stencils inside `q`.
pub fn derivative_norm(f: &Field, q: &Cube, k: usize, p: f64) -> Result<f64> {
    let d = f.torus().dim();
    if k == 0 {
        return Ok(lp_over(&site_abs(f), &q.sites(f.torus()), p));
    }
    let mut acc = vec![0.0; f.torus().sites()];
    let mut total_max = 0.0_f64;
    for alpha in MultiIndex::of_order(d, k) {
        let g = grad_multi_capped(f, &alpha, k)?;
        let sites = stencil_sites(f, q, &alpha);
        let gm = site_abs(&g);
        for &s in &sites {
            if p.is_infinite() {
                total_max = total_max.max(gm[s]);
            } else {
                acc[s] += gm[s].powf(p);
            }
        }
    }
    if p.is_infinite() {
        Ok(total_max)
    } else {
        Ok(acc.iter().sum::<f64>().powf(1.0 / p))
    }
}

/// Evaluates both sides on `q`; the report passes iff `lhs <= constant * right`.
pub fn sobolev_check(f: &Field, case: SobolevCase, q: &Cube, constant: f64) -> Result<NormReport> {
    let t = f.torus();
    let d = t.dim();
    case.validate(d)?;
    let n = q.side as f64;
    let df = d as f64;
    let sites = q.sites(t);
    let mags = site_abs(f);
    let (lhs, right) = match case {
        SobolevCase::I { p, q: qq } => {
            let lhs = n.powf(-df / qq) * lp_over(&mags, &sites, qq);
            let right = n.powf(-df / 2.0) * lp_over(&mags, &sites, 2.0)
                + n.powf(1.0 - df / p) * derivative_norm(f, q, 1, p)?;
            (lhs, right)
        }
        SobolevCase::Ii { p } => {
            let m = t.comps();
            let v = f.values();
            let mut osc = 0.0_f64;
            for (i, &x) in sites.iter().enumerate() {
                for &y in &sites[i + 1..] {
                    let dist = (0..m).map(|c| (v[x * m + c] - v[y * m + c]).powi(2)).sum::<f64>().sqrt();
                    osc = osc.max(dist);
                }
            }
            (osc, n.powf(1.0 - df / p) * derivative_norm(f, q, 1, p)?)
        }
        SobolevCase::Iii { order, p, q: qq } => {
            let lhs = n.powf(-df / qq) * lp_over(&mags, &sites, qq);
            let mut right = 0.0;
            for k in 0..order {
                right += n.powf(-df / 2.0) * n.powi(k as i32) * derivative_norm(f, q, k, 2.0)?;
            }
            right += n.powf(-df / p) * n.powi(order as i32) * derivative_norm(f, q, order, p)?;
            (lhs, right)
        }
        SobolevCase::Iv => {
            let big_m = (d + 2) / 2;
            let lhs = lp_over(&mags, &sites, f64::INFINITY);
            let mut right = 0.0;
            for k in 0..=big_m {
                right += n.powi(k as i32) * derivative_norm(f, q, k, 2.0)?;
            }
            (lhs, n.powf(-df / 2.0) * right)
        }
    };
    Ok(NormReport::new(
        "sobolev",
        format!("{} d={d} n={}", case.label(), q.side),
        lhs,
        right,
        constant,
    ))
}
