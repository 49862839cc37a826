//! Weak-L^p norms, maximal and sharp functions, BMO.

use crate::lattice::{Cube, Field, Torus, MAX_DIM};

use super::{for_each_cube_site, lp_over, site_abs, NormReport};

/// `max_lambda lambda |{|f| >= lambda}|^(1/p)`, taken over the attained values.
pub fn weak_norm_values(mags: &[f64], p: f64) -> f64 {
    let mut v: Vec<f64> = mags.iter().map(|x| x.abs()).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v.iter()
        .enumerate()
        .map(|(i, &x)| x * ((i + 1) as f64).powf(1.0 / p))
        .fold(0.0, f64::max)
}

pub fn weak_norm(f: &Field, p: f64) -> f64 {
    weak_norm_values(&site_abs(f), p)
}

/// Cube-normalized weak norm `|Q|^(-1/p) ||f 1_Q||_{p,inf}`.
pub fn weak_norm_cube(f: &Field, p: f64, q: &Cube) -> f64 {
    let mags = site_abs(f);
    let sites = q.sites(f.torus());
    let vals: Vec<f64> = sites.iter().map(|&s| mags[s]).collect();
    weak_norm_values(&vals, p) * (sites.len() as f64).powf(-1.0 / p)
}

pub fn lp_norm(f: &Field, p: f64) -> f64 {
    let mags = site_abs(f);
    let all: Vec<usize> = (0..mags.len()).collect();
    lp_over(&mags, &all, p)
}

/// Visits every axis cube of side `1..=max_side` once, passing its sites.
fn for_each_cube(t: &Torus, max_side: usize, mut f: impl FnMut(&[usize])) {
    let mut buf = Vec::new();
    let mut a = [0usize; MAX_DIM];
    for s in 1..=max_side.min(t.side()) {
        // A cube as large as the torus is the same set for every anchor.
        let anchors = if s == t.side() { 1 } else { t.sites() };
        for anchor in 0..anchors {
            for (j, aj) in a.iter_mut().enumerate().take(t.dim()) {
                *aj = t.coord(anchor, j);
            }
            buf.clear();
            for_each_cube_site(t, &a, s, |x| buf.push(x));
            f(&buf);
        }
    }
}

/// `Mf(x) = sup_{Q ∋ x} |Q|^-1 sum_Q |f|` over axis cubes of side at most `max_side`.
pub fn maximal_function_with(f: &Field, max_side: usize) -> Vec<f64> {
    let t = f.torus();
    let mags = site_abs(f);
    let mut out = vec![0.0_f64; t.sites()];
    for_each_cube(t, max_side, |sites| {
        let avg = sites.iter().map(|&s| mags[s]).sum::<f64>() / sites.len() as f64;
        for &s in sites {
            out[s] = out[s].max(avg);
        }
    });
    out
}

/// `f#(x) = sup_{Q ∋ x} |Q|^-1 sum_Q |f - f_Q|`.
pub fn sharp_function_with(f: &Field, max_side: usize) -> Vec<f64> {
    let t = f.torus();
    let m = t.comps();
    let v = f.values();
    let mut out = vec![0.0_f64; t.sites()];
    let mut mean = vec![0.0; m];
    for_each_cube(t, max_side, |sites| {
        mean.iter_mut().for_each(|c| *c = 0.0);
        for &s in sites {
            for i in 0..m {
                mean[i] += v[s * m + i];
            }
        }
        let n = sites.len() as f64;
        mean.iter_mut().for_each(|c| *c /= n);
        let osc = sites
            .iter()
            .map(|&s| (0..m).map(|i| (v[s * m + i] - mean[i]).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / n;
        for &s in sites {
            out[s] = out[s].max(osc);
        }
    });
    out
}

/// Maximal function over the full cube family.
pub fn maximal_function(f: &Field) -> Vec<f64> {
    maximal_function_with(f, f.torus().side())
}

pub fn sharp_function(f: &Field) -> Vec<f64> {
    sharp_function_with(f, f.torus().side())
}

pub fn bmo_norm(f: &Field) -> f64 {
    sharp_function(f).into_iter().fold(0.0, f64::max)
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||Mf||_2 <= C ||f||_2`.
pub fn hardy_littlewood_check(f: &Field, constant: f64) -> NormReport {
    let mf = maximal_function(f);
    NormReport::new("hardy_littlewood", format!("d={} side={} p=2", f.torus().dim(), f.torus().side()), l2(&mf), lp_norm(f, 2.0), constant)
}

/// `||Mf||_2 <= C1 ||f#||_2` and `||f#||_2 <= C2 ||Mf||_2` for mean-zero `f`.
pub fn fefferman_stein_check(f: &Field, upper: f64, lower: f64) -> [NormReport; 2] {
    let params = format!("d={} side={} p=2", f.torus().dim(), f.torus().side());
    let mf = l2(&maximal_function(f));
    let sf = l2(&sharp_function(f));
    [
        NormReport::new("fefferman_stein_upper", params.clone(), mf, sf, upper),
        NormReport::new("fefferman_stein_lower", params, sf, mf, lower),
    ]
}
