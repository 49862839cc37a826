//! Frozen constants for inequalities stated only up to `≲`.
//!
//! Each constant is the largest ratio seen over [`CALIBRATION_SEEDS`] at a fixed
//! reference configuration, raised by 25% and rounded up to two significant
//! digits. [`evaluate`] reruns a configuration for any seed, so the sweep can be
//! reproduced and the frozen value tested against fresh seeds.

use rand::Rng;

use crate::coefficients::{CoefficientField, PerturbationSpec};
use crate::error::{FrdError, Result};
use crate::lattice::{Cube, Torus};
use crate::solver::EllipticOperator;

use super::corpus::{harmonic_field, random_coefficients, random_field, random_mean_zero, rng, CALIBRATION_SEEDS};
use super::green::{green_decay_check, projection_bound_check, weak_interpolation_check};
use super::harmonic::decay_estimate_check;
use super::norms::{fefferman_stein_check, hardy_littlewood_check};
use super::sobolev::{sobolev_check, SobolevCase};
use super::NormReport;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweptConstant {
    pub name: &'static str,
    /// Largest ratio over the calibration seeds.
    pub sweep_max: f64,
    /// Frozen constant used in assertions.
    pub value: f64,
    /// Number of calibration seeds, taken from the start of [`CALIBRATION_SEEDS`].
    pub seeds: u64,
}

const fn c(name: &'static str, sweep_max: f64, value: f64, seeds: u64) -> SweptConstant {
    SweptConstant { name, sweep_max, value, seeds }
}

pub const TABLE: &[SweptConstant] = &[
    c("hardy_littlewood_d2", 1.7406527755222392, 2.2, 100),
    c("hardy_littlewood_d3", 2.0740331959909524, 2.6, 100),
    c("fefferman_stein_upper_d2", 1.5280783152650905, 2.0, 100),
    c("fefferman_stein_lower_d2", 0.9948056269541242, 1.3, 100),
    c("fefferman_stein_upper_d3", 1.5816371610167559, 2.0, 100),
    c("fefferman_stein_lower_d3", 1.0187246057682797, 1.3, 100),
    c("sobolev_i_d2_p1_q2", 0.2560996335137271, 0.33, 100),
    c("sobolev_i_d2_p2_q4", 0.29220416581956665, 0.37, 100),
    c("sobolev_ii_d2_p3", 0.6744665895612902, 0.85, 100),
    c("sobolev_iv_d2", 0.13229013545868865, 0.17, 100),
    c("sobolev_i_d3_p2_q6", 0.5014245718086354, 0.63, 100),
    c("sobolev_ii_d3_p4", 0.8140371055018455, 1.1, 100),
    c("sobolev_iv_d3", 0.17097451757944182, 0.22, 100),
    c("decay_l2_d2", 0.9834112464081833, 1.3, 100),
    c("decay_osc_d2", 1.1041019431313022, 1.4, 100),
    c("projection_bound_d3_j0", 0.24978773464719942, 0.32, 100),
    c("projection_bound_d3_j1", 0.18607561852219742, 0.24, 100),
    c("weak_interpolation_d2", 1.4368549603562826, 1.8, 100),
    c("green_decay_d3", 0.08031288264430964, 0.11, 100),
];

pub fn lookup(name: &str) -> Result<SweptConstant> {
    TABLE
        .iter()
        .find(|c| c.name == name)
        .copied()
        .ok_or_else(|| FrdError::InvalidParameter(format!("no swept constant named {name}")))
}

pub fn value(name: &str) -> f64 {
    lookup(name).map(|c| c.value).unwrap_or(f64::NAN)
}

/// Two significant digits, rounded up.
pub fn freeze(sweep_max: f64) -> f64 {
    let x = 1.25 * sweep_max;
    if x <= 0.0 {
        return 0.0;
    }
    let e = x.log10().floor() as i32 - 1;
    let unit = 10f64.powi(e);
    (x / unit).ceil() * unit
}

fn torus(d: usize, depth: usize) -> Torus {
    Torus::new(d, 1, 3, depth).expect("reference torus")
}

fn random_site(t: &Torus, seed: u64, salt: u64) -> usize {
    rng(seed.wrapping_mul(31).wrapping_add(salt)).random_range(0..t.sites())
}

fn sobolev_reports(d: usize, case: SobolevCase, name: &str, seed: u64) -> Result<Vec<NormReport>> {
    let t = torus(d, 2);
    let q = Cube::new(&t, random_site(&t, seed, 1), 8)?;
    Ok(vec![sobolev_check(&random_field(t, seed), case, &q, value(name))?])
}

/// Reports of one reference configuration for one seed, checked against the frozen value.
pub fn evaluate(name: &str, seed: u64) -> Result<Vec<NormReport>> {
    let cst = value(name);
    match name {
        "hardy_littlewood_d2" => Ok(vec![hardy_littlewood_check(&random_field(torus(2, 2), seed), cst)]),
        "hardy_littlewood_d3" => Ok(vec![hardy_littlewood_check(&random_field(torus(3, 2), seed), cst)]),
        "fefferman_stein_upper_d2" | "fefferman_stein_lower_d2" | "fefferman_stein_upper_d3"
        | "fefferman_stein_lower_d3" => {
            let d = if name.ends_with("d2") { 2 } else { 3 };
            let up = value(&format!("fefferman_stein_upper_d{d}"));
            let lo = value(&format!("fefferman_stein_lower_d{d}"));
            let [u, l] = fefferman_stein_check(&random_mean_zero(torus(d, 2), seed), up, lo);
            Ok(vec![if name.contains("upper") { u } else { l }])
        }
        "sobolev_i_d2_p1_q2" => sobolev_reports(2, SobolevCase::I { p: 1.0, q: 2.0 }, name, seed),
        "sobolev_i_d2_p2_q4" => sobolev_reports(2, SobolevCase::I { p: 2.0, q: 4.0 }, name, seed),
        "sobolev_ii_d2_p3" => sobolev_reports(2, SobolevCase::Ii { p: 3.0 }, name, seed),
        "sobolev_iv_d2" => sobolev_reports(2, SobolevCase::Iv, name, seed),
        "sobolev_i_d3_p2_q6" => sobolev_reports(3, SobolevCase::I { p: 2.0, q: 6.0 }, name, seed),
        "sobolev_ii_d3_p4" => sobolev_reports(3, SobolevCase::Ii { p: 4.0 }, name, seed),
        "sobolev_iv_d3" => sobolev_reports(3, SobolevCase::Iv, name, seed),
        "decay_l2_d2" | "decay_osc_d2" => {
            let t = torus(2, 3);
            let op = EllipticOperator::new(random_coefficients(t, seed)?);
            let center = random_site(&t, seed, 2);
            let consts = (value("decay_l2_d2"), value("decay_osc_d2"));
            let mut out = Vec::new();
            for big_m in [8, 16] {
                let u = harmonic_field(&op, &Cube::centered(&t, center, big_m)?, seed)?;
                for m in [2, 4] {
                    let [a, b] = decay_estimate_check(&op, &u, center, m, big_m, consts)?;
                    out.push(if name == "decay_l2_d2" { a } else { b });
                }
            }
            Ok(out)
        }
        "projection_bound_d3_j0" | "projection_bound_d3_j1" => {
            let t = torus(3, 2);
            let op = EllipticOperator::new(random_coefficients(t, seed)?);
            let center = random_site(&t, seed, 3);
            let x0 = random_site(&t, seed, 4);
            let k = (seed / 3 % 3) as usize;
            let cubes: Vec<Cube> = [7, 5][..k].iter().map(|&s| Cube::centered(&t, center, s)).collect::<Result<_>>()?;
            let j = if name.ends_with("j0") { 0 } else { 1 };
            Ok(vec![projection_bound_check(&op, &cubes, x0, j, cst)?])
        }
        "weak_interpolation_d2" => {
            let t = torus(2, 2);
            let op = EllipticOperator::new(random_coefficients(t, seed)?);
            let q = Cube::new(&t, random_site(&t, seed, 5), 4)?;
            Ok(vec![weak_interpolation_check(&op, &q, &random_field(t, seed), 2.0, 2.0, cst)?])
        }
        "green_decay_d3" => {
            let t = torus(3, 3);
            let op = EllipticOperator::new(random_coefficients(t, seed)?);
            let k = op.green_column(0)?;
            let rec = &green_decay_check(&k, 13, cst)[0];
            Ok(vec![NormReport::new("green_decay", rec.params.clone(), rec.lhs, 1.0, cst)])
        }
        _ => Err(FrdError::InvalidParameter(format!("no swept constant named {name}"))),
    }
}

/// Largest ratio over the given seeds.
pub fn sweep(name: &str, seeds: impl IntoIterator<Item = u64>) -> Result<f64> {
    let mut worst = 0.0_f64;
    for s in seeds {
        for r in evaluate(name, s)? {
            worst = worst.max(r.ratio);
        }
    }
    Ok(worst)
}

pub fn calibration_seeds(c: &SweptConstant) -> std::ops::Range<u64> {
    CALIBRATION_SEEDS.start..CALIBRATION_SEEDS.start + c.seeds
}

/// Green decay for the single-sine field used by the acceptance suite.
pub fn sine_operator(t: Torus, eps: f64) -> Result<EllipticOperator> {
    let md = t.comps() * t.dim();
    Ok(EllipticOperator::new(CoefficientField::make_perturbed(&PerturbationSpec::single_sine(md, t.dim(), eps), t)?))
}
