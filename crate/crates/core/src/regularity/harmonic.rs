//! Caccioppoli and decay estimates for A-harmonic functions on concentric cubes.

use crate::error::{FrdError, Result};
use crate::lattice::{Cube, Field};
use crate::solver::EllipticOperator;

use super::NormReport;

/// Numerical slack on the stated Caccioppoli constant, for the discrete cutoff.
pub const CACCIOPPOLI_SLACK: f64 = 2.0;

/// Pointwise residual of `A u = 0` allowed on the cube, relative to `max |diag| max |u|`.
pub const HARMONIC_REL_TOL: f64 = 1e-7;

/// `max_{x in q} |(A u)(x)|`, failing if it exceeds the harmonic tolerance.
pub fn check_harmonic(op: &EllipticOperator, u: &Field, q: &Cube) -> Result<f64> {
    let t = op.torus();
    let m = t.comps();
    let au = op.apply(u)?;
    let res = q
        .sites(t)
        .iter()
        .flat_map(|&s| au.values()[s * m..(s + 1) * m].iter().map(|v| v.abs()))
        .fold(0.0, f64::max);
    let dmax = op.diagonal().iter().cloned().fold(0.0, f64::max);
    let scale = dmax * u.max_abs();
    if res > HARMONIC_REL_TOL * scale {
        return Err(FrdError::NotHarmonic { residual: res });
    }
    Ok(res)
}

fn cubes(op: &EllipticOperator, center: usize, m: usize, big_m: usize) -> Result<(Cube, Cube)> {
    if m >= big_m {
        return Err(FrdError::InvalidParameter(format!("inner side {m} must be below outer side {big_m}")));
    }
    let t = op.torus();
    Ok((Cube::centered(t, center, m)?, Cube::centered(t, center, big_m)?))
}

fn mean_over(u: &Field, sites: &[usize]) -> Vec<f64> {
    let m = u.torus().comps();
    let mut mean = vec![0.0; m];
    for &s in sites {
        for i in 0..m {
            mean[i] += u.values()[s * m + i];
        }
    }
    mean.iter_mut().for_each(|c| *c /= sites.len() as f64);
    mean
}

fn sq_dev(u: &Field, sites: &[usize], c: &[f64]) -> f64 {
    let m = c.len();
    sites
        .iter()
        .map(|&s| (0..m).map(|i| (u.values()[s * m + i] - c[i]).powi(2)).sum::<f64>())
        .sum()
}

/// `sum_{Q_m} |grad u|^2 <= 2 c0^4 / (M - m)^2 sum_{Q_M} |u - lambda|^2`, `lambda` the mean on `Q_M`.
pub fn caccioppoli_check(op: &EllipticOperator, u: &Field, center: usize, m: usize, big_m: usize) -> Result<NormReport> {
    let (qm, qbig) = cubes(op, center, m, big_m)?;
    check_harmonic(op, u, &qbig)?;
    let t = op.torus();
    let inner = qm.sites(t);
    let outer = qbig.sites(t);
    let lambda = mean_over(u, &outer);
    let comps = t.comps();
    let mut lhs = 0.0;
    for &x in &inner {
        for j in 0..t.dim() {
            let y = t.step(x, j, true);
            for i in 0..comps {
                lhs += (u.values()[y * comps + i] - u.values()[x * comps + i]).powi(2);
            }
        }
    }
    let c0 = op.coefficients().c0();
    let right = c0.powi(4) / ((big_m - m) as f64).powi(2) * sq_dev(u, &outer, &lambda);
    Ok(NormReport::new(
        "caccioppoli",
        format!("m={m} M={big_m} c0={c0:.6}"),
        lhs,
        right,
        CACCIOPPOLI_SLACK,
    ))
}

/// The two decay estimates on `Q_m` inside `Q_M`, `M` even and `2m <= M`:
/// `sum_{Q_m} |u|^2 <= C (m/M)^d sum_{Q_M} |u|^2` and the same for oscillations with `(m/M)^{d+2}`.
pub fn decay_estimate_check(
    op: &EllipticOperator,
    u: &Field,
    center: usize,
    m: usize,
    big_m: usize,
    constants: (f64, f64),
) -> Result<[NormReport; 2]> {
    if big_m % 2 != 0 || 2 * m > big_m || m == 0 {
        return Err(FrdError::InvalidParameter(format!("decay estimate needs M even and 1 <= 2m <= M, got m={m} M={big_m}")));
    }
    let (qm, qbig) = cubes(op, center, m, big_m)?;
    check_harmonic(op, u, &qbig)?;
    let t = op.torus();
    let d = t.dim() as i32;
    let inner = qm.sites(t);
    let outer = qbig.sites(t);
    let zero = vec![0.0; t.comps()];
    let r = m as f64 / big_m as f64;
    let params = format!("m={m} M={big_m}");
    let l2 = NormReport::new(
        "decay_l2",
        params.clone(),
        sq_dev(u, &inner, &zero),
        r.powi(d) * sq_dev(u, &outer, &zero),
        constants.0,
    );
    let osc = NormReport::new(
        "decay_oscillation",
        params,
        sq_dev(u, &inner, &mean_over(u, &inner)),
        r.powi(d + 2) * sq_dev(u, &outer, &mean_over(u, &outer)),
        constants.1,
    );
    Ok([l2, osc])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientField;
    use crate::lattice::Torus;
    use crate::regularity::corpus::{harmonic_field, random_coefficients};

    #[test]
    fn constants_give_zero_sides() {
        let t = Torus::new(2, 1, 3, 2).unwrap();
        let op = EllipticOperator::new(CoefficientField::identity(t));
        let u = Field::constant(t, &[3.0]);
        let r = caccioppoli_check(&op, &u, t.index(&[4, 4]), 2, 6).unwrap();
        assert_eq!((r.lhs, r.right), (0.0, 0.0));
        let [_, osc] = decay_estimate_check(&op, &u, t.index(&[4, 4]), 2, 6, (1.0, 1.0)).unwrap();
        assert!(osc.lhs.abs() < 1e-20 && osc.right.abs() < 1e-20);
    }

    #[test]
    fn harmonic_polynomial_satisfies_caccioppoli() {
        // x1^2 - x2^2 is discrete harmonic for the Laplacian away from the wrap.
        let t = Torus::new(2, 1, 3, 2).unwrap();
        let op = EllipticOperator::new(CoefficientField::identity(t));
        let u = Field::from_fn(t, |c, v| {
            let (a, b) = (c[0] as f64 - 4.0, c[1] as f64 - 4.0);
            v[0] = a * a - b * b;
        });
        for (m, big_m) in [(1, 7), (3, 7), (5, 7), (2, 6)] {
            let r = caccioppoli_check(&op, &u, t.index(&[4, 4]), m, big_m).unwrap();
            assert!(r.pass, "{r:?}");
        }
        // The full torus wraps, where the polynomial is not harmonic.
        assert!(matches!(
            caccioppoli_check(&op, &u, t.index(&[4, 4]), 3, 9),
            Err(FrdError::NotHarmonic { .. })
        ));
    }

    #[test]
    fn stated_constant_fails_at_unit_gap() {
        // u = 1 at x + e1, -1 at x + e2, zero elsewhere on Q_3, extended harmonically
        // through the outer ring: sum_{Q_1} |grad u|^2 = 2 against sum_{Q_3} |u|^2 / 4 = 1/2.
        let t = Torus::new(2, 1, 3, 2).unwrap();
        let op = EllipticOperator::new(CoefficientField::identity(t));
        let mut u = Field::zeros(t);
        for (c, v) in [([5, 4], 1.0), ([4, 5], -1.0), ([6, 4], 4.0), ([4, 6], -4.0), ([6, 3], -1.0), ([2, 5], 1.0)] {
            u.values_mut()[t.index(&c)] = v;
        }
        let r = caccioppoli_check(&op, &u, t.index(&[4, 4]), 1, 3).unwrap();
        assert_eq!((r.lhs, r.right), (2.0, 0.5));
        assert!((r.ratio - 4.0).abs() < 1e-15 && !r.pass);
    }

    #[test]
    fn ratios_are_scale_invariant() {
        let t = Torus::new(2, 1, 3, 2).unwrap();
        let op = EllipticOperator::new(random_coefficients(t, 1).unwrap());
        let c = t.index(&[4, 4]);
        let u = harmonic_field(&op, &Cube::centered(&t, c, 8).unwrap(), 0).unwrap();
        let a = decay_estimate_check(&op, &u, c, 2, 8, (1.0, 1.0)).unwrap();
        let b = decay_estimate_check(&op, &u.scaled(-7.5), c, 2, 8, (1.0, 1.0)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.ratio - y.ratio).abs() < 1e-10 * x.ratio);
        }
        assert!(decay_estimate_check(&op, &u, c, 5, 8, (1.0, 1.0)).is_err());
        assert!(decay_estimate_check(&op, &u, c, 2, 7, (1.0, 1.0)).is_err());
    }

    #[test]
    fn non_harmonic_input_is_rejected() {
        let t = Torus::new(2, 1, 3, 2).unwrap();
        let op = EllipticOperator::new(CoefficientField::identity(t));
        let u = Field::delta(t, t.index(&[4, 4]), 0);
        assert!(matches!(caccioppoli_check(&op, &u, t.index(&[4, 4]), 2, 6), Err(FrdError::NotHarmonic { .. })));
    }
}
