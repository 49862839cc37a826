//! Level-by-level decay of decomposition kernels.

use serde::{Deserialize, Serialize};

use crate::error::{FrdError, Result};
use crate::frd::Decomposition;
use crate::linalg::linear_fit;
use crate::report::CheckRecord;

/// Slack added to the claimed exponent before the slope is asserted.
pub const DECAY_SLOPE_SLACK: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub order: usize,
    /// `max_y |nabla^alpha (K_k(x0, y) - C_k)|` for `k = 1..=N+1`, maximized over sources and `|alpha| = order`.
    pub maxima: Vec<f64>,
    /// Least-squares `log_L` slope of levels `1..=N` against `k - 1`.
    pub slope: Option<f64>,
    /// `L^intercept` of the same fit; carries the unspecified `L^eta` prefactor.
    pub prefactor: Option<f64>,
    pub claimed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub dim: usize,
    pub base: usize,
    pub levels: usize,
    pub asserted: bool,
    pub slack: f64,
    pub rows: Vec<DecayRow>,
}

impl DecayReport {
    /// Strict decrease over all levels and `slope <= -(d - 2 + |alpha|) + slack`,
    /// asserted only when `d >= 3` and there are at least two levels to fit.
    pub fn records(&self) -> Vec<CheckRecord> {
        let mut out = Vec::new();
        for row in &self.rows {
            let params = format!("order={} d={} L={} levels={}", row.order, self.dim, self.base, self.levels);
            let strict = row.maxima.windows(2).all(|w| w[1] < w[0]);
            let worst_step = row.maxima.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
            let mono = CheckRecord::verdict("decay_monotone", params.clone(), worst_step, 1.0, strict)
                .with_note(format!("maxima={:?}", row.maxima));
            let slope_rhs = row.claimed + self.slack;
            let slope = match row.slope {
                Some(s) => CheckRecord::bound("decay_slope", params, s, slope_rhs)
                    .with_note(format!("prefactor={:e}", row.prefactor.unwrap_or(f64::NAN))),
                None => CheckRecord::info("decay_slope", params, f64::NAN, slope_rhs).with_note("fewer than two levels"),
            };
            if self.asserted {
                out.push(mono);
                out.push(slope);
            } else {
                out.push(CheckRecord { asserted: false, ..mono }.with_note("not asserted"));
                out.push(CheckRecord { asserted: false, ..slope }.with_note("not asserted"));
            }
        }
        for w in self.rows.windows(2) {
            if let (Some(a), Some(b)) = (w[0].slope, w[1].slope) {
                out.push(CheckRecord::info(
                    "decay_slope_gap",
                    format!("orders={}-{}", w[0].order, w[1].order),
                    b - a,
                    -1.0 + self.slack,
                ));
            }
        }
        out
    }
}

/// Tabulates level maxima for the given derivative orders over all stored sources.
pub fn level_decay_report(dec: &Decomposition, orders: &[usize]) -> Result<DecayReport> {
    if dec.sources().is_empty() {
        return Err(FrdError::InvalidParameter("decomposition has no kernel columns".into()));
    }
    let t = dec.torus();
    let n = dec.plan().sides.len();
    let base = t.base() as f64;
    let mut rows = Vec::new();
    for &order in orders {
        let mut maxima = vec![0.0_f64; dec.levels()];
        for i in 0..dec.sources().len() {
            for (m, v) in maxima.iter_mut().zip(dec.level_maxima(i, order)?) {
                *m = m.max(v);
            }
        }
        let (slope, prefactor) = if n >= 2 && maxima[..n].iter().all(|&v| v > 0.0) {
            let xs: Vec<f64> = (0..n).map(|k| k as f64).collect();
            let ys: Vec<f64> = maxima[..n].iter().map(|v| v.ln() / base.ln()).collect();
            let (s, c) = linear_fit(&xs, &ys);
            (Some(s), Some(base.powf(c)))
        } else {
            (None, None)
        };
        rows.push(DecayRow {
            order,
            maxima,
            slope,
            prefactor,
            claimed: -((t.dim() as f64) - 2.0 + order as f64),
        });
    }
    Ok(DecayReport {
        dim: t.dim(),
        base: t.base(),
        levels: dec.levels(),
        asserted: t.dim() >= 3 && n >= 2,
        slack: DECAY_SLOPE_SLACK,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientField;
    use crate::frd::DecompositionPlan;
    use crate::lattice::Torus;
    use crate::solver::EllipticOperator;

    #[test]
    fn single_level_plan_is_report_only() {
        let t = Torus::new(3, 1, 3, 1).unwrap();
        let op = EllipticOperator::new(CoefficientField::identity(t));
        let dec = Decomposition::build(&op, DecompositionPlan::default_for(&t), &[0]).unwrap();
        let rep = level_decay_report(&dec, &[0]).unwrap();
        assert!(!rep.asserted);
        assert!(rep.records().iter().all(|r| !r.asserted));
    }

    #[test]
    fn constant_coefficients_decay_in_three_dimensions() {
        let t = Torus::new(3, 1, 3, 2).unwrap();
        let op = EllipticOperator::new(CoefficientField::identity(t));
        let dec = Decomposition::build(&op, DecompositionPlan::default_for(&t), &[0]).unwrap();
        let rep = level_decay_report(&dec, &[0, 1]).unwrap();
        assert!(rep.asserted);
        let recs = rep.records();
        assert!(recs.iter().filter(|r| r.asserted).all(|r| r.pass), "{recs:#?}");
        // Gradients decay at least as fast as values.
        assert!(rep.rows[1].slope.unwrap() < rep.rows[0].slope.unwrap());
    }

    #[test]
    fn no_sources_is_an_error() {
        let t = Torus::new(2, 1, 3, 1).unwrap();
        let op = EllipticOperator::new(CoefficientField::identity(t));
        let dec = Decomposition::new(&op, DecompositionPlan::default_for(&t)).unwrap();
        assert!(level_decay_report(&dec, &[0]).is_err());
    }
}
