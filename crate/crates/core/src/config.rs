//! Run configuration, read from TOML. Unknown keys are errors.
//!
//! ```toml
//! [torus]
//! d = 2
//! m = 1
//! L = 3
//! N = 1
//!
//! [coefficients]
//! epsilon = 0.05
//! [[coefficients.modes]]
//! frequency = [1, 0]
//! amplitude = [1.0, 0.0, 0.0, 1.0]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coefficients::{identity, CoefficientField, Mode, PerturbationSpec};
use crate::error::{FrdError, Result};
use crate::frd::DecompositionPlan;
use crate::lattice::{DofConvention, Torus, TorusParams};
use crate::solver::DEFAULT_TOL;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub torus: TorusParams,
    #[serde(default)]
    pub coefficients: CoefficientConfig,
    #[serde(default)]
    pub plan: PlanOverrides,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub probe: Option<ProbeConfig>,
}

/// `A(x) = A0 + epsilon * sum_modes amplitude * sin(2 pi <frequency, x / side>)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    /// Row-major `(md) x (md)` matrix; the identity when absent.
    #[serde(rename = "A0")]
    pub a0: Option<Vec<f64>>,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub modes: Vec<Mode>,
    /// Declared bound on `||A - A0||_E`; checked only when present.
    pub budget: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanOverrides {
    pub sides: Option<Vec<usize>>,
    pub radii: Option<Vec<f64>>,
    pub convention: Option<DofConvention>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub solver: f64,
    /// Far-field spread relative to `max |K_k|`; `100 N solver` when absent.
    pub range: Option<f64>,
    pub reconstruction: f64,
    pub positivity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { solver: DEFAULT_TOL, range: None, reconstruction: 1e-7, positivity: 1e-7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    /// Kernel sources as site coordinates; the origin when empty.
    pub sources: Vec<Vec<i64>>,
    /// Random mean-zero probes for reconstruction and positivity.
    pub probes: usize,
    pub samples: usize,
    pub out: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: 0, sources: Vec::new(), probes: 50, samples: 0, out: None }
    }
}

/// Directional probe with a constant direction matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub direction: Vec<f64>,
    /// Step size; `c0 / (100 ||Adot||_E)` when absent.
    pub h: Option<f64>,
    /// Level, or the full Green kernel when absent.
    pub level: Option<usize>,
    #[serde(default = "default_lipschitz")]
    pub lipschitz_steps: Vec<f64>,
}

fn default_lipschitz() -> Vec<f64> {
    vec![1e-2, 5e-3, 2.5e-3]
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| FrdError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FrdError::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| FrdError::Config(e.to_string()))
    }

    /// Re-runs the checks of the torus, coefficient, plan and probe constructors.
    pub fn validate(&self) -> Result<()> {
        let t = self.torus()?;
        let a = self.coefficient_field()?;
        self.plan()?.validate(&t)?;
        self.sources()?;
        let tol = &self.tolerances;
        for (name, v) in [("solver", tol.solver), ("reconstruction", tol.reconstruction), ("positivity", tol.positivity)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FrdError::Config(format!("tolerance {name} = {v} must be positive")));
            }
        }
        if let Some(r) = tol.range {
            if !(r > 0.0) {
                return Err(FrdError::Config(format!("range tolerance {r} must be positive")));
            }
        }
        if let Some(p) = &self.probe {
            let md = a.md();
            if p.direction.len() != md * md {
                return Err(FrdError::Config(format!("probe direction needs {} entries", md * md)));
            }
            if let Some(k) = p.level {
                let levels = self.plan()?.levels();
                if k == 0 || k > levels {
                    return Err(FrdError::LevelOutOfRange { k, max: levels });
                }
            }
            if p.h.is_some_and(|h| !(h > 0.0)) || p.lipschitz_steps.iter().any(|&h| !(h >= 0.0)) {
                return Err(FrdError::Config("probe steps must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn torus(&self) -> Result<Torus> {
        Torus::from_params(self.torus)
    }

    pub fn perturbation_spec(&self) -> Result<PerturbationSpec> {
        let md = self.torus.m * self.torus.d;
        let c = &self.coefficients;
        Ok(PerturbationSpec {
            a0: c.a0.clone().unwrap_or_else(|| identity(md)),
            epsilon: c.epsilon,
            modes: c.modes.clone(),
            budget: c.budget,
        })
    }

    pub fn coefficient_field(&self) -> Result<CoefficientField> {
        CoefficientField::make_perturbed(&self.perturbation_spec()?, self.torus()?)
    }

    pub fn plan(&self) -> Result<DecompositionPlan> {
        let t = self.torus()?;
        let mut plan = match &self.plan.sides {
            Some(s) => DecompositionPlan::with_sides(&t, s.clone()),
            None => DecompositionPlan::default_for(&t),
        };
        if let Some(r) = &self.plan.radii {
            plan.radii = r.clone();
        }
        if let Some(c) = self.plan.convention {
            plan.convention = c;
        }
        plan.tol = self.tolerances.solver;
        Ok(plan)
    }

    /// Source sites; coordinates wrap onto the torus.
    pub fn sources(&self) -> Result<Vec<usize>> {
        let t = self.torus()?;
        if self.run.sources.is_empty() {
            return Ok(vec![t.origin()]);
        }
        self.run
            .sources
            .iter()
            .map(|c| {
                if c.len() != t.dim() {
                    Err(FrdError::Config(format!("source {c:?} needs {} coordinates", t.dim())))
                } else {
                    Ok(t.index(c))
                }
            })
            .collect()
    }

    pub fn range_rel(&self) -> f64 {
        let n = self.torus.depth as f64;
        self.tolerances.range.unwrap_or(crate::frd::RANGE_SLACK_FACTOR * n * self.tolerances.solver)
    }
}
