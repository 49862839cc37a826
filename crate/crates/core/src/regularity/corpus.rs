//! Seeded test functions for the swept-constant protocol.
//!
//! Seeds cycle through three kinds so that every corpus mixes rough,
//! smooth and localized inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coefficients::{CoefficientField, Mode, ModeKind, PerturbationSpec};
use crate::error::Result;
use crate::lattice::{closure, Cube, Field, Torus};
use crate::smoothing::complement_cube;
use crate::solver::EllipticOperator;

/// Seeds used to freeze constants.
pub const CALIBRATION_SEEDS: std::ops::Range<u64> = 0..100;
/// Seeds the frozen constants are tested against.
pub const TEST_SEEDS: std::ops::Range<u64> = 1000..1100;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Noise, a low-frequency trigonometric sum, or a Gaussian bump, by `seed % 3`.
pub fn random_field(t: Torus, seed: u64) -> Field {
    let mut r = rng(seed);
    let m = t.comps();
    let d = t.dim();
    let side = t.side() as f64;
    match seed % 3 {
        0 => Field::new(t, (0..t.len()).map(|_| r.random_range(-1.0..1.0)).collect()).expect("length"),
        1 => {
            let modes: Vec<(Vec<f64>, f64, f64, usize)> = (0..4)
                .map(|_| {
                    let k: Vec<f64> = (0..d).map(|_| r.random_range(0..3) as f64).collect();
                    (k, r.random_range(0.0..std::f64::consts::TAU), r.random_range(-1.0..1.0), r.random_range(0..m))
                })
                .collect();
            Field::from_fn(t, |c, v| {
                for (k, ph, amp, comp) in &modes {
                    let arg: f64 = k.iter().zip(c).map(|(kj, &cj)| kj * cj as f64).sum::<f64>();
                    v[*comp] += amp * (std::f64::consts::TAU * arg / side + ph).cos();
                }
            })
        }
        _ => {
            let center: Vec<f64> = (0..d).map(|_| r.random_range(0.0..side)).collect();
            let sigma = r.random_range(0.5..2.0);
            let amp: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
            Field::from_fn(t, |c, v| {
                let r2: f64 = c
                    .iter()
                    .zip(&center)
                    .map(|(&x, &y)| {
                        let dx = (x as f64 - y).abs();
                        let dx = dx.min(side - dx);
                        dx * dx
                    })
                    .sum();
                let g = (-r2 / (2.0 * sigma * sigma)).exp();
                for (vi, a) in v.iter_mut().zip(&amp) {
                    *vi = a * g;
                }
            })
        }
    }
}

pub fn random_mean_zero(t: Torus, seed: u64) -> Field {
    random_field(t, seed).project_mean_zero()
}

/// `A = I + eps B(x)` with one random trigonometric mode, `eps` in `[0, 0.1)`.
pub fn random_coefficients(t: Torus, seed: u64) -> Result<CoefficientField> {
    let mut r = rng(seed ^ 0x5eed_c0ef);
    let md = t.comps() * t.dim();
    let frequency: Vec<i64> = (0..t.dim()).map(|_| r.random_range(0..3)).collect();
    let mut amplitude = crate::coefficients::identity(md);
    for i in 0..md {
        for j in 0..i {
            let v = r.random_range(-0.3..0.3);
            amplitude[i * md + j] = v;
            amplitude[j * md + i] = v;
        }
    }
    let kind = if r.random_bool(0.5) { ModeKind::Sin } else { ModeKind::Cos };
    let spec = PerturbationSpec {
        a0: crate::coefficients::identity(md),
        epsilon: r.random_range(0.0..0.1),
        modes: vec![Mode { frequency, amplitude, kind }],
        budget: None,
    };
    CoefficientField::make_perturbed(&spec, t)
}

/// A field that is A-harmonic on `q`: the cube complement of a corpus field, or
/// for `seed % 3 == 2` a Green dipole with both poles off the closure of `q`.
pub fn harmonic_field(op: &EllipticOperator, q: &Cube, seed: u64) -> Result<Field> {
    let t = *op.torus();
    if seed % 3 == 2 {
        let near = closure(&t, &q.sites(&t));
        let mut mark = vec![false; t.sites()];
        near.iter().for_each(|&s| mark[s] = true);
        let free: Vec<usize> = (0..t.sites()).filter(|&s| !mark[s]).collect();
        if free.len() >= 2 {
            let mut r = rng(seed);
            let a = free[r.random_range(0..free.len())];
            let mut b = free[r.random_range(0..free.len())];
            if b == a {
                b = free[(free.iter().position(|&x| x == a).expect("member") + 1) % free.len()];
            }
            let comp = r.random_range(0..t.comps());
            let mut f = Field::delta(t, a, comp);
            f.values_mut()[b * t.comps() + comp] = -1.0;
            return Ok(op.solve_green(&f)?.0);
        }
    }
    complement_cube(op, q, &random_field(t, seed))
}
