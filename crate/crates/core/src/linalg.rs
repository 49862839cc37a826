//! Small numeric kernels shared by the solvers.
//!
//! Reductions are split into fixed-size chunks whose partial sums are combined
//! sequentially, so results do not depend on the rayon thread count.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

const CHUNK: usize = 4096;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= CHUNK {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.par_iter_mut()
        .with_min_len(CHUNK)
        .zip(x.par_iter())
        .for_each(|(yi, xi)| *yi += alpha * xi);
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Extreme eigenvalues of a symmetric row-major `n x n` matrix.
pub fn sym_eig_extremes(mat: &[f64], n: usize) -> (f64, f64) {
    let m = DMatrix::from_row_slice(n, n, mat);
    let eig = SymmetricEigen::new(m);
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Spectral norm of a symmetric row-major matrix.
pub fn sym_spectral_norm(mat: &[f64], n: usize) -> f64 {
    let (lo, hi) = sym_eig_extremes(mat, n);
    lo.abs().max(hi.abs())
}

/// Largest absolute deviation from symmetry of a row-major `n x n` matrix.
pub fn symmetry_residual(mat: &[f64], n: usize) -> f64 {
    let mut r = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            r = r.max((mat[i * n + j] - mat[j * n + i]).abs());
        }
    }
    r
}

/// Least-squares slope and intercept of `ys` against `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_dot_matches_naive() {
        let a: Vec<f64> = (0..20_000).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..20_000).map(|i| (i as f64 * 0.3).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-9);
    }

    #[test]
    fn extremes_of_diagonal() {
        let m = [2.0, 0.0, 0.0, 0.5];
        assert_eq!(sym_eig_extremes(&m, 2), (0.5, 2.0));
        assert_eq!(sym_spectral_norm(&[-3.0, 0.0, 0.0, 1.0], 2), 3.0);
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [1.0, -1.0, -3.0];
        let (s, c) = linear_fit(&xs, &ys);
        assert!((s + 2.0).abs() < 1e-12 && (c - 1.0).abs() < 1e-12);
    }
}
