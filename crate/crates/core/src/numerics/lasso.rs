//! Lasso regularization path by cyclic coordinate descent.
//!
//! The objective is `‖y − Xβ‖² + λ‖β‖₁` with no 1/2 on the quadratic term, so a
//! coordinate enters once `λ < 2|x_jᵀr|` and `λ_max = 2·max_j |x_jᵀy|`.

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};
use crate::real::Real;

const MAX_SWEEPS: usize = 10_000;
/// Sweeps between attempts to solve the active-set KKT system directly.
const POLISH_EVERY: usize = 20;

/// Geometric λ grid from `λ_max` down to `λ_max · grid_ratio`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LassoPath {
    pub grid_size: usize,
    pub grid_ratio: f64,
}

impl Default for LassoPath {
    fn default() -> Self {
        Self {
            grid_size: 100,
            grid_ratio: 1e-3,
        }
    }
}

impl LassoPath {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 50 {
            return Err(Error::ConfigError(format!(
                "lasso grid needs at least 50 points, got {}",
                self.grid_size
            )));
        }
        if !(self.grid_ratio > 0.0 && self.grid_ratio < 1.0) {
            return Err(Error::ConfigError(format!(
                "lasso grid ratio must lie in (0, 1), got {}",
                self.grid_ratio
            )));
        }
        Ok(())
    }

    /// Descending grid values for a given `λ_max`.
    pub fn grid<T: Real>(&self, lambda_max: T) -> Vec<T> {
        let last = (self.grid_size - 1) as f64;
        (0..self.grid_size)
            .map(|k| lambda_max * T::c(self.grid_ratio.powf(k as f64 / last)))
            .collect()
    }
}

fn soft_threshold<T: Real>(v: T, t: T) -> T {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        T::zero()
    }
}

/// Cholesky solve that gives up on any non-positive pivot instead of jittering.
fn strict_spd_solve<T: Real>(a: &[T], rhs: &[T], m: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); m * m];
    for j in 0..m {
        let mut d = a[j * m + j];
        for k in 0..j {
            d = d - l[j * m + k] * l[j * m + k];
        }
        if !(d > T::zero()) {
            return None;
        }
        let d = d.sqrt();
        l[j * m + j] = d;
        for i in j + 1..m {
            let mut v = a[i * m + j];
            for k in 0..j {
                v = v - l[i * m + k] * l[j * m + k];
            }
            l[i * m + j] = v / d;
        }
    }
    let mut z = rhs.to_vec();
    for i in 0..m {
        for k in 0..i {
            z[i] = z[i] - l[i * m + k] * z[k];
        }
        z[i] = z[i] / l[i * m + i];
    }
    for i in (0..m).rev() {
        for k in i + 1..m {
            z[i] = z[i] - l[k * m + i] * z[k];
        }
        z[i] = z[i] / l[i * m + i];
    }
    Some(z)
}

/// Feature-sign refinement: moves `beta` towards the exact minimizer on its
/// current sign pattern, stopping at the first sign change and dropping that
/// coordinate, until the minimizer keeps every sign. Each step lowers the
/// objective.
///
/// Coordinate descent alone crawls along near-null directions of the Gram
/// matrix, which the equi-correlated knockoff augmentation produces.
fn polish_active_set<T: Real>(
    gram: &DenseMatrix<T>,
    xty: &[T],
    penalty: T,
    beta: &mut [T],
    g_beta: &mut [T],
) {
    let sign = |v: T| if v > T::zero() { T::one() } else { -T::one() };
    let mut changed = false;
    for _ in 0..beta.len() {
        let active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != T::zero()).collect();
        let m = active.len();
        if m == 0 {
            break;
        }
        let mut a = vec![T::zero(); m * m];
        for (r, &i) in active.iter().enumerate() {
            for (c, &j) in active.iter().enumerate() {
                a[r * m + c] = gram[(i, j)];
            }
        }
        let rhs: Vec<T> = active.iter().map(|&j| xty[j] - penalty * sign(beta[j])).collect();
        let Some(solution) = strict_spd_solve(&a, &rhs, m) else {
            break;
        };
        // first point on the segment where an active coefficient reaches zero
        let mut step = T::one();
        let mut blocking = None;
        for (r, &j) in active.iter().enumerate() {
            if !(solution[r] * sign(beta[j]) > T::zero()) {
                let t = beta[j] / (beta[j] - solution[r]);
                if t < step {
                    step = t;
                    blocking = Some(j);
                }
            }
        }
        for (r, &j) in active.iter().enumerate() {
            beta[j] = beta[j] + step * (solution[r] - beta[j]);
        }
        changed = true;
        match blocking {
            Some(j) => beta[j] = T::zero(),
            None => break,
        }
    }
    if changed {
        for (k, gb) in g_beta.iter_mut().enumerate() {
            *gb = (0..beta.len())
                .filter(|&j| beta[j] != T::zero())
                .fold(T::zero(), |acc, j| acc + gram[(k, j)] * beta[j]);
        }
    }
}

/// For every column `j`, the largest grid λ at which the Lasso solution has
/// `β̂_j ≠ 0` (`|β̂_j| > 1e-10`), or 0 if `j` never enters on the grid.
///
/// Coordinate descent runs on the Gram matrix `XᵀX`, warm-started down the grid.
pub fn lasso_entry_values<T: Real>(
    x: &DenseMatrix<T>,
    y: &[T],
    path: LassoPath,
) -> Result<Vec<T>> {
    path.validate()?;
    let q = x.cols();
    let gram = x.gram();
    let xty = x.t_matvec(y)?;
    let lambda_max = T::c(2.0) * xty.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let mut entry = vec![T::zero(); q];
    if lambda_max <= T::zero() {
        return Ok(entry);
    }

    let nonzero = T::tol(1e-10);
    let change_tol = T::tol(1e-9);
    let half = T::c(0.5);
    let mut beta = vec![T::zero(); q];
    // Gβ, kept in sync with every coordinate update
    let mut g_beta = vec![T::zero(); q];
    let mut entered = vec![false; q];

    for lambda in path.grid(lambda_max) {
        let penalty = lambda * half;
        let mut converged = false;
        for sweep in 0..MAX_SWEEPS {
            let mut max_change = T::zero();
            let mut max_coef = T::zero();
            for j in 0..q {
                let gjj = gram[(j, j)];
                if gjj <= T::zero() {
                    continue;
                }
                let old = beta[j];
                let partial = xty[j] - g_beta[j] + gjj * old;
                let new = soft_threshold(partial, penalty) / gjj;
                let delta = new - old;
                if delta != T::zero() {
                    beta[j] = new;
                    for (gb, &gkj) in g_beta.iter_mut().zip(gram.column(j)) {
                        *gb = *gb + delta * gkj;
                    }
                    max_change = max_change.max(delta.abs());
                }
                max_coef = max_coef.max(new.abs());
            }
            if max_change < change_tol * max_coef.max(T::one()) {
                converged = true;
                break;
            }
            if sweep % POLISH_EVERY == POLISH_EVERY - 1 {
                polish_active_set(&gram, &xty, penalty, &mut beta, &mut g_beta);
            }
        }
        if !converged {
            return Err(Error::ConvergenceFailure {
                lambda: lambda.as_f64(),
                sweeps: MAX_SWEEPS,
            });
        }
        for j in 0..q {
            if !entered[j] && beta[j].abs() > nonzero {
                entered[j] = true;
                entry[j] = lambda;
            }
        }
    }
    Ok(entry)
}
