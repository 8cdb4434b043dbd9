//! Fixed-X knockoff filter with the equi-correlated construction and Lasso
//! entry-point statistics.
//!
//! Given a normalized design `X` with Gram matrix `Σ = XᵀX`, the knockoff copy is
//!
//! ```text
//! X̃ = X(I − Σ⁻¹ diag{s}) + Ũ C,   CᵀC = 2 diag{s} − diag{s} Σ⁻¹ diag{s}
//! ```
//!
//! with `Ũ` an orthonormal basis orthogonal to the columns of `X`, which gives
//! `X̃ᵀX̃ = Σ` and `XᵀX̃ = Σ − diag{s}`.

use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use crate::mht::{Method, SelectionResult};
use crate::numerics::{
    cholesky, lasso_entry_values, min_eigenvalue, norm, orthonormal_complement, spd_inverse,
    DenseMatrix, LassoPath,
};
use crate::real::Real;

/// Multiplier applied to the equi-correlated `s` so the Cholesky target stays
/// strictly positive definite at the `s = 2λ_min` boundary.
pub const S_SHRINK: f64 = 1.0 - 1e-6;

/// The knockoff construction for one design.
#[derive(Clone, Debug, PartialEq)]
pub struct KnockoffMatrices<T> {
    pub x_normalized: DenseMatrix<T>,
    pub x_knockoff: DenseMatrix<T>,
    pub s: Vec<T>,
    pub sigma: DenseMatrix<T>,
}

/// Everything a knockoff selection produced, for inspection and auditing.
#[derive(Clone, Debug, PartialEq)]
pub struct KnockoffArtifacts<T> {
    pub x_normalized: DenseMatrix<T>,
    pub x_knockoff: DenseMatrix<T>,
    pub s: Vec<T>,
    pub sigma: DenseMatrix<T>,
    /// `W_j`, one per original column.
    pub w: Vec<T>,
    /// Lasso entry values: originals in `0..p`, knockoffs in `p..2p`.
    pub z: Vec<T>,
    /// `+∞` when no candidate threshold qualifies.
    pub threshold: T,
    pub target_q: T,
}

impl<T: Real> KnockoffArtifacts<T> {
    /// `max|X̃ᵀX̃ − Σ|` and `max|XᵀX̃ − (Σ − diag{s})|`.
    pub fn gram_errors(&self) -> (T, T) {
        gram_errors(&self.x_normalized, &self.x_knockoff, &self.sigma, &self.s)
    }
}

impl<T: Real> KnockoffMatrices<T> {
    pub fn gram_errors(&self) -> (T, T) {
        gram_errors(&self.x_normalized, &self.x_knockoff, &self.sigma, &self.s)
    }
}

fn gram_errors<T: Real>(
    x: &DenseMatrix<T>,
    xk: &DenseMatrix<T>,
    sigma: &DenseMatrix<T>,
    s: &[T],
) -> (T, T) {
    let kk = xk.gram();
    let xkx = x.t_matmul(xk).expect("same row count");
    let target = sigma.sub(&DenseMatrix::from_diag(s)).expect("p×p");
    (
        kk.max_abs_diff(sigma).expect("p×p"),
        xkx.max_abs_diff(&target).expect("p×p"),
    )
}

/// Scales every column to unit Euclidean norm.
pub fn normalize_columns<T: Real>(x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let factors = (0..x.cols())
        .map(|j| {
            let n = norm(x.column(j));
            if n > T::zero() {
                Ok(T::one() / n)
            } else {
                Err(Error::ZeroColumn { index: j })
            }
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(x.scale_columns(&factors))
}

/// Equi-correlated `s_j = min(2·λ_min(Σ), 1)` for every `j`, times [`S_SHRINK`].
pub fn equi_s<T: Real>(sigma: &DenseMatrix<T>) -> Result<Vec<T>> {
    sigma.require_symmetric()?;
    if let Some((index, &value)) = sigma
        .diag()
        .iter()
        .enumerate()
        .find(|(_, &d)| (d - T::one()).abs() > T::tol(1e-8))
    {
        return Err(Error::NotUnitDiagonal {
            index,
            value: value.as_f64(),
        });
    }
    let lambda_min = min_eigenvalue(sigma)?;
    let s = (T::c(2.0) * lambda_min).min(T::one()).max(T::zero()) * T::c(S_SHRINK);
    Ok(vec![s; sigma.rows()])
}

/// Builds `X̃` for a normalized, full-rank `x` with `n ≥ 2p`.
pub fn construct_knockoffs<T: Real>(
    x: &DenseMatrix<T>,
    s: &[T],
    seed: u64,
) -> Result<KnockoffMatrices<T>> {
    let (n, p) = (x.rows(), x.cols());
    if n < 2 * p {
        return Err(Error::DimensionError(format!(
            "knockoffs need n >= 2p, got n = {n}, p = {p}"
        )));
    }
    if s.len() != p {
        return Err(Error::DimensionError(format!(
            "s has length {}, expected {p}",
            s.len()
        )));
    }
    if s.iter().any(|&v| !(v >= T::zero())) {
        return Err(Error::ConfigError("s must be non-negative".into()));
    }
    let sigma = x.gram();
    let sigma_inv = spd_inverse(&sigma).map_err(|e| match e {
        Error::NotPositiveSemiDefinite { .. } => {
            Error::RankDeficient("Gram matrix of the design is singular".into())
        }
        other => other,
    })?;

    // Σ⁻¹ diag{s}
    let sigma_inv_s = sigma_inv.scale_columns(s);
    // 2 diag{s} − diag{s} Σ⁻¹ diag{s}
    let mut target = sigma_inv_s.scale_rows(s);
    for i in 0..p {
        for j in 0..p {
            target[(i, j)] = -target[(i, j)];
        }
        target[(i, i)] = target[(i, i)] + T::c(2.0) * s[i];
    }
    for i in 0..p {
        for j in (i + 1)..p {
            let m = (target[(i, j)] + target[(j, i)]) / T::c(2.0);
            target[(i, j)] = m;
            target[(j, i)] = m;
        }
    }
    let c = cholesky(&target)?.transpose();
    let u = orthonormal_complement(x, seed)?;

    let x_knockoff = x
        .sub(&x.matmul(&sigma_inv_s)?)?
        .add(&u.matmul(&c)?)?;
    if !x_knockoff.is_finite() {
        return Err(Error::RankDeficient("knockoff construction produced non-finite entries".into()));
    }
    Ok(KnockoffMatrices {
        x_normalized: x.clone(),
        x_knockoff,
        s: s.to_vec(),
        sigma,
    })
}

/// `max(Z_j, Z_{j+p}) · sign(Z_j − Z_{j+p})`, zero on ties.
pub fn signed_max<T: Real>(z_original: T, z_knockoff: T) -> T {
    if z_original > z_knockoff {
        z_original
    } else if z_knockoff > z_original {
        -z_knockoff
    } else {
        T::zero()
    }
}

/// Lasso entry values on `[X X̃]` and the per-variable statistics `W`.
pub fn knockoff_statistics<T: Real>(
    x: &DenseMatrix<T>,
    x_knockoff: &DenseMatrix<T>,
    y: &[T],
    path: LassoPath,
) -> Result<(Vec<T>, Vec<T>)> {
    if x.rows() != x_knockoff.rows() || x.cols() != x_knockoff.cols() {
        return Err(Error::DimensionError(
            "design and knockoff shapes differ".into(),
        ));
    }
    if y.len() != x.rows() {
        return Err(Error::DimensionError(format!(
            "response has {} entries for {} rows",
            y.len(),
            x.rows()
        )));
    }
    let p = x.cols();
    let augmented = x.hstack(x_knockoff)?;
    let z = lasso_entry_values(&augmented, y, path)?;
    let w = (0..p).map(|j| signed_max(z[j], z[j + p])).collect();
    Ok((w, z))
}

fn threshold_ratio<T: Real>(w: &[T], t: T) -> T {
    let negatives = w.iter().filter(|&&v| v <= -t).count();
    let positives = w.iter().filter(|&&v| v >= t).count();
    T::c((1 + negatives) as f64) / T::c(positives.max(1) as f64)
}

/// Smallest `t` among the nonzero `|W_j|` with
/// `(1 + #{W_j ≤ −t}) / max(#{W_j ≥ t}, 1) ≤ q`, or `+∞` if none qualifies.
pub fn knockoff_threshold<T: Real>(w: &[T], q: T) -> T {
    let mut candidates: Vec<T> = w
        .iter()
        .map(|v| v.abs())
        .filter(|&v| v > T::zero())
        .collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    candidates.dedup();
    candidates
        .into_iter()
        .find(|&t| threshold_ratio(w, t) <= q)
        .unwrap_or_else(T::infinity)
}

/// Full knockoff selection on a design: normalize, equi-correlated `s`,
/// construct `X̃`, Lasso statistics, threshold, and `{j : W_j ≥ T}`.
pub fn knockoff_select<T: Real>(
    design: &DesignMatrix<T>,
    y: &[T],
    q: T,
    seed: u64,
    path: LassoPath,
) -> Result<(SelectionResult<T>, KnockoffArtifacts<T>)> {
    if !(q > T::zero() && q < T::one()) {
        return Err(Error::ConfigError(format!(
            "q must lie strictly inside (0, 1), got {q}"
        )));
    }
    let x = normalize_columns(design.matrix())?;
    let sigma = x.gram();
    let s = equi_s(&sigma)?;
    let m = construct_knockoffs(&x, &s, seed)?;
    let (w, z) = knockoff_statistics(&m.x_normalized, &m.x_knockoff, y, path)?;
    let threshold = knockoff_threshold(&w, q);
    let selected = w.iter().map(|&v| v >= threshold).collect();
    let result = SelectionResult {
        method: Method::Knockoff,
        labels: design.column_labels().to_vec(),
        evidence: w.clone(),
        selected,
        threshold: Some(threshold),
        target_level: q,
    };
    let artifacts = KnockoffArtifacts {
        x_normalized: m.x_normalized,
        x_knockoff: m.x_knockoff,
        s: m.s,
        sigma: m.sigma,
        w,
        z,
        threshold,
        target_q: q,
    };
    Ok((result, artifacts))
}
