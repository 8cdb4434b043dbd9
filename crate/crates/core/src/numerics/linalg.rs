use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::matrix::{dot, norm, DenseMatrix};
use crate::error::{Error, Result};
use crate::real::Real;

enum PivotFailure<T> {
    NearZero,
    Negative { index: usize, pivot: T },
}

/// Lower-triangular `L` with `L·Lᵀ = A` for symmetric positive semi-definite `A`.
///
/// A pivot in `(−1e-8, 1e-12)` (relative to the largest diagonal entry) triggers a
/// single restart with `1e-10·trace(A)/p` added to the diagonal. After that
/// restart, pivots still in that band contribute a zero column. The knockoff
/// Gram target is exactly singular at the equi-correlated boundary, which is
/// the case this handles.
pub fn cholesky<T: Real>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    a.require_symmetric()?;
    let p = a.rows();
    let scale = a.diag().into_iter().fold(T::zero(), |m, d| m.max(d.abs()));
    let scale = if scale > T::zero() { scale } else { T::one() };

    match factor(a, scale, false) {
        Ok(l) => Ok(l),
        Err(PivotFailure::Negative { index, pivot }) => Err(Error::NotPositiveSemiDefinite {
            index,
            pivot: pivot.as_f64(),
        }),
        Err(PivotFailure::NearZero) => {
            let trace = a.trace();
            let base = if trace > T::zero() { trace } else { scale };
            let jitter = T::c(1e-10) * base / T::c(p as f64);
            let mut shifted = a.clone();
            for i in 0..p {
                shifted[(i, i)] = shifted[(i, i)] + jitter;
            }
            factor(&shifted, scale, true).map_err(|e| match e {
                PivotFailure::Negative { index, pivot } => Error::NotPositiveSemiDefinite {
                    index,
                    pivot: pivot.as_f64(),
                },
                PivotFailure::NearZero => unreachable!("lenient pass never reports near-zero"),
            })
        }
    }
}

fn factor<T: Real>(
    a: &DenseMatrix<T>,
    scale: T,
    lenient: bool,
) -> std::result::Result<DenseMatrix<T>, PivotFailure<T>> {
    let p = a.rows();
    let neg_tol = T::tol(1e-8) * scale;
    let zero_tol = T::tol(1e-12) * scale;
    let mut l = DenseMatrix::zeros(p, p);
    for j in 0..p {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot = pivot - l[(j, k)] * l[(j, k)];
        }
        if pivot <= -neg_tol {
            return Err(PivotFailure::Negative { index: j, pivot });
        }
        if pivot < zero_tol {
            if !lenient {
                return Err(PivotFailure::NearZero);
            }
            continue;
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..p {
            let mut v = a[(i, j)];
            for k in 0..j {
                v = v - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / d;
        }
    }
    Ok(l)
}

/// Solves `L·Lᵀ·x = b` given the lower Cholesky factor `L` (nonsingular).
pub fn cholesky_solve<T: Real>(l: &DenseMatrix<T>, b: &[T]) -> Vec<T> {
    let p = l.rows();
    let mut y = b.to_vec();
    for i in 0..p {
        let mut v = y[i];
        for k in 0..i {
            v = v - l[(i, k)] * y[k];
        }
        y[i] = v / l[(i, i)];
    }
    for i in (0..p).rev() {
        let mut v = y[i];
        for k in (i + 1)..p {
            v = v - l[(k, i)] * y[k];
        }
        y[i] = v / l[(i, i)];
    }
    y
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse<T: Real>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let l = cholesky(a)?;
    let p = a.rows();
    if let Some(i) = (0..p).find(|&i| l[(i, i)] == T::zero()) {
        return Err(Error::RankDeficient(format!(
            "matrix is singular (zero pivot at index {i})"
        )));
    }
    let mut inv = DenseMatrix::zeros(p, p);
    let mut e = vec![T::zero(); p];
    for j in 0..p {
        e.iter_mut().for_each(|v| *v = T::zero());
        e[j] = T::one();
        let col = cholesky_solve(&l, &e);
        inv.column_mut(j).copy_from_slice(&col);
    }
    // symmetrize away rounding
    for i in 0..p {
        for j in (i + 1)..p {
            let m = (inv[(i, j)] + inv[(j, i)]) / T::c(2.0);
            inv[(i, j)] = m;
            inv[(j, i)] = m;
        }
    }
    Ok(inv)
}

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi rotation.
pub fn symmetric_eigenvalues<T: Real>(a: &DenseMatrix<T>) -> Result<Vec<T>> {
    a.require_symmetric()?;
    let n = a.rows();
    let mut m = a.clone();
    let two = T::c(2.0);
    let frob: T = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| a[(i, j)] * a[(i, j)])
        .sum::<T>()
        .sqrt();
    let stop = T::epsilon() * frob;

    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<T>()
            .sqrt();
        if off <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = T::zero();
                m[(q, p)] = T::zero();
            }
        }
    }
    let mut eig = m.diag();
    eig.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(eig)
}

pub fn min_eigenvalue<T: Real>(a: &DenseMatrix<T>) -> Result<T> {
    if a.rows() == 0 {
        return Err(Error::DimensionError("empty matrix has no eigenvalues".into()));
    }
    Ok(symmetric_eigenvalues(a)?[0])
}

/// Orthonormalizes `v` against the unit columns in `basis` (two Gram-Schmidt
/// passes) and returns the remaining norm.
fn project_out<T: Real>(v: &mut [T], basis: &[Vec<T>]) -> T {
    for _ in 0..2 {
        for q in basis {
            let c = dot(v, q);
            for (x, &qi) in v.iter_mut().zip(q) {
                *x = *x - c * qi;
            }
        }
    }
    norm(v)
}

/// An `n×p` matrix `Ũ` with orthonormal columns that are orthogonal to the
/// column space of `x`: `ŨᵀŨ = I` and `ŨᵀX = 0`.
///
/// Columns start from seeded Gaussian noise and are Gram-Schmidt projected
/// against `x` and each other, so the result is a deterministic function of
/// `(x, seed)`.
pub fn orthonormal_complement<T: Real>(x: &DenseMatrix<T>, seed: u64) -> Result<DenseMatrix<T>> {
    let (n, p) = (x.rows(), x.cols());
    if n < 2 * p {
        return Err(Error::DimensionError(format!(
            "orthonormal complement needs n >= 2p, got n = {n}, p = {p}"
        )));
    }
    let rank_tol = T::tol(1e-10);
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(2 * p);
    for j in 0..p {
        let mut v = x.column(j).to_vec();
        let original = norm(&v);
        let remaining = project_out(&mut v, &basis);
        if original == T::zero() || remaining <= rank_tol * original {
            return Err(Error::RankDeficient(format!(
                "column {j} is linearly dependent on the preceding columns"
            )));
        }
        v.iter_mut().for_each(|e| *e = *e / remaining);
        basis.push(v);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DenseMatrix::zeros(n, p);
    for k in 0..p {
        let mut accepted = None;
        for _attempt in 0..16 {
            let mut v: Vec<T> = (0..n)
                .map(|_| T::c(StandardNormal.sample(&mut rng)))
                .collect();
            let original = norm(&v);
            let remaining = project_out(&mut v, &basis);
            if remaining > rank_tol * original {
                v.iter_mut().for_each(|e| *e = *e / remaining);
                accepted = Some(v);
                break;
            }
        }
        let v = accepted.ok_or_else(|| {
            Error::RankDeficient("could not draw a vector outside the column space".into())
        })?;
        out.column_mut(k).copy_from_slice(&v);
        basis.push(v);
    }
    Ok(out)
}
