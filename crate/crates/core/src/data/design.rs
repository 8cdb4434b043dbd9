use super::{CategoricalColumn, ExperimentDataset};
use crate::error::{Error, Result};
use crate::numerics::{min_eigenvalue, DenseMatrix};
use crate::real::Real;

pub const INTERCEPT_LABEL: &str = "intercept";

/// A labeled design matrix with full column rank.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix<T> {
    matrix: DenseMatrix<T>,
    column_labels: Vec<String>,
    /// Covariate each column was derived from (the intercept maps to itself).
    column_sources: Vec<String>,
    is_orthogonal: bool,
    is_normalized: bool,
}

impl<T: Real> DesignMatrix<T> {
    /// Wraps a matrix, checking labels and full column rank, and computing the
    /// orthogonality and normalization flags.
    pub fn new(matrix: DenseMatrix<T>, column_labels: Vec<String>) -> Result<Self> {
        let sources = column_labels.clone();
        Self::with_sources(matrix, column_labels, sources)
    }

    pub fn with_sources(
        matrix: DenseMatrix<T>,
        column_labels: Vec<String>,
        column_sources: Vec<String>,
    ) -> Result<Self> {
        if matrix.cols() != column_labels.len() || matrix.cols() != column_sources.len() {
            return Err(Error::DimensionError(format!(
                "{} columns but {} labels",
                matrix.cols(),
                column_labels.len()
            )));
        }
        if matrix.cols() == 0 {
            return Err(Error::DimensionError("design has no columns".into()));
        }
        if !matrix.is_finite() {
            return Err(Error::InvalidDataset("design has non-finite entries".into()));
        }
        let gram = matrix.gram();
        let diag = gram.diag();
        if let Some(j) = diag.iter().position(|&d| d <= T::zero()) {
            return Err(Error::RankDeficient(format!(
                "column `{}` is identically zero",
                column_labels[j]
            )));
        }
        let max_diag = diag.iter().fold(T::zero(), |m, &d| m.max(d));
        let mut is_orthogonal = true;
        'outer: for i in 0..gram.rows() {
            for j in (i + 1)..gram.cols() {
                if gram[(i, j)].abs() > T::tol(1e-8) * max_diag {
                    is_orthogonal = false;
                    break 'outer;
                }
            }
        }
        let is_normalized = diag
            .iter()
            .all(|&d| (d - T::one()).abs() <= T::tol(1e-8));
        if !is_orthogonal {
            // smallest eigenvalue of the correlation-scaled Gram
            let inv_sqrt: Vec<T> = diag.iter().map(|d| T::one() / d.sqrt()).collect();
            let corr = gram.scale_rows(&inv_sqrt).scale_columns(&inv_sqrt);
            let lambda = min_eigenvalue(&corr)?;
            if lambda <= T::tol(1e-10) {
                return Err(Error::RankDeficient(format!(
                    "smallest eigenvalue of the normalized Gram matrix is {}",
                    lambda
                )));
            }
        }
        Ok(Self {
            matrix,
            column_labels,
            column_sources,
            is_orthogonal,
            is_normalized,
        })
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }

    pub fn column_labels(&self) -> &[String] {
        &self.column_labels
    }

    pub fn column_sources(&self) -> &[String] {
        &self.column_sources
    }

    pub fn is_orthogonal(&self) -> bool {
        self.is_orthogonal
    }

    pub fn is_normalized(&self) -> bool {
        self.is_normalized
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    /// Keeps the listed columns.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Self::with_sources(
            self.matrix.select_columns(idx),
            idx.iter().map(|&j| self.column_labels[j].clone()).collect(),
            idx.iter().map(|&j| self.column_sources[j].clone()).collect(),
        )
    }
}

/// The categorical `column`, checked to have at least 2 units per level.
pub fn subgroup_column<'a>(ds: &'a ExperimentDataset, column: &str) -> Result<&'a CategoricalColumn> {
    let cat = ds.categorical(column)?;
    let counts = cat.counts();
    if let Some((level, &count)) = cat
        .levels()
        .iter()
        .zip(&counts)
        .find(|(_, &c)| c < 2)
    {
        return Err(Error::DegenerateLevel {
            column: column.to_owned(),
            level: level.clone(),
            count,
        });
    }
    Ok(cat)
}

/// One-hot design with one column per level of `column` (levels sorted).
pub fn build_subgroup_design<T: Real>(
    ds: &ExperimentDataset,
    column: &str,
) -> Result<DesignMatrix<T>> {
    let cat = subgroup_column(ds, column)?;
    let mut m = DenseMatrix::zeros(ds.len(), cat.levels().len());
    for (i, &code) in cat.codes().iter().enumerate() {
        m[(i, code as usize)] = T::one();
    }
    let labels = cat.levels().to_vec();
    let sources = vec![column.to_owned(); labels.len()];
    DesignMatrix::with_sources(m, labels, sources)
}

/// Full-rank factor design: an intercept, one-hot columns for every level of the
/// (at most one) categorical except the reference level, then the continuous
/// covariates standardized to mean 0 and unit sample variance.
///
/// The reference level defaults to the most frequent level (ties go to the
/// lexicographically first). Level columns are labeled `column=level`.
pub fn build_factor_design<T: Real>(
    ds: &ExperimentDataset,
    categorical: &[String],
    continuous: &[String],
    reference_level: Option<&str>,
) -> Result<DesignMatrix<T>> {
    if categorical.len() > 1 {
        return Err(Error::MultipleCategoricals(categorical.len()));
    }
    let n = ds.len();
    let mut columns: Vec<Vec<T>> = vec![vec![T::one(); n]];
    let mut labels = vec![INTERCEPT_LABEL.to_owned()];
    let mut sources = vec![INTERCEPT_LABEL.to_owned()];

    if let Some(name) = categorical.first() {
        let cat = ds.categorical(name)?;
        let counts = cat.counts();
        let reference = match reference_level {
            Some(r) => cat.levels().iter().position(|l| l == r).ok_or_else(|| {
                Error::ConfigError(format!("reference level `{r}` does not occur in `{name}`"))
            })?,
            None => {
                // first maximum in sorted level order
                let max = counts.iter().copied().max().unwrap_or(0);
                counts.iter().position(|&c| c == max).unwrap_or(0)
            }
        };
        for (level_idx, level) in cat.levels().iter().enumerate() {
            if level_idx == reference {
                continue;
            }
            let col = cat
                .codes()
                .iter()
                .map(|&c| if c as usize == level_idx { T::one() } else { T::zero() })
                .collect();
            columns.push(col);
            labels.push(format!("{name}={level}"));
            sources.push(name.clone());
        }
    } else if reference_level.is_some() {
        return Err(Error::ConfigError(
            "a reference level was given without a categorical column".into(),
        ));
    }

    for name in continuous {
        let values = ds.continuous(name)?;
        if n < 2 {
            return Err(Error::RankDeficient(format!("`{name}` has a single value")));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::RankDeficient(format!("continuous column `{name}` is constant")));
        }
        columns.push(values.iter().map(|v| T::c((v - mean) / sd)).collect());
        labels.push(name.clone());
        sources.push(name.clone());
    }

    let matrix = DenseMatrix::from_columns(n, &columns)?;
    DesignMatrix::with_sources(matrix, labels, sources)
}

/// Rows of `x` scaled by `(T_i − 0.5)`. Only defined for assignment probability 0.5.
pub fn transformed_design<T: Real>(
    x: &DesignMatrix<T>,
    treatments: &[bool],
    assignment_probability: f64,
) -> Result<DesignMatrix<T>> {
    if (assignment_probability - 0.5).abs() > 1e-12 {
        return Err(Error::UnsupportedProbability(assignment_probability));
    }
    if treatments.len() != x.rows() {
        return Err(Error::DimensionError(format!(
            "{} treatment flags for {} rows",
            treatments.len(),
            x.rows()
        )));
    }
    let half = T::c(0.5);
    let factors: Vec<T> = treatments
        .iter()
        .map(|&t| if t { half } else { -half })
        .collect();
    DesignMatrix::with_sources(
        x.matrix.scale_rows(&factors),
        x.column_labels.clone(),
        x.column_sources.clone(),
    )
}
