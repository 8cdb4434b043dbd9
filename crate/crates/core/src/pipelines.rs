//! End-to-end HTE-BH and HTE-Knockoff procedures.
//!
//! Both start from the transformed outcome `Y*`, centered by the estimated ATE,
//! so a subgroup (or factor) is flagged when its conditional effect differs from
//! the average effect. The estimated ATE is treated as a fixed constant.

use serde::{Deserialize, Serialize};

use crate::data::{
    build_factor_design, build_subgroup_design, center_by_ate, estimate_ate, subgroup_column,
    transformed_outcomes, DesignMatrix, ExperimentDataset, INTERCEPT_LABEL,
};
use crate::error::{Error, Result};
use crate::knockoff::knockoff_select;
use crate::mht::{bh_select, bonferroni_select, naive_select, Method, PValueSet, SelectionResult};
use crate::numerics::{cholesky, cholesky_solve, spd_inverse, student_t_two_sided_p, DenseMatrix, LassoPath};

/// Subgroups smaller than this get a warning in reports.
pub const SMALL_SUBGROUP: usize = 30;

const ZERO_SCALE: f64 = 1e-12;

/// Residual variance and degrees of freedom for subgroup t-statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DfMode {
    /// One regression on the one-hot design: pooled variance, `n − p` df.
    #[default]
    Pooled,
    /// Independent one-sample t-test per subgroup: `n_j − 1` df.
    PerGroup,
}

impl std::str::FromStr for DfMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(DfMode::Pooled),
            "per-group" => Ok(DfMode::PerGroup),
            other => Err(Error::ConfigError(format!(
                "unknown df mode `{other}` (expected pooled or per-group)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalysisOptions {
    pub df_mode: DfMode,
    pub lasso: LassoPath,
    pub seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            df_mode: DfMode::Pooled,
            lasso: LassoPath::default(),
            seed: 0,
        }
    }
}

/// Per-subgroup regression output before any selection rule is applied.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgroupTests {
    pub ate: f64,
    pub pvalues: PValueSet<f64>,
    pub n_units: Vec<usize>,
    /// Mean of the centered transformed outcome within each subgroup.
    pub effects: Vec<f64>,
    pub t_statistics: Vec<f64>,
    pub df_mode: DfMode,
    /// Set when the residual variance vanished while some effect did not.
    pub zero_variance: bool,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRow {
    pub label: String,
    pub n_units: usize,
    /// Estimated conditional effect: mean transformed outcome of the subgroup.
    pub effect_estimate: f64,
    /// `effect_estimate − ate`, the regression coefficient that is tested.
    pub deviation_from_ate: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    /// Knockoff statistic, present only for knockoff selections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knockoff_w: Option<f64>,
    pub selected: bool,
}

/// Result of testing every subgroup of one categorical covariate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub method: Method,
    pub column: String,
    pub ate: f64,
    pub target_q: f64,
    pub df_mode: DfMode,
    pub n_units: usize,
    pub per_subgroup: Vec<SubgroupRow>,
    pub selection: SelectionResult<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SubgroupReport {
    pub fn selected_labels(&self) -> Vec<&str> {
        self.selection.selected_labels()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorRow {
    pub label: String,
    /// Covariate the column encodes.
    pub source: String,
    pub w: f64,
    pub selected: bool,
}

/// Result of the knockoff factor analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorReport {
    pub method: Method,
    pub ate: f64,
    pub target_q: f64,
    pub seed: u64,
    pub n_units: usize,
    pub per_column: Vec<FactorRow>,
    /// `inf` when nothing is selected.
    pub threshold: f64,
    /// Covariates with at least one selected column.
    pub heterogeneous_factors: Vec<String>,
    pub interpretation_notes: Vec<String>,
}

/// Centered transformed outcomes `Y* − ATÊ` for a dataset.
pub fn centered_outcomes(ds: &ExperimentDataset) -> (Vec<f64>, f64) {
    let ate = estimate_ate(ds);
    (center_by_ate(&transformed_outcomes(ds), ate), ate)
}

fn t_to_p(t: f64, df: f64) -> Result<f64> {
    student_t_two_sided_p(t, df)
}

/// Regresses the centered transformed outcome on the one-hot subgroup design.
///
/// The design is orthogonal, so each coefficient is the subgroup mean of the
/// response and the regression reduces to per-group sums; no dense matrix is
/// formed.
pub fn subgroup_pvalues(
    ds: &ExperimentDataset,
    column: &str,
    df_mode: DfMode,
) -> Result<SubgroupTests> {
    let cat = subgroup_column(ds, column)?;
    let (y, ate) = centered_outcomes(ds);
    let n = y.len();
    let p = cat.levels().len();
    let counts = cat.counts();

    let mut sums = vec![0.0; p];
    for (&code, &v) in cat.codes().iter().zip(&y) {
        sums[code as usize] += v;
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let mut rss = vec![0.0; p];
    for (&code, &v) in cat.codes().iter().zip(&y) {
        let d = v - means[code as usize];
        rss[code as usize] += d * d;
    }

    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut zero_variance = false;
    let mut t_statistics = Vec::with_capacity(p);
    let mut pvalues = Vec::with_capacity(p);
    let pooled_sd = (rss.iter().sum::<f64>() / (n - p) as f64).sqrt();
    for j in 0..p {
        let (sd, df) = match df_mode {
            DfMode::Pooled => (pooled_sd, (n - p) as f64),
            DfMode::PerGroup => ((rss[j] / (counts[j] - 1) as f64).sqrt(), (counts[j] - 1) as f64),
        };
        let coef = means[j];
        let (t, pval) = if sd < ZERO_SCALE * scale {
            if coef.abs() <= ZERO_SCALE * scale {
                (0.0, 1.0)
            } else {
                zero_variance = true;
                (coef.signum() * f64::INFINITY, 0.0)
            }
        } else {
            let t = coef / (sd * (1.0 / counts[j] as f64).sqrt());
            (t, t_to_p(t, df)?)
        };
        t_statistics.push(t);
        pvalues.push(pval);
    }

    let mut warnings: Vec<String> = cat
        .levels()
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c < SMALL_SUBGROUP)
        .map(|(l, c)| format!("subgroup `{l}` has only {c} units; its p-value is unreliable"))
        .collect();
    if zero_variance {
        warnings.push(
            "residual variance is zero while some subgroup effect is not; p-values set to 0".into(),
        );
    }
    Ok(SubgroupTests {
        ate,
        pvalues: PValueSet::new(cat.levels().to_vec(), pvalues)?,
        n_units: counts,
        effects: means,
        t_statistics,
        df_mode,
        zero_variance,
        warnings,
    })
}

/// Per-subgroup two-sample (treated vs control) Student t-tests with pooled
/// variance: the uncorrected approach practitioners often start from.
pub fn two_sample_pvalues(ds: &ExperimentDataset, column: &str) -> Result<PValueSet<f64>> {
    let cat = ds.categorical(column)?;
    let p = cat.levels().len();
    let mut n = vec![[0usize; 2]; p];
    let mut sum = vec![[0.0f64; 2]; p];
    for ((&code, &t), &y) in cat.codes().iter().zip(ds.treatment()).zip(ds.outcome()) {
        let arm = t as usize;
        n[code as usize][arm] += 1;
        sum[code as usize][arm] += y;
    }
    let mut ss = vec![[0.0f64; 2]; p];
    for ((&code, &t), &y) in cat.codes().iter().zip(ds.treatment()).zip(ds.outcome()) {
        let (g, arm) = (code as usize, t as usize);
        let d = y - sum[g][arm] / n[g][arm] as f64;
        ss[g][arm] += d * d;
    }
    let mut pvalues = Vec::with_capacity(p);
    for j in 0..p {
        let [n0, n1] = n[j];
        if n0 == 0 || n1 == 0 || n0 + n1 < 3 {
            return Err(Error::DegenerateLevel {
                column: column.to_owned(),
                level: cat.levels()[j].clone(),
                count: n0 + n1,
            });
        }
        let df = (n0 + n1 - 2) as f64;
        let sp2 = (ss[j][0] + ss[j][1]) / df;
        let diff = sum[j][1] / n1 as f64 - sum[j][0] / n0 as f64;
        let se = (sp2 * (1.0 / n0 as f64 + 1.0 / n1 as f64)).sqrt();
        let pval = if se > 0.0 {
            t_to_p(diff / se, df)?
        } else if diff == 0.0 {
            1.0
        } else {
            0.0
        };
        pvalues.push(pval);
    }
    PValueSet::new(cat.levels().to_vec(), pvalues)
}

fn subgroup_report(
    tests: SubgroupTests,
    column: &str,
    n_units: usize,
    selection: SelectionResult<f64>,
    knockoff_w: Option<&[f64]>,
) -> SubgroupReport {
    let per_subgroup = (0..tests.pvalues.len())
        .map(|j| SubgroupRow {
            label: tests.pvalues.labels()[j].clone(),
            n_units: tests.n_units[j],
            effect_estimate: tests.ate + tests.effects[j],
            deviation_from_ate: tests.effects[j],
            t_statistic: tests.t_statistics[j],
            p_value: tests.pvalues.pvalues()[j],
            knockoff_w: knockoff_w.map(|w| w[j]),
            selected: selection.selected[j],
        })
        .collect();
    SubgroupReport {
        method: selection.method,
        column: column.to_owned(),
        ate: tests.ate,
        target_q: selection.target_level,
        df_mode: tests.df_mode,
        n_units,
        per_subgroup,
        selection,
        warnings: tests.warnings,
    }
}

/// Tests every subgroup of `column` against the ATE and applies `method` at
/// `level` (α for naive/Bonferroni, q for BH and knockoff).
pub fn analyze_subgroups(
    ds: &ExperimentDataset,
    column: &str,
    method: Method,
    level: f64,
    opts: &AnalysisOptions,
) -> Result<SubgroupReport> {
    let tests = subgroup_pvalues(ds, column, opts.df_mode)?;
    let (selection, w) = match method {
        Method::Naive => (naive_select(&tests.pvalues, level)?, None),
        Method::Bonferroni => (bonferroni_select(&tests.pvalues, level)?, None),
        Method::Bh => (bh_select(&tests.pvalues, level)?, None),
        Method::Knockoff => {
            let sel = subgroup_knockoff(ds, column, level, opts)?;
            let w = sel.evidence.clone();
            (sel, Some(w))
        }
    };
    Ok(subgroup_report(tests, column, ds.len(), selection, w.as_deref()))
}

/// HTE-BH: transformed outcomes, ATE centering, one-hot regression, BH at `q`.
pub fn hte_bh(
    ds: &ExperimentDataset,
    column: &str,
    q: f64,
    opts: &AnalysisOptions,
) -> Result<SubgroupReport> {
    analyze_subgroups(ds, column, Method::Bh, q, opts)
}

/// Knockoff selection over the one-hot subgroup design (no intercept).
pub fn subgroup_knockoff(
    ds: &ExperimentDataset,
    column: &str,
    q: f64,
    opts: &AnalysisOptions,
) -> Result<SelectionResult<f64>> {
    let design = build_subgroup_design::<f64>(ds, column)?;
    if ds.len() < 2 * design.cols() {
        return Err(Error::DimensionError(format!(
            "{} subgroups need at least {} units for knockoffs, got {}",
            design.cols(),
            2 * design.cols(),
            ds.len()
        )));
    }
    let (y, _) = centered_outcomes(ds);
    Ok(knockoff_select(&design, &y, q, opts.seed, opts.lasso)?.0)
}

/// The factor design with the intercept projected out: every other column is
/// centered, which is equivalent to fitting an unpenalized intercept.
pub fn centered_factor_design(
    ds: &ExperimentDataset,
    categorical: &[String],
    continuous: &[String],
) -> Result<DesignMatrix<f64>> {
    let design = build_factor_design::<f64>(ds, categorical, continuous, None)?;
    let keep: Vec<usize> = (0..design.cols())
        .filter(|&j| design.column_labels()[j] != INTERCEPT_LABEL)
        .collect();
    if keep.is_empty() {
        return Err(Error::ConfigError(
            "factor analysis needs a categorical with at least two levels or a continuous column"
                .into(),
        ));
    }
    let n = design.rows();
    let columns: Vec<Vec<f64>> = keep
        .iter()
        .map(|&j| {
            let col = design.matrix().column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            col.iter().map(|v| v - mean).collect()
        })
        .collect();
    DesignMatrix::with_sources(
        DenseMatrix::from_columns(n, &columns)?,
        keep.iter().map(|&j| design.column_labels()[j].clone()).collect(),
        keep.iter().map(|&j| design.column_sources()[j].clone()).collect(),
    )
}

fn centered_response(ds: &ExperimentDataset) -> (Vec<f64>, f64) {
    let (mut y, ate) = centered_outcomes(ds);
    // nonzero only when the assignment probability was overridden
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter_mut().for_each(|v| *v -= mean);
    (y, ate)
}

/// OLS p-values for every non-intercept column of the factor design.
///
/// Used as the input to BH-style rules on non-orthogonal designs, where the
/// p-values are dependent.
pub fn factor_pvalues(
    ds: &ExperimentDataset,
    categorical: &[String],
    continuous: &[String],
) -> Result<PValueSet<f64>> {
    let design = centered_factor_design(ds, categorical, continuous)?;
    let (y, _) = centered_response(ds);
    let x = design.matrix();
    let (n, p) = (x.rows(), x.cols());
    // the projected-out intercept costs one more degree of freedom
    if n <= p + 1 {
        return Err(Error::DimensionError(format!(
            "{p} regressors need more than {} units",
            p + 1
        )));
    }
    let gram = x.gram();
    let l = cholesky(&gram)?;
    let beta = cholesky_solve(&l, &x.t_matvec(&y)?);
    let fitted = x.matvec(&beta)?;
    let rss: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
    let df = (n - p - 1) as f64;
    let sigma = (rss / df).sqrt();
    let inv = spd_inverse(&gram)?;
    let pvalues = (0..p)
        .map(|j| {
            let se = sigma * inv[(j, j)].sqrt();
            if se > 0.0 {
                t_to_p(beta[j] / se, df)
            } else {
                Ok(if beta[j] == 0.0 { 1.0 } else { 0.0 })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    PValueSet::new(design.column_labels().to_vec(), pvalues)
}

/// HTE-Knockoff: factor design with reference-level encoding (at most one
/// categorical), centered transformed outcomes, knockoff selection at `q`.
pub fn hte_knockoff(
    ds: &ExperimentDataset,
    categorical: &[String],
    continuous: &[String],
    q: f64,
    opts: &AnalysisOptions,
) -> Result<FactorReport> {
    let design = centered_factor_design(ds, categorical, continuous)?;
    if ds.len() < 2 * design.cols() {
        return Err(Error::DimensionError(format!(
            "encoded design has {} columns, more than n/2 = {}",
            design.cols(),
            ds.len() / 2
        )));
    }
    let (y, ate) = centered_response(ds);
    let (selection, artifacts) = knockoff_select(&design, &y, q, opts.seed, opts.lasso)?;

    let per_column: Vec<FactorRow> = (0..design.cols())
        .map(|j| FactorRow {
            label: design.column_labels()[j].clone(),
            source: design.column_sources()[j].clone(),
            w: artifacts.w[j],
            selected: selection.selected[j],
        })
        .collect();
    let mut heterogeneous_factors: Vec<String> = per_column
        .iter()
        .filter(|r| r.selected)
        .map(|r| r.source.clone())
        .collect();
    heterogeneous_factors.dedup();

    let mut notes = Vec::new();
    if let Some(cat) = categorical.first() {
        let reference = ds
            .categorical(cat)?
            .levels()
            .iter()
            .find(|l| !per_column.iter().any(|r| r.label == format!("{cat}={l}")))
            .cloned()
            .unwrap_or_default();
        notes.push(format!(
            "levels of `{cat}` are measured against reference level `{reference}`; \
             `{cat}` is a heterogeneous factor iff any non-reference level is selected"
        ));
    }
    if artifacts.threshold.is_infinite() {
        notes.push(format!(
            "no knockoff threshold reaches q = {q}; nothing is selected"
        ));
    }
    Ok(FactorReport {
        method: Method::Knockoff,
        ate,
        target_q: q,
        seed: opts.seed,
        n_units: ds.len(),
        per_column,
        threshold: artifacts.threshold,
        heterogeneous_factors,
        interpretation_notes: notes,
    })
}
