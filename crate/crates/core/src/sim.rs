//! Synthetic experiments and Monte-Carlo estimates of FDR and power.
//!
//! Every replicate draws from its own RNG stream derived from
//! `(scenario seed, replicate)`, so results do not depend on how replicates are
//! scheduled across threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CategoricalColumn, Covariate, ExperimentDataset};
use crate::error::{Error, Result};
use crate::mht::{bh_select, bonferroni_select, naive_select, Method, PValueSet, SelectionResult};
use crate::numerics::LassoPath;
use crate::pipelines::{
    factor_pvalues, hte_knockoff, subgroup_knockoff, subgroup_pvalues, two_sample_pvalues,
    AnalysisOptions, DfMode,
};

/// Name of the categorical covariate in subgroup regimes.
pub const GROUP_COLUMN: &str = "group";

/// Weight of the point mass at zero in the zero-inflated noise.
pub const ZERO_INFLATION: f64 = 0.7;
/// Degrees of freedom of the heavy-tailed component of the zero-inflated noise.
pub const HEAVY_TAIL_DF: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Equal-size one-hot subgroups, Gaussian outcome noise.
    OrthogonalGaussian,
    /// One-hot subgroups, zero-inflated heavy-tailed outcome noise.
    NonGaussianTo,
    /// AR(1)-correlated continuous covariates with linear effect modification.
    NonOrthogonal,
}

impl Regime {
    pub const ALL: [Regime; 3] = [
        Regime::OrthogonalGaussian,
        Regime::NonGaussianTo,
        Regime::NonOrthogonal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::OrthogonalGaussian => "orthogonal-gaussian",
            Regime::NonGaussianTo => "non-gaussian-to",
            Regime::NonOrthogonal => "non-orthogonal",
        }
    }

    pub fn default_noise(self) -> Noise {
        match self {
            Regime::NonGaussianTo => Noise::ZeroInflatedT,
            _ => Noise::Gaussian,
        }
    }

    fn is_subgroup(self) -> bool {
        !matches!(self, Regime::NonOrthogonal)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| {
                Error::ConfigError(format!(
                    "unknown regime `{s}` (expected orthogonal-gaussian, non-gaussian-to or non-orthogonal)"
                ))
            })
    }
}

/// Outcome noise distribution, unit variance in both cases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Noise {
    Gaussian,
    /// Zero with probability 0.7, otherwise a scaled Student-t with 3 df.
    ZeroInflatedT,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub regime: Regime,
    pub n_units: usize,
    pub n_groups_or_vars: usize,
    pub n_true_signals: usize,
    pub signal_amplitude: f64,
    /// AR(1) correlation between adjacent covariates (non-orthogonal regime only).
    pub correlation: f64,
    pub noise: Noise,
    pub seed: u64,
}

impl Scenario {
    /// Desk-scale defaults: n = 3000, p = 30, k = 10, unit noise, ρ = 0.5 for
    /// the non-orthogonal regime.
    pub fn new(regime: Regime) -> Self {
        Self {
            regime,
            n_units: 3000,
            n_groups_or_vars: 30,
            n_true_signals: 10,
            signal_amplitude: 1.0,
            correlation: if regime == Regime::NonOrthogonal { 0.5 } else { 0.0 },
            noise: regime.default_noise(),
            seed: 0,
        }
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.signal_amplitude = amplitude;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p, k) = (self.n_units, self.n_groups_or_vars, self.n_true_signals);
        if p == 0 {
            return Err(Error::ConfigError("scenario needs at least one group or variable".into()));
        }
        if k > p {
            return Err(Error::ConfigError(format!("{k} true signals exceed p = {p}")));
        }
        if self.regime.is_subgroup() {
            if n < 4 * p {
                return Err(Error::ConfigError(format!(
                    "subgroup regimes need at least 4 units per group (n = {n}, p = {p})"
                )));
            }
        } else if n < 2 * p + 2 {
            return Err(Error::ConfigError(format!("need n > 2p, got n = {n}, p = {p}")));
        }
        if !(0.0..1.0).contains(&self.correlation) {
            return Err(Error::ConfigError(format!(
                "correlation must lie in [0, 1), got {}",
                self.correlation
            )));
        }
        if !self.signal_amplitude.is_finite() {
            return Err(Error::ConfigError("signal amplitude must be finite".into()));
        }
        Ok(())
    }

    /// Labels of all hypotheses in this scenario.
    pub fn labels(&self) -> Vec<String> {
        let width = self.n_groups_or_vars.saturating_sub(1).to_string().len().max(2);
        let prefix = if self.regime.is_subgroup() { "g" } else { "x" };
        (0..self.n_groups_or_vars)
            .map(|j| format!("{prefix}{j:0width$}"))
            .collect()
    }

    /// Indices of the planted signals, spread evenly over the labels.
    pub fn signal_indices(&self) -> Vec<usize> {
        let (p, k) = (self.n_groups_or_vars, self.n_true_signals);
        (0..k).map(|r| r * p / k).collect()
    }
}

/// Geometric grid of `count` amplitudes from `lo` to `hi`.
pub fn amplitude_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).powf(1.0 / (count - 1) as f64);
    (0..count).map(|i| lo * ratio.powi(i as i32)).collect()
}

/// 8 amplitudes, geometric in `[0.05, 2.0]`.
pub fn default_amplitudes() -> Vec<f64> {
    amplitude_grid(0.05, 2.0, 8)
}

/// One scenario per amplitude, otherwise identical to `base`.
pub fn sweep(base: Scenario, amplitudes: &[f64]) -> Vec<Scenario> {
    amplitudes.iter().map(|&a| base.with_amplitude(a)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub true_signal_labels: BTreeSet<String>,
    /// Individual treatment effect of every unit.
    pub per_unit_tau: Vec<f64>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// RNG seed for one `(seed, replicate)` stream.
pub fn stream_seed(seed: u64, replicate: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ replicate.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

fn draw_noise(noise: Noise, rng: &mut ChaCha8Rng, heavy: &StudentT<f64>) -> f64 {
    match noise {
        Noise::Gaussian => StandardNormal.sample(rng),
        Noise::ZeroInflatedT => {
            if rng.random::<f64>() < ZERO_INFLATION {
                0.0
            } else {
                // unit overall variance: (1 − w)·c²·df/(df − 2) = 1
                let var_t = HEAVY_TAIL_DF / (HEAVY_TAIL_DF - 2.0);
                let c = (1.0 / ((1.0 - ZERO_INFLATION) * var_t)).sqrt();
                c * heavy.sample(rng)
            }
        }
    }
}

/// Draws one synthetic experiment with assignment probability 0.5.
///
/// Planted signals alternate in sign (`+a, −a, +a, …`) so that with an even
/// number of signals the average effect is unchanged and every unplanted
/// subgroup or variable has effect equal to the ATE.
pub fn generate(scenario: &Scenario, replicate: u64) -> Result<(ExperimentDataset, GroundTruth)> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(scenario.seed, replicate));
    let heavy = StudentT::new(HEAVY_TAIL_DF).expect("valid df");
    let (n, p) = (scenario.n_units, scenario.n_groups_or_vars);
    let labels = scenario.labels();
    let signals = scenario.signal_indices();
    let mut effect = vec![0.0; p];
    for (r, &j) in signals.iter().enumerate() {
        effect[j] = if r % 2 == 0 { 1.0 } else { -1.0 } * scenario.signal_amplitude;
    }
    let truth_labels: BTreeSet<String> = signals.iter().map(|&j| labels[j].clone()).collect();

    let mut covariates = BTreeMap::new();
    let mut treatment = vec![false; n];
    let mut tau = vec![0.0; n];

    if scenario.regime.is_subgroup() {
        // contiguous, near-equal blocks; half of each block treated
        let mut groups = Vec::with_capacity(n);
        let mut start = 0;
        for g in 0..p {
            let size = n / p + usize::from(g < n % p);
            let mut arms: Vec<bool> = (0..size).map(|i| i < (size + (g % 2 == 0) as usize) / 2).collect();
            arms.shuffle(&mut rng);
            for (i, t) in arms.into_iter().enumerate() {
                treatment[start + i] = t;
                tau[start + i] = effect[g];
                groups.push(labels[g].as_str());
            }
            start += size;
        }
        covariates.insert(
            GROUP_COLUMN.to_owned(),
            Covariate::Categorical(CategoricalColumn::from_values(&groups)),
        );
    } else {
        let rho = scenario.correlation;
        let innovation = (1.0 - rho * rho).sqrt();
        let mut columns = vec![vec![0.0; n]; p];
        for i in 0..n {
            let mut prev: f64 = StandardNormal.sample(&mut rng);
            columns[0][i] = prev;
            for col in columns.iter_mut().skip(1) {
                let e: f64 = StandardNormal.sample(&mut rng);
                prev = rho * prev + innovation * e;
                col[i] = prev;
            }
            tau[i] = signals.iter().map(|&j| effect[j] * columns[j][i]).sum();
        }
        let mut arms: Vec<bool> = (0..n).map(|i| i < n / 2).collect();
        arms.shuffle(&mut rng);
        treatment = arms;
        for (label, col) in labels.iter().zip(columns) {
            covariates.insert(label.clone(), Covariate::Continuous(col));
        }
    }

    let outcome: Vec<f64> = (0..n)
        .map(|i| {
            let base = draw_noise(scenario.noise, &mut rng, &heavy);
            if treatment[i] {
                base + tau[i]
            } else {
                base
            }
        })
        .collect();
    let ids = (0..n).map(|i| format!("u{i}")).collect();
    let ds = ExperimentDataset::new(ids, treatment, outcome, covariates, Some(0.5))?;
    Ok((
        ds,
        GroundTruth {
            true_signal_labels: truth_labels,
            per_unit_tau: tau,
        },
    ))
}

/// Settings shared by every scenario in an evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub methods: Vec<Method>,
    /// FDR level for BH and knockoff; also the FWER level for Bonferroni.
    pub q: f64,
    /// Per-test level of the naive approach.
    pub alpha: f64,
    pub replicates: usize,
    pub df_mode: DfMode,
    pub lasso: LassoPath,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            q: 0.2,
            alpha: 0.05,
            replicates: 100,
            df_mode: DfMode::Pooled,
            lasso: LassoPath::default(),
            threads: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdrPowerCurve {
    pub method: Method,
    pub regime: Regime,
    pub amplitudes: Vec<f64>,
    pub fdr: Vec<f64>,
    pub power: Vec<f64>,
    pub stderr_fdr: Vec<f64>,
    pub stderr_power: Vec<f64>,
    pub replicates: usize,
}

/// False discovery proportion and true positive proportion of one selection.
pub fn selection_metrics(selected: &BTreeSet<String>, truth: &BTreeSet<String>) -> (f64, f64) {
    let true_pos = selected.intersection(truth).count();
    let false_pos = selected.len() - true_pos;
    let fdp = false_pos as f64 / selected.len().max(1) as f64;
    let power = true_pos as f64 / truth.len().max(1) as f64;
    (fdp, power)
}

fn select_on(pv: &PValueSet<f64>, method: Method, cfg: &EvalConfig) -> Result<SelectionResult<f64>> {
    match method {
        Method::Naive => naive_select(pv, cfg.alpha),
        Method::Bonferroni => bonferroni_select(pv, cfg.q),
        Method::Bh => bh_select(pv, cfg.q),
        Method::Knockoff => unreachable!("knockoff does not use p-values"),
    }
}

/// Selections of every configured method on one replicate.
pub fn run_replicate(
    scenario: &Scenario,
    replicate: u64,
    cfg: &EvalConfig,
) -> Result<(GroundTruth, Vec<BTreeSet<String>>)> {
    let (ds, truth) = generate(scenario, replicate)?;
    let opts = AnalysisOptions {
        df_mode: cfg.df_mode,
        lasso: cfg.lasso,
        seed: stream_seed(scenario.seed ^ 0x6b6e_6f63_6b6f_6666, replicate),
    };
    let labels = scenario.labels();
    let needs_pvalues = cfg.methods.iter().any(|&m| m != Method::Knockoff);
    let pvalues = if !needs_pvalues {
        None
    } else if scenario.regime.is_subgroup() {
        Some(subgroup_pvalues(&ds, GROUP_COLUMN, cfg.df_mode)?.pvalues)
    } else {
        Some(factor_pvalues(&ds, &[], &labels)?)
    };
    let selections = cfg
        .methods
        .iter()
        .map(|&method| -> Result<BTreeSet<String>> {
            if method == Method::Knockoff {
                if scenario.regime.is_subgroup() {
                    Ok(subgroup_knockoff(&ds, GROUP_COLUMN, cfg.q, &opts)?.selected_set())
                } else {
                    let report = hte_knockoff(&ds, &[], &labels, cfg.q, &opts)?;
                    Ok(report
                        .per_column
                        .into_iter()
                        .filter(|r| r.selected)
                        .map(|r| r.label)
                        .collect())
                }
            } else {
                let pv = pvalues.as_ref().expect("p-values computed");
                Ok(select_on(pv, method, cfg)?.selected_set())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((truth, selections))
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

fn with_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::ConfigError(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Empirical FDR and power of every method for every scenario.
///
/// Returns one curve per `(regime, method)`; amplitudes appear in the order
/// the scenarios were given.
pub fn evaluate(scenarios: &[Scenario], cfg: &EvalConfig) -> Result<Vec<FdrPowerCurve>> {
    if cfg.replicates == 0 {
        return Err(Error::ConfigError("need at least one replicate".into()));
    }
    if cfg.methods.is_empty() {
        return Err(Error::ConfigError("no methods to evaluate".into()));
    }
    for s in scenarios {
        s.validate()?;
    }
    // per scenario, per method: (mean fdp, se, mean power, se)
    let summaries: Vec<Vec<(f64, f64, f64, f64)>> = with_pool(cfg.threads, || {
        scenarios
            .iter()
            .map(|scenario| {
                let per_rep = (0..cfg.replicates as u64)
                    .into_par_iter()
                    .map(|r| -> Result<Vec<(f64, f64)>> {
                        let (truth, selections) = run_replicate(scenario, r, cfg)?;
                        Ok(selections
                            .iter()
                            .map(|s| selection_metrics(s, &truth.true_signal_labels))
                            .collect())
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((0..cfg.methods.len())
                    .map(|m| {
                        let fdp: Vec<f64> = per_rep.iter().map(|r| r[m].0).collect();
                        let pow: Vec<f64> = per_rep.iter().map(|r| r[m].1).collect();
                        let (f, fse) = mean_and_se(&fdp);
                        let (pw, pse) = mean_and_se(&pow);
                        (f, fse, pw, pse)
                    })
                    .collect())
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut regimes: Vec<Regime> = Vec::new();
    for s in scenarios {
        if !regimes.contains(&s.regime) {
            regimes.push(s.regime);
        }
    }
    let mut curves = Vec::new();
    for regime in regimes {
        for (m, &method) in cfg.methods.iter().enumerate() {
            let mut curve = FdrPowerCurve {
                method,
                regime,
                amplitudes: Vec::new(),
                fdr: Vec::new(),
                power: Vec::new(),
                stderr_fdr: Vec::new(),
                stderr_power: Vec::new(),
                replicates: cfg.replicates,
            };
            for (s, summary) in scenarios.iter().zip(&summaries) {
                if s.regime != regime {
                    continue;
                }
                let (f, fse, pw, pse) = summary[m];
                curve.amplitudes.push(s.signal_amplitude);
                curve.fdr.push(f);
                curve.stderr_fdr.push(fse);
                curve.power.push(pw);
                curve.stderr_power.push(pse);
            }
            curves.push(curve);
        }
    }
    Ok(curves)
}

pub const CURVE_CSV_HEADER: [&str; 8] = [
    "method",
    "regime",
    "amplitude",
    "fdr",
    "fdr_se",
    "power",
    "power_se",
    "replicates",
];

/// One row per `(method, amplitude)`.
pub fn write_curves_csv(curves: &[FdrPowerCurve], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_owned(),
            source,
        },
        other => Error::ConfigError(format!("{other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(CURVE_CSV_HEADER).map_err(err)?;
    for c in curves {
        for i in 0..c.amplitudes.len() {
            w.write_record([
                c.method.to_string(),
                c.regime.to_string(),
                c.amplitudes[i].to_string(),
                c.fdr[i].to_string(),
                c.stderr_fdr[i].to_string(),
                c.power[i].to_string(),
                c.stderr_power[i].to_string(),
                c.replicates.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

/// Null-subgroup demonstration of the multiple testing problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveDemo {
    pub n_subgroups: usize,
    pub replicates: usize,
    pub alpha: f64,
    pub q: f64,
    /// Selections in the first replicate.
    pub first_naive: Vec<String>,
    pub first_bh: Vec<String>,
    pub mean_naive_selections: f64,
    pub any_naive_fraction: f64,
    pub mean_bh_selections: f64,
    pub any_bh_fraction: f64,
}

/// Draws `replicates` experiments with `n_subgroups` null subgroups, runs a
/// per-subgroup two-sample t-test, and compares uncorrected selection at
/// `alpha` with BH at `q`.
pub fn demo_naive(
    seed: u64,
    n_subgroups: usize,
    units_per_subgroup: usize,
    replicates: usize,
    alpha: f64,
    q: f64,
) -> Result<NaiveDemo> {
    if replicates == 0 {
        return Err(Error::ConfigError("need at least one replicate".into()));
    }
    let scenario = Scenario {
        regime: Regime::OrthogonalGaussian,
        n_units: n_subgroups * units_per_subgroup,
        n_groups_or_vars: n_subgroups,
        n_true_signals: 0,
        signal_amplitude: 0.0,
        correlation: 0.0,
        noise: Noise::Gaussian,
        seed,
    };
    let per_rep = (0..replicates as u64)
        .into_par_iter()
        .map(|r| -> Result<(Vec<String>, Vec<String>)> {
            let (ds, _) = generate(&scenario, r)?;
            let pv = two_sample_pvalues(&ds, GROUP_COLUMN)?;
            let naive = naive_select(&pv, alpha)?;
            let bh = bh_select(&pv, q)?;
            let owned = |s: &SelectionResult<f64>| {
                s.selected_labels().into_iter().map(str::to_owned).collect()
            };
            Ok((owned(&naive), owned(&bh)))
        })
        .collect::<Result<Vec<_>>>()?;
    let r = replicates as f64;
    let naive_counts: Vec<usize> = per_rep.iter().map(|x| x.0.len()).collect();
    let bh_counts: Vec<usize> = per_rep.iter().map(|x| x.1.len()).collect();
    let mean = |c: &[usize]| c.iter().sum::<usize>() as f64 / r;
    let any = |c: &[usize]| c.iter().filter(|&&k| k > 0).count() as f64 / r;
    Ok(NaiveDemo {
        n_subgroups,
        replicates,
        alpha,
        q,
        first_naive: per_rep[0].0.clone(),
        first_bh: per_rep[0].1.clone(),
        mean_naive_selections: mean(&naive_counts),
        any_naive_fraction: any(&naive_counts),
        mean_bh_selections: mean(&bh_counts),
        any_bh_fraction: any(&bh_counts),
    })
}
