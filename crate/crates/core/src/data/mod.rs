//! Experiment data, transformed outcomes and design-matrix construction.

mod csv_io;
mod design;

use std::collections::BTreeMap;

pub use csv_io::{load_csv, load_csv_with, write_csv};
pub use design::{
    build_factor_design, build_subgroup_design, subgroup_column, transformed_design,
    DesignMatrix, INTERCEPT_LABEL,
};

use crate::error::{Error, Result};

/// Column names every experiment table must carry.
pub const UNIT_ID: &str = "unit_id";
pub const TREATMENT: &str = "treatment";
pub const OUTCOME: &str = "outcome";

/// One experimental unit, as a row.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitRecord {
    pub unit_id: String,
    pub treatment: bool,
    pub outcome: f64,
    pub categorical_covariates: BTreeMap<String, String>,
    pub continuous_covariates: BTreeMap<String, f64>,
}

/// A categorical covariate stored as codes into its sorted level list.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalColumn {
    levels: Vec<String>,
    codes: Vec<u32>,
}

impl CategoricalColumn {
    pub fn from_values<S: AsRef<str>>(values: &[S]) -> Self {
        let mut levels: Vec<String> = values.iter().map(|v| v.as_ref().to_owned()).collect();
        levels.sort();
        levels.dedup();
        let index: BTreeMap<&str, u32> = levels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i as u32))
            .collect();
        let codes = values.iter().map(|v| index[v.as_ref()]).collect();
        Self { levels, codes }
    }

    /// Level names in lexicographic order.
    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    /// Per-unit index into [`levels`](Self::levels).
    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn value(&self, unit: usize) -> &str {
        &self.levels[self.codes[unit] as usize]
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.levels.len()];
        for &c in &self.codes {
            counts[c as usize] += 1;
        }
        counts
    }

    fn len(&self) -> usize {
        self.codes.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Covariate {
    Categorical(CategoricalColumn),
    Continuous(Vec<f64>),
}

impl Covariate {
    fn len(&self) -> usize {
        match self {
            Covariate::Categorical(c) => c.len(),
            Covariate::Continuous(v) => v.len(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Covariate::Categorical(_) => "categorical",
            Covariate::Continuous(_) => "continuous",
        }
    }
}

/// Unit-level experiment data plus the treatment assignment probability.
///
/// Stored column-wise; [`ExperimentDataset::unit`] reassembles a row.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentDataset {
    unit_ids: Vec<String>,
    treatment: Vec<bool>,
    outcome: Vec<f64>,
    covariates: BTreeMap<String, Covariate>,
    assignment_probability: f64,
}

impl ExperimentDataset {
    /// Validates and assembles a dataset. With `assignment_probability = None`
    /// the empirical treated fraction is used.
    pub fn new(
        unit_ids: Vec<String>,
        treatment: Vec<bool>,
        outcome: Vec<f64>,
        covariates: BTreeMap<String, Covariate>,
        assignment_probability: Option<f64>,
    ) -> Result<Self> {
        let n = treatment.len();
        if unit_ids.len() != n || outcome.len() != n {
            return Err(Error::InvalidDataset(format!(
                "column lengths differ: {} ids, {} treatments, {} outcomes",
                unit_ids.len(),
                n,
                outcome.len()
            )));
        }
        for (name, cov) in &covariates {
            if [UNIT_ID, TREATMENT, OUTCOME].contains(&name.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "covariate name `{name}` is reserved"
                )));
            }
            if cov.len() != n {
                return Err(Error::InvalidDataset(format!(
                    "covariate `{name}` has {} values for {n} units",
                    cov.len()
                )));
            }
            if let Covariate::Continuous(v) = cov {
                if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::InvalidDataset(format!(
                        "covariate `{name}` is not finite at unit {i}"
                    )));
                }
            }
        }
        if let Some(i) = outcome.iter().position(|y| !y.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "outcome is not finite at unit {i}"
            )));
        }
        let treated = treatment.iter().filter(|&&t| t).count();
        if treated == 0 || treated == n {
            return Err(Error::InvalidDataset(format!(
                "need at least one treated and one control unit ({treated} of {n} treated)"
            )));
        }
        let p = assignment_probability.unwrap_or(treated as f64 / n as f64);
        check_probability(p)?;
        Ok(Self {
            unit_ids,
            treatment,
            outcome,
            covariates,
            assignment_probability: p,
        })
    }

    /// Builds a dataset from rows. Every unit must carry the same covariate names.
    pub fn from_units(units: Vec<UnitRecord>, assignment_probability: Option<f64>) -> Result<Self> {
        let first = units.first().ok_or_else(|| Error::InvalidDataset("no units".into()))?;
        let cat_names: Vec<String> = first.categorical_covariates.keys().cloned().collect();
        let cont_names: Vec<String> = first.continuous_covariates.keys().cloned().collect();
        let mut cat_values: Vec<Vec<String>> = vec![Vec::with_capacity(units.len()); cat_names.len()];
        let mut cont_values: Vec<Vec<f64>> = vec![Vec::with_capacity(units.len()); cont_names.len()];
        let mut ids = Vec::with_capacity(units.len());
        let mut treatment = Vec::with_capacity(units.len());
        let mut outcome = Vec::with_capacity(units.len());
        for (i, u) in units.into_iter().enumerate() {
            let same_keys = u.categorical_covariates.keys().eq(cat_names.iter())
                && u.continuous_covariates.keys().eq(cont_names.iter());
            if !same_keys {
                return Err(Error::InvalidDataset(format!(
                    "unit {i} (`{}`) has a different covariate set",
                    u.unit_id
                )));
            }
            for (slot, v) in cat_values.iter_mut().zip(u.categorical_covariates.into_values()) {
                slot.push(v);
            }
            for (slot, v) in cont_values.iter_mut().zip(u.continuous_covariates.into_values()) {
                slot.push(v);
            }
            ids.push(u.unit_id);
            treatment.push(u.treatment);
            outcome.push(u.outcome);
        }
        let mut covariates = BTreeMap::new();
        for (name, values) in cat_names.into_iter().zip(cat_values) {
            covariates.insert(
                name,
                Covariate::Categorical(CategoricalColumn::from_values(&values)),
            );
        }
        for (name, values) in cont_names.into_iter().zip(cont_values) {
            if covariates.insert(name.clone(), Covariate::Continuous(values)).is_some() {
                return Err(Error::InvalidDataset(format!(
                    "`{name}` is both categorical and continuous"
                )));
            }
        }
        Self::new(ids, treatment, outcome, covariates, assignment_probability)
    }

    pub fn len(&self) -> usize {
        self.treatment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.treatment.is_empty()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn treatment(&self) -> &[bool] {
        &self.treatment
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn assignment_probability(&self) -> f64 {
        self.assignment_probability
    }

    pub fn treated_fraction(&self) -> f64 {
        self.treatment.iter().filter(|&&t| t).count() as f64 / self.len() as f64
    }

    /// Same data with a different assignment probability.
    pub fn with_assignment_probability(mut self, p: f64) -> Result<Self> {
        check_probability(p)?;
        self.assignment_probability = p;
        Ok(self)
    }

    pub fn covariates(&self) -> &BTreeMap<String, Covariate> {
        &self.covariates
    }

    pub fn covariate(&self, name: &str) -> Result<&Covariate> {
        self.covariates
            .get(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_owned()))
    }

    pub fn categorical(&self, name: &str) -> Result<&CategoricalColumn> {
        match self.covariate(name)? {
            Covariate::Categorical(c) => Ok(c),
            other => Err(Error::WrongColumnType {
                column: name.to_owned(),
                expected: "categorical",
                actual: other.kind(),
            }),
        }
    }

    pub fn continuous(&self, name: &str) -> Result<&[f64]> {
        match self.covariate(name)? {
            Covariate::Continuous(v) => Ok(v),
            other => Err(Error::WrongColumnType {
                column: name.to_owned(),
                expected: "continuous",
                actual: other.kind(),
            }),
        }
    }

    pub fn unit(&self, i: usize) -> UnitRecord {
        let mut categorical_covariates = BTreeMap::new();
        let mut continuous_covariates = BTreeMap::new();
        for (name, cov) in &self.covariates {
            match cov {
                Covariate::Categorical(c) => {
                    categorical_covariates.insert(name.clone(), c.value(i).to_owned());
                }
                Covariate::Continuous(v) => {
                    continuous_covariates.insert(name.clone(), v[i]);
                }
            }
        }
        UnitRecord {
            unit_id: self.unit_ids[i].clone(),
            treatment: self.treatment[i],
            outcome: self.outcome[i],
            categorical_covariates,
            continuous_covariates,
        }
    }
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::ConfigError(format!(
            "assignment probability must lie strictly inside (0, 1), got {p}"
        )))
    }
}

/// Difference of treated and control outcome means.
pub fn estimate_ate(ds: &ExperimentDataset) -> f64 {
    let (mut sum_t, mut n_t, mut sum_c, mut n_c) = (0.0, 0usize, 0.0, 0usize);
    for (&t, &y) in ds.treatment.iter().zip(&ds.outcome) {
        if t {
            sum_t += y;
            n_t += 1;
        } else {
            sum_c += y;
            n_c += 1;
        }
    }
    sum_t / n_t as f64 - sum_c / n_c as f64
}

/// `Y*_i = Y_i · (T_i − p) / (p(1 − p))`, in dataset order.
pub fn transformed_outcomes(ds: &ExperimentDataset) -> Vec<f64> {
    let p = ds.assignment_probability;
    let denom = p * (1.0 - p);
    ds.treatment
        .iter()
        .zip(&ds.outcome)
        .map(|(&t, &y)| {
            let t = if t { 1.0 } else { 0.0 };
            y * (t - p) / denom
        })
        .collect()
}

/// Subtracts the estimated ATE, treated as a fixed constant.
pub fn center_by_ate(y_star: &[f64], ate: f64) -> Vec<f64> {
    y_star.iter().map(|y| y - ate).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(treated: &[f64], control: &[f64], p: Option<f64>) -> ExperimentDataset {
        let mut ids = Vec::new();
        let mut t = Vec::new();
        let mut y = Vec::new();
        for (i, &v) in treated.iter().enumerate() {
            ids.push(format!("t{i}"));
            t.push(true);
            y.push(v);
        }
        for (i, &v) in control.iter().enumerate() {
            ids.push(format!("c{i}"));
            t.push(false);
            y.push(v);
        }
        ExperimentDataset::new(ids, t, y, BTreeMap::new(), p).unwrap()
    }

    #[test]
    fn ate_examples() {
        assert_eq!(estimate_ate(&dataset(&[2.0, 4.0], &[1.0, 1.0], None)), 2.0);
        assert_eq!(estimate_ate(&dataset(&[3.0, 3.0], &[3.0], None)), 0.0);
        assert_eq!(estimate_ate(&dataset(&[10.0], &[-10.0], None)), 20.0);
    }

    #[test]
    fn transformed_outcome_examples() {
        let ds = dataset(&[3.0], &[3.0], Some(0.5));
        assert_eq!(transformed_outcomes(&ds), vec![6.0, -6.0]);
        let ds = dataset(&[1.0], &[0.0], Some(0.2));
        let y = transformed_outcomes(&ds);
        assert!((y[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn centering_examples() {
        assert_eq!(center_by_ate(&[6.0, -6.0], 0.0), vec![6.0, -6.0]);
        assert_eq!(center_by_ate(&[6.0, -6.0], 2.0), vec![4.0, -8.0]);
        assert_eq!(center_by_ate(&[0.0], -1.0), vec![1.0]);
    }

    #[test]
    fn centered_outcomes_have_zero_mean_at_empirical_p() {
        let ds = dataset(&[2.5, 4.0, -1.0], &[1.0, 0.5, 7.0, 3.0, 2.0], None);
        let y = center_by_ate(&transformed_outcomes(&ds), estimate_ate(&ds));
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!(mean.abs() < 1e-10);
    }

    #[test]
    fn rejects_single_arm_and_bad_probability() {
        let err = ExperimentDataset::new(
            vec!["a".into(), "b".into()],
            vec![true, true],
            vec![1.0, 2.0],
            BTreeMap::new(),
            None,
        );
        assert!(matches!(err, Err(Error::InvalidDataset(_))));
        let ds = dataset(&[1.0], &[2.0], None);
        assert!(ds.clone().with_assignment_probability(1.0).is_err());
        assert_eq!(ds.with_assignment_probability(0.3).unwrap().assignment_probability(), 0.3);
    }

    #[test]
    fn rows_round_trip() {
        let mut cats = BTreeMap::new();
        cats.insert(
            "country".to_owned(),
            Covariate::Categorical(CategoricalColumn::from_values(&["US", "UK", "US"])),
        );
        cats.insert("age".to_owned(), Covariate::Continuous(vec![20.0, 30.0, 40.0]));
        let ds = ExperimentDataset::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![true, false, true],
            vec![1.0, 2.0, 3.0],
            cats,
            None,
        )
        .unwrap();
        let units: Vec<UnitRecord> = (0..ds.len()).map(|i| ds.unit(i)).collect();
        assert_eq!(units[1].categorical_covariates["country"], "UK");
        let rebuilt = ExperimentDataset::from_units(units, None).unwrap();
        assert_eq!(rebuilt, ds);
    }
}
