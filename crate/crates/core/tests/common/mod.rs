#![allow(dead_code)]

use std::collections::BTreeMap;

use hte_guard::data::{CategoricalColumn, Covariate, ExperimentDataset};
use hte_guard::numerics::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DenseMatrix<f64> {
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    DenseMatrix::from_columns(n, &cols).unwrap()
}

/// Gaussian design with a shared factor so columns are correlated.
pub fn correlated_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize, weight: f64) -> DenseMatrix<f64> {
    let shared: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|_| {
            shared
                .iter()
                .map(|s| weight * s + normal(rng))
                .collect()
        })
        .collect();
    DenseMatrix::from_columns(n, &cols).unwrap()
}

pub fn random_spd(rng: &mut ChaCha8Rng, p: usize, rank: usize) -> DenseMatrix<f64> {
    gaussian_matrix(rng, rank, p).gram()
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Dataset with a single categorical `group`; `effects[g]` is added to treated
/// units of group `g`. Half of each group is treated.
pub fn grouped_dataset(
    rng: &mut ChaCha8Rng,
    per_group: usize,
    effects: &[f64],
    baseline: f64,
) -> ExperimentDataset {
    let mut groups = Vec::new();
    let mut treatment = Vec::new();
    let mut outcome = Vec::new();
    for (g, &tau) in effects.iter().enumerate() {
        for i in 0..per_group {
            let t = i % 2 == 0;
            groups.push(format!("g{g:02}"));
            treatment.push(t);
            outcome.push(baseline + normal(rng) + if t { tau } else { 0.0 });
        }
    }
    let n = groups.len();
    let mut cov = BTreeMap::new();
    cov.insert(
        "group".to_owned(),
        Covariate::Categorical(CategoricalColumn::from_values(&groups)),
    );
    ExperimentDataset::new(
        (0..n).map(|i| format!("u{i}")).collect(),
        treatment,
        outcome,
        cov,
        Some(0.5),
    )
    .unwrap()
}

/// Random balanced assignment of `n` units.
pub fn balanced_assignment(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    let mut t: Vec<bool> = (0..n).map(|i| i < n / 2).collect();
    for i in (1..n).rev() {
        t.swap(i, rng.random_range(0..=i));
    }
    t
}
