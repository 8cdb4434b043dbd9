//! Selection rules over p-value lists: naive, Bonferroni, Benjamini-Hochberg.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Naive,
    Bonferroni,
    Bh,
    Knockoff,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Naive, Method::Bonferroni, Method::Bh, Method::Knockoff];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Bonferroni => "bonferroni",
            Method::Bh => "bh",
            Method::Knockoff => "knockoff",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::ConfigError(format!(
                    "unknown method `{s}` (expected naive, bonferroni, bh or knockoff)"
                ))
            })
    }
}

/// Labeled p-values, one per hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct PValueSet<T> {
    labels: Vec<String>,
    pvalues: Vec<T>,
}

impl<T: Real> PValueSet<T> {
    pub fn new(labels: Vec<String>, pvalues: Vec<T>) -> Result<Self> {
        if labels.len() != pvalues.len() {
            return Err(Error::DimensionError(format!(
                "{} labels for {} p-values",
                labels.len(),
                pvalues.len()
            )));
        }
        if let Some((label, p)) = labels
            .iter()
            .zip(&pvalues)
            .find(|(_, &p)| !(p >= T::zero() && p <= T::one()))
        {
            return Err(Error::ConfigError(format!(
                "p-value for `{label}` is {p}, outside [0, 1]"
            )));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::ConfigError(format!("duplicate hypothesis label `{dup}`")));
        }
        Ok(Self { labels, pvalues })
    }

    /// Labels `h0, h1, …` for quick construction.
    pub fn unlabeled(pvalues: Vec<T>) -> Result<Self> {
        let labels = (0..pvalues.len()).map(|i| format!("h{i}")).collect();
        Self::new(labels, pvalues)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn pvalues(&self) -> &[T] {
        &self.pvalues
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Outcome of a selection rule.
///
/// `evidence` holds the p-value (or knockoff statistic `W`) per label, aligned
/// with `labels`. `threshold` is `None` only when BH rejects nothing; the
/// knockoff rule reports `+∞` in that case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct SelectionResult<T> {
    pub method: Method,
    pub labels: Vec<String>,
    pub evidence: Vec<T>,
    pub selected: Vec<bool>,
    pub threshold: Option<T>,
    pub target_level: T,
}

impl<T: Real> SelectionResult<T> {
    pub fn selected_labels(&self) -> Vec<&str> {
        self.labels
            .iter()
            .zip(&self.selected)
            .filter(|(_, &s)| s)
            .map(|(l, _)| l.as_str())
            .collect()
    }

    pub fn selected_set(&self) -> BTreeSet<String> {
        self.selected_labels().into_iter().map(str::to_owned).collect()
    }

    pub fn n_selected(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    pub fn is_selected(&self, label: &str) -> bool {
        self.labels
            .iter()
            .position(|l| l == label)
            .is_some_and(|i| self.selected[i])
    }
}

fn check_level<T: Real>(name: &str, level: T) -> Result<()> {
    if level > T::zero() && level < T::one() {
        Ok(())
    } else {
        Err(Error::ConfigError(format!(
            "{name} must lie strictly inside (0, 1), got {level}"
        )))
    }
}

fn below<T: Real>(pv: &PValueSet<T>, method: Method, cut: T, level: T) -> SelectionResult<T> {
    SelectionResult {
        method,
        labels: pv.labels.clone(),
        evidence: pv.pvalues.clone(),
        selected: pv.pvalues.iter().map(|&p| p < cut).collect(),
        threshold: Some(cut),
        target_level: level,
    }
}

/// Every hypothesis with `p < alpha`, uncorrected.
pub fn naive_select<T: Real>(pv: &PValueSet<T>, alpha: T) -> Result<SelectionResult<T>> {
    check_level("alpha", alpha)?;
    Ok(below(pv, Method::Naive, alpha, alpha))
}

/// Every hypothesis with `p < alpha / m`.
pub fn bonferroni_select<T: Real>(pv: &PValueSet<T>, alpha: T) -> Result<SelectionResult<T>> {
    check_level("alpha", alpha)?;
    if pv.is_empty() {
        return Err(Error::DimensionError("no hypotheses to test".into()));
    }
    let cut = alpha / T::c(pv.len() as f64);
    Ok(below(pv, Method::Bonferroni, cut, alpha))
}

/// Benjamini-Hochberg step-up: with p-values sorted ascending (ties by label),
/// find the largest `k` with `p_(k) ≤ k·q/m` and select the `k` smallest.
pub fn bh_select<T: Real>(pv: &PValueSet<T>, q: T) -> Result<SelectionResult<T>> {
    check_level("q", q)?;
    let m = pv.len();
    if m == 0 {
        return Err(Error::DimensionError("no hypotheses to test".into()));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        pv.pvalues[a]
            .partial_cmp(&pv.pvalues[b])
            .expect("p-values are finite")
            .then_with(|| pv.labels[a].cmp(&pv.labels[b]))
    });
    let m_t = T::c(m as f64);
    let k = (1..=m)
        .rev()
        .find(|&k| pv.pvalues[order[k - 1]] <= T::c(k as f64) * q / m_t)
        .unwrap_or(0);
    let mut selected = vec![false; m];
    for &i in &order[..k] {
        selected[i] = true;
    }
    Ok(SelectionResult {
        method: Method::Bh,
        labels: pv.labels.clone(),
        evidence: pv.pvalues.clone(),
        selected,
        threshold: (k > 0).then(|| T::c(k as f64) * q / m_t),
        target_level: q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(p: &[f64]) -> PValueSet<f64> {
        PValueSet::unlabeled(p.to_vec()).unwrap()
    }

    #[test]
    fn naive_examples() {
        let r = naive_select(&pv(&[0.01, 0.04, 0.30]), 0.05).unwrap();
        assert_eq!(r.selected, vec![true, true, false]);
        let r = naive_select(&pv(&[1.0, 1.0]), 0.05).unwrap();
        assert_eq!(r.n_selected(), 0);
    }

    #[test]
    fn bonferroni_examples() {
        let r = bonferroni_select(&pv(&[0.01, 0.02, 0.30, 0.04]), 0.05).unwrap();
        assert_eq!(r.selected, vec![true, false, false, false]);
        assert_eq!(r.threshold, Some(0.0125));
        let single = pv(&[0.03]);
        assert_eq!(
            bonferroni_select(&single, 0.05).unwrap().selected,
            naive_select(&single, 0.05).unwrap().selected
        );
        assert_eq!(bonferroni_select(&pv(&[0.0; 5]), 0.05).unwrap().n_selected(), 5);
    }

    #[test]
    fn bh_examples() {
        let r = bh_select(&pv(&[0.01, 0.02, 0.30, 0.04]), 0.1).unwrap();
        assert_eq!(r.selected, vec![true, true, false, true]);
        assert!((r.threshold.unwrap() - 0.075).abs() < 1e-15);
        let r = bh_select(&pv(&[1.0, 1.0, 1.0]), 0.1).unwrap();
        assert_eq!(r.n_selected(), 0);
        assert_eq!(r.threshold, None);
        let r = bh_select(&pv(&[0.05]), 0.05).unwrap();
        assert_eq!(r.selected, vec![true]);
    }

    #[test]
    fn validation() {
        assert!(PValueSet::unlabeled(vec![1.2]).is_err());
        assert!(PValueSet::new(vec!["a".into(), "a".into()], vec![0.1, 0.2]).is_err());
        assert!(bh_select(&pv(&[0.1]), 1.5).is_err());
        assert!(naive_select(&pv(&[0.1]), 0.0).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("holm".parse::<Method>().is_err());
    }

    fn pvalue_list() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(
            prop_oneof![0.0f64..=1.0, (0.0f64..0.01), Just(0.05), Just(1.0)],
            1..40,
        )
    }

    proptest! {
        #[test]
        fn nesting(p in pvalue_list(), level in 0.001f64..0.5) {
            let set = pv(&p);
            let bonf = bonferroni_select(&set, level).unwrap().selected_set();
            let bh = bh_select(&set, level).unwrap().selected_set();
            let naive = naive_select(&set, level).unwrap().selected_set();
            prop_assert!(bonf.is_subset(&bh));
            // BH admits p = level exactly (≤) while naive needs p < level
            let naive_or_boundary: BTreeSet<String> = set
                .labels()
                .iter()
                .zip(set.pvalues())
                .filter(|(l, &p)| naive.contains(*l) || p == level)
                .map(|(l, _)| l.clone())
                .collect();
            prop_assert!(bh.is_subset(&naive_or_boundary));
        }

        #[test]
        fn bh_order_invariant(p in pvalue_list(), seed in any::<u64>()) {
            let set = pv(&p);
            let mut idx: Vec<usize> = (0..p.len()).collect();
            let mut s = seed;
            for i in (1..idx.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                idx.swap(i, (s >> 33) as usize % (i + 1));
            }
            let shuffled = PValueSet::new(
                idx.iter().map(|&i| set.labels()[i].clone()).collect(),
                idx.iter().map(|&i| p[i]).collect(),
            ).unwrap();
            prop_assert_eq!(
                bh_select(&set, 0.2).unwrap().selected_set(),
                bh_select(&shuffled, 0.2).unwrap().selected_set()
            );
        }

        #[test]
        fn bh_monotone_in_selected_pvalue(p in pvalue_list(), which in any::<prop::sample::Index>(), shrink in 0.0f64..1.0) {
            let set = pv(&p);
            let before = bh_select(&set, 0.2).unwrap();
            let i = which.index(p.len());
            prop_assume!(before.selected[i]);
            let mut lowered = p.clone();
            lowered[i] *= shrink;
            let after = bh_select(&pv(&lowered), 0.2).unwrap();
            prop_assert!(after.selected[i]);
        }
    }
}
