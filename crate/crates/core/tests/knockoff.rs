mod common;

use hte_guard::data::DesignMatrix;
use hte_guard::knockoff::{
    construct_knockoffs, equi_s, knockoff_select, knockoff_statistics, knockoff_threshold,
    normalize_columns,
};
use hte_guard::numerics::{min_eigenvalue, DenseMatrix, LassoPath};
use proptest::prelude::*;

use common::{correlated_matrix, gaussian_matrix, normal, rng};

#[test]
fn gram_identities_hold_on_correlated_designs() {
    let mut r = rng(1);
    for (trial, &(n, p)) in [(20, 10), (60, 15), (200, 8), (45, 22)].iter().enumerate() {
        let x = normalize_columns(&correlated_matrix(&mut r, n, p, 1.5)).unwrap();
        let sigma = x.gram();
        let s = equi_s(&sigma).unwrap();
        let lmin = min_eigenvalue(&sigma).unwrap();
        assert!(s[0] <= (2.0 * lmin).min(1.0));
        let k = construct_knockoffs(&x, &s, trial as u64).unwrap();
        let (e1, e2) = k.gram_errors();
        assert!(e1 < 1e-6 && e2 < 1e-6, "{e1} {e2}");
    }
}

#[test]
fn knockoffs_are_seed_deterministic() {
    let mut r = rng(2);
    let x = normalize_columns(&gaussian_matrix(&mut r, 40, 6)).unwrap();
    let s = equi_s(&x.gram()).unwrap();
    let a = construct_knockoffs(&x, &s, 7).unwrap();
    let b = construct_knockoffs(&x, &s, 7).unwrap();
    assert_eq!(a.x_knockoff, b.x_knockoff);
}

/// Swapping a column with its knockoff flips the sign of its statistic and
/// leaves the others alone.
#[test]
fn swapping_original_and_knockoff_flips_w() {
    let mut r = rng(3);
    for trial in 0..10 {
        let (n, p) = (80, 6);
        let x = normalize_columns(&gaussian_matrix(&mut r, n, p)).unwrap();
        let s = equi_s(&x.gram()).unwrap();
        let k = construct_knockoffs(&x, &s, trial).unwrap();
        let y: Vec<f64> = (0..n)
            .map(|i| 4.0 * x[(i, 0)] - 3.0 * x[(i, 3)] + normal(&mut r))
            .collect();
        let (w, _) = knockoff_statistics(&k.x_normalized, &k.x_knockoff, &y, LassoPath::default()).unwrap();

        let j = trial as usize % p;
        let mut xs: Vec<Vec<f64>> = (0..p).map(|c| k.x_normalized.column(c).to_vec()).collect();
        let mut ks: Vec<Vec<f64>> = (0..p).map(|c| k.x_knockoff.column(c).to_vec()).collect();
        std::mem::swap(&mut xs[j], &mut ks[j]);
        let (ws, _) = knockoff_statistics(
            &DenseMatrix::from_columns(n, &xs).unwrap(),
            &DenseMatrix::from_columns(n, &ks).unwrap(),
            &y,
            LassoPath::default(),
        )
        .unwrap();
        for c in 0..p {
            let expected = if c == j { -w[c] } else { w[c] };
            assert!((ws[c] - expected).abs() <= 1e-9 * w[c].abs().max(1.0), "trial {trial} col {c}: {} vs {}", ws[c], expected);
        }
    }
}

#[test]
fn null_statistics_have_symmetric_signs() {
    let mut r = rng(4);
    let (mut pos, mut neg) = (0usize, 0usize);
    for trial in 0..150 {
        let (n, p) = (60, 10);
        let x = normalize_columns(&gaussian_matrix(&mut r, n, p)).unwrap();
        let s = equi_s(&x.gram()).unwrap();
        let k = construct_knockoffs(&x, &s, trial).unwrap();
        let y: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let (w, _) = knockoff_statistics(&k.x_normalized, &k.x_knockoff, &y, LassoPath::default()).unwrap();
        pos += w.iter().filter(|&&v| v > 0.0).count();
        neg += w.iter().filter(|&&v| v < 0.0).count();
    }
    let total = (pos + neg) as f64;
    let frac = pos as f64 / total;
    // 4 binomial standard deviations
    assert!((frac - 0.5).abs() < 4.0 * (0.25 / total).sqrt(), "{pos} positive, {neg} negative");
}

#[test]
fn strong_signals_are_selected() {
    let mut r = rng(5);
    let (n, p) = (300, 20);
    let x = gaussian_matrix(&mut r, n, p);
    let xn = normalize_columns(&x).unwrap();
    let truth = [0usize, 4, 8, 12, 16, 19];
    let y: Vec<f64> = (0..n)
        .map(|i| truth.iter().map(|&j| 6.0 * xn[(i, j)]).sum::<f64>() + 0.3 * normal(&mut r))
        .collect();
    let labels = (0..p).map(|j| format!("x{j}")).collect();
    let design = DesignMatrix::new(x, labels).unwrap();
    let (sel, art) = knockoff_select(&design, &y, 0.2, 0, LassoPath::default()).unwrap();
    for &j in &truth {
        assert!(sel.selected[j], "x{j} missed; W = {:?}", art.w);
    }
    assert!(art.threshold.is_finite());
}

fn w_vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![(-5i32..=5).prop_map(|v| v as f64), -3.0f64..3.0],
        1..40,
    )
}

proptest! {
    #[test]
    fn threshold_is_monotone_in_q(w in w_vector(), a in 0.01f64..0.99, b in 0.01f64..0.99) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(knockoff_threshold(&w, hi) <= knockoff_threshold(&w, lo));
    }

    #[test]
    fn threshold_is_a_candidate_or_infinite(w in w_vector(), q in 0.01f64..0.99) {
        let t = knockoff_threshold(&w, q);
        prop_assert!(t.is_infinite() || w.iter().any(|v| v.abs() == t && t > 0.0));
    }

    #[test]
    fn gram_identities_random(seed in any::<u64>(), p in 1usize..12, mult in 2usize..6) {
        let mut r = rng(seed);
        let x = normalize_columns(&correlated_matrix(&mut r, p * mult, p, 0.8)).unwrap();
        let s = equi_s(&x.gram()).unwrap();
        let k = construct_knockoffs(&x, &s, seed).unwrap();
        let (e1, e2) = k.gram_errors();
        prop_assert!(e1 < 1e-6 && e2 < 1e-6);
    }
}
