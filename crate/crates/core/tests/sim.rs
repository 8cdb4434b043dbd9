use hte_guard::mht::Method;
use hte_guard::sim::{evaluate, run_replicate, sweep, EvalConfig, Regime, Scenario};

fn small(regime: Regime) -> Scenario {
    Scenario {
        n_units: 600,
        n_groups_or_vars: 12,
        n_true_signals: 4,
        seed: 11,
        ..Scenario::new(regime)
    }
}

#[test]
fn curves_do_not_depend_on_thread_count() {
    for regime in Regime::ALL {
        let scenarios = sweep(small(regime), &[0.2, 1.0]);
        let run = |threads| {
            let cfg = EvalConfig {
                replicates: 8,
                threads: Some(threads),
                ..EvalConfig::default()
            };
            evaluate(&scenarios, &cfg).unwrap()
        };
        assert_eq!(run(1), run(4), "{regime}");
    }
}

/// With no true signals every selection is false, so FDR is the share of
/// replicates that select anything and power is zero.
#[test]
fn global_null_fdr_is_any_selection_rate() {
    let scenario = Scenario {
        n_true_signals: 0,
        ..small(Regime::OrthogonalGaussian)
    };
    let cfg = EvalConfig {
        methods: vec![Method::Naive, Method::Bh],
        replicates: 40,
        ..EvalConfig::default()
    };
    let curves = evaluate(std::slice::from_ref(&scenario), &cfg).unwrap();
    for (m, curve) in cfg.methods.iter().zip(&curves) {
        let any = (0..40)
            .filter(|&r| !run_replicate(&scenario, r, &cfg).unwrap().1[cfg.methods.iter().position(|x| x == m).unwrap()].is_empty())
            .count();
        assert_eq!(curve.method, *m);
        assert!((curve.fdr[0] - any as f64 / 40.0).abs() < 1e-12);
        assert_eq!(curve.power[0], 0.0);
    }
}

#[test]
fn metrics_stay_in_unit_interval() {
    let cfg = EvalConfig {
        replicates: 5,
        ..EvalConfig::default()
    };
    for regime in Regime::ALL {
        for c in evaluate(&sweep(small(regime), &[0.1, 0.5, 2.0]), &cfg).unwrap() {
            for v in c.fdr.iter().chain(&c.power).chain(&c.stderr_fdr).chain(&c.stderr_power) {
                assert!((0.0..=1.0).contains(v), "{:?} {regime}: {v}", c.method);
            }
        }
    }
}
