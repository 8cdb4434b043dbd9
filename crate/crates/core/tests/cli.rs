use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hte_guard::data::write_csv;
use hte_guard::sim::{generate, Regime, Scenario};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hte-guard"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn subgroup_csv(dir: &Path) -> PathBuf {
    let s = Scenario {
        n_units: 1200,
        n_groups_or_vars: 8,
        n_true_signals: 2,
        ..Scenario::new(Regime::OrthogonalGaussian)
    }
    .with_amplitude(2.0);
    let (ds, _) = generate(&s, 0).unwrap();
    let path = dir.join("exp.csv");
    write_csv(&ds, &path).unwrap();
    path
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn analyze_subgroups_writes_report_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let input = subgroup_csv(dir.path());
    let out = dir.path().join("out");
    let o = run(&[
        "analyze-subgroups", "--input", path_str(&input), "--column", "group", "--q", "0.2",
        "--out-dir", path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let line = stdout.lines().find(|l| l.starts_with("selected ")).unwrap();
    assert!(line.contains("g00") && line.contains("g04"), "{stdout}");

    let (header, rows) = read_csv(&out.join("subgroups.csv"));
    assert_eq!(header, ["label", "n", "effect", "p", "selected"]);
    assert_eq!(rows.len(), 8);
    for row in &rows {
        assert_eq!(row[1].parse::<usize>().unwrap(), 150);
        row[2].parse::<f64>().unwrap();
        let p: f64 = row[3].parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert!(row[4] == "0" || row[4] == "1");
    }
    let report: toml::Value = toml::from_str(&fs::read_to_string(out.join("report.toml")).unwrap()).unwrap();
    assert_eq!(report["method"].as_str(), Some("bh"));
    assert_eq!(report["per_subgroup"].as_array().unwrap().len(), 8);
}

#[test]
fn identical_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = subgroup_csv(dir.path());
    for method in ["bh", "knockoff"] {
        let outputs: Vec<PathBuf> = (0..2).map(|k| dir.path().join(format!("{method}{k}"))).collect();
        for out in &outputs {
            let o = run(&[
                "analyze-subgroups", "--input", path_str(&input), "--column", "group",
                "--method", method, "--seed", "3", "--out-dir", path_str(out),
            ]);
            assert!(o.status.success());
        }
        for file in ["report.toml", "subgroups.csv"] {
            assert_eq!(
                fs::read(outputs[0].join(file)).unwrap(),
                fs::read(outputs[1].join(file)).unwrap()
            );
        }
    }
}

#[test]
fn invalid_q_exits_with_validation_code() {
    let o = run(&["analyze-subgroups", "--input", "x.csv", "--column", "c", "--q", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("--q") && err.contains("between 0 and 1"), "{err}");
}

#[test]
fn data_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "unit_id,outcome\na,1\n").unwrap();
    let o = run(&["analyze-subgroups", "--input", path_str(&input), "--column", "c"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("treatment"));
    let o = run(&["analyze-subgroups", "--input", path_str(&dir.path().join("nope.csv")), "--column", "c"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_a_validation_error() {
    assert_eq!(run(&["analyze-subgroups", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn analyze_factors_reports_knockoff_selection() {
    let dir = tempfile::tempdir().unwrap();
    let s = Scenario {
        n_units: 1000,
        n_groups_or_vars: 12,
        n_true_signals: 6,
        ..Scenario::new(Regime::NonOrthogonal)
    }
    .with_amplitude(1.0);
    let (ds, _) = generate(&s, 1).unwrap();
    let input = dir.path().join("f.csv");
    write_csv(&ds, &input).unwrap();
    let out = dir.path().join("out");
    let mut args = vec!["analyze-factors", "--input", path_str(&input), "--out-dir", path_str(&out)];
    let names: Vec<String> = (0..12).map(|j| format!("x{j:02}")).collect();
    for n in &names {
        args.push("--continuous");
        args.push(n);
    }
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.join("factors.csv"));
    assert_eq!(header, ["label", "source", "w", "selected"]);
    assert_eq!(rows.len(), 12);
    let selected: Vec<&str> = rows.iter().filter(|r| r[3] == "1").map(|r| r[0].as_str()).collect();
    for signal in ["x00", "x02", "x04", "x06", "x08", "x10"] {
        assert!(selected.contains(&signal), "{selected:?}");
    }

    let o = run(&["analyze-factors", "--input", path_str(&input), "--continuous", "x00", "--method", "bh"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_is_thread_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    fs::write(
        &cfg,
        "replicates = 6\nn-units = 400\nn-groups = 10\nn-signals = 4\namplitudes = [0.3, 1.5]\nseed = 5\n",
    )
    .unwrap();
    let mut files = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = bin()
            .args(["simulate", "--config", path_str(&cfg), "--out-dir", path_str(&out)])
            .env("HTE_GUARD_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        files.push(out);
    }
    for regime in ["orthogonal-gaussian", "non-gaussian-to", "non-orthogonal"] {
        let name = format!("curves-{regime}.csv");
        let a = fs::read(files[0].join(&name)).unwrap();
        assert_eq!(a, fs::read(files[1].join(&name)).unwrap());
        let (header, rows) = read_csv(&files[0].join(&name));
        assert_eq!(header, ["method", "regime", "amplitude", "fdr", "fdr_se", "power", "power_se", "replicates"]);
        assert_eq!(rows.len(), 8);
        for row in rows {
            assert_eq!(row[1], regime);
            for v in [&row[3], &row[5]] {
                assert!((0.0..=1.0).contains(&v.parse::<f64>().unwrap()));
            }
        }
    }
    let o = bin()
        .args(["simulate", "--replicates", "1"])
        .env("HTE_GUARD_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn demo_naive_contrasts_naive_and_bh() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["demo-naive", "--seed", "7", "--out-dir", path_str(dir.path())]);
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("naive") && stdout.contains("bh"));
    let demo: toml::Value = toml::from_str(&fs::read_to_string(dir.path().join("demo-naive.toml")).unwrap()).unwrap();
    assert!(demo["any_bh_fraction"].as_float().unwrap() < 0.1);
    assert!(demo["any_naive_fraction"].as_float().unwrap() > 0.6);
}
