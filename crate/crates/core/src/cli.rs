//! Command-line front end.
//!
//! Settings come from flags and, optionally, a TOML file passed with
//! `--config`; flags win when both are present.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::load_csv_with;
use crate::error::{Error, Result};
use crate::mht::Method;
use crate::numerics::LassoPath;
use crate::pipelines::{analyze_subgroups, hte_knockoff, AnalysisOptions, DfMode, FactorReport, SubgroupReport};
use crate::sim::{self, EvalConfig, Regime, Scenario};

/// Environment variable capping the number of simulation threads.
pub const THREADS_ENV: &str = "HTE_GUARD_THREADS";

pub const DEFAULT_Q: f64 = 0.2;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_OUT_DIR: &str = "hte-guard-out";

#[derive(Debug, Parser)]
#[command(name = "hte-guard", version, about = "Detect heterogeneous treatment effects with FDR control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Test every subgroup of a categorical column against the ATE.
    AnalyzeSubgroups(Flags),
    /// Select heterogeneous factors with the knockoff filter.
    AnalyzeFactors(Flags),
    /// Monte-Carlo FDR and power curves.
    Simulate(Flags),
    /// Naive testing vs BH on 30 null subgroups.
    DemoNaive(Flags),
}

#[derive(Debug, Default, Clone, Args)]
pub struct Flags {
    /// Experiment CSV with unit_id, treatment, outcome and covariate columns.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Categorical column defining the subgroups.
    #[arg(long)]
    pub column: Option<String>,
    /// Categorical factor (at most one).
    #[arg(long)]
    pub categorical: Vec<String>,
    /// Continuous factor; repeatable.
    #[arg(long)]
    pub continuous: Vec<String>,
    /// Target FDR level [default: 0.2, or 0.05 for demo-naive].
    #[arg(long)]
    pub q: Option<f64>,
    /// Per-test level of the naive approach [default: 0.05].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// naive, bonferroni, bh or knockoff.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Assignment probability; defaults to the treated fraction.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// orthogonal-gaussian, non-gaussian-to or non-orthogonal; repeatable.
    #[arg(long)]
    pub regime: Vec<String>,
    /// Degrees of freedom for subgroup t-tests: pooled or per-group.
    #[arg(long)]
    pub df: Option<String>,
    /// TOML file with the same keys as the long flags (plus simulation sizes).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Contents of a `--config` file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub input: Option<PathBuf>,
    pub column: Option<String>,
    pub categorical: Vec<String>,
    pub continuous: Vec<String>,
    pub q: Option<f64>,
    pub alpha: Option<f64>,
    pub method: Option<String>,
    pub seed: Option<u64>,
    pub p: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub replicates: Option<usize>,
    pub regime: Vec<String>,
    pub df: Option<String>,
    pub n_units: Option<usize>,
    pub n_groups: Option<usize>,
    pub n_signals: Option<usize>,
    pub correlation: Option<f64>,
    pub amplitudes: Option<Vec<f64>>,
    pub lasso_grid_size: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandKind {
    AnalyzeSubgroups,
    AnalyzeFactors,
    Simulate,
    DemoNaive,
}

/// Fully resolved settings for one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub input: Option<PathBuf>,
    pub column: Option<String>,
    pub categorical: Vec<String>,
    pub continuous: Vec<String>,
    pub q: f64,
    pub alpha: f64,
    pub method: Option<Method>,
    pub seed: u64,
    pub assignment_probability: Option<f64>,
    pub out_dir: PathBuf,
    pub replicates: Option<usize>,
    pub regimes: Vec<Regime>,
    pub df_mode: DfMode,
    pub lasso: LassoPath,
    pub n_units: Option<usize>,
    pub n_groups: Option<usize>,
    pub n_signals: Option<usize>,
    pub correlation: Option<f64>,
    pub amplitudes: Option<Vec<f64>>,
    pub threads: Option<usize>,
}

fn check_unit_interval(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(Error::ConfigError(format!(
            "--{name} must lie strictly between 0 and 1, got {v}"
        )))
    }
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) if s.trim().is_empty() => Ok(None),
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .map(Some)
            .ok_or_else(|| {
                Error::ConfigError(format!("{THREADS_ENV} must be a positive integer, got `{s}`"))
            }),
    }
}

fn read_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    toml::from_str(&text)
        .map_err(|e| Error::ConfigError(format!("{}: {}", path.display(), e.message())))
}

fn pick_vec(flag: Vec<String>, file: Vec<String>) -> Vec<String> {
    if flag.is_empty() {
        file
    } else {
        flag
    }
}

impl RunConfig {
    /// Merges flags over the optional config file and validates the result.
    pub fn resolve(command: CommandKind, flags: Flags) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => read_config(path)?,
            None => ConfigFile::default(),
        };
        let default_q = if command == CommandKind::DemoNaive { DEFAULT_ALPHA } else { DEFAULT_Q };
        let q = check_unit_interval("q", flags.q.or(file.q).unwrap_or(default_q))?;
        let alpha = check_unit_interval("alpha", flags.alpha.or(file.alpha).unwrap_or(DEFAULT_ALPHA))?;
        let method = flags
            .method
            .or(file.method)
            .map(|m| m.parse::<Method>())
            .transpose()?;
        let df_mode = flags
            .df
            .or(file.df)
            .map(|d| d.parse::<DfMode>())
            .transpose()?
            .unwrap_or_default();
        let regimes = pick_vec(flags.regime, file.regime)
            .iter()
            .map(|r| r.parse::<Regime>())
            .collect::<Result<Vec<_>>>()?;
        let p = flags.p.or(file.p);
        if let Some(p) = p {
            check_unit_interval("p", p)?;
        }
        let mut lasso = LassoPath::default();
        if let Some(g) = file.lasso_grid_size {
            lasso.grid_size = g;
        }
        lasso.validate()?;
        let cfg = RunConfig {
            command,
            input: flags.input.or(file.input),
            column: flags.column.or(file.column),
            categorical: pick_vec(flags.categorical, file.categorical),
            continuous: pick_vec(flags.continuous, file.continuous),
            q,
            alpha,
            method,
            seed: flags.seed.or(file.seed).unwrap_or(0),
            assignment_probability: p,
            out_dir: flags
                .out_dir
                .or(file.out_dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
            replicates: flags.replicates.or(file.replicates),
            regimes,
            df_mode,
            lasso,
            n_units: file.n_units,
            n_groups: file.n_groups,
            n_signals: file.n_signals,
            correlation: file.correlation,
            amplitudes: file.amplitudes,
            threads: threads_from_env()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let needs_input = matches!(
            self.command,
            CommandKind::AnalyzeSubgroups | CommandKind::AnalyzeFactors
        );
        if needs_input && self.input.as_ref().is_none_or(|p| p.as_os_str().is_empty()) {
            return Err(Error::ConfigError("--input is required".into()));
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::ConfigError("--out-dir must not be empty".into()));
        }
        match self.command {
            CommandKind::AnalyzeSubgroups => {
                if self.column.as_deref().is_none_or(str::is_empty) {
                    return Err(Error::ConfigError("--column is required".into()));
                }
            }
            CommandKind::AnalyzeFactors => {
                if self.method.is_some_and(|m| m != Method::Knockoff) {
                    return Err(Error::ConfigError(
                        "analyze-factors supports only --method knockoff; p-value rules are not \
                         valid on non-orthogonal factor designs"
                            .into(),
                    ));
                }
                if self.categorical.is_empty() && self.continuous.is_empty() {
                    return Err(Error::ConfigError(
                        "give at least one --categorical or --continuous factor".into(),
                    ));
                }
            }
            CommandKind::Simulate | CommandKind::DemoNaive => {}
        }
        if self.replicates == Some(0) {
            return Err(Error::ConfigError("--replicates must be at least 1".into()));
        }
        Ok(())
    }
}

/// Human-readable summary plus every file written.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOutput {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_owned(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::ConfigError(format!("cannot serialize report: {e}")))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_owned(),
        source: std::io::Error::other(e.to_string()),
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Per-subgroup plot data: label, n, effect, p, selected.
pub fn write_subgroup_csv(report: &SubgroupReport, path: &Path) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv_writer(path)?;
    w.write_record(["label", "n", "effect", "p", "selected"]).map_err(&err)?;
    for row in &report.per_subgroup {
        w.write_record([
            row.label.clone(),
            row.n_units.to_string(),
            row.effect_estimate.to_string(),
            row.p_value.to_string(),
            flag(row.selected).to_owned(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_factor_csv(report: &FactorReport, path: &Path) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv_writer(path)?;
    w.write_record(["label", "source", "w", "selected"]).map_err(&err)?;
    for row in &report.per_column {
        w.write_record([
            row.label.clone(),
            row.source.clone(),
            row.w.to_string(),
            flag(row.selected).to_owned(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(io_err(path))
}

fn make_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn options(cfg: &RunConfig) -> AnalysisOptions {
    AnalysisOptions {
        df_mode: cfg.df_mode,
        lasso: cfg.lasso,
        seed: cfg.seed,
    }
}

fn run_subgroups(cfg: &RunConfig) -> Result<RunOutput> {
    let input = cfg.input.as_ref().expect("validated");
    let column = cfg.column.as_deref().expect("validated");
    let ds = load_csv_with(input, cfg.assignment_probability)?;
    let method = cfg.method.unwrap_or(Method::Bh);
    let level = if method == Method::Naive { cfg.alpha } else { cfg.q };
    let report = analyze_subgroups(&ds, column, method, level, &options(cfg))?;

    make_out_dir(&cfg.out_dir)?;
    let toml_path = cfg.out_dir.join("report.toml");
    let csv_path = cfg.out_dir.join("subgroups.csv");
    write_file(&toml_path, &to_toml(&report)?)?;
    write_subgroup_csv(&report, &csv_path)?;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} on `{}`: {} units, ATE = {:.6}, level = {}",
        method, column, report.n_units, report.ate, level
    );
    let _ = writeln!(s, "{:<24} {:>9} {:>12} {:>12}  selected", "subgroup", "n", "effect", "p");
    for row in &report.per_subgroup {
        let _ = writeln!(
            s,
            "{:<24} {:>9} {:>12.6} {:>12.4e}  {}",
            row.label,
            row.n_units,
            row.effect_estimate,
            row.p_value,
            if row.selected { "*" } else { "" }
        );
    }
    let selected = report.selected_labels();
    let _ = writeln!(
        s,
        "selected {}: {}",
        selected.len(),
        if selected.is_empty() { "(none)".to_owned() } else { selected.join(", ") }
    );
    for w in &report.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    Ok(RunOutput {
        summary: s,
        files: vec![toml_path, csv_path],
    })
}

fn run_factors(cfg: &RunConfig) -> Result<RunOutput> {
    let input = cfg.input.as_ref().expect("validated");
    let ds = load_csv_with(input, cfg.assignment_probability)?;
    let report = hte_knockoff(&ds, &cfg.categorical, &cfg.continuous, cfg.q, &options(cfg))?;

    make_out_dir(&cfg.out_dir)?;
    let toml_path = cfg.out_dir.join("report.toml");
    let csv_path = cfg.out_dir.join("factors.csv");
    write_file(&toml_path, &to_toml(&report)?)?;
    write_factor_csv(&report, &csv_path)?;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "knockoff on {} units, ATE = {:.6}, q = {}, threshold = {}",
        report.n_units, report.ate, report.target_q, report.threshold
    );
    let _ = writeln!(s, "{:<32} {:>12}  selected", "column", "W");
    for row in &report.per_column {
        let _ = writeln!(
            s,
            "{:<32} {:>12.4}  {}",
            row.label,
            row.w,
            if row.selected { "*" } else { "" }
        );
    }
    let _ = writeln!(
        s,
        "heterogeneous factors: {}",
        if report.heterogeneous_factors.is_empty() {
            "(none)".to_owned()
        } else {
            report.heterogeneous_factors.join(", ")
        }
    );
    for note in &report.interpretation_notes {
        let _ = writeln!(s, "note: {note}");
    }
    Ok(RunOutput {
        summary: s,
        files: vec![toml_path, csv_path],
    })
}

fn run_simulate(cfg: &RunConfig) -> Result<RunOutput> {
    let regimes = if cfg.regimes.is_empty() {
        Regime::ALL.to_vec()
    } else {
        cfg.regimes.clone()
    };
    let amplitudes = cfg.amplitudes.clone().unwrap_or_else(sim::default_amplitudes);
    let eval = EvalConfig {
        methods: cfg.method.map_or_else(|| Method::ALL.to_vec(), |m| vec![m]),
        q: cfg.q,
        alpha: cfg.alpha,
        replicates: cfg.replicates.unwrap_or(100),
        df_mode: cfg.df_mode,
        lasso: cfg.lasso,
        threads: cfg.threads,
    };
    make_out_dir(&cfg.out_dir)?;
    let mut out = RunOutput::default();
    for regime in regimes {
        let mut base = Scenario::new(regime);
        base.seed = cfg.seed;
        if let Some(n) = cfg.n_units {
            base.n_units = n;
        }
        if let Some(p) = cfg.n_groups {
            base.n_groups_or_vars = p;
        }
        if let Some(k) = cfg.n_signals {
            base.n_true_signals = k;
        }
        if let (Some(rho), Regime::NonOrthogonal) = (cfg.correlation, regime) {
            base.correlation = rho;
        }
        let curves = sim::evaluate(&sim::sweep(base, &amplitudes), &eval)?;
        let path = cfg.out_dir.join(format!("curves-{regime}.csv"));
        sim::write_curves_csv(&curves, &path)?;
        out.files.push(path);

        let _ = writeln!(out.summary, "{regime} ({} replicates, q = {})", eval.replicates, eval.q);
        let _ = writeln!(
            out.summary,
            "{:<11} {:>9} {:>8} {:>8} {:>8} {:>8}",
            "method", "amplitude", "fdr", "fdr_se", "power", "power_se"
        );
        for c in &curves {
            for i in 0..c.amplitudes.len() {
                let _ = writeln!(
                    out.summary,
                    "{:<11} {:>9.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                    c.method.as_str(),
                    c.amplitudes[i],
                    c.fdr[i],
                    c.stderr_fdr[i],
                    c.power[i],
                    c.stderr_power[i]
                );
            }
        }
    }
    Ok(out)
}

fn run_demo(cfg: &RunConfig) -> Result<RunOutput> {
    let work = || sim::demo_naive(cfg.seed, 30, 100, cfg.replicates.unwrap_or(1000), cfg.alpha, cfg.q);
    let demo = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::ConfigError(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    make_out_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("demo-naive.toml");
    write_file(&path, &to_toml(&demo)?)?;

    let list = |v: &[String]| if v.is_empty() { "(none)".to_owned() } else { v.join(", ") };
    let mut s = String::new();
    let _ = writeln!(s, "{} null subgroups, seed {}", demo.n_subgroups, cfg.seed);
    let _ = writeln!(s, "first replicate:");
    let _ = writeln!(s, "  naive (alpha = {}): {}", demo.alpha, list(&demo.first_naive));
    let _ = writeln!(s, "  bh    (q = {}):     {}", demo.q, list(&demo.first_bh));
    let _ = writeln!(s, "over {} replicates:", demo.replicates);
    let _ = writeln!(s, "{:<8} {:>16} {:>16}", "method", "mean selected", "P(any selected)");
    let _ = writeln!(
        s,
        "{:<8} {:>16.3} {:>16.3}",
        "naive", demo.mean_naive_selections, demo.any_naive_fraction
    );
    let _ = writeln!(s, "{:<8} {:>16.3} {:>16.3}", "bh", demo.mean_bh_selections, demo.any_bh_fraction);
    Ok(RunOutput {
        summary: s,
        files: vec![path],
    })
}

/// Executes one resolved command.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    match cfg.command {
        CommandKind::AnalyzeSubgroups => run_subgroups(cfg),
        CommandKind::AnalyzeFactors => run_factors(cfg),
        CommandKind::Simulate => run_simulate(cfg),
        CommandKind::DemoNaive => run_demo(cfg),
    }
}

/// Process exit code for an error: 1 for invalid settings, 2 for data and
/// numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        1
    } else {
        2
    }
}

/// Parses `args`, runs the command and reports to stdout/stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (kind, flags) = match cli.command {
        CliCommand::AnalyzeSubgroups(f) => (CommandKind::AnalyzeSubgroups, f),
        CliCommand::AnalyzeFactors(f) => (CommandKind::AnalyzeFactors, f),
        CliCommand::Simulate(f) => (CommandKind::Simulate, f),
        CliCommand::DemoNaive(f) => (CommandKind::DemoNaive, f),
    };
    match RunConfig::resolve(kind, flags).and_then(|cfg| run(&cfg)) {
        Ok(out) => {
            print!("{}", out.summary);
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags() -> Flags {
        Flags {
            input: Some("x.csv".into()),
            column: Some("country".into()),
            ..Flags::default()
        }
    }

    #[test]
    fn q_out_of_range_is_a_validation_error() {
        let err = RunConfig::resolve(
            CommandKind::AnalyzeSubgroups,
            Flags { q: Some(1.5), ..flags() },
        )
        .unwrap_err();
        assert_eq!(exit_code(&err), 1);
        assert!(err.to_string().contains("--q"));
    }

    #[test]
    fn defaults() {
        let cfg = RunConfig::resolve(CommandKind::AnalyzeSubgroups, flags()).unwrap();
        assert_eq!(cfg.q, 0.2);
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.df_mode, DfMode::Pooled);
        let demo = RunConfig::resolve(CommandKind::DemoNaive, Flags::default()).unwrap();
        assert_eq!(demo.q, 0.05);
    }

    #[test]
    fn missing_required_flags() {
        let err = RunConfig::resolve(CommandKind::AnalyzeSubgroups, Flags::default()).unwrap_err();
        assert!(err.to_string().contains("--input"));
        let err = RunConfig::resolve(
            CommandKind::AnalyzeFactors,
            Flags {
                method: Some("bh".into()),
                continuous: vec!["age".into()],
                ..flags()
            },
        )
        .unwrap_err();
        assert_eq!(exit_code(&err), 1);
    }

    #[test]
    fn flags_win_over_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        fs::write(&path, "q = 0.1\nalpha = 0.01\ncolumn = \"region\"\nseed = 9\n").unwrap();
        let cfg = RunConfig::resolve(
            CommandKind::AnalyzeSubgroups,
            Flags {
                q: Some(0.3),
                column: None,
                config: Some(path),
                ..flags()
            },
        )
        .unwrap();
        assert_eq!(cfg.q, 0.3);
        assert_eq!(cfg.alpha, 0.01);
        assert_eq!(cfg.column.as_deref(), Some("region"));
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        fs::write(&path, "qq = 0.1\n").unwrap();
        let err = RunConfig::resolve(
            CommandKind::AnalyzeSubgroups,
            Flags { config: Some(path), ..flags() },
        )
        .unwrap_err();
        assert_eq!(exit_code(&err), 1);
    }
}
