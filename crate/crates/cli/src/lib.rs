//! Command-line front end: single analyses, simulation studies, PoSI
//! constants and plot data.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hysi::ci::Method;
use hysi::covariance::{build_universe_covariance, ModelUniverse, DEFAULT_UNIVERSE_CAP};
use hysi::extreal;
use hysi::posi::{sample_max_abs, DEFAULT_DRAWS};
use hysi::simulation::{
    read_length_ratios, run_study, write_coverage, write_length_ratios, write_outcomes, Design,
    ErrorLaw, TargetMode,
};
use hysi::{
    load_csv, Analysis, AnalysisOptions, Analyzer, PosiConstant, RngStream, SimulationConfig,
};
use serde::Serialize;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Parser)]
#[command(
    name = "hysi",
    version,
    about = "Hybrid, selective and simultaneous confidence intervals after LASSO selection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Intervals for one or more predictors of interest in a CSV file.
    Analyze(AnalyzeArgs),
    /// Monte-Carlo coverage and length study.
    Simulate(SimulateArgs),
    /// Simultaneous constant for the model universe of a dataset.
    PosiConstant(PosiArgs),
    /// Tidy length-ratio table for plotting, from a simulation's ratios CSV.
    Figures(FiguresArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// `auto` (α/10) or an explicit value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Auto,
    Value(f64),
}

impl Gamma {
    pub fn resolve(self, alpha: f64) -> f64 {
        match self {
            Gamma::Auto => alpha / 10.0,
            Gamma::Value(g) => g,
        }
    }
}

impl FromStr for Gamma {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Gamma::Auto);
        }
        s.parse()
            .map(Gamma::Value)
            .map_err(|_| format!("expected 'auto' or a number, got '{s}'"))
    }
}

/// Comma-separated methods, or `all`.
#[derive(Debug, Clone, PartialEq)]
pub struct Methods(pub Vec<Method>);

impl FromStr for Methods {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(Methods(Method::ALL.to_vec()));
        }
        let mut out = Vec::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let m = part.parse::<Method>().map_err(|e| e.to_string())?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err("no methods given".into());
        }
        out.sort();
        Ok(Methods(out))
    }
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got '{s}'")),
    }
}

fn level(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err(format!("expected a value in (0, 1), got '{s}'")),
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Delimited text file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub response: String,
    /// Predictor of interest; repeatable, or `all` for every non-response column.
    #[arg(long, required = true)]
    pub predictor: Vec<String>,
    /// LASSO penalty; repeatable.
    #[arg(long, required = true, value_parser = positive)]
    pub lambda: Vec<f64>,
    #[arg(long, default_value_t = 0.05, value_parser = level)]
    pub alpha: f64,
    #[arg(long, default_value = "auto")]
    pub gamma: Gamma,
    #[arg(long, default_value = "all")]
    pub methods: Methods,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Monte-Carlo draws per PoSI constant.
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    pub draws: usize,
    /// Use the columns as given instead of centering and scaling them.
    #[arg(long)]
    pub raw: bool,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    #[arg(long, default_value = "independent")]
    pub design: Design,
    #[arg(long, default_value = "normal")]
    pub errors: ErrorLaw,
    /// LASSO penalty; repeatable.
    #[arg(long, value_parser = positive, default_values_t = [1.0, 4.0, 16.0])]
    pub lambda: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.05, value_parser = level)]
    pub alpha: f64,
    #[arg(long, default_value = "auto")]
    pub gamma: Gamma,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "conditional")]
    pub target_mode: TargetMode,
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    pub draws: usize,
    /// Output directory for `outcomes`, `coverage` and `length_ratios`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct PosiArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub response: String,
    #[arg(long)]
    pub predictor: String,
    /// Level(s) for the constant; repeatable.
    #[arg(long, default_value = "0.05", value_parser = level)]
    pub alpha: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    pub draws: usize,
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FiguresArgs {
    /// `length_ratios.csv` written by `simulate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::PosiConstant(args) => cmd_posi(&args),
        Command::Figures(args) => cmd_figures(&args),
    }
}

/// Writes through a temporary file in the destination directory so readers
/// never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, bytes),
        None => {
            io::stdout().lock().write_all(bytes)?;
            Ok(())
        }
    }
}

fn header(path: &Path) -> Result<Vec<String>> {
    let delimiter = if path.extension().is_some_and(|e| e == "tsv") {
        b'\t'
    } else {
        b','
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    Ok(reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect())
}

fn predictors(args: &AnalyzeArgs) -> Result<Vec<String>> {
    if args.predictor.iter().any(|p| p.eq_ignore_ascii_case("all")) {
        let names: Vec<String> = header(&args.data)?
            .into_iter()
            .filter(|h| h != &args.response)
            .collect();
        if names.len() < 2 {
            bail!(
                "{} has no predictor besides the response",
                args.data.display()
            );
        }
        return Ok(names);
    }
    Ok(args.predictor.clone())
}

pub fn analyses(args: &AnalyzeArgs) -> Result<Vec<Analysis>> {
    let gamma = args.gamma.resolve(args.alpha);
    let mut out = Vec::new();
    for (i, name) in predictors(args)?.iter().enumerate() {
        let data = load_csv(&args.data, &args.response, name, !args.raw)
            .with_context(|| format!("loading {} with predictor {name}", args.data.display()))?;
        let options = AnalysisOptions {
            alpha: args.alpha,
            gamma,
            methods: args.methods.0.clone(),
            posi_draws: args.draws,
            universe_cap: DEFAULT_UNIVERSE_CAP,
            rng: RngStream::new(args.seed, i as u64),
        };
        let analyzer = Analyzer::new(&data, options)?;
        for &lambda in &args.lambda {
            let analysis = analyzer
                .analyze(lambda)
                .with_context(|| format!("predictor {name}, lambda {lambda}"))?;
            out.push(analysis);
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct IntervalRow<'a> {
    predictor: &'a str,
    lambda: f64,
    method: Method,
    level: f64,
    gamma: String,
    lower: String,
    upper: String,
    length: String,
    scaled_lower: String,
    scaled_upper: String,
    original_lower: String,
    original_upper: String,
    selected: String,
    clipped: bool,
}

fn interval_csv(analyses: &[Analysis]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for a in analyses {
        for ci in &a.intervals {
            let orig = |f: fn(&hysi::ci::Bounds) -> f64| {
                ci.original
                    .as_ref()
                    .map(|b| extreal::format(f(b)))
                    .unwrap_or_default()
            };
            w.serialize(IntervalRow {
                predictor: &a.predictor,
                lambda: a.lambda,
                method: ci.method,
                level: ci.level,
                gamma: ci.gamma.map(|g| g.to_string()).unwrap_or_default(),
                lower: extreal::format(ci.lower),
                upper: extreal::format(ci.upper),
                length: extreal::format(ci.length),
                scaled_lower: extreal::format(ci.scaled.lower),
                scaled_upper: extreal::format(ci.scaled.upper),
                original_lower: orig(|b| b.lower),
                original_upper: orig(|b| b.upper),
                selected: ci.selected.join(";"),
                clipped: ci.diagnostics.clipped,
            })?;
        }
    }
    Ok(w.into_inner()?)
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let results = analyses(args)?;
    let bytes = match args.format {
        Format::Json => {
            let mut s = serde_json::to_vec_pretty(&results)?;
            s.push(b'\n');
            s
        }
        Format::Csv => interval_csv(&results)?,
    };
    emit(args.out.as_deref(), &bytes)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let config = SimulationConfig {
        n: args.n,
        p: args.p,
        design: args.design,
        error_dist: args.errors,
        lambdas: args.lambda.clone(),
        reps: args.reps,
        alpha: args.alpha,
        gamma: args.gamma.resolve(args.alpha),
        beta: SimulationConfig::default_beta(args.p),
        seed: args.seed,
        target_mode: args.target_mode,
        posi_draws: args.draws,
        ..SimulationConfig::default()
    };
    config.validate()?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let study = run_study(&config)?;
    for f in &study.failures {
        log::warn!("rep {} at lambda {}: {}", f.rep, f.lambda, f.message);
    }
    match args.format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_outcomes(&mut buf, &study.outcomes)?;
            write_atomic(&args.out.join("outcomes.csv"), &buf)?;
            buf.clear();
            write_coverage(&mut buf, &study.coverage)?;
            write_atomic(&args.out.join("coverage.csv"), &buf)?;
            buf.clear();
            write_length_ratios(&mut buf, &study.length_ratios)?;
            write_atomic(&args.out.join("length_ratios.csv"), &buf)?;
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Summary<'a> {
                config: &'a SimulationConfig,
                coverage: &'a [hysi::simulation::CoverageRow],
                length_ratios: &'a [hysi::simulation::LengthRatioRow],
                failures: &'a [hysi::simulation::RepFailure],
                containment_checked: usize,
                containment_violations: usize,
            }
            let mut s = serde_json::to_vec_pretty(&Summary {
                config: &config,
                coverage: &study.coverage,
                length_ratios: &study.length_ratios,
                failures: &study.failures,
                containment_checked: study.containment_checked,
                containment_violations: study.containment_violations,
            })?;
            s.push(b'\n');
            write_atomic(&args.out.join("study.json"), &s)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct PosiReport {
    response: String,
    predictor: String,
    n: usize,
    models: usize,
    dropped_models: usize,
    constants: Vec<PosiConstant>,
}

fn cmd_posi(args: &PosiArgs) -> Result<()> {
    let data = load_csv(&args.data, &args.response, &args.predictor, !args.raw)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let universe = ModelUniverse::all(data.p(), DEFAULT_UNIVERSE_CAP)?;
    let cov = build_universe_covariance(&data, &universe)?;
    let sample = sample_max_abs(&cov, args.draws, RngStream::new(args.seed, 0))?;
    let constants = args
        .alpha
        .iter()
        .map(|&a| sample.constant(a))
        .collect::<hysi::Result<Vec<_>>>()?;
    let report = PosiReport {
        response: data.response_label.clone(),
        predictor: data.predictor_label.clone(),
        n: data.n(),
        models: cov.len(),
        dropped_models: cov.dropped.len(),
        constants,
    };
    let mut s = serde_json::to_vec_pretty(&report)?;
    s.push(b'\n');
    emit(args.out.as_deref(), &s)
}

#[derive(Serialize)]
struct FigureRow {
    design: Design,
    errors: ErrorLaw,
    lambda: f64,
    method: Method,
    quantile: f64,
    #[serde(with = "extreal")]
    ratio: f64,
}

fn cmd_figures(args: &FiguresArgs) -> Result<()> {
    let file = fs::File::open(&args.data)
        .with_context(|| format!("cannot open {}", args.data.display()))?;
    let rows =
        read_length_ratios(file).with_context(|| format!("reading {}", args.data.display()))?;
    if rows.is_empty() {
        bail!("{} contains no length ratios", args.data.display());
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(FigureRow {
            design: r.design,
            errors: r.errors,
            lambda: r.lambda,
            method: r.method,
            quantile: r.quantile,
            ratio: r.ratio,
        })?;
    }
    emit(args.out.as_deref(), &w.into_inner()?)
}
