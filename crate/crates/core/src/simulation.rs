//! Monte-Carlo coverage and length study for LASSO control selection with a
//! protected predictor.

use std::fmt;
use std::io;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ci::{AnalysisOptions, Analyzer, Method};
use crate::covariance::DEFAULT_UNIVERSE_CAP;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::extreal;
use crate::linalg::{inverse_spd, select_columns};
use crate::numerics::{draw, Law, RngStream};
use crate::posi::DEFAULT_DRAWS;

/// Length quantiles reported relative to PoSI.
pub const LENGTH_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];
/// Correlation decay of the dependent design, `exp(-0.1 |i - j|)`.
const DEPENDENCE_DECAY: f64 = 0.1;
const ORACLE_CHUNK: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    Independent,
    Dependent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorLaw {
    Normal,
    SkewNormal,
    Laplace,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    Conditional,
    Oracle,
}

macro_rules! named_enum {
    ($ty:ty, $($variant:path => $name:literal),+ $(,)?) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self {
                    $($variant => $name),+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
                    $($name => Ok($variant),)+
                    _ => Err(Error::InvalidArgument(format!(
                        "unknown {} '{s}'",
                        stringify!($ty)
                    ))),
                }
            }
        }
    };
}

named_enum!(Design, Design::Independent => "independent", Design::Dependent => "dependent");
named_enum!(
    ErrorLaw,
    ErrorLaw::Normal => "normal",
    ErrorLaw::SkewNormal => "skew_normal",
    ErrorLaw::Laplace => "laplace",
    ErrorLaw::Uniform => "uniform",
);
named_enum!(TargetMode, TargetMode::Conditional => "conditional", TargetMode::Oracle => "oracle");

impl ErrorLaw {
    pub fn law(self) -> Law {
        match self {
            ErrorLaw::Normal => Law::Normal,
            ErrorLaw::SkewNormal => Law::SkewNormal { shape: 5.0 },
            ErrorLaw::Laplace => Law::Laplace,
            ErrorLaw::Uniform => Law::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub p: usize,
    pub design: Design,
    pub error_dist: ErrorLaw,
    /// Every replication is analysed at each of these penalties.
    pub lambdas: Vec<f64>,
    pub reps: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub theta: f64,
    pub beta: Vec<f64>,
    pub seed: u64,
    pub target_mode: TargetMode,
    pub posi_draws: usize,
}

impl SimulationConfig {
    /// `β = (-4, 4, 0, …, 0)`.
    pub fn default_beta(p: usize) -> Vec<f64> {
        let mut beta = vec![0.0; p];
        for (b, v) in beta.iter_mut().zip([-4.0, 4.0]) {
            *b = v;
        }
        beta
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.p == 0 || self.n < 4 {
            return bad(format!(
                "need n >= 4 and p >= 1, got n={} p={}",
                self.n, self.p
            ));
        }
        if self.beta.len() != self.p {
            return bad(format!(
                "beta has {} entries, p = {}",
                self.beta.len(),
                self.p
            ));
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|&l| !(l > 0.0)) {
            return bad(format!("lambdas must be positive, got {:?}", self.lambdas));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(0.0..=self.alpha).contains(&self.gamma) {
            return Err(Error::InvalidGamma {
                gamma: self.gamma,
                alpha: self.alpha,
            });
        }
        Ok(())
    }

    fn delta(&self) -> DVector<f64> {
        let mut delta = DVector::zeros(self.p + 1);
        delta[0] = self.theta;
        delta.rows_mut(1, self.p).copy_from_slice(&self.beta);
        delta
    }
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: 50,
            p: 10,
            design: Design::Independent,
            error_dist: ErrorLaw::Normal,
            lambdas: vec![1.0, 4.0, 16.0],
            reps: 1000,
            alpha: 0.05,
            gamma: 0.005,
            theta: 0.0,
            beta: Self::default_beta(10),
            seed: 0,
            target_mode: TargetMode::Conditional,
            posi_draws: DEFAULT_DRAWS,
        }
    }
}

/// A realized design `W = (z, X)` together with the generator that produced
/// it, so fresh rows can be drawn from the same law and mapped identically.
#[derive(Debug, Clone)]
pub struct SimulatedDesign {
    pub w: DMatrix<f64>,
    /// Per-column law of the independent design.
    pub laws: Vec<Law>,
    /// Lower Cholesky factor of the dependent design's row covariance.
    pub cholesky: Option<DMatrix<f64>>,
    /// Normalized column `j` is `(raw_j - centers[j]) / scales[j]`.
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
}

impl SimulatedDesign {
    fn raw_rows<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> DMatrix<f64> {
        let cols = self.centers.len();
        match &self.cholesky {
            Some(l) => {
                let xi = DMatrix::from_fn(cols, count, |_, _| rng.sample::<f64, _>(StandardNormal));
                (l * xi).transpose()
            }
            None => {
                let mut raw = DMatrix::zeros(count, cols);
                for (j, &law) in self.laws.iter().enumerate() {
                    for i in 0..count {
                        raw[(i, j)] = draw(law, true, rng);
                    }
                }
                raw
            }
        }
    }

    /// Normalized fresh rows from the generator.
    pub fn fresh_rows<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> DMatrix<f64> {
        let mut rows = self.raw_rows(count, rng);
        for (j, mut col) in rows.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.centers[j]);
            col /= self.scales[j];
        }
        rows
    }

    /// Exact `E[W_i W_i']` for a fresh row under the generator and this
    /// design's normalization.
    pub fn population_moment(&self) -> DMatrix<f64> {
        let cols = self.centers.len();
        DMatrix::from_fn(cols, cols, |j, k| {
            // raw columns have mean zero; independent ones have unit variance
            let raw = match &self.cholesky {
                Some(l) => l.row(j).dot(&l.row(k)),
                None => f64::from(u8::from(j == k)),
            };
            (raw + self.centers[j] * self.centers[k]) / (self.scales[j] * self.scales[k])
        })
    }

    /// Monte-Carlo estimate of `E[W_i W_i']` from `count` fresh rows.
    pub fn second_moment<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> DMatrix<f64> {
        let cols = self.centers.len();
        let mut acc = DMatrix::zeros(cols, cols);
        let mut left = count;
        while left > 0 {
            let rows = self.fresh_rows(left.min(ORACLE_CHUNK), rng);
            acc += rows.tr_mul(&rows);
            left -= rows.nrows();
        }
        acc / count as f64
    }

    pub fn dataset(&self, y: DVector<f64>) -> Result<Dataset> {
        let p = self.w.ncols() - 1;
        let x = self.w.columns(1, p).into_owned();
        Dataset::with_labels(
            y,
            self.w.column(0).into_owned(),
            x,
            "y".into(),
            "z".into(),
            (1..=p).map(|k| format!("x{k}")).collect(),
        )
    }
}

fn unit_norm_columns(raw: &DMatrix<f64>, center: bool) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let n = raw.nrows() as f64;
    let mut w = raw.clone();
    let mut centers = Vec::with_capacity(raw.ncols());
    let mut scales = Vec::with_capacity(raw.ncols());
    for mut col in w.column_iter_mut() {
        let c = if center { col.sum() / n } else { 0.0 };
        col.add_scalar_mut(-c);
        let s = col.norm();
        col /= s;
        centers.push(c);
        scales.push(s);
    }
    (w, centers, scales)
}

/// Draws `W = (z, X)` with `p + 1` columns.
///
/// Independent: each column picks a standard normal, Bernoulli(1/2) or
/// skew-normal(5) generator with equal probability, then is centered and
/// scaled to unit norm. Dependent: rows are `N(0, (e^{-0.1|i-j|}))` and
/// columns are scaled to unit norm without centering.
pub fn generate_design<R: Rng + ?Sized>(
    config: &SimulationConfig,
    rng: &mut R,
) -> Result<SimulatedDesign> {
    let cols = config.p + 1;
    let n = config.n;
    let mut design = SimulatedDesign {
        w: DMatrix::zeros(0, 0),
        laws: vec![],
        cholesky: None,
        centers: vec![0.0; cols],
        scales: vec![1.0; cols],
    };
    let center = match config.design {
        Design::Independent => {
            let choices = [
                Law::Normal,
                Law::Bernoulli { p: 0.5 },
                Law::SkewNormal { shape: 5.0 },
            ];
            design.laws = (0..cols).map(|_| choices[rng.random_range(0..3)]).collect();
            true
        }
        Design::Dependent => {
            let sigma = DMatrix::from_fn(cols, cols, |i, j| {
                (-DEPENDENCE_DECAY * (i as f64 - j as f64).abs()).exp()
            });
            let chol = sigma.cholesky().ok_or(Error::SingularGram {
                condition: f64::INFINITY,
            })?;
            design.cholesky = Some(chol.l());
            false
        }
    };
    let mut raw = design.raw_rows(n, rng);
    // a Bernoulli column can come out constant; redraw it
    for j in 0..cols {
        let mut tries = 0;
        while raw.column(j).iter().all(|&v| v == raw[(0, j)]) {
            tries += 1;
            if tries > 1000 {
                return Err(Error::InvalidArgument(format!("column {j} is constant")));
            }
            for i in 0..n {
                raw[(i, j)] = draw(design.laws[j], true, rng);
            }
        }
    }
    let (w, centers, scales) = unit_norm_columns(&raw, center);
    design.w = w;
    design.centers = centers;
    design.scales = scales;
    Ok(design)
}

/// `y = θ z + X β + u` with `u` i.i.d. from the standardized error law.
pub fn generate_response<R: Rng + ?Sized>(
    w: &DMatrix<f64>,
    theta: f64,
    beta: &[f64],
    error_dist: ErrorLaw,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if w.ncols() != beta.len() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "W has {} columns, expected {}",
            w.ncols(),
            beta.len() + 1
        )));
    }
    let mut delta = DVector::zeros(w.ncols());
    delta[0] = theta;
    delta.rows_mut(1, beta.len()).copy_from_slice(beta);
    let law = error_dist.law();
    let u = DVector::from_fn(w.nrows(), |_, _| draw(law, true, rng));
    Ok(w * delta + u)
}

/// `e₁'(W_E'W_E)⁻¹W_E'Wδ` for the rows of `w`, where `W_E = (z, X_E)`.
pub fn conditional_coefficient(
    w: &DMatrix<f64>,
    controls: &[usize],
    delta: &DVector<f64>,
) -> Result<f64> {
    let cols: Vec<usize> = std::iter::once(0)
        .chain(controls.iter().map(|&k| k + 1))
        .collect();
    let we = select_columns(w, &cols);
    let coef = inverse_spd(&we.tr_mul(&we))? * we.tr_mul(&(w * delta));
    Ok(coef[0])
}

/// `e₁'(S_EE)⁻¹ S_E· δ` for a second-moment matrix `S` of `W`.
pub fn moment_coefficient(
    moment: &DMatrix<f64>,
    controls: &[usize],
    delta: &DVector<f64>,
) -> Result<f64> {
    let cols: Vec<usize> = std::iter::once(0)
        .chain(controls.iter().map(|&k| k + 1))
        .collect();
    let see = DMatrix::from_fn(cols.len(), cols.len(), |i, j| moment[(cols[i], cols[j])]);
    let sew = DMatrix::from_fn(cols.len(), moment.ncols(), |i, j| moment[(cols[i], j)]);
    let coef = inverse_spd(&see)? * (sew * delta);
    Ok(coef[0])
}

/// Scaled target `√m · e₁'(·)⁻¹(·)δ` for the model on `controls`, evaluated
/// on the `m` rows in `rows`. Conditional mode uses the realized design;
/// oracle mode uses the population second moment of a row of `W`.
pub fn true_target(
    design: &SimulatedDesign,
    rows: Range<usize>,
    controls: &[usize],
    config: &SimulationConfig,
) -> Result<f64> {
    let root_m = (rows.len() as f64).sqrt();
    let delta = config.delta();
    let coef = match config.target_mode {
        TargetMode::Conditional => {
            let w = design.w.rows(rows.start, rows.len()).into_owned();
            conditional_coefficient(&w, controls, &delta)?
        }
        TargetMode::Oracle => moment_coefficient(&design.population_moment(), controls, &delta)?,
    };
    Ok(root_m * coef)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub lambda: f64,
    pub method: Method,
    pub covered: bool,
    /// Length on the unscaled coefficient.
    #[serde(with = "extreal")]
    pub length: f64,
    pub selected_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFailure {
    pub rep: usize,
    pub lambda: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub design: Design,
    pub errors: ErrorLaw,
    pub lambda: f64,
    pub method: Method,
    pub covered: usize,
    pub total: usize,
    pub coverage: f64,
    pub standard_error: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRatioRow {
    pub design: Design,
    pub errors: ErrorLaw,
    pub lambda: f64,
    pub method: Method,
    pub quantile: f64,
    #[serde(with = "extreal")]
    pub length: f64,
    #[serde(with = "extreal")]
    pub posi_length: f64,
    #[serde(with = "extreal")]
    pub ratio: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RepResult {
    pub outcomes: Vec<RepOutcome>,
    pub failures: Vec<RepFailure>,
    /// HySI intervals checked against `T ± σK_γ` and how many escaped it.
    pub containment_checked: usize,
    pub containment_violations: usize,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub config: SimulationConfig,
    pub outcomes: Vec<RepOutcome>,
    pub failures: Vec<RepFailure>,
    pub coverage: Vec<CoverageRow>,
    pub length_ratios: Vec<LengthRatioRow>,
    pub containment_checked: usize,
    pub containment_violations: usize,
}

impl StudyResult {
    pub fn coverage_of(&self, lambda: f64, method: Method) -> Option<&CoverageRow> {
        self.coverage
            .iter()
            .find(|r| r.lambda == lambda && r.method == method)
    }

    pub fn ratios_of(&self, lambda: f64, method: Method) -> Vec<&LengthRatioRow> {
        self.length_ratios
            .iter()
            .filter(|r| r.lambda == lambda && r.method == method)
            .collect()
    }

    pub fn lengths_of(&self, lambda: f64, method: Method) -> Vec<f64> {
        self.outcomes
            .iter()
            .filter(|o| o.lambda == lambda && o.method == method)
            .map(|o| o.length)
            .collect()
    }
}

/// One replication, using stream `rep` of the configured seed.
pub fn simulate_rep(config: &SimulationConfig, rep: usize) -> RepResult {
    let stream = RngStream::new(config.seed, rep as u64);
    let mut out = RepResult::default();
    let fail_all = |out: &mut RepResult, e: Error| {
        for &lambda in &config.lambdas {
            out.failures.push(RepFailure {
                rep,
                lambda,
                message: e.to_string(),
            });
        }
    };
    let prepared = (|| -> Result<_> {
        let design = generate_design(config, &mut stream.substream(0).rng())?;
        let y = generate_response(
            &design.w,
            config.theta,
            &config.beta,
            config.error_dist,
            &mut stream.substream(1).rng(),
        )?;
        let data = design.dataset(y)?;
        Ok((design, data))
    })();
    let (design, data) = match prepared {
        Ok(v) => v,
        Err(e) => {
            fail_all(&mut out, e);
            return out;
        }
    };
    let options = AnalysisOptions {
        alpha: config.alpha,
        gamma: config.gamma,
        methods: Method::ALL.to_vec(),
        posi_draws: config.posi_draws,
        universe_cap: DEFAULT_UNIVERSE_CAP,
        rng: stream.substream(2),
    };
    let analyzer = match Analyzer::new(&data, options) {
        Ok(a) => a,
        Err(e) => {
            fail_all(&mut out, e);
            return out;
        }
    };
    let n = config.n;
    let cut = n.div_ceil(2);
    for &lambda in &config.lambdas {
        let judged = (|| -> Result<(Vec<RepOutcome>, bool)> {
            let analysis = analyzer.analyze(lambda)?;
            let mut rows = Vec::with_capacity(analysis.intervals.len());
            let mut contained = true;
            for ci in &analysis.intervals {
                let range = if ci.method == Method::Split {
                    cut..n
                } else {
                    0..n
                };
                let m = range.len() as f64;
                let target = true_target(&design, range, &ci.selected_columns, config)?;
                if ci.method == Method::Hysi {
                    let k = ci.diagnostics.k_gamma.unwrap_or(f64::INFINITY);
                    let half = analysis.sigma2_t.sqrt() * k;
                    contained = ci.scaled.lower >= analysis.statistic - half
                        && ci.scaled.upper <= analysis.statistic + half;
                }
                rows.push(RepOutcome {
                    rep,
                    lambda,
                    method: ci.method,
                    covered: ci.covers(target / m.sqrt()),
                    length: ci.length,
                    selected_size: ci.selected_columns.len(),
                });
            }
            Ok((rows, contained))
        })();
        match judged {
            Ok((rows, contained)) => {
                out.containment_checked += 1;
                out.containment_violations += usize::from(!contained);
                out.outcomes.extend(rows);
            }
            Err(e) => out.failures.push(RepFailure {
                rep,
                lambda,
                message: e.to_string(),
            }),
        }
    }
    out
}

/// Empirical `q`-quantile by the `⌈qN⌉`-th order statistic of sorted values.
pub fn order_quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

pub fn run_study(config: &SimulationConfig) -> Result<StudyResult> {
    config.validate()?;
    let reps: Vec<RepResult> = (0..config.reps)
        .into_par_iter()
        .map(|r| simulate_rep(config, r))
        .collect();
    let mut result = StudyResult {
        config: config.clone(),
        outcomes: vec![],
        failures: vec![],
        coverage: vec![],
        length_ratios: vec![],
        containment_checked: 0,
        containment_violations: 0,
    };
    for r in reps {
        result.outcomes.extend(r.outcomes);
        result.failures.extend(r.failures);
        result.containment_checked += r.containment_checked;
        result.containment_violations += r.containment_violations;
    }
    if !result.failures.is_empty() {
        log::warn!(
            "{} replication(s) failed and were excluded",
            result.failures.len()
        );
    }
    summarize(&mut result);
    Ok(result)
}

fn summarize(result: &mut StudyResult) {
    let config = &result.config;
    for &lambda in &config.lambdas {
        let failures = result
            .failures
            .iter()
            .filter(|f| f.lambda == lambda)
            .count();
        let sorted_lengths = |method: Method| {
            let mut v: Vec<f64> = result
                .outcomes
                .iter()
                .filter(|o| o.lambda == lambda && o.method == method)
                .map(|o| o.length)
                .collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let posi = sorted_lengths(Method::Posi);
        for method in Method::ALL {
            let (covered, total) = result
                .outcomes
                .iter()
                .filter(|o| o.lambda == lambda && o.method == method)
                .fold((0, 0), |(c, t), o| (c + usize::from(o.covered), t + 1));
            let coverage = covered as f64 / total.max(1) as f64;
            result.coverage.push(CoverageRow {
                design: config.design,
                errors: config.error_dist,
                lambda,
                method,
                covered,
                total,
                coverage,
                standard_error: (coverage * (1.0 - coverage) / total.max(1) as f64).sqrt(),
                failures,
            });
            let lengths = sorted_lengths(method);
            for q in LENGTH_QUANTILES {
                let length = order_quantile(&lengths, q);
                let posi_length = order_quantile(&posi, q);
                result.length_ratios.push(LengthRatioRow {
                    design: config.design,
                    errors: config.error_dist,
                    lambda,
                    method,
                    quantile: q,
                    length,
                    posi_length,
                    ratio: length / posi_length,
                });
            }
        }
    }
}

fn write_rows<W: io::Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Columns `rep,lambda,method,covered,length,selected_size`.
pub fn write_outcomes<W: io::Write>(writer: W, rows: &[RepOutcome]) -> Result<()> {
    write_rows(writer, rows)
}

/// Columns `design,errors,lambda,method,covered,total,coverage,standard_error,failures`.
pub fn write_coverage<W: io::Write>(writer: W, rows: &[CoverageRow]) -> Result<()> {
    write_rows(writer, rows)
}

/// Columns `design,errors,lambda,method,quantile,length,posi_length,ratio`.
pub fn write_length_ratios<W: io::Write>(writer: W, rows: &[LengthRatioRow]) -> Result<()> {
    write_rows(writer, rows)
}

pub fn read_length_ratios<R: io::Read>(reader: R) -> Result<Vec<LengthRatioRow>> {
    let mut input = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for row in input.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}
