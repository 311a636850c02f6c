//! Naive, split-sample, selective, PoSI and hybrid confidence intervals for
//! the coefficient on the predictor of interest.
//!
//! Intervals are computed for the `√n`-scaled target and reported on both the
//! scaled and the unscaled coefficient.

use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::covariance::{
    build_universe_covariance, selected_statistics, t_statistic, CovarianceEstimates,
    ModelUniverse, DEFAULT_UNIVERSE_CAP,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::extreal;
use crate::lasso::{partial_out, solve_lasso, Partialled, SelectedModel};
use crate::numerics::{invert_monotone, std_normal_quantile, RngStream, TruncatedNormalSpec};
use crate::posi::{posi_interval, sample_max_abs, MaxAbsSample, PosiConstant, DEFAULT_DRAWS};
use crate::selection::{
    decorrelated_statistic, truncation_triple, SelectionEvent, TruncationTriple,
};

/// Relative KKT slack handed to the LASSO solver.
pub const LASSO_TOLERANCE: f64 = 1e-9;
/// Selective endpoints farther than this many standard errors from `T` are
/// reported as infinite.
pub const BRACKET_CAP: f64 = 1e6;
/// Statistics this close to a truncation bound (in standard errors) are
/// snapped onto it.
const SNAP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Naive,
    Split,
    Selective,
    Hysi,
    Posi,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Naive,
        Method::Split,
        Method::Selective,
        Method::Hysi,
        Method::Posi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Split => "split",
            Method::Selective => "selective",
            Method::Hysi => "hysi",
            Method::Posi => "posi",
        }
    }

    fn needs_truncation(self) -> bool {
        matches!(self, Method::Selective | Method::Hysi)
    }

    fn needs_posi(self) -> bool {
        matches!(self, Method::Hysi | Method::Posi)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

/// Endpoints with their length; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    #[serde(with = "extreal")]
    pub lower: f64,
    #[serde(with = "extreal")]
    pub upper: f64,
    #[serde(with = "extreal")]
    pub length: f64,
}

impl Bounds {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            length: upper - lower,
        }
    }

    fn divided_by(&self, divisor: f64) -> Self {
        Self::new(self.lower / divisor, self.upper / divisor)
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(
        with = "extreal::option",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub v_minus: Option<f64>,
    #[serde(
        with = "extreal::option",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub v_plus: Option<f64>,
    #[serde(
        with = "extreal::option",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub v_zero: Option<f64>,
    #[serde(
        rename = "K_alpha",
        with = "extreal::option",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub k_alpha: Option<f64>,
    #[serde(
        rename = "K_gamma",
        with = "extreal::option",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub k_gamma: Option<f64>,
    /// Some endpoint sits on a bracket or band edge rather than at a root.
    pub clipped: bool,
    pub iterations: usize,
    /// The interval covers the target of a model selected on a subsample.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub different_target: bool,
}

impl Diagnostics {
    fn with_triple(triple: &TruncationTriple) -> Self {
        Self {
            v_minus: Some(triple.v_minus),
            v_plus: Some(triple.v_plus),
            v_zero: Some(triple.v_zero),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub method: Method,
    pub level: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(with = "extreal")]
    pub lower: f64,
    #[serde(with = "extreal")]
    pub upper: f64,
    #[serde(with = "extreal")]
    pub length: f64,
    pub scaled: Bounds,
    /// Endpoints in the raw units of the data when it was standardized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<Bounds>,
    pub n: usize,
    #[serde(default)]
    pub selected: Vec<String>,
    #[serde(default)]
    pub selected_columns: Vec<usize>,
    #[serde(default)]
    pub signs: Vec<i8>,
    pub diagnostics: Diagnostics,
}

impl ConfidenceInterval {
    fn from_scaled(
        method: Method,
        level: f64,
        scaled_lower: f64,
        scaled_upper: f64,
        n: usize,
        diagnostics: Diagnostics,
    ) -> Self {
        let scaled = Bounds::new(scaled_lower, scaled_upper);
        let unscaled = scaled.divided_by((n as f64).sqrt());
        Self {
            method,
            level,
            gamma: None,
            lower: unscaled.lower,
            upper: unscaled.upper,
            length: unscaled.length,
            scaled,
            original: None,
            n,
            selected: vec![],
            selected_columns: vec![],
            signs: vec![],
            diagnostics,
        }
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::new(self.lower, self.upper)
    }

    /// Whether the unscaled coefficient `value` lies in the interval.
    pub fn covers(&self, value: f64) -> bool {
        self.bounds().contains(value)
    }

    fn describe_model(&mut self, data: &Dataset, model: &SelectedModel) {
        self.selected = model
            .active
            .iter()
            .map(|&k| data.column_labels[k].clone())
            .collect();
        self.selected_columns = model.active.clone();
        self.signs = model.signs.clone();
        if !data.standardization.is_identity() {
            let to_raw = |v: f64| data.coefficient_to_original(v);
            self.original = Some(Bounds::new(to_raw(self.lower), to_raw(self.upper)));
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

fn check_variance(sigma2_t: f64) -> Result<f64> {
    if !(sigma2_t > 0.0 && sigma2_t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "target variance must be positive and finite, got {sigma2_t}"
        )));
    }
    Ok(sigma2_t.sqrt())
}

fn check_gamma(alpha: f64, gamma: f64) -> Result<()> {
    if !(0.0..=alpha).contains(&gamma) {
        return Err(Error::InvalidGamma { gamma, alpha });
    }
    Ok(())
}

/// Bisection bracket width on the `√n` scale.
fn root_tolerance(sigma: f64) -> f64 {
    1e-8 * sigma.max(1.0)
}

/// `T ± Φ⁻¹(1 - α/2) σ`.
pub fn naive_ci(t: f64, sigma2_t: f64, alpha: f64, n: usize) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    let sigma = check_variance(sigma2_t)?;
    let half = std_normal_quantile(1.0 - 0.5 * alpha) * sigma;
    Ok(ConfidenceInterval::from_scaled(
        Method::Naive,
        1.0 - alpha,
        t - half,
        t + half,
        n,
        Diagnostics::default(),
    ))
}

pub fn posi_ci(t: f64, sigma2_t: f64, k: &PosiConstant, n: usize) -> Result<ConfidenceInterval> {
    let (lo, hi) = posi_interval(t, sigma2_t, k)?;
    let diagnostics = Diagnostics {
        k_alpha: Some(k.k),
        ..Diagnostics::default()
    };
    Ok(ConfidenceInterval::from_scaled(
        Method::Posi,
        1.0 - k.alpha,
        lo,
        hi,
        n,
        diagnostics,
    ))
}

/// Moves `t` onto the truncation interval when it misses it by rounding only.
fn snap_into(t: f64, sigma: f64, triple: &TruncationTriple) -> Result<f64> {
    let slack = SNAP * sigma.max(t.abs());
    if t < triple.v_minus - slack || t > triple.v_plus + slack {
        return Err(Error::InvalidArgument(format!(
            "statistic {t} lies outside its truncation interval [{}, {}]",
            triple.v_minus, triple.v_plus
        )));
    }
    Ok(t.clamp(triple.v_minus, triple.v_plus))
}

/// `μ ↦ F_TN(t; μ, σ², lower(μ), upper(μ))`, nonincreasing in `μ`. A bound
/// pair that collapses onto `t` gives 1 left of `t` and 0 right of it.
fn pivot(t: f64, sigma2: f64, bounds: impl Fn(f64) -> (f64, f64)) -> impl Fn(f64) -> Result<f64> {
    move |mu| {
        let (lower, upper) = bounds(mu);
        if lower >= upper {
            return Ok(if mu <= t { 1.0 } else { 0.0 });
        }
        TruncatedNormalSpec::new(mu, sigma2, lower, upper)?.cdf(t)
    }
}

/// Endpoint of an equal-tailed selective interval: solves `g(μ) = target`
/// after expanding a bracket geometrically from `t ± σ`. Returns `±∞` (with
/// the clipped flag) when the root lies beyond `BRACKET_CAP·σ`.
fn selective_endpoint(
    g: &impl Fn(f64) -> Result<f64>,
    t: f64,
    sigma: f64,
    target: f64,
) -> Result<(f64, usize, bool)> {
    let cap = BRACKET_CAP * sigma;
    let mut width = sigma;
    let mut lo = t - width;
    while g(lo)? < target {
        if width >= cap {
            return Ok((f64::NEG_INFINITY, 0, true));
        }
        width = (2.0 * width).min(cap);
        lo = t - width;
    }
    width = sigma;
    let mut hi = t + width;
    while g(hi)? > target {
        if width >= cap {
            return Ok((f64::INFINITY, 0, true));
        }
        width = (2.0 * width).min(cap);
        hi = t + width;
    }
    let root = invert_monotone(g, target, lo, hi, root_tolerance(sigma))?;
    Ok((root.value, root.iterations, root.clipped))
}

/// Equal-tailed inversion of the truncated normal pivot on
/// `[v_minus, v_plus]` at level `1 - α`.
pub fn selective_ci(
    t: f64,
    sigma2_t: f64,
    triple: &TruncationTriple,
    alpha: f64,
    n: usize,
) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    let sigma = check_variance(sigma2_t)?;
    let mut diagnostics = Diagnostics::with_triple(triple);
    if triple.v_minus == f64::NEG_INFINITY && triple.v_plus == f64::INFINITY {
        let mut ci = naive_ci(t, sigma2_t, alpha, n)?;
        ci.method = Method::Selective;
        ci.diagnostics = diagnostics;
        return Ok(ci);
    }
    if !(triple.v_minus < triple.v_plus) {
        return Err(Error::EmptyTruncation {
            lower: triple.v_minus,
            upper: triple.v_plus,
        });
    }
    let t = snap_into(t, sigma, triple)?;
    let (vm, vp) = (triple.v_minus, triple.v_plus);
    let g = pivot(t, sigma2_t, move |_| (vm, vp));
    let (lower, it_lo, clip_lo) = selective_endpoint(&g, t, sigma, 1.0 - 0.5 * alpha)?;
    let (upper, it_hi, clip_hi) = selective_endpoint(&g, t, sigma, 0.5 * alpha)?;
    diagnostics.iterations = it_lo + it_hi;
    diagnostics.clipped = clip_lo || clip_hi;
    Ok(ConfidenceInterval::from_scaled(
        Method::Selective,
        1.0 - alpha,
        lower,
        upper,
        n,
        diagnostics,
    ))
}

/// Hybrid interval: inverts the pivot truncated to the selection interval
/// intersected with the level `1 - γ` PoSI band around `μ`, at tail
/// probability `q = (α - γ) / (2(1 - γ))` each side.
///
/// Roots are sought only on `[T - σK_γ, T + σK_γ]`, so the interval never
/// leaves that band. `γ = 0` (with `K_γ = ∞`) is the selective interval and
/// `γ = α` is the band itself.
pub fn hysi_ci(
    t: f64,
    sigma2_t: f64,
    triple: &TruncationTriple,
    k_gamma: &PosiConstant,
    alpha: f64,
    gamma: f64,
    n: usize,
) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    check_gamma(alpha, gamma)?;
    let sigma = check_variance(sigma2_t)?;
    let k = k_gamma.k;
    if !(k >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "K_gamma must be nonnegative, got {k}"
        )));
    }
    let finish = |mut ci: ConfidenceInterval| {
        ci.method = Method::Hysi;
        ci.level = 1.0 - alpha;
        ci.gamma = Some(gamma);
        ci.diagnostics.k_gamma = Some(k);
        ci
    };
    if gamma == 0.0 || k == f64::INFINITY {
        return Ok(finish(selective_ci(t, sigma2_t, triple, alpha, n)?));
    }
    let mut diagnostics = Diagnostics::with_triple(triple);
    if gamma == alpha {
        let half = sigma * k;
        return Ok(finish(ConfidenceInterval::from_scaled(
            Method::Hysi,
            1.0 - alpha,
            t - half,
            t + half,
            n,
            diagnostics,
        )));
    }
    if !(triple.v_minus < triple.v_plus) {
        return Err(Error::EmptyTruncation {
            lower: triple.v_minus,
            upper: triple.v_plus,
        });
    }
    let half = sigma * k;
    let (vm, vp) = (triple.v_minus, triple.v_plus);
    let g = pivot(snap_into(t, sigma, triple)?, sigma2_t, move |mu| {
        (vm.max(mu - half), vp.min(mu + half))
    });
    let q = (alpha - gamma) / (2.0 * (1.0 - gamma));
    let tol = root_tolerance(sigma);
    let lo = invert_monotone(&g, 1.0 - q, t - half, t + half, tol)?;
    let hi = invert_monotone(&g, q, t - half, t + half, tol)?;
    diagnostics.iterations = lo.iterations + hi.iterations;
    diagnostics.clipped = lo.clipped || hi.clipped;
    Ok(finish(ConfidenceInterval::from_scaled(
        Method::Hysi,
        1.0 - alpha,
        lo.value,
        hi.value,
        n,
        diagnostics,
    )))
}

/// Selects on the first `⌈n/2⌉` observations and reports the naive interval
/// for that model computed on the remaining ones.
pub fn split_sample_ci(
    data: &Dataset,
    lambda: f64,
    alpha: f64,
) -> Result<(ConfidenceInterval, SelectedModel)> {
    let n = data.n();
    let cut = n.div_ceil(2);
    if n - cut < 2 {
        return Err(Error::InvalidArgument(format!(
            "split-sample interval needs at least 4 observations, got {n}"
        )));
    }
    let first = data.rows(0..cut)?;
    let second = data.rows(cut..n)?;
    let po = partial_out(&first)?;
    let model = solve_lasso(&po.y_star, &po.x_star, lambda, LASSO_TOLERANCE)?.model;
    let fit = t_statistic(&second, &model.active)?;
    let psi = fit.influence(&second.design(&model.active));
    let sigma2 = psi.norm_squared() / second.n() as f64;
    let mut ci = naive_ci(fit.t, sigma2, alpha, second.n())?;
    ci.method = Method::Split;
    ci.diagnostics.different_target = true;
    ci.describe_model(data, &model);
    Ok((ci, model))
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub alpha: f64,
    pub gamma: f64,
    pub methods: Vec<Method>,
    pub posi_draws: usize,
    pub universe_cap: usize,
    pub rng: RngStream,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            gamma: 0.005,
            methods: Method::ALL.to_vec(),
            posi_draws: DEFAULT_DRAWS,
            universe_cap: DEFAULT_UNIVERSE_CAP,
            rng: RngStream::new(0, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoSummary {
    pub sweeps: usize,
    pub duality_gap: f64,
    /// Inactive controls whose gradient sits on the `±λ` boundary.
    pub boundary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosiSummary {
    #[serde(rename = "K_alpha", with = "extreal")]
    pub k_alpha: f64,
    #[serde(rename = "K_gamma", with = "extreal")]
    pub k_gamma: f64,
    pub mc_standard_error_alpha: f64,
    pub mc_standard_error_gamma: f64,
    pub draws: usize,
    pub models: usize,
    pub dropped_models: usize,
}

/// Everything computed for one predictor and one penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub response: String,
    pub predictor: String,
    pub lambda: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub n: usize,
    pub selected: Vec<String>,
    pub selected_columns: Vec<usize>,
    pub signs: Vec<i8>,
    /// `T` and its variance on the `√n` scale.
    pub statistic: f64,
    pub sigma2_t: f64,
    pub lasso: LassoSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posi: Option<PosiSummary>,
    pub intervals: Vec<ConfidenceInterval>,
}

impl Analysis {
    pub fn interval(&self, method: Method) -> Option<&ConfidenceInterval> {
        self.intervals.iter().find(|ci| ci.method == method)
    }

    pub fn model(&self) -> Result<SelectedModel> {
        SelectedModel::new(
            self.selected_columns.clone(),
            self.signs.clone(),
            self.lambda,
        )
    }
}

/// Runs the full pipeline on one dataset. The model-universe covariance and
/// the Monte-Carlo maxima behind `K` depend only on the data, so they are
/// computed at most once and shared across penalties.
pub struct Analyzer<'a> {
    data: &'a Dataset,
    options: AnalysisOptions,
    partialled: Partialled,
    universe: OnceCell<CovarianceEstimates>,
    maxima: OnceCell<MaxAbsSample>,
}

impl<'a> Analyzer<'a> {
    pub fn new(data: &'a Dataset, options: AnalysisOptions) -> Result<Self> {
        check_alpha(options.alpha)?;
        check_gamma(options.alpha, options.gamma)?;
        if options.methods.is_empty() {
            return Err(Error::InvalidArgument(
                "no interval methods requested".into(),
            ));
        }
        Ok(Self {
            partialled: partial_out(data)?,
            data,
            options,
            universe: OnceCell::new(),
            maxima: OnceCell::new(),
        })
    }

    pub fn options(&self) -> &AnalysisOptions {
        &self.options
    }

    pub fn universe_covariance(&self) -> Result<&CovarianceEstimates> {
        if let Some(cov) = self.universe.get() {
            return Ok(cov);
        }
        let universe = ModelUniverse::all(self.data.p(), self.options.universe_cap)?;
        let cov = build_universe_covariance(self.data, &universe)?;
        Ok(self.universe.get_or_init(|| cov))
    }

    fn maxima(&self) -> Result<&MaxAbsSample> {
        if let Some(sample) = self.maxima.get() {
            return Ok(sample);
        }
        let sample = sample_max_abs(
            self.universe_covariance()?,
            self.options.posi_draws,
            self.options.rng,
        )?;
        Ok(self.maxima.get_or_init(|| sample))
    }

    /// `(K_α, K_γ)` from one shared set of draws; `K_0 = ∞`.
    pub fn constants(&self) -> Result<(PosiConstant, PosiConstant)> {
        let sample = self.maxima()?;
        Ok((
            sample.constant(self.options.alpha)?,
            sample.constant(self.options.gamma)?,
        ))
    }

    pub fn analyze(&self, lambda: f64) -> Result<Analysis> {
        let data = self.data;
        let opts = &self.options;
        let po = &self.partialled;
        let n = data.n();
        let fit = solve_lasso(&po.y_star, &po.x_star, lambda, LASSO_TOLERANCE)?;
        let model = fit.model.clone();
        let stats = selected_statistics(data, po, &model)?;
        let (t, sigma2) = (stats.t, stats.sigma2_t);
        let wants = |m: Method| opts.methods.contains(&m);

        let triple = if opts.methods.iter().any(|m| m.needs_truncation()) {
            let event = SelectionEvent::from_partialled(po, &model)?;
            let z = decorrelated_statistic(&event, t, sigma2, &stats.sigma_dt)?;
            Some(truncation_triple(&event, &z, sigma2, &stats.sigma_dt)?)
        } else {
            None
        };
        let constants = if opts.methods.iter().any(|m| m.needs_posi()) {
            Some(self.constants()?)
        } else {
            None
        };

        let mut intervals = Vec::new();
        for method in Method::ALL.into_iter().filter(|&m| wants(m)) {
            let mut ci = match method {
                Method::Naive => naive_ci(t, sigma2, opts.alpha, n)?,
                Method::Split => {
                    intervals.push(split_sample_ci(data, lambda, opts.alpha)?.0);
                    continue;
                }
                Method::Selective => {
                    selective_ci(t, sigma2, triple.as_ref().unwrap(), opts.alpha, n)?
                }
                Method::Hysi => {
                    let (_, k_gamma) = constants.as_ref().unwrap();
                    hysi_ci(
                        t,
                        sigma2,
                        triple.as_ref().unwrap(),
                        k_gamma,
                        opts.alpha,
                        opts.gamma,
                        n,
                    )?
                }
                Method::Posi => posi_ci(t, sigma2, &constants.as_ref().unwrap().0, n)?,
            };
            ci.describe_model(data, &model);
            intervals.push(ci);
        }

        let posi = match (&constants, self.universe.get()) {
            (Some((ka, kg)), Some(cov)) => Some(PosiSummary {
                k_alpha: ka.k,
                k_gamma: kg.k,
                mc_standard_error_alpha: ka.mc_standard_error,
                mc_standard_error_gamma: kg.mc_standard_error,
                draws: ka.draws,
                models: cov.len(),
                dropped_models: cov.dropped.len(),
            }),
            _ => None,
        };
        let labels = |idx: &[usize]| -> Vec<String> {
            idx.iter().map(|&k| data.column_labels[k].clone()).collect()
        };
        Ok(Analysis {
            response: data.response_label.clone(),
            predictor: data.predictor_label.clone(),
            lambda,
            alpha: opts.alpha,
            gamma: opts.gamma,
            n,
            selected: labels(&model.active),
            selected_columns: model.active.clone(),
            signs: model.signs.clone(),
            statistic: t,
            sigma2_t: sigma2,
            lasso: LassoSummary {
                sweeps: fit.sweeps,
                duality_gap: fit.duality_gap,
                boundary: labels(&fit.boundary),
            },
            posi,
            intervals,
        })
    }
}

/// One-shot form of [`Analyzer::analyze`].
pub fn analyze(data: &Dataset, lambda: f64, options: AnalysisOptions) -> Result<Analysis> {
    Analyzer::new(data, options)?.analyze(lambda)
}
