//! LASSO selection of controls after projecting out the predictor of interest.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{inverse_spd, select_columns};
use crate::selection::SelectionEvent;

pub const MAX_SWEEPS: usize = 100_000;
/// Duality gap target relative to `½‖y*‖²`.
pub const GAP_TOLERANCE: f64 = 1e-10;
/// Coefficients below this multiple of `‖y*‖/‖x*_k‖` count as zero.
pub const ACTIVITY_THRESHOLD: f64 = 1e-9;

/// `y* = (I - P_z) y` and `X* = (I - P_z) X`.
#[derive(Debug, Clone)]
pub struct Partialled {
    pub y_star: DVector<f64>,
    pub x_star: DMatrix<f64>,
}

impl Partialled {
    pub fn n(&self) -> usize {
        self.y_star.len()
    }

    pub fn p(&self) -> usize {
        self.x_star.ncols()
    }
}

pub fn partial_out(data: &Dataset) -> Result<Partialled> {
    let z = &data.z;
    let zz = z.norm_squared();
    if !(zz > 0.0) {
        return Err(Error::DegeneratePredictor);
    }
    let y_star = &data.y - z * (z.dot(&data.y) / zz);
    // X* = X - z (z'X) / z'z
    let zx = z.tr_mul(&data.x) / zz;
    let x_star = &data.x - z * zx;
    Ok(Partialled { y_star, x_star })
}

/// A selected model `(E, s_E)` at penalty `lambda`. `active` is sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedModel {
    pub active: Vec<usize>,
    pub signs: Vec<i8>,
    pub lambda: f64,
}

impl SelectedModel {
    pub fn new(active: Vec<usize>, signs: Vec<i8>, lambda: f64) -> Result<Self> {
        if active.len() != signs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} active controls but {} signs",
                active.len(),
                signs.len()
            )));
        }
        if !active.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "active set must be strictly increasing".into(),
            ));
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument("signs must be +1 or -1".into()));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(Self {
            active,
            signs,
            lambda,
        })
    }

    pub fn size(&self) -> usize {
        self.active.len()
    }

    /// Controls outside `E`, ascending.
    pub fn inactive(&self, p: usize) -> Vec<usize> {
        (0..p)
            .filter(|k| self.active.binary_search(k).is_err())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub beta: DVector<f64>,
    pub model: SelectedModel,
    pub sweeps: usize,
    pub duality_gap: f64,
    /// Controls left inactive although their correlation with the residual
    /// sits on the subgradient boundary.
    pub boundary: Vec<usize>,
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn duality_gap(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    r: &DVector<f64>,
    lambda: f64,
) -> f64 {
    let primal = 0.5 * r.norm_squared() + lambda * beta.lp_norm(1);
    let corr = x.tr_mul(r).amax();
    let scale = if corr > lambda { lambda / corr } else { 1.0 };
    let nu = r * scale;
    let dual = 0.5 * y.norm_squared() - 0.5 * (y - nu).norm_squared();
    primal - dual
}

/// Minimizes `½‖y* - X*β‖² + λ‖β‖₁` by cyclic coordinate descent, then
/// re-solves the stationarity equations on the recovered support so the
/// reported model satisfies the KKT conditions to rounding error.
///
/// `tol` is the relative slack allowed on `|x_k'(y* - X*β)| <= λ`.
pub fn solve_lasso(y: &DVector<f64>, x: &DMatrix<f64>, lambda: f64, tol: f64) -> Result<LassoFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "y has {} rows, X has {n}",
            y.len()
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let col_sq: Vec<f64> = (0..p).map(|k| x.column(k).norm_squared()).collect();
    let y_norm = y.norm();
    let gap_target = GAP_TOLERANCE * 0.5 * y_norm * y_norm;

    let mut beta = DVector::zeros(p);
    let mut r = y.clone();
    let mut sweeps = 0;
    let mut gap = duality_gap(y, x, &beta, &r, lambda);
    while gap > gap_target {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence { gap, sweeps });
        }
        sweeps += 1;
        for k in 0..p {
            if col_sq[k] == 0.0 {
                continue;
            }
            let col = x.column(k);
            let old = beta[k];
            let rho = col.dot(&r) + col_sq[k] * old;
            let new = soft_threshold(rho, lambda) / col_sq[k];
            if new != old {
                r.axpy(old - new, &col, 1.0);
                beta[k] = new;
            }
        }
        gap = duality_gap(y, x, &beta, &r, lambda);
    }

    let threshold = |k: usize| ACTIVITY_THRESHOLD * y_norm / col_sq[k].sqrt();
    let mut active: Vec<usize> = (0..p)
        .filter(|&k| col_sq[k] > 0.0 && beta[k].abs() > threshold(k))
        .collect();
    if let Some(polished) = polish(y, x, &active, &beta, lambda, tol) {
        beta = polished;
        r = y - x * &beta;
        gap = duality_gap(y, x, &beta, &r, lambda);
        active = (0..p).filter(|&k| beta[k] != 0.0).collect();
    } else {
        log::warn!("LASSO active-set refinement did not settle; keeping the descent solution");
    }
    for k in 0..p {
        if active.binary_search(&k).is_err() {
            beta[k] = 0.0;
        }
    }
    let grad = x.tr_mul(&(y - x * &beta));
    let boundary = (0..p)
        .filter(|&k| active.binary_search(&k).is_err() && grad[k].abs() >= lambda * (1.0 - 1e-9))
        .collect();
    let signs = active
        .iter()
        .map(|&k| if beta[k] > 0.0 { 1 } else { -1 })
        .collect();
    Ok(LassoFit {
        beta,
        model: SelectedModel {
            active,
            signs,
            lambda,
        },
        sweeps,
        duality_gap: gap,
        boundary,
    })
}

/// Active-set refinement of a coordinate-descent solution: solves the
/// stationarity equations on a support with fixed signs, drops coordinates
/// whose sign flips and adds inactive ones that violate `|x_k'r| <= λ`,
/// until the KKT conditions hold. Returns `None` if this does not settle.
fn polish(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    active: &[usize],
    beta: &DVector<f64>,
    lambda: f64,
    tol: f64,
) -> Option<DVector<f64>> {
    let p = x.ncols();
    let mut support: Vec<(usize, f64)> = active.iter().map(|&k| (k, beta[k].signum())).collect();
    for _ in 0..(4 * p + 10) {
        let mut full = DVector::zeros(p);
        if !support.is_empty() {
            let idx: Vec<usize> = support.iter().map(|&(k, _)| k).collect();
            let xe = select_columns(x, &idx);
            let inv = inverse_spd(&xe.tr_mul(&xe)).ok()?;
            let s = DVector::from_iterator(support.len(), support.iter().map(|&(_, s)| s));
            let be = inv * (xe.tr_mul(y) - &s * lambda);
            // the coordinate that crossed zero furthest leaves the support
            let flip = be
                .iter()
                .zip(s.iter())
                .enumerate()
                .filter(|(_, (b, s))| *b * *s <= 0.0)
                .min_by(|a, b| (a.1 .0 * a.1 .1).total_cmp(&(b.1 .0 * b.1 .1)))
                .map(|(j, _)| j);
            if let Some(j) = flip {
                support.remove(j);
                continue;
            }
            for (j, &(k, _)) in support.iter().enumerate() {
                full[k] = be[j];
            }
        }
        let grad = x.tr_mul(&(y - x * &full));
        let worst = (0..p)
            .filter(|k| support.iter().all(|&(a, _)| a != *k))
            .max_by(|&a, &b| grad[a].abs().total_cmp(&grad[b].abs()));
        match worst {
            Some(k) if grad[k].abs() > lambda * (1.0 + tol) => {
                support.push((k, grad[k].signum()));
                support.sort_by_key(|&(k, _)| k);
            }
            _ => return Some(full),
        }
    }
    None
}

/// True iff the affine characterization `A D <= â` holds up to `tol`
/// (absolute, in the units of `â`).
pub fn check_kkt(model: &SelectedModel, event: &SelectionEvent, tol: f64) -> Result<bool> {
    if event.model.active != model.active || event.model.signs.len() != model.signs.len() {
        return Err(Error::DimensionMismatch(
            "event was built for a different active set".into(),
        ));
    }
    let event = if event.model.signs == model.signs && event.model.lambda == model.lambda {
        std::borrow::Cow::Borrowed(event)
    } else {
        std::borrow::Cow::Owned(event.with_model(model.clone())?)
    };
    let slack = event.slack();
    Ok(slack.iter().all(|&s| s >= -tol))
}
