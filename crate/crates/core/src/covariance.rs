//! Heteroskedasticity-robust (sandwich) covariance estimates for the target
//! statistics of every candidate model and for the selection statistic of the
//! chosen one.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lasso::{Partialled, SelectedModel};
use crate::linalg::{gram_inverse, inverse_spd, select_columns};

/// Default largest number of controls whose full power set is enumerated.
pub const DEFAULT_UNIVERSE_CAP: usize = 14;

/// Candidate control subsets, indexed in binary counting order: subset `m`
/// contains control `k` iff bit `k` of `m` is set.
#[derive(Debug, Clone)]
pub struct ModelUniverse {
    subsets: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
}

impl ModelUniverse {
    pub fn all(p: usize, cap: usize) -> Result<Self> {
        if p > cap || p >= usize::BITS as usize {
            return Err(Error::UniverseTooLarge { p, cap });
        }
        let subsets = (0..1usize << p)
            .map(|mask| (0..p).filter(|k| mask >> k & 1 == 1).collect())
            .collect();
        Ok(Self::from_subsets(subsets))
    }

    /// Keeps the given order; duplicates are dropped after their first
    /// occurrence and every subset is sorted.
    pub fn from_subsets(subsets: Vec<Vec<usize>>) -> Self {
        let mut index = HashMap::new();
        let mut kept = Vec::new();
        for mut s in subsets {
            s.sort_unstable();
            s.dedup();
            if !index.contains_key(&s) {
                index.insert(s.clone(), kept.len());
                kept.push(s);
            }
        }
        Self {
            subsets: kept,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn index_of(&self, subset: &[usize]) -> Option<usize> {
        self.index.get(subset).copied()
    }
}

/// Least-squares fit of `y` on `W_E = (z, X_E)`.
#[derive(Debug, Clone)]
pub struct OlsFit {
    /// `√n` times the coefficient on `z`.
    pub t: f64,
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `(W_E'W_E)⁻¹`
    pub gram_inv: DMatrix<f64>,
}

impl OlsFit {
    /// `ψ_i = e₁'(W_E'W_E/n)⁻¹ W_{E,i} û_i`.
    pub fn influence(&self, w: &DMatrix<f64>) -> DVector<f64> {
        let n = w.nrows() as f64;
        let h = self.gram_inv.column(0) * n;
        (w * h).component_mul(&self.residuals)
    }
}

pub fn t_statistic(data: &Dataset, controls: &[usize]) -> Result<OlsFit> {
    fit_design(&data.design(controls), &data.y)
}

fn fit_design(w: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    if w.ncols() >= w.nrows() {
        return Err(Error::SingularGram {
            condition: f64::INFINITY,
        });
    }
    let gram_inv = gram_inverse(w)?;
    let beta = &gram_inv * w.tr_mul(y);
    let residuals = y - w * &beta;
    let t = (w.nrows() as f64).sqrt() * beta[0];
    Ok(OlsFit {
        t,
        beta,
        residuals,
        gram_inv,
    })
}

/// Sandwich covariance between the target statistics of two models,
/// evaluated directly from its three factors.
pub fn sigma_t_entry(
    data: &Dataset,
    first: &[usize],
    second: &[usize],
    residuals_first: &DVector<f64>,
    residuals_second: &DVector<f64>,
) -> Result<f64> {
    let n = data.n() as f64;
    let w1 = data.design(first);
    let w2 = data.design(second);
    let g1 = inverse_spd(&(w1.tr_mul(&w1) / n))?;
    let g2 = inverse_spd(&(w2.tr_mul(&w2) / n))?;
    let weights = residuals_first.component_mul(residuals_second);
    let mut meat = DMatrix::zeros(w1.ncols(), w2.ncols());
    for i in 0..data.n() {
        meat += w1.row(i).transpose() * w2.row(i) * weights[i];
    }
    meat /= n;
    Ok((g1.row(0) * meat * g2.column(0))[(0, 0)])
}

/// Covariance estimates for the target statistic over a model universe,
/// stored through the influence factor `Ψ` with `Σ̂_T = ΨΨ'/n`.
#[derive(Debug, Clone)]
pub struct CovarianceEstimates {
    /// Feasible subsets only; row `m` of `influence` belongs to subset `m`.
    pub universe: ModelUniverse,
    pub influence: DMatrix<f64>,
    pub variances: DVector<f64>,
    pub t_values: DVector<f64>,
    /// Subsets removed because their design was rank deficient.
    pub dropped: Vec<Vec<usize>>,
}

impl CovarianceEstimates {
    pub fn n(&self) -> usize {
        self.influence.ncols()
    }

    pub fn len(&self) -> usize {
        self.influence.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.influence.nrows() == 0
    }

    /// Dense `Σ̂_T`; `m × m`, so only for small universes.
    pub fn sigma_t(&self) -> DMatrix<f64> {
        &self.influence * self.influence.transpose() / self.n() as f64
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.influence.row(i).dot(&self.influence.row(j)) / self.n() as f64
    }

    pub fn variance_of(&self, subset: &[usize]) -> Option<f64> {
        self.universe.index_of(subset).map(|m| self.variances[m])
    }

    /// Whether every diagonal entry lies in `[1/bound, bound]`.
    pub fn variances_within(&self, bound: f64) -> bool {
        self.variances
            .iter()
            .all(|&v| v >= 1.0 / bound && v <= bound)
    }
}

type ModelFit = (Vec<usize>, Result<(f64, DVector<f64>)>);

pub fn build_universe_covariance(
    data: &Dataset,
    universe: &ModelUniverse,
) -> Result<CovarianceEstimates> {
    let rows: Vec<ModelFit> = universe
        .subsets()
        .par_iter()
        .map(|subset| {
            let w = data.design(subset);
            let res = fit_design(&w, &data.y).map(|fit| (fit.t, fit.influence(&w)));
            (subset.clone(), res)
        })
        .collect();

    let n = data.n();
    let mut kept = Vec::with_capacity(rows.len());
    let mut dropped = Vec::new();
    let mut columns = Vec::with_capacity(rows.len());
    let mut t_values = Vec::with_capacity(rows.len());
    for (subset, res) in rows {
        match res {
            Ok((t, psi)) => {
                kept.push(subset);
                t_values.push(t);
                columns.push(psi);
            }
            Err(Error::SingularGram { .. }) => {
                log::warn!("dropping rank-deficient control subset {subset:?}");
                dropped.push(subset);
            }
            Err(e) => return Err(e),
        }
    }
    let m = kept.len();
    let mut influence = DMatrix::zeros(m, n);
    for (r, psi) in columns.iter().enumerate() {
        influence.row_mut(r).copy_from(&psi.transpose());
    }
    let variances = DVector::from_iterator(
        m,
        influence
            .row_iter()
            .map(|row| row.norm_squared() / n as f64),
    );
    Ok(CovarianceEstimates {
        universe: ModelUniverse::from_subsets(kept),
        influence,
        variances,
        t_values: DVector::from_vec(t_values),
        dropped,
    })
}

/// Target statistic of the selected model with its variance and its
/// covariance with the selection statistic `D`.
#[derive(Debug, Clone)]
pub struct SelectedStatistics {
    pub t: f64,
    pub sigma2_t: f64,
    pub sigma_dt: DVector<f64>,
    pub fit: OlsFit,
}

/// Covariance vector between `D` (active block then inactive block) and `T`
/// for the selected model.
pub fn sigma_dt(
    data: &Dataset,
    po: &Partialled,
    model: &SelectedModel,
    fit: &OlsFit,
) -> Result<DVector<f64>> {
    let p = po.p();
    let inactive = model.inactive(p);
    let xe = select_columns(&po.x_star, &model.active);
    let xc = select_columns(&po.x_star, &inactive);
    let g_star = inverse_spd(&xe.tr_mul(&xe))?;
    let coef_star = &g_star * xe.tr_mul(&po.y_star);
    let u_star = &po.y_star - &xe * coef_star;
    let psi = fit.influence(&data.design(&model.active));
    let weights = u_star.component_mul(&psi);
    let n = data.n() as f64;

    let mut out = DVector::zeros(p);
    out.rows_mut(0, model.size())
        .copy_from(&(g_star * xe.tr_mul(&weights)));
    out.rows_mut(model.size(), inactive.len())
        .copy_from(&(xc.tr_mul(&weights) / n));
    Ok(out)
}

pub fn selected_statistics(
    data: &Dataset,
    po: &Partialled,
    model: &SelectedModel,
) -> Result<SelectedStatistics> {
    let fit = t_statistic(data, &model.active)?;
    let w = data.design(&model.active);
    let psi = fit.influence(&w);
    let sigma2_t = psi.norm_squared() / data.n() as f64;
    let sigma_dt = sigma_dt(data, po, model, &fit)?;
    Ok(SelectedStatistics {
        t: fit.t,
        sigma2_t,
        sigma_dt,
        fit,
    })
}
