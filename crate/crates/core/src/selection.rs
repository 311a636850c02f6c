//! Affine description `A D <= â` of the LASSO selection event and its
//! reduction to an interval for the target statistic.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::extreal;
use crate::lasso::{partial_out, Partialled, SelectedModel};
use crate::linalg::{inverse_spd, select_columns};

/// Selection event for a model `(E, s_E)`.
///
/// Coordinates of `d` (and of every covariance vector paired with it) are
/// ordered as the active controls followed by the inactive ones, both
/// ascending.
#[derive(Debug, Clone)]
pub struct SelectionEvent {
    pub a: DMatrix<f64>,
    pub d: DVector<f64>,
    pub a_hat: DVector<f64>,
    pub model: SelectedModel,
    n: usize,
    p: usize,
    /// `(X*_E'X*_E)⁻¹`
    gram_inv: DMatrix<f64>,
    /// `X*_{-E}'X*_E`
    cross: DMatrix<f64>,
}

impl SelectionEvent {
    pub fn build(data: &Dataset, model: &SelectedModel) -> Result<Self> {
        Self::from_partialled(&partial_out(data)?, model)
    }

    pub fn from_partialled(po: &Partialled, model: &SelectedModel) -> Result<Self> {
        let (n, p) = (po.n(), po.p());
        if model.active.iter().any(|&k| k >= p) {
            return Err(Error::DimensionMismatch(format!(
                "active set {:?} out of range for {p} controls",
                model.active
            )));
        }
        let inactive = model.inactive(p);
        let xe = select_columns(&po.x_star, &model.active);
        let xc = select_columns(&po.x_star, &inactive);
        let gram_inv = inverse_spd(&xe.tr_mul(&xe))?;
        let coef = &gram_inv * xe.tr_mul(&po.y_star);
        let resid = &po.y_star - &xe * &coef;
        let root_n = (n as f64).sqrt();

        let mut d = DVector::zeros(p);
        d.rows_mut(0, model.size()).copy_from(&(coef * root_n));
        d.rows_mut(model.size(), inactive.len())
            .copy_from(&(xc.tr_mul(&resid) / root_n));
        let cross = xc.tr_mul(&xe);

        let mut event = SelectionEvent {
            a: DMatrix::zeros(0, 0),
            d,
            a_hat: DVector::zeros(0),
            model: model.clone(),
            n,
            p,
            gram_inv,
            cross,
        };
        event.assemble();
        Ok(event)
    }

    /// Same data and active set, different signs or penalty.
    pub fn with_model(&self, model: SelectedModel) -> Result<Self> {
        if model.active != self.model.active {
            return Err(Error::DimensionMismatch(
                "active set differs from the one the event was built for".into(),
            ));
        }
        let mut event = self.clone();
        event.model = model;
        event.assemble();
        Ok(event)
    }

    fn assemble(&mut self) {
        let (e, p) = (self.model.size(), self.p);
        let c = p - e;
        let q = 2 * p - e;
        let lambda = self.model.lambda;
        let root_n = (self.n as f64).sqrt();
        let s = DVector::from_iterator(e, self.model.signs.iter().map(|&v| f64::from(v)));
        let gs = &self.gram_inv * &s;
        let cgs = &self.cross * &gs;

        let mut a = DMatrix::zeros(q, p);
        let mut a_hat = DVector::zeros(q);
        for j in 0..e {
            a[(j, j)] = -s[j];
            a_hat[j] = -lambda * root_n * s[j] * gs[j];
        }
        for j in 0..c {
            a[(e + j, e + j)] = 1.0;
            a[(e + c + j, e + j)] = -1.0;
            a_hat[e + j] = lambda / root_n * (1.0 - cgs[j]);
            a_hat[e + c + j] = lambda / root_n * (1.0 + cgs[j]);
        }
        self.a = a;
        self.a_hat = a_hat;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    /// `â - A D`; nonnegative exactly when the event holds.
    pub fn slack(&self) -> DVector<f64> {
        &self.a_hat - &self.a * &self.d
    }
}

/// Interval `[v_minus, v_plus]` for the target statistic plus the slack
/// `v_zero` of constraints that do not involve it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationTriple {
    #[serde(with = "extreal")]
    pub v_minus: f64,
    #[serde(with = "extreal")]
    pub v_plus: f64,
    #[serde(with = "extreal")]
    pub v_zero: f64,
}

impl TruncationTriple {
    pub fn unbounded() -> Self {
        Self {
            v_minus: f64::NEG_INFINITY,
            v_plus: f64::INFINITY,
            v_zero: f64::INFINITY,
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.v_minus <= t && t <= self.v_plus
    }
}

/// `Z = D - (σ_DT / σ²_T) T`.
pub fn decorrelated_statistic(
    event: &SelectionEvent,
    t: f64,
    sigma2_t: f64,
    sigma_dt: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_inputs(event, sigma2_t, sigma_dt)?;
    Ok(&event.d - sigma_dt * (t / sigma2_t))
}

fn check_inputs(event: &SelectionEvent, sigma2_t: f64, sigma_dt: &DVector<f64>) -> Result<()> {
    if !(sigma2_t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target variance must be positive, got {sigma2_t}"
        )));
    }
    if sigma_dt.len() != event.d.len() {
        return Err(Error::DimensionMismatch(format!(
            "covariance vector has length {}, statistic has {}",
            sigma_dt.len(),
            event.d.len()
        )));
    }
    Ok(())
}

/// Rewrites `A (Z + c T) <= â`, `c = σ_DT/σ²_T`, as bounds on `T`.
///
/// Rows with `|(A c)_j| <= 1e-10 ‖σ_DT‖/σ²_T` are treated as free of `T` and
/// feed `v_zero`.
pub fn truncation_triple(
    event: &SelectionEvent,
    z: &DVector<f64>,
    sigma2_t: f64,
    sigma_dt: &DVector<f64>,
) -> Result<TruncationTriple> {
    check_inputs(event, sigma2_t, sigma_dt)?;
    if z.len() != event.d.len() {
        return Err(Error::DimensionMismatch(format!(
            "Z has length {}, expected {}",
            z.len(),
            event.d.len()
        )));
    }
    let direction = &event.a * (sigma_dt / sigma2_t);
    let slack = &event.a_hat - &event.a * z;
    let zero_tol = 1e-10 * sigma_dt.norm() / sigma2_t;
    let mut triple = TruncationTriple::unbounded();
    for j in 0..event.rows() {
        let coef = direction[j];
        let bound = slack[j] / coef;
        if coef.abs() <= zero_tol {
            triple.v_zero = triple.v_zero.min(slack[j]);
        } else if coef < 0.0 {
            triple.v_minus = triple.v_minus.max(bound);
        } else {
            triple.v_plus = triple.v_plus.min(bound);
        }
    }
    if triple.v_minus > triple.v_plus {
        return Err(Error::EmptyTruncation {
            lower: triple.v_minus,
            upper: triple.v_plus,
        });
    }
    Ok(triple)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_event(a: DMatrix<f64>, a_hat: DVector<f64>, d: DVector<f64>) -> SelectionEvent {
        let p = d.len();
        SelectionEvent {
            a,
            d,
            a_hat,
            model: SelectedModel::new(vec![], vec![], 1.0).unwrap(),
            n: 1,
            p,
            gram_inv: DMatrix::zeros(0, 0),
            cross: DMatrix::zeros(p, 0),
        }
    }

    #[test]
    fn decorrelation_arithmetic() {
        let ev = unit_event(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
            DVector::from_element(1, 3.0),
        );
        let z = decorrelated_statistic(&ev, 2.0, 2.0, &DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(z[0], 2.0);
        let z = decorrelated_statistic(&ev, 2.0, 2.0, &DVector::zeros(1)).unwrap();
        assert_eq!(z[0], 3.0);
        let z = decorrelated_statistic(&ev, 0.0, 2.0, &DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(z[0], 3.0);
    }

    #[test]
    fn single_positive_row() {
        // A = [1], Z = 0, â = 5, c = 1
        let ev = unit_event(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 5.0),
            DVector::zeros(1),
        );
        let t = truncation_triple(&ev, &DVector::zeros(1), 1.0, &DVector::from_element(1, 1.0))
            .unwrap();
        assert_eq!(
            (t.v_minus, t.v_plus, t.v_zero),
            (f64::NEG_INFINITY, 5.0, f64::INFINITY)
        );
    }

    #[test]
    fn two_opposed_rows() {
        let ev = unit_event(
            DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![5.0, 3.0]),
            DVector::zeros(1),
        );
        let t = truncation_triple(&ev, &DVector::zeros(1), 1.0, &DVector::from_element(1, 1.0))
            .unwrap();
        assert_eq!((t.v_minus, t.v_plus, t.v_zero), (-3.0, 5.0, f64::INFINITY));
    }

    #[test]
    fn zero_rows_feed_v_zero_and_empty_sets_error() {
        let ev = unit_event(
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0]),
            DVector::from_vec(vec![1.0, 0.25, 1.0]),
            DVector::zeros(2),
        );
        let c = DVector::from_vec(vec![1.0, 0.0]);
        let t = truncation_triple(&ev, &DVector::zeros(2), 1.0, &c).unwrap();
        assert_eq!((t.v_minus, t.v_plus, t.v_zero), (-1.0, 1.0, 0.25));
        let mut ev = ev;
        ev.a_hat[2] = -2.0; // T >= 2 and T <= 1
        assert!(matches!(
            truncation_triple(&ev, &DVector::zeros(2), 1.0, &c),
            Err(Error::EmptyTruncation { .. })
        ));
    }
}
