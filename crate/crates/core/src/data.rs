//! Regression data `(y, z, X)` and delimited-text ingestion.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine maps applied to the raw columns: `stored = (raw - center) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub y_center: f64,
    pub z_center: f64,
    pub z_scale: f64,
    pub x_center: Vec<f64>,
    pub x_scale: Vec<f64>,
}

impl Standardization {
    pub fn identity(p: usize) -> Self {
        Self {
            y_center: 0.0,
            z_center: 0.0,
            z_scale: 1.0,
            x_center: vec![0.0; p],
            x_scale: vec![1.0; p],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.y_center == 0.0
            && self.z_center == 0.0
            && self.z_scale == 1.0
            && self.x_center.iter().all(|&c| c == 0.0)
            && self.x_scale.iter().all(|&s| s == 1.0)
    }
}

/// Response `y`, predictor of interest `z` and candidate controls `X`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub x: DMatrix<f64>,
    pub response_label: String,
    pub predictor_label: String,
    pub column_labels: Vec<String>,
    pub standardization: Standardization,
}

impl Dataset {
    pub fn new(y: DVector<f64>, z: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        let labels = (1..=x.ncols()).map(|k| format!("x{k}")).collect();
        Self::with_labels(y, z, x, "y".into(), "z".into(), labels)
    }

    pub fn with_labels(
        y: DVector<f64>,
        z: DVector<f64>,
        x: DMatrix<f64>,
        response_label: String,
        predictor_label: String,
        column_labels: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if n < 2 || z.len() != n || x.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "y has {n} rows, z has {}, X has {}",
                z.len(),
                x.nrows()
            )));
        }
        if x.ncols() < 1 {
            return Err(Error::InvalidArgument(
                "at least one control is required".into(),
            ));
        }
        if column_labels.len() != x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} controls",
                column_labels.len(),
                x.ncols()
            )));
        }
        if !(y
            .iter()
            .chain(z.iter())
            .chain(x.iter())
            .all(|v| v.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "data contain non-finite entries".into(),
            ));
        }
        if z.iter().all(|&v| v == 0.0) {
            return Err(Error::DegeneratePredictor);
        }
        let p = x.ncols();
        Ok(Self {
            y,
            z,
            x,
            response_label,
            predictor_label,
            column_labels,
            standardization: Standardization::identity(p),
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Centers `y`; centers `z` and every control and scales them to unit
    /// Euclidean norm. Applies on top of any existing standardization.
    pub fn standardized(&self) -> Result<Dataset> {
        let n = self.n() as f64;
        let center_scale = |v: &mut DVector<f64>| -> Option<(f64, f64)> {
            let mean = v.sum() / n;
            v.add_scalar_mut(-mean);
            let norm = v.norm();
            if norm == 0.0 {
                return None;
            }
            *v /= norm;
            Some((mean, norm))
        };
        let mut out = self.clone();
        let y_mean = out.y.sum() / n;
        out.y.add_scalar_mut(-y_mean);
        let (z_center, z_scale) = center_scale(&mut out.z).ok_or(Error::DegeneratePredictor)?;
        let st = &mut out.standardization;
        st.y_center += y_mean;
        st.z_center += z_center * st.z_scale;
        st.z_scale *= z_scale;
        for k in 0..self.p() {
            let mut col = out.x.column(k).into_owned();
            let (c, s) = center_scale(&mut col).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "control '{}' is constant and cannot be scaled",
                    self.column_labels[k]
                ))
            })?;
            out.x.set_column(k, &col);
            st.x_center[k] += c * st.x_scale[k];
            st.x_scale[k] *= s;
        }
        Ok(out)
    }

    /// Observations `range` as a new dataset sharing labels and standardization.
    pub fn rows(&self, range: std::ops::Range<usize>) -> Result<Dataset> {
        let len = range.len();
        let mut out = Dataset::with_labels(
            self.y.rows(range.start, len).into_owned(),
            self.z.rows(range.start, len).into_owned(),
            self.x.rows(range.start, len).into_owned(),
            self.response_label.clone(),
            self.predictor_label.clone(),
            self.column_labels.clone(),
        )?;
        out.standardization = self.standardization.clone();
        Ok(out)
    }

    /// `W_E = (z, X_E)`.
    pub fn design(&self, controls: &[usize]) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n(), controls.len() + 1);
        w.set_column(0, &self.z);
        for (j, &k) in controls.iter().enumerate() {
            w.set_column(j + 1, &self.x.column(k));
        }
        w
    }

    /// Maps a coefficient on the stored `z` back to the raw units of `z` and `y`.
    pub fn coefficient_to_original(&self, coef: f64) -> f64 {
        coef / self.standardization.z_scale
    }
}

/// Reads a header-led delimited file; `response` and `predictor` name the `y`
/// and `z` columns and every other column becomes a control.
pub fn load_csv(
    path: impl AsRef<Path>,
    response: &str,
    predictor: &str,
    standardize: bool,
) -> Result<Dataset> {
    let path = path.as_ref();
    let delimiter = if path.extension().is_some_and(|e| e == "tsv") {
        b'\t'
    } else {
        b','
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };
    let y_col = find(response)?;
    let z_col = find(predictor)?;
    if y_col == z_col {
        return Err(Error::InvalidArgument(
            "response and predictor must be different columns".into(),
        ));
    }
    let control_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != y_col && c != z_col)
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // line 1 is the header
        let line = i + 2;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row: line,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row: line,
                        column: headers[c].clone(),
                        message: format!("'{cell}' is not a finite number"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    let y = DVector::from_iterator(n, rows.iter().map(|r| r[y_col]));
    let z = DVector::from_iterator(n, rows.iter().map(|r| r[z_col]));
    let x = DMatrix::from_fn(n, control_cols.len(), |i, k| rows[i][control_cols[k]]);
    let labels = control_cols.iter().map(|&c| headers[c].clone()).collect();
    let data = Dataset::with_labels(y, z, x, response.to_owned(), predictor.to_owned(), labels)?;
    if standardize {
        data.standardized()
    } else {
        Ok(data)
    }
}
