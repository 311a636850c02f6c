//! Confidence intervals for a regression coefficient of interest after LASSO
//! selection of control variables: naive, split-sample, selective, PoSI and
//! the hybrid (HySI) interval, plus the simulation harness used to study them.

// NaN-rejecting checks are written as negated comparisons on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ci;
pub mod covariance;
pub mod data;
pub mod error;
pub mod extreal;
pub mod lasso;
pub mod linalg;
pub mod numerics;
pub mod posi;
pub mod selection;
pub mod simulation;

pub use ci::{
    analyze, hysi_ci, naive_ci, posi_ci, selective_ci, split_sample_ci, Analysis, AnalysisOptions,
    Analyzer, ConfidenceInterval, Method,
};
pub use data::{load_csv, Dataset};
pub use error::{Error, Result};
pub use lasso::{partial_out, solve_lasso, SelectedModel};
pub use numerics::RngStream;
pub use posi::{posi_constant, PosiConstant};
pub use selection::{SelectionEvent, TruncationTriple};
pub use simulation::{run_study, SimulationConfig};
