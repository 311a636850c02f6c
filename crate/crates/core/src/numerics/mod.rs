//! Gaussian building blocks: tail-stable normal and truncated-normal
//! distribution functions, monotone root finding, reproducible random
//! streams and the variate generators used by the simulation designs.

mod normal;
mod rng;
mod root;
mod sample;
mod truncnorm;

pub use normal::{
    log_std_normal_cdf, log_std_normal_sf, mills_ratio, std_normal_cdf, std_normal_pdf,
    std_normal_quantile, std_normal_sf,
};
pub use rng::RngStream;
pub use root::{invert_monotone, Root, MAX_BISECTION_ITERATIONS};
pub use sample::{draw, sample, Law};
pub use truncnorm::{truncated_normal_cdf, TruncatedNormalSpec};
