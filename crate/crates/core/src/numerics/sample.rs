use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_2_PI, SQRT_2};

/// Distributions used for design columns and regression errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    Normal,
    SkewNormal { shape: f64 },
    Laplace,
    Uniform,
    Bernoulli { p: f64 },
}

impl Law {
    /// Population mean and standard deviation of the raw (unstandardized) law.
    fn moments(&self) -> (f64, f64) {
        match *self {
            Law::Normal => (0.0, 1.0),
            Law::SkewNormal { shape } => {
                let delta = shape / (1.0 + shape * shape).sqrt();
                (
                    delta * FRAC_2_PI.sqrt(),
                    (1.0 - FRAC_2_PI * delta * delta).sqrt(),
                )
            }
            Law::Laplace => (0.0, SQRT_2),
            Law::Uniform => (0.5, (1.0f64 / 12.0).sqrt()),
            Law::Bernoulli { p } => (p, (p * (1.0 - p)).sqrt()),
        }
    }

    fn raw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Law::Normal => rng.sample(StandardNormal),
            Law::SkewNormal { shape } => {
                let delta = shape / (1.0 + shape * shape).sqrt();
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                delta * z1.abs() + (1.0 - delta * delta).sqrt() * z2
            }
            Law::Laplace => {
                // inverse cdf with unit scale
                let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
                -u.signum() * (-2.0 * u.abs()).ln_1p()
            }
            Law::Uniform => rng.random::<f64>(),
            Law::Bernoulli { p } => {
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// One variate; with `standardized` the law is shifted and scaled to mean 0,
/// variance 1 using its population moments.
pub fn draw<R: Rng + ?Sized>(law: Law, standardized: bool, rng: &mut R) -> f64 {
    let x = law.raw(rng);
    if standardized {
        let (mean, sd) = law.moments();
        (x - mean) / sd
    } else {
        x
    }
}

pub fn sample<R: Rng + ?Sized>(
    law: Law,
    standardized: bool,
    rng: &mut R,
    count: usize,
) -> Vec<f64> {
    (0..count).map(|_| draw(law, standardized, rng)).collect()
}

impl Distribution<f64> for Law {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        draw(*self, true, rng)
    }
}
