//! Simultaneous constant `K_{n,α}`: the `(1-α)`-quantile of `max_m |Z_m|`
//! for `Z ~ N(0, corr(Σ̂_T))`, sampled through the influence factor.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceEstimates;
use crate::error::{Error, Result};
use crate::extreal;
use crate::numerics::RngStream;

pub const DEFAULT_DRAWS: usize = 20_000;
pub const MIN_DRAWS: usize = 1_000;
const CHUNK: usize = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosiConstant {
    #[serde(with = "extreal")]
    pub k: f64,
    pub alpha: f64,
    pub draws: usize,
    pub seed: RngStream,
    pub mc_standard_error: f64,
}

/// Sorted Monte-Carlo draws of `max_m |Z_m|`; one sample serves every level.
#[derive(Debug, Clone)]
pub struct MaxAbsSample {
    sorted: Vec<f64>,
    seed: RngStream,
}

impl MaxAbsSample {
    pub fn draws(&self) -> usize {
        self.sorted.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// Upper empirical quantile (`⌈(1-α)B⌉`-th order statistic) with a
    /// binomial-method standard error. `alpha == 0` yields `K = ∞`.
    pub fn constant(&self, alpha: f64) -> Result<PosiConstant> {
        check_alpha(alpha)?;
        let b = self.sorted.len();
        if alpha == 0.0 {
            return Ok(PosiConstant {
                k: f64::INFINITY,
                alpha,
                draws: b,
                seed: self.seed,
                mc_standard_error: 0.0,
            });
        }
        let at = |j: f64| self.sorted[(j.max(1.0) as usize).min(b) - 1];
        let centre = (1.0 - alpha) * b as f64;
        let spread = (b as f64 * alpha * (1.0 - alpha)).sqrt();
        let k = at(centre.ceil());
        let se = 0.5 * (at((centre + spread).ceil()) - at((centre - spread).floor()));
        Ok(PosiConstant {
            k,
            alpha,
            draws: b,
            seed: self.seed,
            mc_standard_error: se,
        })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in [0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// `Ψ` with each row scaled to unit norm; zero rows stay zero.
fn unit_rows(cov: &CovarianceEstimates) -> Result<DMatrix<f64>> {
    if cov.is_empty() {
        return Err(Error::InvalidArgument("empty model universe".into()));
    }
    let mut factor = cov.influence.clone();
    for mut row in factor.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        } else {
            row.fill(0.0);
        }
    }
    Ok(factor)
}

/// Chunk `c` of the draws, one column per draw.
fn draw_chunk(factor: &DMatrix<f64>, rng: RngStream, c: usize, draws: usize) -> DMatrix<f64> {
    let len = CHUNK.min(draws - c * CHUNK);
    let mut g = rng.substream(c as u64).rng();
    let xi = DMatrix::<f64>::from_fn(factor.ncols(), len, |_, _| g.sample(StandardNormal));
    factor * xi
}

/// `draws` columns of `Z = diag(ΨΨ')^{†/2} Ψ ξ`, `ξ ~ N(0, I_n)`, whose
/// covariance is exactly `corr(Σ̂_T)` (zero-variance models get scale 0).
pub fn sample_correlated(
    cov: &CovarianceEstimates,
    draws: usize,
    rng: RngStream,
) -> Result<DMatrix<f64>> {
    let factor = unit_rows(cov)?;
    let blocks: Vec<DMatrix<f64>> = (0..draws.div_ceil(CHUNK))
        .map(|c| draw_chunk(&factor, rng, c, draws))
        .collect();
    let mut out = DMatrix::zeros(factor.nrows(), draws);
    for (c, block) in blocks.iter().enumerate() {
        out.columns_mut(c * CHUNK, block.ncols()).copy_from(block);
    }
    Ok(out)
}

/// Sorted draws of `max_m |Z_m|` for the `Z` of [`sample_correlated`].
///
/// Draws are generated in fixed chunks, each from its own substream, so the
/// result does not depend on the number of worker threads.
pub fn sample_max_abs(
    cov: &CovarianceEstimates,
    draws: usize,
    rng: RngStream,
) -> Result<MaxAbsSample> {
    if draws < MIN_DRAWS {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_DRAWS} draws are required, got {draws}"
        )));
    }
    let factor = unit_rows(cov)?;
    let mut sorted: Vec<f64> = (0..draws.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|c| {
            let z = draw_chunk(&factor, rng, c, draws);
            z.column_iter().map(|col| col.amax()).collect::<Vec<_>>()
        })
        .collect();
    sorted.sort_by(f64::total_cmp);
    Ok(MaxAbsSample { sorted, seed: rng })
}

pub fn posi_constant(
    cov: &CovarianceEstimates,
    alpha: f64,
    draws: usize,
    rng: RngStream,
) -> Result<PosiConstant> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Ok(PosiConstant {
            k: f64::INFINITY,
            alpha,
            draws,
            seed: rng,
            mc_standard_error: 0.0,
        });
    }
    sample_max_abs(cov, draws, rng)?.constant(alpha)
}

/// `T ± σK` on the `√n` scale.
pub fn posi_interval(t: f64, sigma2_t: f64, k: &PosiConstant) -> Result<(f64, f64)> {
    if !(sigma2_t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target variance must be positive, got {sigma2_t}"
        )));
    }
    let half = sigma2_t.sqrt() * k.k;
    Ok((t - half, t + half))
}
