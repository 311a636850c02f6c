use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::SQRT_2;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Beyond this point the Mills ratio switches from `Q/φ` to a continued fraction.
const MILLS_SWITCH: f64 = 30.0;
const MILLS_CF_TERMS: u32 = 80;

pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function, evaluated through `erfc` so both
/// tails keep full relative precision until underflow.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail `1 - Φ(x)`.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Mills ratio `R(t) = (1 - Φ(t)) / φ(t)`.
///
/// For large `t` both numerator and denominator underflow, so the ratio is
/// taken from the Laplace continued fraction `1/(t + 1/(t + 2/(t + ...)))`.
pub fn mills_ratio(t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t == f64::INFINITY {
        return 0.0;
    }
    if t < MILLS_SWITCH {
        let pdf = std_normal_pdf(t);
        if pdf == 0.0 {
            // deep left tail: R(t) ~ 1/φ(t)
            return f64::INFINITY;
        }
        return std_normal_sf(t) / pdf;
    }
    let mut tail = t;
    for k in (1..=MILLS_CF_TERMS).rev() {
        tail = t + f64::from(k) / tail;
    }
    1.0 / tail
}

/// `ln Φ(x)`, finite down to at least `x = -1e150`.
pub fn log_std_normal_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if x > 0.0 {
        (-std_normal_sf(x)).ln_1p()
    } else if x > -MILLS_SWITCH {
        std_normal_cdf(x).ln()
    } else {
        -0.5 * x * x - LN_SQRT_2PI + mills_ratio(-x).ln()
    }
}

/// `ln(1 - Φ(x))`.
pub fn log_std_normal_sf(x: f64) -> f64 {
    log_std_normal_cdf(-x)
}

/// Inverse of the standard normal distribution function.
pub fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    // the starting value is good to ~1e-10; polish against the accurate cdf
    for _ in 0..2 {
        let pdf = std_normal_pdf(x);
        if !(pdf > 0.0 && x.is_finite()) {
            break;
        }
        let err = if x > 0.0 {
            (1.0 - p) - std_normal_sf(x)
        } else {
            std_normal_cdf(x) - p
        };
        x -= err / pdf;
    }
    x
}
