use super::normal::{mills_ratio, std_normal_cdf};
use crate::error::{Error, Result};

/// A normal law `N(mu, sigma2)` conditioned on `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormalSpec {
    pub mu: f64,
    pub sigma2: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TruncatedNormalSpec {
    pub fn new(mu: f64, sigma2: f64, lower: f64, upper: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "location must be finite, got {mu}"
            )));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "variance must be positive and finite, got {sigma2}"
            )));
        }
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::EmptyTruncation { lower, upper });
        }
        Ok(Self {
            mu,
            sigma2,
            lower,
            upper,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// Distribution function at `x`; points outside the support clip to 0 or 1.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        let s = self.sigma();
        let a = (self.lower - self.mu) / s;
        let b = (self.upper - self.mu) / s;
        standardized_cdf(a, b, (x - self.mu) / s)
    }
}

pub fn truncated_normal_cdf(spec: &TruncatedNormalSpec, x: f64) -> Result<f64> {
    spec.cdf(x)
}

/// `ln((1 - Φ(s)) / (1 - Φ(a)))` for `0 <= a <= s`, without forming either tail.
fn log_tail_ratio(s: f64, a: f64) -> f64 {
    if s == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    -0.5 * (s - a) * (s + a) + mills_ratio(s).ln() - mills_ratio(a).ln()
}

/// Right-tail form: `0 <= a < x < b`, returns `(Q(a) - Q(x)) / (Q(a) - Q(b))`.
fn right_tail(a: f64, b: f64, x: f64) -> Result<f64> {
    let den = -log_tail_ratio(b, a).exp_m1();
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::DegenerateTruncation(format!(
            "standardized interval [{a}, {b}] has no representable mass"
        )));
    }
    let num = -log_tail_ratio(x, a).exp_m1();
    Ok((num / den).clamp(0.0, 1.0))
}

/// Left-tail form, mirrored onto the right tail: `a < x < b <= 0`.
fn left_tail(a: f64, b: f64, x: f64) -> Result<f64> {
    let (ma, mx, mb) = (-b, -x, -a);
    let lb = log_tail_ratio(mb, ma);
    let den = -lb.exp_m1();
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::DegenerateTruncation(format!(
            "standardized interval [{a}, {b}] has no representable mass"
        )));
    }
    // Q(mx)/Q(ma) - Q(mb)/Q(ma), with lb <= lx
    let lx = log_tail_ratio(mx, ma);
    let num = -lx.exp() * (lb - lx).exp_m1();
    Ok((num / den).clamp(0.0, 1.0))
}

pub(crate) fn standardized_cdf(a: f64, b: f64, x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::NonFiniteEvaluation { at: x, value: x });
    }
    if x <= a {
        return Ok(0.0);
    }
    if x >= b {
        return Ok(1.0);
    }
    if a >= 0.0 {
        right_tail(a, b, x)
    } else if b <= 0.0 {
        left_tail(a, b, x)
    } else {
        let lo = std_normal_cdf(a);
        let den = std_normal_cdf(b) - lo;
        if !(den > 0.0) {
            return Err(Error::DegenerateTruncation(format!(
                "standardized interval [{a}, {b}] has no representable mass"
            )));
        }
        Ok(((std_normal_cdf(x) - lo) / den).clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_cases() {
        let full = TruncatedNormalSpec::new(0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        assert_eq!(full.cdf(0.0).unwrap(), 0.5);
        let sym = TruncatedNormalSpec::new(0.0, 1.0, -1.0, 1.0).unwrap();
        assert!((sym.cdf(0.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn endpoints() {
        let spec = TruncatedNormalSpec::new(0.3, 2.0, -0.5, 4.0).unwrap();
        assert_eq!(spec.cdf(-0.5).unwrap(), 0.0);
        assert_eq!(spec.cdf(4.0).unwrap(), 1.0);
        assert_eq!(spec.cdf(-7.0).unwrap(), 0.0);
    }

    #[test]
    fn distant_location_stays_finite() {
        // interval hundreds of standard deviations below the mean
        let spec = TruncatedNormalSpec::new(3786.69, 54.86, -21.51, -5.5297).unwrap();
        let f = spec.cdf(-5.5541).unwrap();
        assert!(f.is_finite() && (0.0..=1.0).contains(&f));
        let mirrored = TruncatedNormalSpec::new(-3786.69, 54.86, 5.5297, 21.51).unwrap();
        let g = mirrored.cdf(5.5541).unwrap();
        assert!((f + g - 1.0).abs() < 1e-12, "{f} {g}");
    }

    #[test]
    fn far_tail_truncation_is_exponential() {
        // deep in the tail the truncated law is close to a shifted exponential with rate a
        let a = 1e4;
        let spec = TruncatedNormalSpec::new(0.0, 1.0, a, f64::INFINITY).unwrap();
        let x = a + 1e-4;
        let expected = -(-a * 1e-4_f64).exp_m1();
        assert!((spec.cdf(x).unwrap() / expected - 1.0).abs() < 1e-6);
        // mirrored
        let spec = TruncatedNormalSpec::new(0.0, 1.0, f64::NEG_INFINITY, -a).unwrap();
        assert!((spec.cdf(-x).unwrap() / (1.0 - expected) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(TruncatedNormalSpec::new(0.0, 0.0, -1.0, 1.0).is_err());
        assert!(matches!(
            TruncatedNormalSpec::new(0.0, 1.0, 1.0, 1.0),
            Err(Error::EmptyTruncation { .. })
        ));
    }
}
