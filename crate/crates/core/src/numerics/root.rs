use crate::error::{Error, Result};

pub const MAX_BISECTION_ITERATIONS: usize = 200;

/// Result of inverting a monotone function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub value: f64,
    pub iterations: usize,
    /// Set when the target lies outside the range of the function on the
    /// bracket and `value` is the bracket endpoint.
    pub clipped: bool,
}

/// Solves `f(x) = target` for a nonincreasing `f` by bisection on `[lo, hi]`.
///
/// If `f(lo) < target` the answer is `lo`; if `f(hi) > target` it is `hi`.
/// Both cases are reported through [`Root::clipped`].
pub fn invert_monotone<F>(mut f: F, target: f64, lo: f64, hi: f64, tol: f64) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(tol > 0.0) || !(lo <= hi) {
        return Err(Error::InvalidArgument(format!(
            "bad bracket [{lo}, {hi}] or tolerance {tol}"
        )));
    }
    let mut eval = |x: f64| -> Result<f64> {
        let v = f(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteEvaluation { at: x, value: v })
        }
    };
    if eval(lo)? < target {
        return Ok(Root {
            value: lo,
            iterations: 0,
            clipped: true,
        });
    }
    if eval(hi)? > target {
        return Ok(Root {
            value: hi,
            iterations: 0,
            clipped: true,
        });
    }
    let (mut lo, mut hi) = (lo, hi);
    let mut iterations = 0;
    while hi - lo > tol && iterations < MAX_BISECTION_ITERATIONS {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = eval(mid)?;
        if v > target {
            lo = mid;
        } else if v < target {
            hi = mid;
        } else {
            return Ok(Root {
                value: mid,
                iterations,
                clipped: false,
            });
        }
    }
    Ok(Root {
        value: 0.5 * (lo + hi),
        iterations,
        clipped: false,
    })
}
