#![allow(dead_code)]

use hysi::numerics::RngStream;
use hysi::simulation::{generate_design, generate_response, SimulationConfig};
use hysi::Dataset;
use rand::Rng;

/// Adaptive Simpson rule for `f` on `[a, b]` to absolute tolerance `eps`.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    fn rule(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        eps: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = rule(f, a, fa, m, fm);
        let (rm, frm, right) = rule(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * eps, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * eps, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = rule(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, eps, 60)
}

/// Truncated standard normal distribution function at `x` for the
/// standardized interval `[a, b]`, by quadrature of the density rescaled to
/// peak 1 on the interval.
pub fn quadrature_cdf(a: f64, b: f64, x: f64) -> f64 {
    if x <= a {
        return 0.0;
    }
    if x >= b {
        return 1.0;
    }
    let c = 0.0f64.clamp(a, b);
    let lo = a.max(c - 40.0);
    let hi = b.min(c + 40.0);
    let density = move |t: f64| (-0.5 * (t - c) * (t + c)).exp();
    let x = x.clamp(lo, hi);
    // panels of width about one density scale keep the recursion shallow
    let scale = 1.0 / (1.0 + c.abs());
    let integrate = |from: f64, to: f64| {
        let panels = ((to - from) / scale).ceil().clamp(1.0, 4000.0) as usize;
        let h = (to - from) / panels as f64;
        (0..panels)
            .map(|i| {
                simpson(
                    &density,
                    from + i as f64 * h,
                    from + (i + 1) as f64 * h,
                    1e-15,
                )
            })
            .sum::<f64>()
    };
    let num = integrate(lo, x);
    let den = num + integrate(x, hi);
    num / den
}

/// One dataset from the independent simulation design with unit-norm columns.
pub fn simulated_dataset(seed: u64, n: usize, p: usize) -> Dataset {
    let config = SimulationConfig {
        n,
        p,
        beta: SimulationConfig::default_beta(p),
        ..SimulationConfig::default()
    };
    let stream = RngStream::new(seed, 0);
    let design = generate_design(&config, &mut stream.substream(0).rng()).unwrap();
    let y = generate_response(
        &design.w,
        config.theta,
        &config.beta,
        config.error_dist,
        &mut stream.substream(1).rng(),
    )
    .unwrap();
    design.dataset(y).unwrap()
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
