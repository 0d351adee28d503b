//! Self-contained Gamma, normal and Poisson samplers driven by [`Stream`].
//!
//! Transcendentals go through `libm` so that draws are bit-identical across
//! platforms and toolchains.

use crate::rng::Stream;

/// Rates below this use sequential inversion; at or above, PTRS.
pub const POISSON_INVERSION_LIMIT: f64 = 10.0;

/// Standard normal deviate by the Box-Muller transform (one of the pair is
/// discarded so each call consumes exactly two uniforms).
pub fn standard_normal(s: &mut Stream) -> f64 {
    let u1 = s.uniform_open();
    let u2 = s.uniform();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * std::f64::consts::PI * u2)
}

/// Gamma(shape, scale) by the Marsaglia-Tsang squeeze method.
///
/// For `shape < 1` a Gamma(shape + 1) draw is scaled by `U^(1/shape)`.
pub fn gamma(s: &mut Stream, shape: f64, scale: f64) -> f64 {
    debug_assert!(shape > 0.0 && scale > 0.0);
    if shape < 1.0 {
        let g = gamma_ge_one(s, shape + 1.0);
        let u = s.uniform_open();
        return g * libm::pow(u, 1.0 / shape) * scale;
    }
    gamma_ge_one(s, shape) * scale
}

fn gamma_ge_one(s: &mut Stream, shape: f64) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / libm::sqrt(9.0 * d);
    loop {
        let x = standard_normal(s);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = s.uniform_open();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if libm::log(u) < 0.5 * x2 + d * (1.0 - v + libm::log(v)) {
            return d * v;
        }
    }
}

/// Poisson(rate). `rate` must be finite and non-negative; rate 0 yields 0
/// without consuming randomness.
pub fn poisson(s: &mut Stream, rate: f64) -> u64 {
    debug_assert!(rate.is_finite() && rate >= 0.0);
    if rate == 0.0 {
        0
    } else if rate < POISSON_INVERSION_LIMIT {
        poisson_inversion(s, rate)
    } else {
        poisson_ptrs(s, rate)
    }
}

fn poisson_inversion(s: &mut Stream, rate: f64) -> u64 {
    let u = s.uniform();
    let mut p = libm::exp(-rate);
    let mut cdf = p;
    let mut k = 0u64;
    // the tail beyond k = 1000 is below 1e-300 for rate < 10
    while u > cdf && k < 1000 {
        k += 1;
        p *= rate / k as f64;
        cdf += p;
    }
    k
}

// Hörmann's transformed rejection with squeeze.
fn poisson_ptrs(s: &mut Stream, rate: f64) -> u64 {
    let slam = libm::sqrt(rate);
    let loglam = libm::log(rate);
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = s.uniform() - 0.5;
        let v = s.uniform_open();
        let us = 0.5 - u.abs();
        let k = libm::floor((2.0 * a / us + b) * u + rate + 0.43);
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = libm::log(v) + libm::log(inv_alpha) - libm::log(a / (us * us) + b);
        let rhs = -rate + k * loglam - libm::lgamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}
