//! Gauss hypergeometric function on `[0, 1)` and the fractional perimeter of
//! the unit disk.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate, pairwise_sum};

fn series(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let (mut term, mut sum) = (1.0, 1.0);
    for n in 0..4000 {
        let n = n as f64;
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::NoConvergence("hypergeometric series".into()))
}

/// `₂F₁(a, b; c; z)` for `0 <= z < 1`. Requires `c - a - b` non-integral
/// when `z > 1/2`.
pub fn hyp2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&z) {
        return Err(invalid(format!("hyp2f1 argument {z} outside [0, 1)")));
    }
    hyp2f1_split(a, b, c, z, 1.0 - z)
}

/// Same as [`hyp2f1`] with `w = 1 − z` supplied separately, so that
/// arguments close to 1 keep full relative precision in `w`.
fn hyp2f1_split(a: f64, b: f64, c: f64, z: f64, w: f64) -> Result<f64> {
    if z <= 0.5 {
        return series(a, b, c, z);
    }
    let d = c - a - b;
    if (d - d.round()).abs() < 1e-12 {
        return Err(invalid("hyp2f1: c - a - b is an integer"));
    }
    let left = gamma(c) * gamma(d) / (gamma(c - a) * gamma(c - b)) * series(a, b, 1.0 - d, w)?;
    let right =
        w.powf(d) * gamma(c) * gamma(-d) / (gamma(a) * gamma(b)) * series(c - a, c - b, 1.0 + d, w)?;
    Ok(left + right)
}

/// `P^s(B)` for the unit disk, reduced in polar coordinates to
/// `4π²/(2−s) ∫₀¹ t^{s−1}(1 − t^{2−s}) ₂F₁(1+s/2, 1+s/2; 1; t²) dt`.
pub fn ball_perimeter(s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid(format!("s = {s} outside (0, 1)")));
    }
    let beta = 1.0 + s / 2.0;
    let mut fail = None;
    let mut eval = |t: f64, ln_t: f64, w: f64| -> f64 {
        match hyp2f1_split(beta, beta, 1.0, t * t, w * (2.0 - w)) {
            Ok(v) => (ln_t * (s - 1.0)).exp() * -((2.0 - s) * ln_t).exp_m1() * v,
            Err(e) => {
                fail.get_or_insert(e);
                0.0
            }
        }
    };
    const LEVELS: i32 = 48;
    let mut parts = Vec::with_capacity(2 * LEVELS as usize + 4);
    // graded toward both endpoints; the upper half is written in w = 1 − t
    for k in 1..LEVELS {
        let (lo, hi) = (0.5f64.powi(k + 1), 0.5f64.powi(k));
        parts.push(integrate(20, lo, hi, |t| eval(t, t.ln(), 1.0 - t)));
        parts.push(integrate(20, lo, hi, |w| eval(1.0 - w, (-w).ln_1p(), w)));
    }
    let t0 = 0.5f64.powi(LEVELS);
    parts.push(t0.powf(s) / s - t0 * t0 / 2.0 + beta * beta * t0.powf(s + 2.0) / (s + 2.0));
    let near_one = gamma(1.0 + s) * (2.0 - s) * 2f64.powf(-1.0 - s) / gamma(beta).powi(2);
    parts.push(near_one * t0.powf(1.0 - s) / (1.0 - s));
    if let Some(e) = fail {
        return Err(e);
    }
    Ok(4.0 * PI * PI / (2.0 - s) * pairwise_sum(&parts))
}
