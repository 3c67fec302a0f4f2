//! Normal CDF/quantile, truncated normal draws and Poisson variates.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use statrs::function::erf::erfc_inv;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// log Φ(x), accurate far into the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > -20.0 {
        norm_cdf(x).ln()
    } else {
        // Mills-ratio asymptotic series
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
    }
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Upper-tail probability 1 − Φ(x) without cancellation.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    norm_cdf(-x)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Above this standardized lower bound the inverse-CDF draw hands over to
/// exponential rejection.
const TAIL_SWITCH: f64 = 8.0;

/// Draw from N(0, 1) truncated to (a, ∞).
pub fn std_normal_above<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a == f64::NEG_INFINITY {
        return standard_normal(rng);
    }
    if a > TAIL_SWITCH {
        return exponential_tail(a, rng);
    }
    let u: f64 = rng.gen();
    if a < 0.0 {
        // mass mostly above a: work with the lower CDF
        let lo = norm_cdf(a);
        norm_quantile(lo + u * (1.0 - lo))
    } else {
        let upper = norm_sf(a);
        // u in [0,1): 1 - u in (0, 1] keeps the quantile finite
        let x = -norm_quantile((1.0 - u) * upper);
        x.max(a)
    }
}

/// Robert (1995) exponential-proposal rejection for the far tail x > a > 0.
fn exponential_tail<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = -(1.0 - rng.gen::<f64>()).ln() / alpha;
        let x = a + e;
        let rho = (-0.5 * (x - alpha) * (x - alpha)).exp();
        if rng.gen::<f64>() < rho {
            return x;
        }
    }
}

/// Draw from N(mean, sd²) truncated to (lower, ∞).
pub fn normal_above<R: Rng + ?Sized>(mean: f64, sd: f64, lower: f64, rng: &mut R) -> f64 {
    if sd <= 0.0 {
        return mean.max(lower);
    }
    mean + sd * std_normal_above((lower - mean) / sd, rng)
}

/// Draw from N(mean, sd²) truncated to (−∞, upper).
pub fn normal_below<R: Rng + ?Sized>(mean: f64, sd: f64, upper: f64, rng: &mut R) -> f64 {
    if sd <= 0.0 {
        return mean.min(upper);
    }
    mean - sd * std_normal_above((mean - upper) / sd, rng)
}

/// Poisson variate; zero for a non-positive mean.
pub fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    match Poisson::new(mean) {
        Ok(d) => d.sample(rng) as u64,
        Err(_) => 0,
    }
}
