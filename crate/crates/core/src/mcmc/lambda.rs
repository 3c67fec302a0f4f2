use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::GammaChainPrior;

/// Forward-filtered Gamma shapes and rates: `a_t = w a_{t−1} + K_t`,
/// `b_t = w b_{t−1} + |D|`, starting from `(a0, b0)`.
pub fn forward_shapes(k: &[usize], area: f64, prior: &GammaChainPrior) -> (Vec<f64>, Vec<f64>) {
    let (mut a, mut b) = (prior.a0, prior.b0);
    let mut out_a = Vec::with_capacity(k.len());
    let mut out_b = Vec::with_capacity(k.len());
    for &kt in k {
        a = prior.w * a + kt as f64;
        b = prior.w * b + area;
        out_a.push(a);
        out_b.push(b);
    }
    (out_a, out_b)
}

/// Gamma(shape, rate) draw; shape 0 is the point mass at 0.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    if shape <= 0.0 {
        return 0.0;
    }
    Gamma::new(shape, 1.0 / rate)
        .expect("shape and scale are positive")
        .sample(rng)
}

/// Forward filtering, backward sampling of `λ*_{1:T}` given the total counts.
pub fn sample_lambda_star<R: Rng + ?Sized>(
    k: &[usize],
    area: f64,
    prior: &GammaChainPrior,
    rng: &mut R,
) -> Vec<f64> {
    let (a, b) = forward_shapes(k, area, prior);
    let n = k.len();
    let mut lambda = vec![0.0; n];
    if n == 0 {
        return lambda;
    }
    lambda[n - 1] = sample_gamma(a[n - 1], b[n - 1], rng);
    for t in (0..n - 1).rev() {
        lambda[t] = prior.w * lambda[t + 1] + sample_gamma((1.0 - prior.w) * a[t], b[t], rng);
    }
    // An empty slice with w = 0 gives a zero draw; keep rates strictly positive.
    for l in &mut lambda {
        *l = l.max(f64::MIN_POSITIVE);
    }
    lambda
}
