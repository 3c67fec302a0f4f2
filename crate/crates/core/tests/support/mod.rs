//! Statistical helpers shared by the integration tests.
#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Asymptotic Kolmogorov distribution tail `P(K > x)`.
fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let term = (-2.0 * k * k * x * x).exp();
        s += if k as i64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    (d, kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d))
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample(x: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut x = x.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d = 0.0f64;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d
            .max((f - i as f64 / n).abs())
            .max(((i + 1) as f64 / n - f).abs());
    }
    let sq = n.sqrt();
    (d, kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d))
}

/// Pearson chi-square homogeneity test of two count histograms; bins with
/// small pooled counts are merged into their neighbour.
pub fn chi_square_two_sample(a: &[u64], b: &[u64], min_expected: f64) -> (f64, f64) {
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut ca, mut cb) = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        ca += x as f64;
        cb += y as f64;
        let pooled = (ca + cb) / (na + nb);
        if pooled * na.min(nb) >= min_expected {
            bins.push((ca, cb));
            ca = 0.0;
            cb = 0.0;
        }
    }
    if ca + cb > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += ca;
                last.1 += cb;
            }
            None => bins.push((ca, cb)),
        }
    }
    let mut stat = 0.0;
    for &(x, y) in &bins {
        let p = (x + y) / (na + nb);
        let (ea, eb) = (p * na, p * nb);
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let df = (bins.len() as f64 - 1.0).max(1.0);
    (stat, 1.0 - ChiSquared::new(df).unwrap().cdf(stat))
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn covariance(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (x.len() as f64 - 1.0)
}

/// Difference of two independent sample means in units of its standard error.
pub fn mean_diff_z(x: &[f64], y: &[f64]) -> f64 {
    let se = (variance(x) / x.len() as f64 + variance(y) / y.len() as f64).sqrt();
    (mean(x) - mean(y)) / se
}

/// Difference of two sample covariances in units of a plug-in standard error.
pub fn cov_diff_z(x1: &[f64], y1: &[f64], x2: &[f64], y2: &[f64]) -> f64 {
    let se_of = |x: &[f64], y: &[f64]| {
        let (mx, my) = (mean(x), mean(y));
        let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
        variance(&prods) / prods.len() as f64
    };
    (covariance(x1, y1) - covariance(x2, y2)) / (se_of(x1, y1) + se_of(x2, y2)).sqrt()
}

pub fn rel_frobenius(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// `n` uniform points on `[0, side]²`.
pub fn random_points<R: rand::Rng>(n: usize, side: f64, rng: &mut R) -> Vec<nngcp::Point> {
    (0..n)
        .map(|_| nngcp::Point::new(rng.gen::<f64>() * side, rng.gen::<f64>() * side))
        .collect()
}

/// KL divergence `KL(N(0, a) ‖ N(0, b))` between zero-mean Gaussians.
pub fn gaussian_kl(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    let n = a.nrows() as f64;
    let cb = b.clone().cholesky().expect("SPD");
    let ca = a.clone().cholesky().expect("SPD");
    let trace = cb.solve(a).trace();
    let logdet = |l: nalgebra::DMatrix<f64>| 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    0.5 * (trace - n + logdet(cb.l()) - logdet(ca.l()))
}

/// Small latent-block fixture: observed and thinned points with fixed prior means.
pub struct LatentFixture {
    pub observed: Vec<nngcp::Point>,
    pub thinned: Vec<nngcp::Point>,
    pub mean: Vec<f64>,
    pub kernel: nngcp::CovParams,
}

impl LatentFixture {
    pub fn slice(&self) -> nngcp::mcmc::SliceState {
        let mut s = nngcp::mcmc::SliceState::from_observed(&self.observed);
        assert_eq!(
            s.observed, self.observed,
            "fixtures list observed points in sorted order"
        );
        for &u in &self.thinned {
            s.push_thinned(u, 0.0, 0.0);
        }
        s.set_mean(&self.mean);
        s.set_z(&self.mean);
        s
    }

    /// `n` exact draws: accept β ~ N(μ, C) with probability Π Φ(w_i β_i).
    /// Returned per coordinate.
    pub fn rejection(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        use rand::Rng;
        let s = self.slice();
        let pts = s.points();
        let w = s.signs();
        let k = pts.len();
        let chol = nngcp::gp::cholesky(nngcp::gp::covariance_matrix(&self.kernel, &pts), "oracle")
            .unwrap();
        let l = chol.l();
        let mut rng = nngcp::rng::substream(seed, 0, 0, 99);
        let mut out = vec![Vec::with_capacity(n); k];
        while out[0].len() < n {
            let e = nalgebra::DVector::from_iterator(
                k,
                (0..k).map(|_| nngcp::special::standard_normal(&mut rng)),
            );
            let b = &l * e;
            let p: f64 = (0..k)
                .map(|i| nngcp::special::norm_cdf(w[i] * (b[i] + self.mean[i])))
                .product();
            if rng.gen::<f64>() < p {
                for i in 0..k {
                    out[i].push(b[i] + self.mean[i]);
                }
            }
        }
        out
    }

    /// Final states of `n` independent chains of `steps` latent updates with a
    /// saturated neighbor budget. Returned per coordinate.
    pub fn chains(
        &self,
        n: usize,
        steps: usize,
        backend: nngcp::mcmc::Backend,
        seed: u64,
    ) -> Vec<Vec<f64>> {
        let base = self.slice();
        let k = base.k();
        let mut out = vec![Vec::with_capacity(n); k];
        for r in 0..n {
            let mut s = base.clone();
            let mut rng = nngcp::rng::substream(seed, r as u64, 0, 1);
            for _ in 0..steps {
                let z = nngcp::mcmc::sample_latent_slice(
                    &s,
                    self.kernel,
                    k.saturating_sub(1).max(1),
                    backend,
                    1,
                    &mut rng,
                )
                .unwrap();
                s.set_z(&z);
            }
            for (i, v) in s.z().into_iter().enumerate() {
                out[i].push(v);
            }
        }
        out
    }
}

/// K = 1, K = 3 (two observed, one thinned) and K = 4 (one observed, three thinned).
pub fn latent_fixtures() -> Vec<LatentFixture> {
    use nngcp::{CovParams, Point};
    vec![
        LatentFixture {
            observed: vec![Point::new(0.5, 0.5)],
            thinned: vec![],
            mean: vec![0.0],
            kernel: CovParams::new(1.0, 1.0).unwrap(),
        },
        LatentFixture {
            observed: vec![Point::new(0.0, 0.0), Point::new(0.5, 0.2)],
            thinned: vec![Point::new(1.0, 1.0)],
            mean: vec![0.3, -0.2, 0.1],
            kernel: CovParams::new(1.0, 1.0).unwrap(),
        },
        LatentFixture {
            observed: vec![Point::new(0.2, 0.9)],
            thinned: vec![
                Point::new(0.3, 0.1),
                Point::new(0.9, 0.4),
                Point::new(0.25, 0.5),
            ],
            mean: vec![-0.5, 0.4, 0.0, 1.0],
            kernel: CovParams::new(2.0, 0.7).unwrap(),
        },
    ]
}

/// Largest |z| over per-coordinate mean and pairwise covariance differences,
/// and the smallest per-marginal KS p-value.
pub fn compare_samples(got: &[Vec<f64>], want: &[Vec<f64>]) -> (f64, f64) {
    let mut worst_z = 0.0f64;
    let mut min_p = 1.0f64;
    for i in 0..got.len() {
        min_p = min_p.min(ks_two_sample(&got[i], &want[i]).1);
        worst_z = worst_z.max(mean_diff_z(&got[i], &want[i]).abs());
        for j in 0..=i {
            worst_z = worst_z.max(cov_diff_z(&got[i], &got[j], &want[i], &want[j]).abs());
        }
    }
    (worst_z, min_p)
}
