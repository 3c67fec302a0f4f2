//! Forward simulation of Gaussian Cox processes with intensity `λ* Φ(z(s))`.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, EventSet, Point};
use crate::gp::{cholesky, covariance_matrix, CovParams, Covariance, SpaceTimeCovParams};
use crate::nngp::{build_neighbor_graph, lexicographic_order, nngp_factor};
use crate::special::{norm_cdf, poisson, standard_normal};

/// How latent values over the homogeneous scatter are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentBackend {
    /// Dense up to `dense_limit` points, NNGP beyond.
    #[default]
    Auto,
    Dense,
    Nngp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    pub backend: LatentBackend,
    pub dense_limit: usize,
    pub nngp_m: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            backend: LatentBackend::Auto,
            dense_limit: 3000,
            nngp_m: 30,
        }
    }
}

impl SimOptions {
    fn use_dense(&self, n: usize) -> bool {
        match self.backend {
            LatentBackend::Auto => n <= self.dense_limit,
            LatentBackend::Dense => true,
            LatentBackend::Nngp => false,
        }
    }
}

/// One simulated realization. Per slice, `homogeneous[t]` is the dominating
/// scatter, `latent[t]` the field on it and `retained[t]` the thinning outcome;
/// `probe_latent[t]` holds the field at the requested probe locations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimOutput {
    pub events: EventSet,
    pub thinned: EventSet,
    pub homogeneous: Vec<Vec<Point>>,
    pub latent: Vec<Vec<f64>>,
    pub retained: Vec<Vec<bool>>,
    pub lambda_star: Vec<f64>,
    pub probes: Vec<Point>,
    pub probe_latent: Vec<Vec<f64>>,
}

impl SimOutput {
    /// True intensity `λ*_t Φ(z)` at the probe locations of slice `t`.
    pub fn probe_intensity(&self, t: usize) -> Vec<f64> {
        self.probe_latent[t]
            .iter()
            .map(|&z| self.lambda_star[t] * norm_cdf(z))
            .collect()
    }
}

pub fn simulate_hpp<R: Rng + ?Sized>(
    lambda_star: f64,
    d: &Domain,
    rng: &mut R,
) -> Result<Vec<Point>> {
    if !(lambda_star >= 0.0 && lambda_star.is_finite()) {
        return Err(Error::validation(format!(
            "rate must be non-negative and finite, got {lambda_star}"
        )));
    }
    let n = poisson(lambda_star * d.area(), rng) as usize;
    Ok((0..n).map(|_| d.sample_uniform(rng)).collect())
}

pub fn simulate_exgcp_spatial<R: Rng + ?Sized>(
    lambda_star: f64,
    p: CovParams,
    d: &Domain,
    rng: &mut R,
) -> Result<SimOutput> {
    simulate_exgcp(
        &[lambda_star],
        &SpaceTimeCovParams::spatial(p),
        d,
        &SimOptions::default(),
        &[],
        rng,
    )
}

pub fn simulate_exgcp_spacetime<R: Rng + ?Sized>(
    lambda_star: &[f64],
    stp: &SpaceTimeCovParams,
    d: &Domain,
    n_slices: usize,
    rng: &mut R,
) -> Result<SimOutput> {
    if lambda_star.len() != n_slices {
        return Err(Error::validation(format!(
            "{} rates given for {} slices",
            lambda_star.len(),
            n_slices
        )));
    }
    simulate_exgcp(lambda_star, stp, d, &SimOptions::default(), &[], rng)
}

/// General simulator: one slice per rate, latent field also evaluated at `probes`.
pub fn simulate_exgcp<R: Rng + ?Sized>(
    lambda_star: &[f64],
    stp: &SpaceTimeCovParams,
    d: &Domain,
    opts: &SimOptions,
    probes: &[Point],
    rng: &mut R,
) -> Result<SimOutput> {
    if lambda_star.is_empty() {
        return Err(Error::validation("at least one time slice is required"));
    }
    stp.theta1.validate()?;
    stp.theta.validate()?;
    if opts.nngp_m < 1 {
        return Err(Error::validation("neighbor budget M must be at least 1"));
    }
    let mut homogeneous = Vec::with_capacity(lambda_star.len());
    let mut latent = Vec::with_capacity(lambda_star.len());
    let mut probe_latent = Vec::with_capacity(lambda_star.len());
    let mut retained = Vec::with_capacity(lambda_star.len());
    let mut events = Vec::with_capacity(lambda_star.len());
    let mut thinned = Vec::with_capacity(lambda_star.len());

    // Reference set of the previous slice: its scatter followed by the probes.
    let mut prev: Option<(Vec<Point>, Vec<f64>)> = None;
    for (t, &lam) in lambda_star.iter().enumerate() {
        let scatter = simulate_hpp(lam, d, rng)?;
        let mut locs = scatter.clone();
        locs.extend_from_slice(probes);

        let mut z = match &prev {
            None => vec![0.0; locs.len()],
            Some((ref_pts, ref_z)) => {
                carry_forward(&stp.marginal(t - 1), ref_pts, ref_z, &locs, opts, rng)?
            }
        };
        let eta = sample_field(&stp.innovation(t), &locs, opts, rng)?;
        for (zi, e) in z.iter_mut().zip(&eta) {
            *zi += e;
        }
        if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure {
                iteration: 0,
                message: format!("non-finite simulated latent value {bad} in slice {}", t + 1),
                dump: None,
            });
        }

        let keep: Vec<bool> = z[..scatter.len()]
            .iter()
            .map(|&zi| rng.gen::<f64>() < norm_cdf(zi))
            .collect();
        events.push(
            scatter
                .iter()
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(|(p, _)| *p)
                .collect(),
        );
        thinned.push(
            scatter
                .iter()
                .zip(&keep)
                .filter(|(_, &k)| !k)
                .map(|(p, _)| *p)
                .collect(),
        );
        latent.push(z[..scatter.len()].to_vec());
        probe_latent.push(z[scatter.len()..].to_vec());
        retained.push(keep);
        homogeneous.push(scatter);
        prev = Some((locs, z));
    }

    Ok(SimOutput {
        events: EventSet::new(events)?,
        thinned: EventSet::new(thinned)?,
        homogeneous,
        latent,
        retained,
        lambda_star: lambda_star.to_vec(),
        probes: probes.to_vec(),
        probe_latent,
    })
}

/// Zero-mean field draw over `locs`.
fn sample_field<K: Covariance, R: Rng + ?Sized>(
    kernel: &K,
    locs: &[Point],
    opts: &SimOptions,
    rng: &mut R,
) -> Result<Vec<f64>> {
    conditional_draw(kernel, &[], &[], locs, opts, rng)
}

/// Draw of the previous slice's field at `locs` given its values on `ref_pts`.
fn carry_forward<K: Covariance, R: Rng + ?Sized>(
    kernel: &K,
    ref_pts: &[Point],
    ref_z: &[f64],
    locs: &[Point],
    opts: &SimOptions,
    rng: &mut R,
) -> Result<Vec<f64>> {
    conditional_draw(kernel, ref_pts, ref_z, locs, opts, rng)
}

/// Joint draw at `new` conditional on fixed values at `fixed`, via a
/// triangular factor whose leading block covers the fixed points.
fn conditional_draw<K: Covariance, R: Rng + ?Sized>(
    kernel: &K,
    fixed: &[Point],
    fixed_z: &[f64],
    new: &[Point],
    opts: &SimOptions,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if new.is_empty() {
        return Ok(Vec::new());
    }
    let fixed_order = lexicographic_order(fixed);
    let new_order = lexicographic_order(new);
    let mut pts: Vec<Point> = fixed_order.iter().map(|&i| fixed[i]).collect();
    pts.extend(new_order.iter().map(|&i| new[i]));
    let prefix: Vec<f64> = fixed_order.iter().map(|&i| fixed_z[i]).collect();
    let nf = prefix.len();

    let ordered = if opts.use_dense(pts.len()) {
        let chol = cholesky(
            covariance_matrix(kernel, &pts),
            "simulation covariance is not positive definite",
        )?;
        let l = chol.l();
        let mut eps = DVector::zeros(pts.len());
        eps.rows_mut(0, nf)
            .copy_from(&DVector::from_column_slice(&prefix));
        if nf > 0 {
            l.view((0, 0), (nf, nf))
                .solve_lower_triangular_mut(&mut eps.rows_mut(0, nf));
        }
        for i in nf..pts.len() {
            eps[i] = standard_normal(rng);
        }
        let z = l.rows(nf, pts.len() - nf) * eps;
        z.iter().copied().collect::<Vec<f64>>()
    } else {
        let graph = build_neighbor_graph(&pts, opts.nngp_m)?;
        let factor = nngp_factor(&graph, &pts, kernel)?;
        let mean = vec![0.0; pts.len()];
        let mut z = factor.sample_given_prefix(&mean, &prefix, rng);
        z.drain(..nf);
        z
    };
    let mut out = vec![0.0; new.len()];
    for (k, &i) in new_order.iter().enumerate() {
        out[i] = ordered[k];
    }
    Ok(out)
}
