use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::state::{AugmentedState, MeanField, SliceState};
use super::{Backend, ChainConfig};
use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};
use crate::gp::{
    block_inverse_downdate, block_inverse_update, cholesky, clamp_variance, covariance_matrix,
    CovParams, Covariance,
};
use crate::nngp::NngpPredictor;
use crate::special::{norm_sf, poisson, standard_normal};

/// Counts from one pass of the thinned-point update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThinnedStats {
    pub births_proposed: usize,
    pub births_accepted: usize,
    pub deaths_proposed: usize,
    pub deaths_accepted: usize,
}

impl ThinnedStats {
    pub fn birth_rate(&self) -> f64 {
        ratio(self.births_accepted, self.births_proposed)
    }

    pub fn death_rate(&self) -> f64 {
        ratio(self.deaths_accepted, self.deaths_proposed)
    }

    pub fn add(&mut self, o: &ThinnedStats) {
        self.births_proposed += o.births_proposed;
        self.births_accepted += o.births_accepted;
        self.deaths_proposed += o.deaths_proposed;
        self.deaths_accepted += o.deaths_accepted;
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Conditional law of the field at a new location given every current point of a slice.
enum SliceConditional {
    Nngp {
        pred: NngpPredictor<CovParams>,
        thin_ids: Vec<usize>,
    },
    Dense {
        kernel: CovParams,
        points: Vec<Point>,
        resid: Vec<f64>,
        cinv: DMatrix<f64>,
    },
}

impl SliceConditional {
    fn new(
        slice: &SliceState,
        kernel: CovParams,
        m: usize,
        backend: Backend,
        domain: &Domain,
    ) -> Result<Self> {
        let points = slice.points();
        let resid = slice.residuals();
        match backend {
            Backend::Nngp => {
                let bounds = (
                    domain.x_min(),
                    domain.x_max(),
                    domain.y_min(),
                    domain.y_max(),
                );
                let mut pred = NngpPredictor::with_bounds(kernel, m, bounds, 2 * slice.k().max(64));
                for (&p, &r) in points.iter().zip(&resid) {
                    pred.insert(p, r);
                }
                let thin_ids = (slice.n()..slice.k()).collect();
                Ok(SliceConditional::Nngp { pred, thin_ids })
            }
            Backend::Dense => {
                let cinv = if points.is_empty() {
                    DMatrix::zeros(0, 0)
                } else {
                    cholesky(
                        covariance_matrix(&kernel, &points),
                        "slice covariance is not positive definite",
                    )?
                    .inverse()
                };
                Ok(SliceConditional::Dense {
                    kernel,
                    points,
                    resid,
                    cinv,
                })
            }
        }
    }

    /// Centred conditional mean and variance, plus data needed to insert the point.
    fn moments(&self, u: Point) -> Result<(f64, f64, Option<DVector<f64>>)> {
        match self {
            SliceConditional::Nngp { pred, .. } => {
                let (mu, var) = pred.moments(u)?;
                Ok((mu, var, None))
            }
            SliceConditional::Dense {
                kernel,
                points,
                resid,
                cinv,
            } => {
                let c =
                    DVector::from_iterator(points.len(), points.iter().map(|&p| kernel.cov(p, u)));
                if points.is_empty() {
                    return Ok((0.0, kernel.sigma2, Some(c)));
                }
                let b = cinv * &c;
                let mu = b.iter().zip(resid).map(|(bi, r)| bi * r).sum();
                let var = clamp_variance(kernel.sigma2 - b.dot(&c), kernel.sigma2)?;
                Ok((mu, var, Some(c)))
            }
        }
    }

    fn insert(
        &mut self,
        u: Point,
        resid_u: f64,
        var: f64,
        cross: Option<DVector<f64>>,
    ) -> Result<()> {
        match self {
            SliceConditional::Nngp { pred, thin_ids } => {
                thin_ids.push(pred.insert(u, resid_u));
            }
            SliceConditional::Dense {
                kernel,
                points,
                resid,
                cinv,
            } => {
                let c = cross.expect("dense moments carry the cross-covariance");
                // jitter keeps the update well defined for near-duplicate locations
                let var = var + crate::gp::JITTER * kernel.sigma2;
                *cinv = block_inverse_update(cinv, &c, var)?;
                points.push(u);
                resid.push(resid_u);
            }
        }
        Ok(())
    }

    fn remove_thinned(&mut self, j: usize, n_obs: usize) {
        match self {
            SliceConditional::Nngp { pred, thin_ids } => {
                pred.remove(thin_ids.remove(j));
            }
            SliceConditional::Dense {
                points,
                resid,
                cinv,
                ..
            } => {
                *cinv = block_inverse_downdate(cinv, n_obs + j);
                points.remove(n_obs + j);
                resid.remove(n_obs + j);
            }
        }
    }
}

fn runaway(slice: usize, thinned: usize, cap: usize, stats: &ThinnedStats) -> Error {
    Error::RunawayThinning {
        slice: slice + 1,
        iteration: None,
        thinned,
        cap,
        acceptance_rate: stats.birth_rate(),
    }
}

/// Birth–death Metropolis–Hastings update of the thinned points of one slice.
///
/// A birth proposes `u ~ Uniform(D)` with `z(u)` from its conditional given the
/// current slice and accepts with `min(1, λ|D|Φ(−z(u))/(m+1))`; a death picks a
/// thinned point uniformly and accepts with `min(1, m/(λ|D|Φ(−z)))`.
#[allow(clippy::too_many_arguments)]
pub fn sample_thinned_slice<R: Rng + ?Sized>(
    slice: &mut SliceState,
    t: usize,
    lambda_star: f64,
    kernel: CovParams,
    mean_field: &MeanField,
    domain: &Domain,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<ThinnedStats> {
    let mut cond = SliceConditional::new(slice, kernel, cfg.m, cfg.backend, domain)?;
    let lam_area = lambda_star * domain.area();
    let moves = (cfg.birth_death_moves * lam_area).ceil().max(1.0) as usize;
    let mut stats = ThinnedStats::default();
    for _ in 0..moves {
        if rng.gen::<bool>() {
            stats.births_proposed += 1;
            let u = domain.sample_uniform(rng);
            let mean_u = mean_field.at(u)?;
            let (mu, var, cross) = cond.moments(u)?;
            let resid = mu + var.sqrt() * standard_normal(rng);
            let z = mean_u + resid;
            let m = slice.m() as f64;
            if rng.gen::<f64>() * (m + 1.0) < lam_area * norm_sf(z) {
                cond.insert(u, resid, var, cross)?;
                slice.push_thinned(u, z, mean_u);
                stats.births_accepted += 1;
                if slice.m() > cfg.max_thinned_points {
                    return Err(runaway(t, slice.m(), cfg.max_thinned_points, &stats));
                }
            }
        } else {
            stats.deaths_proposed += 1;
            let m = slice.m();
            if m == 0 {
                continue;
            }
            let j = rng.gen_range(0..m);
            if rng.gen::<f64>() * lam_area * norm_sf(slice.z_thin[j]) < m as f64 {
                cond.remove_thinned(j, slice.n());
                slice.remove_thinned(j);
                stats.deaths_accepted += 1;
            }
        }
    }
    Ok(stats)
}

/// `K ~ Poisson(mean)` conditioned on `K ≥ n`: rejection, or inversion of the
/// truncated law when rejection would be slow.
pub(crate) fn truncated_poisson<R: Rng + ?Sized>(mean: f64, n: usize, rng: &mut R) -> usize {
    if n == 0 {
        return poisson(mean, rng) as usize;
    }
    let ln_pmf = |k: usize| k as f64 * mean.ln() - mean - libm::lgamma(k as f64 + 1.0);
    // P(K ≥ n) via the upper tail sum, in units of pmf(mode of the tail).
    let start = n.max(mean.floor() as usize);
    let base = ln_pmf(start);
    let mut tail_rel = 0.0;
    let mut k = n;
    loop {
        let r = (ln_pmf(k) - base).exp();
        tail_rel += r;
        if k > start && r < 1e-17 * tail_rel {
            break;
        }
        k += 1;
    }
    let tail = (base.exp() * tail_rel).min(1.0);
    if tail > 1e-3 {
        loop {
            let k = poisson(mean, rng) as usize;
            if k >= n {
                return k;
            }
        }
    }
    let target = rng.gen::<f64>() * tail_rel;
    let mut acc = 0.0;
    let mut k = n;
    loop {
        acc += (ln_pmf(k) - base).exp();
        if acc >= target {
            return k;
        }
        k += 1;
    }
}

/// Sequential rejection fill: draws `K_t`, clears the thinned set and adds
/// `K_t − n_t` points, each accepted with probability `Φ(−z(u))`.
#[allow(clippy::too_many_arguments)]
pub fn fill_thinned_slice<R: Rng + ?Sized>(
    slice: &mut SliceState,
    t: usize,
    lambda_star: f64,
    kernel: CovParams,
    mean_field: &MeanField,
    domain: &Domain,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<ThinnedStats> {
    slice.clear_thinned();
    let k = truncated_poisson(lambda_star * domain.area(), slice.n(), rng);
    let target_m = k - slice.n();
    if target_m > cfg.max_thinned_points {
        return Err(runaway(
            t,
            target_m,
            cfg.max_thinned_points,
            &ThinnedStats::default(),
        ));
    }
    let mut cond = SliceConditional::new(slice, kernel, cfg.m, cfg.backend, domain)?;
    let mut stats = ThinnedStats::default();
    while slice.m() < target_m {
        let mut tries = 0usize;
        loop {
            if tries >= cfg.max_proposals_per_thinned_point {
                return Err(runaway(t, slice.m(), target_m, &stats));
            }
            tries += 1;
            stats.births_proposed += 1;
            let u = domain.sample_uniform(rng);
            let mean_u = mean_field.at(u)?;
            let (mu, var, cross) = cond.moments(u)?;
            let resid = mu + var.sqrt() * standard_normal(rng);
            let z = mean_u + resid;
            if rng.gen::<f64>() < norm_sf(z) {
                cond.insert(u, resid, var, cross)?;
                slice.push_thinned(u, z, mean_u);
                stats.births_accepted += 1;
                break;
            }
        }
    }
    Ok(stats)
}

/// Birth–death update of every slice, in time order, refreshing each slice's
/// prior means from the already-updated previous slice.
pub fn sample_thinned<R: Rng>(
    state: &mut AugmentedState,
    domain: &Domain,
    cfg: &ChainConfig,
    mut rng_for_slice: impl FnMut(usize) -> R,
) -> Result<Vec<ThinnedStats>> {
    let mut out = Vec::with_capacity(state.slices.len());
    for t in 0..state.slices.len() {
        let field = state.refresh_means(t, cfg.m, cfg.backend)?;
        let kernel = state.stp.innovation(t);
        let lambda = state.lambda_star[t];
        let mut rng = rng_for_slice(t);
        out.push(sample_thinned_slice(
            &mut state.slices[t],
            t,
            lambda,
            kernel,
            &field,
            domain,
            cfg,
            &mut rng,
        )?);
    }
    Ok(out)
}
