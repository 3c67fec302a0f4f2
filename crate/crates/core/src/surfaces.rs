//! Posterior intensity surfaces on regular grids and one-step-ahead prediction.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};
use crate::mcmc::{forward_shapes, sample_gamma, Backend, GammaChainPrior, PosteriorDraws};
use crate::par::map_slice;
use crate::special::norm_cdf;

/// Regular grid of cell centres over a domain; node `(i, j)` is column `i`
/// (x) and row `j` (y), stored row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub domain: Domain,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, domain: Domain) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::validation(format!(
                "grid needs at least 2x2 nodes, got {nx}x{ny}"
            )));
        }
        Ok(GridSpec { nx, ny, domain })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        let d = &self.domain;
        Point::new(
            d.x_min() + (i as f64 + 0.5) * d.width() / self.nx as f64,
            d.y_min() + (j as f64 + 0.5) * d.height() / self.ny as f64,
        )
    }

    pub fn nodes(&self) -> Vec<Point> {
        (0..self.ny)
            .flat_map(|j| (0..self.nx).map(move |i| (i, j)))
            .map(|(i, j)| self.node(i, j))
            .collect()
    }
}

/// Values on a grid for slice `t` (0-based), row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityField {
    pub grid: GridSpec,
    pub t: usize,
    pub values: Vec<f64>,
}

impl IntensityField {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.nx + i]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurfaceOptions {
    /// Neighbor budget for kriging.
    pub m: usize,
    pub backend: Backend,
    /// Average `Φ(μ/√(1+σ²))` (the predictive mean of `Φ(z)`) instead of `Φ(μ)`.
    pub marginalize: bool,
}

impl Default for SurfaceOptions {
    fn default() -> Self {
        SurfaceOptions {
            m: 15,
            backend: Backend::Nngp,
            marginalize: false,
        }
    }
}

/// Per-slice surfaces plus any warnings raised while computing them.
#[derive(Clone, Debug, PartialEq)]
pub struct Surfaces {
    pub fields: Vec<IntensityField>,
    pub warnings: Vec<String>,
}

fn check_draws(draws: &PosteriorDraws, t: usize) -> Result<()> {
    if draws.is_empty() {
        return Err(Error::validation("no posterior draws"));
    }
    if t >= draws.n_slices() {
        return Err(Error::validation(format!(
            "slice {} requested but the draws cover {} slices",
            t + 1,
            draws.n_slices()
        )));
    }
    Ok(())
}

/// Kriging moments of `z_t` at `targets` for draw `i`, using the draw's
/// reference points and the slice's marginal random-walk covariance.
pub fn latent_moments(
    draws: &PosteriorDraws,
    i: usize,
    t: usize,
    targets: &[Point],
    opts: &SurfaceOptions,
) -> Result<Vec<(f64, f64)>> {
    check_draws(draws, t)?;
    let (pts, z) = draws.slice_reference(i, t);
    let kernel = draws.draws[i].theta.marginal(t);
    use crate::gp::Covariance;
    let var0 = kernel.variance();
    if pts.is_empty() {
        return Ok(vec![(0.0, var0); targets.len()]);
    }
    match opts.backend {
        Backend::Nngp => {
            let pred = crate::nngp::NngpPredictor::new(kernel, opts.m, &pts, &z)?;
            map_slice(targets, 32, |&p| pred.moments(p))
                .into_iter()
                .collect()
        }
        Backend::Dense => {
            let chol = crate::gp::cholesky(
                crate::gp::covariance_matrix(&kernel, &pts),
                "reference covariance is not positive definite",
            )?;
            let weights = chol.solve(&nalgebra::DVector::from_column_slice(&z));
            map_slice(targets, 32, |&p| {
                let c = crate::gp::cross_covariance(&kernel, &pts, p);
                let mu = c.dot(&weights);
                let var = crate::gp::clamp_variance(var0 - c.dot(&chol.solve(&c)), var0)?;
                Ok((mu, var))
            })
            .into_iter()
            .collect()
        }
    }
}

fn phi_of(mu: f64, var: f64, marginalize: bool) -> f64 {
    if marginalize {
        norm_cdf(mu / (1.0 + var).sqrt())
    } else {
        norm_cdf(mu)
    }
}

/// Posterior mean intensity `E[λ*_t Φ(z_t(s))]` at the grid nodes, per slice.
pub fn posterior_intensity_grid(
    draws: &PosteriorDraws,
    grid: &GridSpec,
    opts: &SurfaceOptions,
) -> Result<Surfaces> {
    check_draws(draws, 0)?;
    let nodes = grid.nodes();
    let mut fields = Vec::with_capacity(draws.n_slices());
    let mut warnings = Vec::new();
    for t in 0..draws.n_slices() {
        let mut acc = vec![0.0; nodes.len()];
        let mut empty = 0;
        for i in 0..draws.len() {
            if draws.slice_reference(i, t).0.is_empty() {
                empty += 1;
            }
            let lam = draws.draws[i].lambda_star[t];
            for (a, (mu, var)) in acc
                .iter_mut()
                .zip(latent_moments(draws, i, t, &nodes, opts)?)
            {
                *a += lam * phi_of(mu, var, opts.marginalize);
            }
        }
        if empty > 0 {
            warnings.push(format!(
                "slice {}: {empty} of {} draws had no reference points; their surfaces are prior-only",
                t + 1,
                draws.len()
            ));
        }
        let n = draws.len() as f64;
        fields.push(IntensityField {
            grid: *grid,
            t,
            values: acc.into_iter().map(|v| v / n).collect(),
        });
    }
    Ok(Surfaces { fields, warnings })
}

/// Posterior mean of the kriged latent field of slice `t` at the grid nodes.
pub fn posterior_mean_latent_grid(
    draws: &PosteriorDraws,
    t: usize,
    grid: &GridSpec,
    opts: &SurfaceOptions,
) -> Result<IntensityField> {
    check_draws(draws, t)?;
    let nodes = grid.nodes();
    let mut acc = vec![0.0; nodes.len()];
    for i in 0..draws.len() {
        for (a, (mu, _)) in acc
            .iter_mut()
            .zip(latent_moments(draws, i, t, &nodes, opts)?)
        {
            *a += mu;
        }
    }
    let n = draws.len() as f64;
    Ok(IntensityField {
        grid: *grid,
        t,
        values: acc.into_iter().map(|v| v / n).collect(),
    })
}

/// One-step-ahead prediction from a fit through slice `t` (0-based).
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Predictive intensity for slice `t + 1`.
    pub field: IntensityField,
    /// Predictive latent grid (the posterior mean latent grid of slice `t`).
    pub z_grid: IntensityField,
    /// One predictive `λ*` per retained draw.
    pub lambda_pred: Vec<f64>,
}

pub fn predict_next_time<R: Rng + ?Sized>(
    draws: &PosteriorDraws,
    prior: &GammaChainPrior,
    t: usize,
    grid: &GridSpec,
    opts: &SurfaceOptions,
    rng: &mut R,
) -> Result<Prediction> {
    if prior.w >= 1.0 {
        return Err(Error::validation(
            "w = 1 makes the Beta evolution degenerate",
        ));
    }
    prior.validate()?;
    check_draws(draws, t)?;
    let z_grid = posterior_mean_latent_grid(draws, t, grid, opts)?;
    let area = draws.domain.area();
    let mut lambda_pred = Vec::with_capacity(draws.len());
    for d in &draws.draws {
        let l = if prior.w == 0.0 {
            sample_gamma(prior.a0, prior.b0, rng)
        } else {
            let (a, _) = forward_shapes(&d.k[..=t], area, prior);
            let a_t = a[t];
            let zeta = Beta::new(prior.w * a_t, (1.0 - prior.w) * a_t)
                .map_err(|e| Error::validation(format!("predictive Beta: {e}")))?
                .sample(rng);
            d.lambda_star[t] * zeta / prior.w
        };
        lambda_pred.push(l);
    }
    let mean_lambda = lambda_pred.iter().sum::<f64>() / lambda_pred.len() as f64;
    let field = IntensityField {
        grid: *grid,
        t: t + 1,
        values: z_grid
            .values
            .iter()
            .map(|&z| mean_lambda * norm_cdf(z))
            .collect(),
    };
    Ok(Prediction {
        field,
        z_grid,
        lambda_pred,
    })
}

pub fn surface_max_abs_diff(a: &IntensityField, b: &IntensityField) -> Result<f64> {
    if a.grid != b.grid || a.values.len() != b.values.len() {
        return Err(Error::validation("fields are on different grids"));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Pearson correlation of two equally long value lists.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}
