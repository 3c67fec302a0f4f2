//! Data-augmentation Gibbs sampler.
//!
//! Each iteration updates, slice by slice, the thinned points `U_t`, the latent
//! field on `S_t ∪ U_t`, then the dominating rates `λ*_t` jointly and
//! optionally the covariance parameters.

mod chain;
mod diag;
mod lambda;
mod latent;
mod state;
mod theta;
mod thinned;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::SpaceTimeCovParams;

pub use chain::{
    run_chain, run_chain_with, ChainRun, ChainTimings, Draw, IterationInfo, PosteriorDraws,
    TraceRow,
};
pub use diag::{autocorrelation, effective_sample_size, inefficiency_factor};
pub use lambda::{forward_shapes, sample_gamma, sample_lambda_star};
pub use latent::{sample_latent, sample_latent_slice};
pub use state::{AugmentedState, MeanField, SliceState};
pub use theta::{sample_theta_mh, theta_log_target, ThetaGroup};
pub use thinned::{fill_thinned_slice, sample_thinned, sample_thinned_slice, ThinnedStats};

/// Markov Gamma/Beta evolution prior on the dominating rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaChainPrior {
    pub a0: f64,
    pub b0: f64,
    pub w: f64,
}

impl GammaChainPrior {
    pub fn new(a0: f64, b0: f64, w: f64) -> Result<Self> {
        let p = GammaChainPrior { a0, b0, w };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a0 > 0.0 && self.a0.is_finite() && self.b0 > 0.0 && self.b0.is_finite()) {
            return Err(Error::validation(format!(
                "Gamma prior needs a0 > 0 and b0 > 0 (got a0={}, b0={})",
                self.a0, self.b0
            )));
        }
        if !(0.0..1.0).contains(&self.w) {
            return Err(Error::validation(format!(
                "discount w must lie in [0, 1), got {}",
                self.w
            )));
        }
        Ok(())
    }
}

impl Default for GammaChainPrior {
    fn default() -> Self {
        GammaChainPrior {
            a0: 100.0,
            b0: 10.0,
            w: 0.0,
        }
    }
}

/// Linear-algebra backend for the conditional draws.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Nngp,
    Dense,
}

/// Prior on `(log σ², log φ)` for the covariance-parameter update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaPrior {
    #[default]
    FlatLog,
    LogNormal {
        log_sigma2_mean: f64,
        log_sigma2_sd: f64,
        log_phi_mean: f64,
        log_phi_sd: f64,
    },
}

impl ThetaPrior {
    /// Log density on the log scale, up to a constant.
    pub fn log_density(&self, log_sigma2: f64, log_phi: f64) -> f64 {
        match *self {
            ThetaPrior::FlatLog => 0.0,
            ThetaPrior::LogNormal {
                log_sigma2_mean,
                log_sigma2_sd,
                log_phi_mean,
                log_phi_sd,
            } => {
                let a = (log_sigma2 - log_sigma2_mean) / log_sigma2_sd;
                let b = (log_phi - log_phi_mean) / log_phi_sd;
                -0.5 * (a * a + b * b)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    /// Neighbor budget M.
    pub m: usize,
    pub stp: SpaceTimeCovParams,
    pub prior: GammaChainPrior,
    pub seed: u64,
    pub backend: Backend,
    pub sample_theta: bool,
    /// Random-walk steps on `(log σ², log φ)`.
    pub theta_proposal_sd: [f64; 2],
    pub theta_prior: ThetaPrior,
    /// Birth–death proposals per slice and iteration, as a multiple of `λ*_t |D|`.
    pub birth_death_moves: f64,
    /// Extra single-site sweeps over the truncated auxiliary vector (dense backend only).
    pub v0_sweeps: usize,
    /// Fail with a runaway-thinning error once a slice holds more thinned points.
    pub max_thinned_points: usize,
    /// Proposal budget per thinned point when the chain is initialized.
    pub max_proposals_per_thinned_point: usize,
    /// Hold `λ*` at these values instead of sampling it.
    pub fixed_lambda_star: Option<Vec<f64>>,
    /// Keep thinned points and their latent values in each retained draw.
    pub store_thinned: bool,
    /// Directory receiving a CSV state dump on numerical failure.
    pub dump_dir: Option<std::path::PathBuf>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        let p = crate::gp::CovParams {
            sigma2: 1.0,
            phi: 2.0,
        };
        ChainConfig {
            n_iter: 600,
            burn_in: 100,
            m: 15,
            stp: SpaceTimeCovParams::spatial(p),
            prior: GammaChainPrior::default(),
            seed: 0,
            backend: Backend::Nngp,
            sample_theta: false,
            theta_proposal_sd: [0.1, 0.1],
            theta_prior: ThetaPrior::FlatLog,
            birth_death_moves: 1.0,
            v0_sweeps: 1,
            max_thinned_points: 1_000_000,
            max_proposals_per_thinned_point: 1_000_000,
            fixed_lambda_star: None,
            store_thinned: true,
            dump_dir: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self, n_slices: usize) -> Result<()> {
        if self.n_iter <= self.burn_in {
            return Err(Error::validation(format!(
                "n_iter ({}) must exceed burn_in ({})",
                self.n_iter, self.burn_in
            )));
        }
        if self.m < 1 {
            return Err(Error::validation("neighbor budget M must be at least 1"));
        }
        self.stp.theta1.validate()?;
        self.stp.theta.validate()?;
        self.prior.validate()?;
        if self
            .theta_proposal_sd
            .iter()
            .any(|s| !(*s >= 0.0 && s.is_finite()))
        {
            return Err(Error::validation(
                "theta proposal sds must be non-negative and finite",
            ));
        }
        if let ThetaPrior::LogNormal {
            log_sigma2_sd,
            log_phi_sd,
            ..
        } = self.theta_prior
        {
            if !(log_sigma2_sd > 0.0 && log_phi_sd > 0.0) {
                return Err(Error::validation(
                    "log-normal theta prior needs positive sds",
                ));
            }
        }
        if !(self.birth_death_moves > 0.0 && self.birth_death_moves.is_finite()) {
            return Err(Error::validation("birth_death_moves must be positive"));
        }
        if self.max_thinned_points == 0 || self.max_proposals_per_thinned_point == 0 {
            return Err(Error::validation("thinning caps must be positive"));
        }
        if let Some(l) = &self.fixed_lambda_star {
            if l.len() != n_slices {
                return Err(Error::validation(format!(
                    "fixed_lambda_star has {} entries for {} slices",
                    l.len(),
                    n_slices
                )));
            }
            if l.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::validation(
                    "fixed_lambda_star entries must be positive",
                ));
            }
        }
        Ok(())
    }
}
