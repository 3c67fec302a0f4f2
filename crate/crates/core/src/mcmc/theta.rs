use rand::Rng;

use super::state::AugmentedState;
use super::{Backend, ChainConfig};
use crate::error::Result;
use crate::gp::{cholesky, covariance_matrix, CovParams};
use crate::nngp::{build_neighbor_graph, nngp_factor};
use crate::special::standard_normal;

/// Parameter groups: the first slice's innovation and the one shared by later slices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThetaGroup {
    Initial,
    Innovation,
}

impl ThetaGroup {
    fn slices(self, n_slices: usize) -> std::ops::Range<usize> {
        match self {
            ThetaGroup::Initial => 0..n_slices.min(1),
            ThetaGroup::Innovation => 1.min(n_slices)..n_slices,
        }
    }
}

/// Log prior density of the group's latent innovations under `p`, with the
/// stored prior means held fixed.
pub fn theta_log_target(
    state: &AugmentedState,
    group: ThetaGroup,
    p: CovParams,
    m: usize,
    backend: Backend,
) -> Result<f64> {
    let mut total = 0.0;
    for t in group.slices(state.slices.len()) {
        let s = &state.slices[t];
        if s.k() == 0 {
            continue;
        }
        let points = s.points();
        let (z, mean) = (s.z(), s.mean());
        total += match backend {
            Backend::Nngp => {
                let graph = build_neighbor_graph(&points, m)?;
                nngp_factor(&graph, &points, &p)?.log_density(&z, &mean)
            }
            Backend::Dense => {
                let chol = cholesky(
                    covariance_matrix(&p, &points),
                    "covariance is not positive definite",
                )?;
                let r = nalgebra::DVector::from_iterator(
                    z.len(),
                    z.iter().zip(&mean).map(|(a, b)| a - b),
                );
                let l = chol.l();
                let w = l
                    .solve_lower_triangular(&r)
                    .expect("Cholesky factor is invertible");
                let log_det: f64 = 2.0 * (0..z.len()).map(|i| l[(i, i)].ln()).sum::<f64>();
                -0.5 * (z.len() as f64 * (2.0 * std::f64::consts::PI).ln()
                    + log_det
                    + w.norm_squared())
            }
        };
    }
    Ok(total)
}

/// One random-walk Metropolis step on `(log σ², log φ)` per group.
/// Returns, per group, whether a proposal was accepted (None if the group is empty).
pub fn sample_theta_mh<R: Rng + ?Sized>(
    state: &mut AugmentedState,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<[Option<bool>; 2]> {
    let mut out = [None, None];
    if !cfg.sample_theta {
        return Ok(out);
    }
    for (g, group) in [ThetaGroup::Initial, ThetaGroup::Innovation]
        .into_iter()
        .enumerate()
    {
        if group.slices(state.slices.len()).is_empty() {
            continue;
        }
        let cur = match group {
            ThetaGroup::Initial => state.stp.theta1,
            ThetaGroup::Innovation => state.stp.theta,
        };
        let (ls, lp) = (cur.sigma2.ln(), cur.phi.ln());
        let (ls2, lp2) = (
            ls + cfg.theta_proposal_sd[0] * standard_normal(rng),
            lp + cfg.theta_proposal_sd[1] * standard_normal(rng),
        );
        let prop = CovParams {
            sigma2: ls2.exp(),
            phi: lp2.exp(),
        };
        let accepted = if prop.validate().is_err() {
            false
        } else {
            let log_ratio = theta_log_target(state, group, prop, cfg.m, cfg.backend)?
                - theta_log_target(state, group, cur, cfg.m, cfg.backend)?
                + cfg.theta_prior.log_density(ls2, lp2)
                - cfg.theta_prior.log_density(ls, lp);
            rng.gen::<f64>().ln() < log_ratio
        };
        if accepted {
            match group {
                ThetaGroup::Initial => {
                    state.stp.theta1 = prop;
                    if state.slices.len() == 1 {
                        state.stp.theta = prop;
                    }
                }
                ThetaGroup::Innovation => state.stp.theta = prop,
            }
        }
        out[g] = Some(accepted);
    }
    Ok(out)
}
