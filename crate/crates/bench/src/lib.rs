//! Synthetic workloads and timing helpers shared by the criterion benches and
//! the `bench` subcommand.

use std::time::Instant;

use nngcp::mcmc::{
    sample_latent_slice, sample_thinned_slice, Backend, ChainConfig, MeanField, SliceState,
};
use nngcp::nngp::{build_neighbor_graph, nngp_factor};
use nngcp::rng::substream;
use nngcp::special::standard_normal;
use nngcp::{CovParams, Domain, Result};
use serde::Serialize;

/// Dominating rate of every workload; the domain grows with K.
pub const RATE: f64 = 20.0;

/// One augmented slice with `k` points, half observed and half thinned, on a
/// square domain holding `k / RATE` units of area.
#[derive(Clone, Debug)]
pub struct Workload {
    pub domain: Domain,
    pub slice: SliceState,
    pub kernel: CovParams,
}

impl Workload {
    pub fn new(k: usize, seed: u64) -> Result<Self> {
        let domain = Domain::square((k as f64 / RATE).sqrt())?;
        let mut rng = substream(seed, k as u64, 0, 0);
        let observed: Vec<_> = (0..k / 2)
            .map(|_| domain.sample_uniform(&mut rng))
            .collect();
        let mut slice = SliceState::from_observed(&observed);
        for z in slice.z_obs.iter_mut() {
            *z = standard_normal(&mut rng).abs();
        }
        for _ in k / 2..k {
            let p = domain.sample_uniform(&mut rng);
            slice.push_thinned(p, -standard_normal(&mut rng).abs(), 0.0);
        }
        Ok(Workload {
            domain,
            slice,
            kernel: CovParams::new(1.0, 2.0)?,
        })
    }

    pub fn k(&self) -> usize {
        self.slice.k()
    }

    /// One latent-field draw.
    pub fn latent(&self, m: usize, backend: Backend, seed: u64) -> Result<Vec<f64>> {
        sample_latent_slice(
            &self.slice,
            self.kernel,
            m,
            backend,
            1,
            &mut substream(seed, 0, 0, 1),
        )
    }

    /// One birth-death sweep of the thinned points, on a copy of the slice.
    pub fn thinned(&self, m: usize, backend: Backend, seed: u64) -> Result<usize> {
        let cfg = ChainConfig {
            m,
            backend,
            ..ChainConfig::default()
        };
        let mut slice = self.slice.clone();
        sample_thinned_slice(
            &mut slice,
            0,
            RATE,
            self.kernel,
            &MeanField::Zero,
            &self.domain,
            &cfg,
            &mut substream(seed, 0, 0, 2),
        )?;
        Ok(slice.k())
    }

    /// Building the neighbor graph and sparse factor alone.
    pub fn factor(&self, m: usize) -> Result<usize> {
        let pts = self.slice.points();
        let f = nngp_factor(&build_neighbor_graph(&pts, m)?, &pts, &self.kernel)?;
        Ok(f.len())
    }
}

/// Fastest wall-clock seconds over `reps` calls, after one warm-up call. The
/// minimum is the least noisy estimate of the intrinsic cost on a shared machine.
pub fn best_seconds<T>(reps: usize, mut f: impl FnMut(u64) -> Result<T>) -> Result<f64> {
    std::hint::black_box(f(0)?);
    let mut times = Vec::with_capacity(reps);
    for rep in 0..reps.max(1) {
        let start = Instant::now();
        std::hint::black_box(f(rep as u64 + 1)?);
        times.push(start.elapsed().as_secs_f64());
    }
    Ok(times.into_iter().fold(f64::INFINITY, f64::min))
}

/// Least-squares slope of `log t` against `log k`.
pub fn fit_exponent(k: &[usize], t: &[f64]) -> f64 {
    let xs: Vec<f64> = k.iter().map(|&v| (v as f64).ln()).collect();
    let ys: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub backend: Backend,
    pub k: usize,
    pub m: usize,
    pub latent_seconds: f64,
    pub thinned_seconds: f64,
}

pub fn time_blocks(k: usize, m: usize, backend: Backend, reps: usize, seed: u64) -> Result<Timing> {
    let w = Workload::new(k, seed)?;
    Ok(Timing {
        backend,
        k,
        m,
        latent_seconds: best_seconds(reps, |s| w.latent(m, backend, seed ^ s))?,
        thinned_seconds: best_seconds(reps, |s| w.thinned(m, backend, seed ^ s))?,
    })
}
