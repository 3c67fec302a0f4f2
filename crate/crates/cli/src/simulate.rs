use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use nngcp::geometry::write_events;
use nngcp::rng::{block, substream};
use nngcp::simulate::{simulate_exgcp, LatentBackend, SimOptions};
use nngcp::surfaces::GridSpec;
use nngcp::{CovParams, SpaceTimeCovParams};
use serde::{Deserialize, Serialize};

use crate::common::*;

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// JSON config or manifest; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// x_min,x_max,y_min,y_max
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    domain: Option<Vec<f64>>,
    /// Dominating rate per slice; the number of rates sets T.
    #[arg(long, value_delimiter = ',')]
    lambda_star: Option<Vec<f64>>,
    #[arg(long)]
    sigma2_1: Option<f64>,
    #[arg(long)]
    phi_1: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long, value_enum)]
    latent_backend: Option<LatentBackendArg>,
    #[arg(long)]
    latent_m: Option<usize>,
    /// Also write the true latent field and intensity on an n x n grid.
    #[arg(long)]
    truth_grid: Option<usize>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum LatentBackendArg {
    Auto,
    Dense,
    Nngp,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub domain: Vec<f64>,
    pub lambda_star: Vec<f64>,
    pub stp: SpaceTimeCovParams,
    pub latent: SimOptions,
    pub truth_grid: Option<usize>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            seed: None,
            out: None,
            domain: vec![0.0, 10.0, 0.0, 10.0],
            lambda_star: vec![20.0],
            stp: SpaceTimeCovParams::spatial(CovParams {
                sigma2: 1.0,
                phi: 2.0,
            }),
            latent: SimOptions::default(),
            truth_grid: None,
        }
    }
}

fn resolve(a: SimulateArgs) -> Result<SimulateConfig> {
    let mut c: SimulateConfig = load_config(a.config.as_deref(), "simulate")?;
    let spatial_flags = a.sigma2.is_none() && a.phi.is_none();
    override_fields!(a => c;
        domain => domain, lambda_star => lambda_star,
        sigma2_1 => stp.theta1.sigma2, phi_1 => stp.theta1.phi,
        sigma2 => stp.theta.sigma2, phi => stp.theta.phi, latent_m => latent.nngp_m);
    override_fields!(a => c; optional seed, out, truth_grid);
    if let Some(b) = a.latent_backend {
        c.latent.backend = match b {
            LatentBackendArg::Auto => LatentBackend::Auto,
            LatentBackendArg::Dense => LatentBackend::Dense,
            LatentBackendArg::Nngp => LatentBackend::Nngp,
        };
    }
    // A single slice only uses θ1; keep θ equal so the manifest is unambiguous.
    if c.lambda_star.len() == 1 && spatial_flags {
        c.stp.theta = c.stp.theta1;
    }
    Ok(c)
}

pub fn run(args: SimulateArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let seed = require_seed(cfg.seed)?;
    let domain = domain_from(&cfg.domain)?;
    let stp = SpaceTimeCovParams::new(cfg.stp.theta1, cfg.stp.theta)?;
    let grid = cfg
        .truth_grid
        .map(|n| GridSpec::new(n, n, domain))
        .transpose()?;
    let probes = grid.map(|g| g.nodes()).unwrap_or_default();
    let dir = prepare_out(&cfg.out, &[])?;

    let mut rng = substream(seed, 0, 0, block::SIMULATE);
    let sim = simulate_exgcp(
        &cfg.lambda_star,
        &stp,
        &domain,
        &cfg.latent,
        &probes,
        &mut rng,
    )?;

    let mut outputs = vec!["events.csv".to_string(), "latent.csv".to_string()];
    let mut w = create(&dir.join("events.csv"))?;
    write_events(&mut w, &sim.events)?;
    w.flush()?;

    let mut w = create(&dir.join("latent.csv"))?;
    writeln!(w, "t,x,y,z,retained")?;
    for t in 0..sim.lambda_star.len() {
        for ((p, z), r) in sim.homogeneous[t]
            .iter()
            .zip(&sim.latent[t])
            .zip(&sim.retained[t])
        {
            writeln!(w, "{},{},{},{},{}", t + 1, p.x, p.y, z, u8::from(*r))?;
        }
    }
    w.flush()?;

    if let Some(g) = grid {
        let mut w = create(&dir.join("truth.csv"))?;
        writeln!(w, "t,i,j,x,y,z,intensity")?;
        for t in 0..sim.lambda_star.len() {
            let intensity = sim.probe_intensity(t);
            for (n, (p, z)) in probes.iter().zip(&sim.probe_latent[t]).enumerate() {
                let (i, j) = (n % g.nx, n / g.nx);
                writeln!(w, "{},{i},{j},{},{},{z},{}", t + 1, p.x, p.y, intensity[n])?;
            }
        }
        w.flush()?;
        outputs.push("truth.csv".into());
    }

    let counts = sim.events.counts();
    eprintln!(
        "simulated {} slices, retained counts {counts:?}",
        counts.len()
    );
    write_manifest(&dir, "simulate", &cfg, &outputs)
}
