use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use nngcp::geometry::{load_events, CsvSchema};
use nngcp::mcmc::{
    effective_sample_size, inefficiency_factor, run_chain_with, Backend, ChainConfig,
    PosteriorDraws,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::common::*;

#[derive(Args, Debug)]
pub struct FitArgs {
    /// JSON config or manifest; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Events CSV with columns t,x,y.
    #[arg(long)]
    events: Option<PathBuf>,
    /// x_min,x_max,y_min,y_max
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    domain: Option<Vec<f64>>,
    /// Number of time slices T.
    #[arg(long)]
    slices: Option<usize>,
    /// Neighbor budget.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    a0: Option<f64>,
    #[arg(long)]
    b0: Option<f64>,
    /// Discount of the Gamma evolution, in [0, 1).
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    sigma2_1: Option<f64>,
    #[arg(long)]
    phi_1: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Update σ² and φ by random-walk Metropolis.
    #[arg(long)]
    sample_theta: Option<bool>,
    /// Also write the draws as CSV.
    #[arg(long)]
    draws_csv: Option<bool>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum BackendArg {
    Nngp,
    Dense,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Nngp => Backend::Nngp,
            BackendArg::Dense => Backend::Dense,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub schema: CsvSchema,
    pub domain: Vec<f64>,
    pub slices: usize,
    /// Sampler settings; its `seed` is taken from the top-level seed.
    pub chain: ChainConfig,
    pub draws_csv: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            seed: None,
            out: None,
            events: None,
            schema: CsvSchema::default(),
            domain: vec![0.0, 10.0, 0.0, 10.0],
            slices: 1,
            chain: ChainConfig::default(),
            draws_csv: false,
        }
    }
}

fn resolve(a: FitArgs) -> Result<FitConfig> {
    let mut c: FitConfig = load_config(a.config.as_deref(), "fit")?;
    override_fields!(a => c;
        domain => domain, slices => slices, m => chain.m, n_iter => chain.n_iter, burn_in => chain.burn_in,
        a0 => chain.prior.a0, b0 => chain.prior.b0, w => chain.prior.w,
        sigma2_1 => chain.stp.theta1.sigma2, phi_1 => chain.stp.theta1.phi,
        sigma2 => chain.stp.theta.sigma2, phi => chain.stp.theta.phi,
        sample_theta => chain.sample_theta, draws_csv => draws_csv);
    override_fields!(a => c; optional seed, out, events);
    if let Some(b) = a.backend {
        c.chain.backend = b.into();
    }
    if c.slices == 1 && a.sigma2.is_none() && a.phi.is_none() {
        c.chain.stp.theta = c.chain.stp.theta1;
    }
    Ok(c)
}

fn write_trace(path: &std::path::Path, d: &PosteriorDraws) -> Result<()> {
    let mut w = create(path)?;
    writeln!(
        w,
        "iteration,t,lambda_star,k,birth_acceptance,death_acceptance,sigma2_1,phi_1,sigma2,phi"
    )?;
    for r in &d.trace {
        let th = r.theta;
        for t in 0..r.k.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.iteration,
                t + 1,
                r.lambda_star[t],
                r.k[t],
                r.birth_acceptance,
                r.death_acceptance,
                th.theta1.sigma2,
                th.theta1.phi,
                th.theta.sigma2,
                th.theta.phi
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_draws_csv(path: &std::path::Path, d: &PosteriorDraws) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "iteration,t,lambda_star,kind,x,y,z")?;
    for draw in &d.draws {
        for t in 0..d.n_slices() {
            let lam = draw.lambda_star[t];
            for (p, z) in d.observed[t].iter().zip(&draw.z_obs[t]) {
                writeln!(
                    w,
                    "{},{},{lam},observed,{},{},{z}",
                    draw.iteration,
                    t + 1,
                    p.x,
                    p.y
                )?;
            }
            if let (Some(pts), Some(zs)) = (draw.thinned.get(t), draw.z_thin.get(t)) {
                for (p, z) in pts.iter().zip(zs) {
                    writeln!(
                        w,
                        "{},{},{lam},thinned,{},{},{z}",
                        draw.iteration,
                        t + 1,
                        p.x,
                        p.y
                    )?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn series_stats(x: &[f64]) -> serde_json::Value {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    json!({
        "mean": mean,
        "sd": sd,
        "inefficiency": inefficiency_factor(x).ok(),
        "ess": effective_sample_size(x).ok(),
    })
}

fn summary(d: &PosteriorDraws, area: f64) -> serde_json::Value {
    let slices: Vec<_> = (0..d.n_slices())
        .map(|t| {
            let lam: Vec<f64> = d.draws.iter().map(|x| x.lambda_star[t]).collect();
            let k: Vec<f64> = d.draws.iter().map(|x| x.k[t] as f64).collect();
            let st = &d.thinned_stats[t];
            json!({
                "t": t + 1,
                "observed": d.observed[t].len(),
                "lambda_star": series_stats(&lam),
                "k": series_stats(&k),
                "expected_k": lam.iter().sum::<f64>() / lam.len() as f64 * area,
                "birth_acceptance": st.birth_rate(),
                "death_acceptance": st.death_rate(),
            })
        })
        .collect();
    let rate = |g: usize| {
        (d.theta_proposed[g] > 0).then(|| d.theta_accepted[g] as f64 / d.theta_proposed[g] as f64)
    };
    let mean_theta =
        |f: fn(&nngcp::mcmc::Draw) -> f64| d.draws.iter().map(f).sum::<f64>() / d.len() as f64;
    json!({
        "draws": d.len(),
        "slices": slices,
        "theta_acceptance": [rate(0), rate(1)],
        "theta_mean": {
            "sigma2_1": mean_theta(|x| x.theta.theta1.sigma2),
            "phi_1": mean_theta(|x| x.theta.theta1.phi),
            "sigma2": mean_theta(|x| x.theta.theta.sigma2),
            "phi": mean_theta(|x| x.theta.theta.phi),
        },
    })
}

pub fn run(args: FitArgs) -> Result<()> {
    let mut cfg = resolve(args)?;
    let seed = require_seed(cfg.seed)?;
    cfg.chain.seed = seed;
    let events_path = require_path(&cfg.events, "an events file (--events)")?;
    cfg.events = Some(events_path.clone());
    let domain = domain_from(&cfg.domain)?;
    let events = load_events(&events_path, &cfg.schema, cfg.slices)?;
    cfg.chain.validate(cfg.slices)?;
    let dir = prepare_out(&cfg.out, &[&events_path])?;

    let n_iter = cfg.chain.n_iter;
    let step = (n_iter / 10).max(1);
    let mut chain = cfg.chain.clone();
    chain.dump_dir = chain.dump_dir.or_else(|| Some(dir.clone()));
    let run = run_chain_with(&events, &chain, &domain, |info| {
        if info.iteration % step == 0 || info.iteration == n_iter {
            eprintln!(
                "iteration {}/{}: lambda* {:?}, K {:?}",
                info.iteration, info.n_iter, info.row.lambda_star, info.row.k
            );
        }
    })?;
    let d = &run.draws;

    let mut outputs = vec!["draws.bin", "trace.csv", "summary.json", "timing.json"];
    write_draws(
        &dir.join("draws.bin"),
        &DrawsFile {
            version: VERSION.into(),
            chain_config: serde_json::to_string(&cfg.chain)?,
            draws: run.draws.clone(),
        },
    )?;
    write_trace(&dir.join("trace.csv"), d)?;
    write_json(&dir.join("summary.json"), &summary(d, domain.area()))?;
    write_json(
        &dir.join("timing.json"),
        &json!({ "threads": rayon::current_num_threads(), "seconds": run.timings }),
    )?;
    if cfg.draws_csv {
        write_draws_csv(&dir.join("draws.csv"), d)?;
        outputs.push("draws.csv");
    }
    eprintln!(
        "{} draws; posterior mean lambda* {:?}; {:.1} s",
        d.len(),
        d.mean_lambda_star(),
        run.timings.total
    );
    let outputs: Vec<String> = outputs.into_iter().map(String::from).collect();
    write_manifest(&dir, "fit", &cfg, &outputs)
}
