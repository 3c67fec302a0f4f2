use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use nngcp::mcmc::Backend;
use nngcp_bench::{fit_exponent, time_blocks, Timing};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::common::*;

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// JSON config or manifest; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Slice sizes for the NNGP sweep.
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    /// Neighbor budget of the NNGP sweep over K.
    #[arg(long)]
    m: Option<usize>,
    /// Neighbor budgets for the sweep over M.
    #[arg(long, value_delimiter = ',')]
    ms: Option<Vec<usize>>,
    /// Slice size of the sweep over M.
    #[arg(long)]
    m_sweep_k: Option<usize>,
    /// Slice sizes for the dense sweep.
    #[arg(long, value_delimiter = ',')]
    dense_ks: Option<Vec<usize>>,
    /// Timed repetitions per point (the fastest is reported).
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub ks: Vec<usize>,
    pub m: usize,
    pub ms: Vec<usize>,
    pub m_sweep_k: usize,
    pub dense_ks: Vec<usize>,
    pub reps: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            seed: None,
            out: None,
            ks: vec![500, 1000, 2000],
            m: 10,
            ms: vec![5, 15, 30],
            m_sweep_k: 1000,
            dense_ks: vec![200, 400],
            reps: 11,
        }
    }
}

fn resolve(a: BenchArgs) -> Result<BenchConfig> {
    let mut c: BenchConfig = load_config(a.config.as_deref(), "bench")?;
    override_fields!(a => c; ks => ks, m => m, ms => ms, m_sweep_k => m_sweep_k, dense_ks => dense_ks, reps => reps);
    override_fields!(a => c; optional seed, out);
    Ok(c)
}

fn report(t: &Timing) {
    eprintln!(
        "{:>5} K={:<5} M={:<4} latent {:>9.4} s  thinned {:>9.4} s",
        format!("{:?}", t.backend).to_lowercase(),
        t.k,
        t.m,
        t.latent_seconds,
        t.thinned_seconds
    );
}

fn exponents(rows: &[Timing]) -> serde_json::Value {
    let k: Vec<usize> = rows.iter().map(|r| r.k).collect();
    let lat: Vec<f64> = rows.iter().map(|r| r.latent_seconds).collect();
    let thin: Vec<f64> = rows.iter().map(|r| r.thinned_seconds).collect();
    json!({ "latent": fit_exponent(&k, &lat), "thinned": fit_exponent(&k, &thin) })
}

pub fn run(args: BenchArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let seed = require_seed(cfg.seed)?;
    if cfg.ks.len() < 2 || cfg.dense_ks.len() < 2 {
        return Err(invalid("the K sweeps need at least two sizes each"));
    }
    if cfg.m == 0 || cfg.ms.contains(&0) {
        return Err(invalid("neighbor budgets must be at least 1"));
    }
    let dir = prepare_out(&cfg.out, &[])?;

    let run = |k: usize, m: usize, backend: Backend| -> Result<Timing> {
        let t = time_blocks(k, m, backend, cfg.reps, seed)?;
        report(&t);
        Ok(t)
    };
    let nngp: Vec<Timing> = cfg
        .ks
        .iter()
        .map(|&k| run(k, cfg.m, Backend::Nngp))
        .collect::<Result<_>>()?;
    let by_m: Vec<Timing> = cfg
        .ms
        .iter()
        .map(|&m| run(cfg.m_sweep_k, m, Backend::Nngp))
        .collect::<Result<_>>()?;
    let dense: Vec<Timing> = cfg
        .dense_ks
        .iter()
        .map(|&k| run(k, k, Backend::Dense))
        .collect::<Result<_>>()?;

    let increasing_in_m = by_m
        .windows(2)
        .all(|w| w[1].latent_seconds > w[0].latent_seconds);
    let summary = json!({
        "nngp_exponent": exponents(&nngp),
        "dense_exponent": exponents(&dense),
        "latent_increasing_in_m": increasing_in_m,
        "threads": rayon::current_num_threads(),
        "nngp": nngp,
        "by_m": by_m,
        "dense": dense,
    });
    eprintln!(
        "latent-block exponent vs K: nngp {:.3}, dense {:.3}; increasing in M: {increasing_in_m}",
        summary["nngp_exponent"]["latent"]
            .as_f64()
            .unwrap_or(f64::NAN),
        summary["dense_exponent"]["latent"]
            .as_f64()
            .unwrap_or(f64::NAN)
    );
    write_json(&dir.join("bench.json"), &summary)?;

    let mut w = create(&dir.join("bench.csv"))?;
    writeln!(w, "sweep,backend,k,m,latent_seconds,thinned_seconds")?;
    for (sweep, rows) in [("k", &nngp), ("m", &by_m), ("dense", &dense)] {
        for r in rows {
            let b = format!("{:?}", r.backend).to_lowercase();
            writeln!(
                w,
                "{sweep},{b},{},{},{},{}",
                r.k, r.m, r.latent_seconds, r.thinned_seconds
            )?;
        }
    }
    w.flush()?;
    write_manifest(
        &dir,
        "bench",
        &cfg,
        &["bench.json".to_string(), "bench.csv".to_string()],
    )
}
