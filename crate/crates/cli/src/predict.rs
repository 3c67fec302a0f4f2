use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use nngcp::rng::{block, substream};
use nngcp::surfaces::{predict_next_time, GridSpec, SurfaceOptions};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::common::*;
use crate::fit::BackendArg;

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// JSON config or manifest; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// draws.bin written by `fit`.
    #[arg(long)]
    draws: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Last training slice (1-based); the prediction is for the slice after it.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Evolution prior overrides; by default the fit's prior is used.
    #[arg(long)]
    a0: Option<f64>,
    #[arg(long)]
    b0: Option<f64>,
    #[arg(long)]
    w: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictConfig {
    pub seed: Option<u64>,
    pub draws: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub horizon: Option<usize>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub surface: SurfaceOptions,
    pub a0: Option<f64>,
    pub b0: Option<f64>,
    pub w: Option<f64>,
}

fn resolve(a: PredictArgs) -> Result<PredictConfig> {
    let mut c: PredictConfig = load_config(a.config.as_deref(), "predict")?;
    override_fields!(a => c; m => surface.m);
    override_fields!(a => c; optional seed, draws, out, horizon, nx, ny, a0, b0, w);
    if let Some(b) = a.backend {
        c.surface.backend = b.into();
    }
    Ok(c)
}

pub fn run(args: PredictArgs) -> Result<()> {
    let mut cfg = resolve(args)?;
    let seed = require_seed(cfg.seed)?;
    let horizon = cfg.horizon.ok_or_else(|| {
        invalid("the training horizon is required (--horizon, the last fitted slice)")
    })?;
    let path = require_path(&cfg.draws, "a draws file (--draws)")?;
    cfg.draws = Some(path.clone());
    let file = read_draws(&path)?;
    let draws = &file.draws;
    if horizon < 1 || horizon > draws.n_slices() {
        return Err(invalid(format!(
            "horizon {horizon} outside the fitted slices 1..={}",
            draws.n_slices()
        )));
    }
    if horizon < draws.n_slices() {
        eprintln!(
            "warning: the draws of slice {horizon} also condition on slices after it; fit on slices 1..={horizon} for a strict forecast"
        );
    }
    let mut prior = file.chain_config()?.prior;
    prior.a0 = cfg.a0.unwrap_or(prior.a0);
    prior.b0 = cfg.b0.unwrap_or(prior.b0);
    prior.w = cfg.w.unwrap_or(prior.w);
    let grid = GridSpec::new(cfg.nx.unwrap_or(50), cfg.ny.unwrap_or(50), draws.domain)?;
    let dir = prepare_out(&cfg.out, &[&path])?;

    let t = horizon - 1;
    let mut rng = substream(seed, 0, t as u64, block::PREDICT);
    let pred = predict_next_time(draws, &prior, t, &grid, &cfg.surface, &mut rng)?;

    let next = horizon + 1;
    let mut outputs = vec![
        format!("intensity_t{next}.csv"),
        format!("latent_t{next}.csv"),
    ];
    write_matrix(&dir.join(&outputs[0]), &pred.field)?;
    let mut z = pred.z_grid.clone();
    z.t = t + 1;
    write_matrix(&dir.join(&outputs[1]), &z)?;

    let mut w = create(&dir.join("lambda_pred.csv"))?;
    writeln!(w, "iteration,lambda_star,lambda_pred")?;
    for (d, l) in draws.draws.iter().zip(&pred.lambda_pred) {
        writeln!(w, "{},{},{l}", d.iteration, d.lambda_star[t])?;
    }
    w.flush()?;
    outputs.push("lambda_pred.csv".into());

    let n = pred.lambda_pred.len() as f64;
    let mean = pred.lambda_pred.iter().sum::<f64>() / n;
    let var = pred
        .lambda_pred
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    let summary = json!({
        "horizon": horizon,
        "predicted_slice": next,
        "prior": prior,
        "lambda_star_mean": draws.mean_lambda_star()[t],
        "lambda_pred_mean": mean,
        "lambda_pred_se": (var / n).sqrt(),
    });
    write_json(&dir.join("prediction.json"), &summary)?;
    outputs.push("prediction.json".into());
    eprintln!("slice {next}: predictive lambda* mean {mean:.4}");
    write_manifest(&dir, "predict", &cfg, &outputs)
}
