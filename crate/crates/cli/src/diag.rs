use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use nngcp::mcmc::{autocorrelation, effective_sample_size, inefficiency_factor};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::common::*;

#[derive(Args, Debug)]
pub struct DiagArgs {
    /// JSON config or manifest; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// draws.bin from `fit`, or a CSV with one numeric column per series.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Largest lag written to acf.csv.
    #[arg(long)]
    max_lag: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub max_lag: usize,
}

impl Default for DiagConfig {
    fn default() -> Self {
        DiagConfig {
            input: None,
            out: None,
            max_lag: 50,
        }
    }
}

fn resolve(a: DiagArgs) -> Result<DiagConfig> {
    let mut c: DiagConfig = load_config(a.config.as_deref(), "diag")?;
    override_fields!(a => c; max_lag => max_lag);
    override_fields!(a => c; optional input, out);
    Ok(c)
}

/// λ*_t and K_t per slice, plus any covariance parameter that moved.
fn series_from_draws(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let d = read_draws(path)?.draws;
    let mut out = Vec::new();
    for t in 0..d.n_slices() {
        out.push((
            format!("lambda_star_t{}", t + 1),
            d.draws.iter().map(|x| x.lambda_star[t]).collect(),
        ));
        out.push((
            format!("k_t{}", t + 1),
            d.draws.iter().map(|x| x.k[t] as f64).collect(),
        ));
    }
    type Getter = fn(&nngcp::mcmc::Draw) -> f64;
    let theta: [(&str, Getter); 4] = [
        ("sigma2_1", |x| x.theta.theta1.sigma2),
        ("phi_1", |x| x.theta.theta1.phi),
        ("sigma2", |x| x.theta.theta.sigma2),
        ("phi", |x| x.theta.theta.phi),
    ];
    for (name, f) in theta {
        let s: Vec<f64> = d.draws.iter().map(f).collect();
        if s.iter().any(|v| *v != s[0]) {
            out.push((name.to_string(), s));
        }
    }
    Ok(out)
}

fn series_from_csv(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let names: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let mut cols = vec![Vec::new(); names.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            let v: f64 = field.trim().parse().map_err(|_| {
                invalid(format!(
                    "{} row {}: `{field}` is not a number",
                    path.display(),
                    row + 2
                ))
            })?;
            c.push(v);
        }
    }
    Ok(names.into_iter().zip(cols).collect())
}

pub fn run(args: DiagArgs) -> Result<()> {
    let mut cfg = resolve(args)?;
    let path = require_path(&cfg.input, "an input file (--input)")?;
    cfg.input = Some(path.clone());
    let series = if path.extension().is_some_and(|e| e == "csv") {
        series_from_csv(&path)?
    } else {
        series_from_draws(&path)?
    };
    if series.is_empty() {
        return Err(invalid("no series to diagnose"));
    }
    let dir = prepare_out(&cfg.out, &[&path])?;

    let mut report = Vec::new();
    let mut acf_w = create(&dir.join("acf.csv"))?;
    writeln!(acf_w, "series,lag,acf")?;
    for (name, x) in &series {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
        let f = inefficiency_factor(x);
        if let Ok(acf) = autocorrelation(x, cfg.max_lag) {
            for (lag, r) in acf.iter().enumerate() {
                writeln!(acf_w, "{name},{lag},{r}")?;
            }
        }
        match &f {
            Ok(v) => eprintln!("{name}: inefficiency {v:.3}"),
            Err(e) => eprintln!("{name}: {e}"),
        }
        report.push(json!({
            "series": name,
            "n": x.len(),
            "mean": mean,
            "sd": sd,
            "inefficiency": f.as_ref().ok(),
            "ess": effective_sample_size(x).ok(),
            "note": f.as_ref().err().map(|e| e.to_string()),
        }));
    }
    acf_w.flush()?;
    write_json(&dir.join("diag.json"), &report)?;
    write_manifest(
        &dir,
        "diag",
        &cfg,
        &["diag.json".to_string(), "acf.csv".to_string()],
    )
}
