use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use nngcp::surfaces::{posterior_intensity_grid, GridSpec, SurfaceOptions};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::common::*;
use crate::fit::BackendArg;

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// JSON config or manifest; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// draws.bin written by `fit`.
    #[arg(long)]
    draws: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    /// Neighbor budget for kriging.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Average Φ over the kriging variance instead of using the kriged mean.
    #[arg(long)]
    marginalize: Option<bool>,
    /// Also write PPM heatmaps with JSON sidecars.
    #[arg(long)]
    ppm: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub draws: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub nx: usize,
    pub ny: usize,
    pub surface: SurfaceOptions,
    pub ppm: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            draws: None,
            out: None,
            nx: 50,
            ny: 50,
            surface: SurfaceOptions::default(),
            ppm: false,
        }
    }
}

fn resolve(a: RenderArgs) -> Result<RenderConfig> {
    let mut c: RenderConfig = load_config(a.config.as_deref(), "render")?;
    override_fields!(a => c; nx => nx, ny => ny, m => surface.m, marginalize => surface.marginalize, ppm => ppm);
    override_fields!(a => c; optional draws, out);
    if let Some(b) = a.backend {
        c.surface.backend = b.into();
    }
    Ok(c)
}

pub fn run(args: RenderArgs) -> Result<()> {
    let mut cfg = resolve(args)?;
    let path = require_path(&cfg.draws, "a draws file (--draws)")?;
    cfg.draws = Some(path.clone());
    let file = read_draws(&path)?;
    let grid = GridSpec::new(cfg.nx, cfg.ny, file.draws.domain)?;
    let dir = prepare_out(&cfg.out, &[&path])?;

    let surfaces = posterior_intensity_grid(&file.draws, &grid, &cfg.surface)?;
    for w in &surfaces.warnings {
        eprintln!("warning: {w}");
    }
    let mut outputs = Vec::new();
    for field in &surfaces.fields {
        let stem = format!("intensity_t{}", field.t + 1);
        write_matrix(&dir.join(format!("{stem}.csv")), field)?;
        outputs.push(format!("{stem}.csv"));
        if cfg.ppm {
            let (lo, hi) = write_ppm(&dir.join(format!("{stem}.ppm")), field)?;
            let sidecar = json!({
                "t": field.t + 1,
                "nx": grid.nx,
                "ny": grid.ny,
                "domain": grid.domain,
                "min": lo,
                "max": hi,
                "ramp": "linear, blue at min to red at max",
            });
            write_json(&dir.join(format!("{stem}.json")), &sidecar)?;
            outputs.push(format!("{stem}.ppm"));
            outputs.push(format!("{stem}.json"));
        }
        eprintln!(
            "slice {}: intensity in [{:.4}, {:.4}]",
            field.t + 1,
            field.min(),
            field.max()
        );
    }
    write_manifest(&dir, "render", &cfg, &outputs)
}
