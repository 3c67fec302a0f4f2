//! Config loading, manifests and file writers shared by the subcommands.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nngcp::mcmc::PosteriorDraws;
use nngcp::surfaces::IntensityField;
use nngcp::Domain;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    nngcp::Error::Validation(msg.into()).into()
}

/// Record of one run: rerunning with `--config manifest.json` reproduces it.
#[derive(Serialize, Deserialize)]
pub struct Manifest<C> {
    pub command: String,
    pub version: String,
    pub threads: usize,
    pub config: C,
    pub outputs: Vec<String>,
}

/// Reads a JSON config for `command`: either a bare config object or a
/// manifest written by an earlier run of the same command.
pub fn load_config<C: DeserializeOwned + Default>(path: Option<&Path>, command: &str) -> Result<C> {
    let Some(path) = path else {
        return Ok(C::default());
    };
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    if let (Some(cmd), Some(_)) = (value.get("command"), value.get("config")) {
        if cmd != command {
            return Err(invalid(format!(
                "{} is a manifest for `{}`, not `{command}`",
                path.display(),
                cmd.as_str().unwrap_or("?")
            )));
        }
        value = value["config"].take();
    }
    serde_json::from_value(value).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

pub fn require_seed(seed: Option<u64>) -> Result<u64> {
    seed.ok_or_else(|| invalid("a seed is required (--seed or `seed` in the config)"))
}

pub fn require_path(p: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    let p = p
        .as_ref()
        .ok_or_else(|| invalid(format!("{what} is required")))?;
    fs::canonicalize(p).map_err(|e| invalid(format!("{what} {}: {e}", p.display())))
}

pub fn domain_from(v: &[f64]) -> Result<Domain> {
    match v {
        [a, b, c, d] => Ok(Domain::new(*a, *b, *c, *d)?),
        _ => Err(invalid(format!(
            "domain needs four values x_min,x_max,y_min,y_max, got {}",
            v.len()
        ))),
    }
}

/// Creates the output directory and refuses to write over any input file.
pub fn prepare_out(out: &Option<PathBuf>, inputs: &[&Path]) -> Result<PathBuf> {
    let out = out
        .clone()
        .ok_or_else(|| invalid("an output directory is required (--out)"))?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let dir = fs::canonicalize(&out)?;
    for input in inputs {
        if input.parent() == Some(dir.as_path()) {
            return Err(invalid(format!(
                "output directory {} holds input {}",
                out.display(),
                input.display()
            )));
        }
    }
    Ok(dir)
}

pub fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_manifest<C: Serialize>(
    dir: &Path,
    command: &str,
    config: &C,
    outputs: &[String],
) -> Result<()> {
    let m = Manifest {
        command: command.into(),
        version: VERSION.into(),
        threads: rayon::current_num_threads(),
        config,
        outputs: outputs.to_vec(),
    };
    write_json(&dir.join(MANIFEST), &m)
}

/// Posterior draws plus the sampler settings (as JSON) that produced them.
#[derive(Serialize, Deserialize)]
pub struct DrawsFile {
    pub version: String,
    pub chain_config: String,
    pub draws: PosteriorDraws,
}

pub fn write_draws(path: &Path, file: &DrawsFile) -> Result<()> {
    let mut w = create(path)?;
    bincode::serialize_into(&mut w, file)?;
    w.flush()?;
    Ok(())
}

impl DrawsFile {
    pub fn chain_config(&self) -> Result<nngcp::mcmc::ChainConfig> {
        Ok(serde_json::from_str(&self.chain_config)?)
    }
}

pub fn read_draws(path: &Path) -> Result<DrawsFile> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    bincode::deserialize(&bytes)
        .map_err(|e| invalid(format!("{} is not a draws file: {e}", path.display())))
}

/// Row-major grid matrix: a metadata comment line, then one row per `y`
/// index from the bottom edge up.
pub fn write_matrix(path: &Path, field: &IntensityField) -> Result<()> {
    let g = &field.grid;
    let d = g.domain;
    let mut w = create(path)?;
    writeln!(
        w,
        "# nx={} ny={} x_min={} x_max={} y_min={} y_max={} t={} rows=y_ascending",
        g.nx,
        g.ny,
        d.x_min(),
        d.x_max(),
        d.y_min(),
        d.y_max(),
        field.t + 1
    )?;
    for j in 0..g.ny {
        let row: Vec<String> = (0..g.nx).map(|i| field.at(i, j).to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Binary PPM on a blue-to-red linear ramp, top row at the largest `y`.
pub fn write_ppm(path: &Path, field: &IntensityField) -> Result<(f64, f64)> {
    let (lo, hi) = (field.min(), field.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let g = &field.grid;
    let mut w = create(path)?;
    write!(w, "P6\n{} {}\n255\n", g.nx, g.ny)?;
    for j in (0..g.ny).rev() {
        for i in 0..g.nx {
            let s = ((field.at(i, j) - lo) / span).clamp(0.0, 1.0);
            let r = (255.0 * s).round() as u8;
            w.write_all(&[r, 0, 255 - r])?;
        }
    }
    w.flush()?;
    Ok((lo, hi))
}
