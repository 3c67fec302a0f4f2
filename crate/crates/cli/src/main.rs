//! `nngcp`: simulate, fit, render, predict, diagnose and benchmark Gaussian
//! Cox process models from the command line.

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Copies every flag that was given onto the matching config field.
/// `optional` fields are themselves `Option`s in the config.
macro_rules! override_fields {
    ($a:ident => $c:ident; optional $($flag:ident),* $(,)?) => {
        $(if $a.$flag.is_some() { $c.$flag = $a.$flag; })*
    };
    ($a:ident => $c:ident; $($flag:ident => $($field:ident).+),* $(,)?) => {
        $(if let Some(v) = $a.$flag { $c.$($field).+ = v; })*
    };
}

mod bench;
mod common;
mod diag;
mod fit;
mod predict;
mod render;
mod simulate;

#[derive(Parser, Debug)]
#[command(
    name = "nngcp",
    version,
    about = "Nearest-neighbor GP inference for Gaussian Cox processes"
)]
struct Cli {
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate events from the model.
    Simulate(simulate::SimulateArgs),
    /// Run the Gibbs sampler on an events file.
    Fit(fit::FitArgs),
    /// Posterior mean intensity surfaces on a grid.
    Render(render::RenderArgs),
    /// One-step-ahead predictive surface.
    Predict(predict::PredictArgs),
    /// Inefficiency factors of sampler output.
    Diag(diag::DiagArgs),
    /// Time the Gibbs blocks against K and M.
    Bench(bench::BenchArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use nngcp::Error::*;
    match err.downcast_ref::<nngcp::Error>() {
        Some(RunawayThinning { .. }) => 4,
        Some(
            Factorization(_)
            | DegenerateUpdate { .. }
            | NegativeVariance(_)
            | NumericalFailure { .. },
        ) => 3,
        Some(UndefinedDiagnostic(_)) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Fit(a) => fit::run(a),
        Command::Render(a) => render::run(a),
        Command::Predict(a) => predict::run(a),
        Command::Diag(a) => diag::run(a),
        Command::Bench(a) => bench::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
