use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("cholesky factorization failed: {0}")]
    Factorization(String),

    #[error("degenerate inverse update: conditional variance {variance:e} is not positive")]
    DegenerateUpdate { variance: f64 },

    #[error("conditional variance {0:e} is negative beyond roundoff")]
    NegativeVariance(f64),

    #[error(
        "runaway thinning in slice {slice} (iteration {iteration:?}): {thinned} thinned points \
         exceed the cap of {cap}; birth acceptance rate {acceptance_rate:.3e}"
    )]
    RunawayThinning {
        slice: usize,
        iteration: Option<usize>,
        thinned: usize,
        cap: usize,
        acceptance_rate: f64,
    },

    #[error("numerical failure at iteration {iteration}: {message}{}", dump_note(.dump))]
    NumericalFailure {
        iteration: usize,
        message: String,
        dump: Option<PathBuf>,
    },

    #[error("diagnostic undefined: {0}")]
    UndefinedDiagnostic(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn dump_note(dump: &Option<PathBuf>) -> String {
    match dump {
        Some(p) => format!(" (state dumped to {})", p.display()),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
