pub mod error;
pub mod geometry;
pub mod gp;
pub mod mcmc;
pub mod nngp;
mod par;
pub mod rng;
pub mod simulate;
pub mod special;
pub mod surfaces;

pub use error::{Error, Result};
pub use geometry::{Domain, EventSet, Point};
pub use gp::{CovParams, SpaceTimeCovParams};
