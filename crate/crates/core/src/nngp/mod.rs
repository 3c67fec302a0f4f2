//! Nearest-neighbor Gaussian processes.
//!
//! Each point of an ordered set is conditioned on at most `M` of its nearest
//! predecessors, which gives the joint a sparse precision
//! `(I − A)ᵀ D⁻¹ (I − A)`. Rows of `A` and `D` are independent small solves and
//! are computed in parallel; results do not depend on the thread count.

mod factor;
mod graph;
mod index;
mod predict;

pub use factor::{
    nngp_factor, nngp_factor_pair, nngp_log_density, nngp_sample_prior, SparseFactor,
};
pub use graph::{
    build_neighbor_graph, build_neighbor_graph_with, lexicographic_order, NeighborGraph,
    NeighborSearch,
};
pub use index::GridIndex;
pub use predict::{conditional_on, nngp_conditional_new, NngpPredictor};
