//! Multilevel Kriging/BLUP for scattered-data regression and missing-data
//! imputation.
//!
//! The covariance matrix of a Gaussian random field with a polynomial trend
//! is typically ill-conditioned, which makes the BLUP system slow and
//! inaccurate to solve directly. This crate builds sparse orthogonal
//! multilevel operators (W, L) on a kd-tree partition of the observation
//! locations; W spans the orthogonal complement of the trend column space,
//! so the transformed system `W C W^T gamma_W = W Y` is decoupled from the
//! trend, provably no worse conditioned than C, and in practice drastically
//! better. The transformed solve is exact: mapping back with `W^T`
//! reproduces the original BLUP coefficients.
//!
//! Modules follow the pipeline: [`kernels`] evaluates Matérn covariances,
//! [`design`] builds the polynomial trend and [`kdtree`] the spatial
//! partition, [`mlbasis`] constructs W and L, [`solver`] runs the
//! preconditioned conjugate-gradient BLUP solve, [`likelihood`] estimates
//! the covariance parameters on the decoupled objective, [`predict`]
//! evaluates the BLUP and its variance, [`impute`] wraps the tabular
//! missing-data pipeline with baselines and metrics, and [`nsphere`]
//! reproduces the conditioning/efficiency benchmark protocol.

pub mod data;
pub mod design;
pub mod error;
pub mod impute;
pub mod kdtree;
pub mod kernels;
pub mod likelihood;
mod linalg;
pub mod mlbasis;
pub mod model_io;
pub mod nsphere;
mod optim;
mod par;
pub mod predict;
pub mod rng;
pub mod solver;
pub mod sparse;
mod special;

pub use predict::{predict, predict_mse, Prediction};

pub use data::{ObservationSet, Points};
pub use error::{Error, Result};
pub use kernels::{matern, CovarianceModel};
pub use par::{configure_threads, current_threads};
pub use solver::{solve_blup, FittedModel, SolveOptions, SolveReport};

/// Default leaf capacity for the kd-tree under a trend with p columns.
///
/// Leaves must hold at least p points so local complements exist; capping
/// the floor at 2p keeps every W row's support within O(p), which is what
/// bounds nnz(W) + nnz(L) by 4 p N t. In between, 32 amortizes the
/// per-leaf factorization overhead.
pub fn default_leaf_min(p: usize) -> usize {
    p.max(32).min(2 * p).max(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_min_default_respects_bounds() {
        assert_eq!(default_leaf_min(1), 2);
        assert_eq!(default_leaf_min(3), 6);
        assert_eq!(default_leaf_min(16), 32);
        assert_eq!(default_leaf_min(32), 32);
        assert_eq!(default_leaf_min(231), 231);
    }
}
