//! Sparse quadtree-tile representations of 2-D spatial densities.
//!
//! A density over a `2^k` by `2^k` grid is stored as a handful of weighted
//! quadtree tiles instead of a dense grid or a mixture model. Fitting runs
//! an l1-penalized regression of a kernel-smoothed histogram onto the
//! over-complete tile dictionary, refits the selected tiles under a
//! non-negativity constraint, thresholds, and normalizes. Because any two
//! tiles are nested or disjoint, the sparse form supports point evaluation
//! in O(log n), region probabilities in O(s), and unions and intersections
//! of many densities directly on the coefficient vectors.
//!
//! Start with [`fit_points`] or [`fit_density`], then query the returned
//! [`SparseDensity`] or combine several with [`union`] and [`intersect`].
//! The `examples/` directory walks through each capability end to end; the
//! `tiledens` binary wraps the same calls for scripted use.

mod density;
mod dict;
mod error;
mod fit;
mod grid;
mod io;
mod sim;
mod smooth;
mod solver;

pub use density::{intersect, intersect_counted, union, FitMeta, SparseDensity, MASS_TOL};
pub use dict::Dictionary;
pub use error::{Error, Result};
pub use fit::{
    cv_select, fit_density, fit_points, hard_threshold, lasso_path, nnls_refit, nnls_refit_on,
    normalize_coeffs, FitConfig, FitResult, PathPoint, PathResult,
};
pub use grid::{
    dictionary_size, embed_points, Bounds, CellRect, Embedding, GridDensity, GridSpec, TileId,
    TileRelation, MAX_DEPTH,
};
pub use io::{export_grid, export_tiles, load, read_density, read_points_csv, save, write_density};
pub use sim::{
    alpha_heuristic, run_experiment, sample_gmm, true_grid_density, ExperimentConfig,
    ExperimentRow, GmmMode, GmmSpec,
};
pub use smooth::{auto_bandwidth, gaussian_kde, KdeConfig};
