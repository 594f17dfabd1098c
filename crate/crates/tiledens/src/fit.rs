//! The estimation pipeline: an l1-penalized regression of the smoothed
//! density onto the tile dictionary solved along a regularization path,
//! model selection by cross validation with the one-standard-error rule, a
//! non-negative least squares refit on the selected support, hard
//! thresholding, and normalization.
//!
//! Solutions are certified, not just converged: every path point must pass a
//! full optimality check on a freshly recomputed residual before it is
//! accepted, so downstream consumers can rely on the stationarity conditions
//! holding to working precision.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::density::{FitMeta, SparseDensity};
use crate::dict::Dictionary;
use crate::error::{Error, Result};
use crate::grid::{embed_points, GridDensity, GridSpec, TileId};
use crate::smooth::{gaussian_kde, KdeConfig};
use crate::solver::{solve_path, CdState, SolveOptions};

/// Tuning for the fitting pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    /// Tile-size weighting exponent of the penalized dictionary, in [0, 1].
    pub alpha: f64,
    /// Hard-threshold fraction: coefficients at or below `delta` times the
    /// total coefficient mass are dropped, bounding the support by `1/delta`.
    pub delta: f64,
    /// Number of penalty values on the path.
    pub n_lambda: usize,
    /// Ratio of the smallest to the largest penalty.
    pub lambda_min_ratio: f64,
    /// Cross-validation folds over grid cells.
    pub cv_folds: usize,
    /// Certified solver tolerance, relative: path points are optimal within
    /// `tol * lambda` and a further sweep moves no coefficient by more than
    /// `tol` relative to the largest.
    pub tol: f64,
    /// Cap on coordinate-descent sweeps per penalty value.
    pub max_iter: usize,
    /// Seed for the fold assignment.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            alpha: 0.5,
            delta: 0.001,
            n_lambda: 100,
            lambda_min_ratio: 1e-4,
            cv_folds: 5,
            tol: 1e-7,
            max_iter: 100_000,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn new(alpha: f64, delta: f64) -> Result<FitConfig> {
        let cfg = FitConfig {
            alpha,
            delta,
            ..FitConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Argument(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        if !self.delta.is_finite() || self.delta <= 0.0 || self.delta >= 1.0 {
            return Err(Error::Argument(format!(
                "delta must be in (0, 1), got {}",
                self.delta
            )));
        }
        if self.n_lambda == 0 {
            return Err(Error::Argument("n_lambda must be positive".into()));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio <= 1.0) {
            return Err(Error::Argument(format!(
                "lambda_min_ratio must be in (0, 1], got {}",
                self.lambda_min_ratio
            )));
        }
        if self.cv_folds < 2 {
            return Err(Error::Argument(format!(
                "cross validation needs at least 2 folds, got {}",
                self.cv_folds
            )));
        }
        if !self.tol.is_finite() || self.tol <= 0.0 || self.max_iter == 0 {
            return Err(Error::Argument("tol and max_iter must be positive".into()));
        }
        Ok(())
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            margin_frac: self.tol,
            // coarser sweep tolerance used only to shape the support before
            // the exact refinement step; certification happens at `tol`
            support_tol: (self.tol * 1e4).clamp(self.tol, 1e-2),
            max_iter: self.max_iter,
        }
    }
}

/// One solution on the regularization path.
#[derive(Debug, Clone)]
pub struct PathPoint {
    pub lambda: f64,
    /// Nonzero coefficients at this penalty (signed).
    pub coeffs: BTreeMap<TileId, f64>,
    /// Mean held-out squared error per cell, when cross-validated.
    pub cv_mean: Option<f64>,
    /// Standard error of that mean across folds.
    pub cv_se: Option<f64>,
}

/// A solved path, penalties strictly decreasing.
#[derive(Debug, Clone)]
pub struct PathResult {
    pub points: Vec<PathPoint>,
    /// Index chosen by the one-standard-error rule, when cross-validated.
    pub selected: Option<usize>,
}

impl PathResult {
    pub fn selected_point(&self) -> Option<&PathPoint> {
        self.selected.map(|i| &self.points[i])
    }
}

/// Everything `fit_density` produces: the final density plus the path it was
/// selected from.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub density: SparseDensity,
    pub path: PathResult,
    pub lambda: f64,
}

/// Log-spaced penalty grid from the data's own maximum down to
/// `lambda_min_ratio` of it. The first value solves to exactly zero.
fn lambda_grid(dict: &Dictionary, target: &[f64], cfg: &FitConfig) -> Result<Vec<f64>> {
    let lambda_max = CdState::new(dict, target, None).max_target_correlation();
    if !lambda_max.is_finite() || lambda_max <= 0.0 {
        return Err(Error::Degenerate("target has no signal to fit".into()));
    }
    if cfg.n_lambda == 1 {
        return Ok(vec![lambda_max]);
    }
    let step = cfg.lambda_min_ratio.ln() / (cfg.n_lambda - 1) as f64;
    Ok((0..cfg.n_lambda)
        .map(|i| lambda_max * (step * i as f64).exp())
        .collect())
}

fn check_target(z: &GridDensity) -> Result<()> {
    if !z.is_normalized(1e-6) {
        return Err(Error::Argument(format!(
            "fit target must be a normalized density, sum is {}",
            z.sum()
        )));
    }
    Ok(())
}

/// Solve the l1 path on the full grid without cross validation.
pub fn lasso_path(z: &GridDensity, cfg: &FitConfig) -> Result<PathResult> {
    cfg.validate()?;
    check_target(z)?;
    let dict = Dictionary::new(z.spec().k(), cfg.alpha)?;
    let lambdas = lambda_grid(&dict, z.values(), cfg)?;
    let mut points = Vec::with_capacity(lambdas.len());
    solve_path(
        &dict,
        z.values(),
        None,
        &lambdas,
        cfg.solve_options(),
        |li, state| {
            points.push(PathPoint {
                lambda: lambdas[li],
                coeffs: state.sparse_coeffs(),
                cv_mean: None,
                cv_se: None,
            });
        },
    )?;
    Ok(PathResult {
        points,
        selected: None,
    })
}

/// Cross-validate the path over grid cells and pick the largest penalty
/// whose mean held-out error is within one standard error of the minimum.
/// Returns the chosen penalty and the full-data path with CV statistics.
pub fn cv_select(z: &GridDensity, cfg: &FitConfig) -> Result<(f64, PathResult)> {
    cfg.validate()?;
    check_target(z)?;
    let dict = Dictionary::new(z.spec().k(), cfg.alpha)?;
    let target = z.values();
    let n = target.len();
    let folds = cfg.cv_folds.min(n);
    let lambdas = lambda_grid(&dict, target, cfg)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut fold_of = vec![0usize; n];
    for (pos, &cell) in order.iter().enumerate() {
        fold_of[cell] = pos % folds;
    }

    let fold_errors: Vec<Vec<f64>> = (0..folds)
        .into_par_iter()
        .map(|fold| {
            let mask: Vec<bool> = fold_of.iter().map(|&f| f != fold).collect();
            let held: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
            let mut errs = vec![0.0; lambdas.len()];
            solve_path(
                &dict,
                target,
                Some(&mask),
                &lambdas,
                cfg.solve_options(),
                |li, state| {
                    let sse: f64 = held
                        .iter()
                        .map(|&i| state.residual[i] * state.residual[i])
                        .sum();
                    errs[li] = sse / held.len().max(1) as f64;
                },
            )?;
            Ok(errs)
        })
        .collect::<Result<_>>()?;

    let mut cv_mean = vec![0.0; lambdas.len()];
    let mut cv_se = vec![0.0; lambdas.len()];
    for (li, (mean_slot, se_slot)) in cv_mean.iter_mut().zip(&mut cv_se).enumerate() {
        let mean = fold_errors.iter().map(|e| e[li]).sum::<f64>() / folds as f64;
        let var = fold_errors
            .iter()
            .map(|e| (e[li] - mean) * (e[li] - mean))
            .sum::<f64>()
            / (folds - 1).max(1) as f64;
        *mean_slot = mean;
        *se_slot = (var / folds as f64).sqrt();
    }
    let best = cv_mean
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let cutoff = cv_mean[best] + cv_se[best];
    let selected = cv_mean.iter().position(|&m| m <= cutoff).unwrap_or(best);

    let mut points = Vec::with_capacity(lambdas.len());
    solve_path(
        &dict,
        target,
        None,
        &lambdas,
        cfg.solve_options(),
        |li, state| {
            points.push(PathPoint {
                lambda: lambdas[li],
                coeffs: state.sparse_coeffs(),
                cv_mean: Some(cv_mean[li]),
                cv_se: Some(cv_se[li]),
            });
        },
    )?;
    Ok((
        lambdas[selected],
        PathResult {
            points,
            selected: Some(selected),
        },
    ))
}

/// Stationarity tolerance certified by the NNLS refit.
const NNLS_TOL: f64 = 5e-9;

/// Non-negative least squares against the uniform-density dictionary,
/// restricted to the given support. Projected coordinate descent shapes the
/// positive set and an exact restricted solve certifies stationarity:
/// positive coefficients end with (near-)zero gradient, zero coefficients
/// with a non-negative one.
pub fn nnls_refit(z: &GridDensity, support: &[TileId]) -> Result<BTreeMap<TileId, f64>> {
    nnls_refit_on(z, support, None)
}

/// [`nnls_refit`] with an optional cell mask, for refitting on held-out data.
pub fn nnls_refit_on(
    z: &GridDensity,
    support: &[TileId],
    mask: Option<&[bool]>,
) -> Result<BTreeMap<TileId, f64>> {
    if support.is_empty() {
        return Err(Error::Argument("refit support must be non-empty".into()));
    }
    let dict = Dictionary::new(z.spec().k(), 1.0)?;
    let mut state = CdState::new(&dict, z.values(), mask);
    let mut indices = Vec::with_capacity(support.len());
    for tile in support {
        let idx = dict.tile_index(tile)?;
        state.activate(idx);
        indices.push(idx);
    }
    indices.sort_unstable();
    indices.dedup();

    let max_sweeps = 100_000usize;
    let mut sweeps = 0usize;
    loop {
        loop {
            let scale = state.coef_scale();
            let change = state.sweep_nonneg();
            sweeps += 1;
            if sweeps > max_sweeps {
                return Err(Error::Solver(format!(
                    "non-negative refit exceeded {max_sweeps} sweeps on a support of {}",
                    indices.len()
                )));
            }
            if change <= 1e-4 * scale {
                break;
            }
        }
        state.polish(0.0);
        if state.nonneg_violation() <= NNLS_TOL {
            break;
        }
    }
    Ok(state.coeffs_for(&indices))
}

/// Zero every coefficient whose magnitude is at most `delta` times the total
/// coefficient magnitude. The result has fewer than `1/delta` entries.
pub fn hard_threshold(coeffs: &BTreeMap<TileId, f64>, delta: f64) -> BTreeMap<TileId, f64> {
    let total: f64 = coeffs.values().map(|c| c.abs()).sum();
    coeffs
        .iter()
        .filter(|(_, &c)| c.abs() > delta * total && c != 0.0)
        .map(|(t, &c)| (*t, c))
        .collect()
}

/// Scale the coefficients to sum to 1, which makes the projected grid mass
/// exactly 1. Fails when the net mass is zero or negative. Inputs already
/// normalized up to summation round-off pass through untouched, so the
/// operation is idempotent and a self-union reproduces its input bit for
/// bit.
pub fn normalize_coeffs(coeffs: &BTreeMap<TileId, f64>) -> Result<BTreeMap<TileId, f64>> {
    let total: f64 = coeffs.values().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::Degenerate(format!(
            "cannot normalize coefficients with total mass {total}"
        )));
    }
    if (total - 1.0).abs() <= 1e-12 {
        return Ok(coeffs.clone());
    }
    Ok(coeffs.iter().map(|(t, &c)| (*t, c / total)).collect())
}

/// The full pipeline on a smoothed density: cross-validated path, refit on
/// the selected support, threshold, normalize.
pub fn fit_density(z: &GridDensity, cfg: &FitConfig) -> Result<FitResult> {
    let (lambda, path) = cv_select(z, cfg)?;
    let support: Vec<TileId> = path
        .selected_point()
        .map(|p| p.coeffs.keys().copied().collect())
        .unwrap_or_default();
    if support.is_empty() {
        return Err(Error::Degenerate(
            "the selected model is empty; the target may be pure noise".into(),
        ));
    }
    let refit = nnls_refit(z, &support)?;
    let coeffs = normalize_coeffs(&hard_threshold(&refit, cfg.delta))?;
    let meta = FitMeta {
        alpha: cfg.alpha,
        delta: cfg.delta,
        lambda,
    };
    let density = SparseDensity::new(*z.spec(), coeffs, Some(meta))?;
    Ok(FitResult {
        density,
        path,
        lambda,
    })
}

/// Fit raw observations: embed to a histogram, smooth, then [`fit_density`].
pub fn fit_points(
    points: &[(f64, f64)],
    spec: &GridSpec,
    kde: &KdeConfig,
    cfg: &FitConfig,
) -> Result<FitResult> {
    let embedding = embed_points(points, spec)?;
    let (sx, sy) = point_spreads_in_cells(points, spec);
    let (bx, by) = kde.resolve(embedding.retained.max(2), sx, sy)?;
    let z = gaussian_kde(&embedding.density, bx, by)?;
    fit_density(&z, cfg)
}

/// Sample standard deviations of the in-bounds points, in cell units.
pub(crate) fn point_spreads_in_cells(points: &[(f64, f64)], spec: &GridSpec) -> (f64, f64) {
    let b = spec.bounds();
    let side = spec.side() as f64;
    let inside: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| spec.cell_of_point(*x, *y).is_some())
        .map(|&(x, y)| {
            (
                (x - b.x_min) / (b.x_max - b.x_min) * side,
                (y - b.y_min) / (b.y_max - b.y_min) * side,
            )
        })
        .collect();
    if inside.len() < 2 {
        return (0.0, 0.0);
    }
    let n = inside.len() as f64;
    let (mx, my) = inside
        .iter()
        .fold((0.0, 0.0), |(ax, ay), &(x, y)| (ax + x / n, ay + y / n));
    let (vx, vy) = inside.iter().fold((0.0, 0.0), |(ax, ay), &(x, y)| {
        (
            ax + (x - mx) * (x - mx) / (n - 1.0),
            ay + (y - my) * (y - my) / (n - 1.0),
        )
    });
    (vx.sqrt(), vy.sqrt())
}
