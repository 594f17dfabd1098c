//! Gaussian-mixture simulation and the benchmark harness.
//!
//! Provides seeded sampling from a bivariate Gaussian mixture, the exact
//! mixture density discretized to a grid (the total-variation reference),
//! and an experiment runner that sweeps grid depths and weighting exponents
//! recording fit quality and model size per cell.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::{fit_density, FitConfig};
use crate::grid::{embed_points, Bounds, GridDensity, GridSpec};
use crate::smooth::{gaussian_kde, KdeConfig};

/// One bivariate Gaussian component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmMode {
    pub mean_x: f64,
    pub mean_y: f64,
    pub sd_x: f64,
    pub sd_y: f64,
    pub corr: f64,
    pub weight: f64,
}

/// A Gaussian mixture with a sampling seed.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmSpec {
    pub modes: Vec<GmmMode>,
    pub seed: u64,
}

impl GmmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::Argument("mixture needs at least one mode".into()));
        }
        let mut total = 0.0;
        for m in &self.modes {
            let sd_ok = |sd: f64| sd.is_finite() && sd > 0.0;
            if !sd_ok(m.sd_x) || !sd_ok(m.sd_y) {
                return Err(Error::Argument(
                    "mode standard deviations must be positive".into(),
                ));
            }
            if m.corr.abs() >= 1.0 {
                return Err(Error::Argument(
                    "mode correlation must be in (-1, 1)".into(),
                ));
            }
            if !m.weight.is_finite() || m.weight <= 0.0 {
                return Err(Error::Argument("mode weights must be positive".into()));
            }
            total += m.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(format!(
                "mode weights must sum to 1, got {total}"
            )));
        }
        Ok(())
    }

    /// The committed six-mode benchmark mixture over the unit square:
    /// modes of varied scale, orientation, and weight.
    pub fn six_mode_fixture(seed: u64) -> GmmSpec {
        let m = |mean_x, mean_y, sd_x, sd_y, corr, weight| GmmMode {
            mean_x,
            mean_y,
            sd_x,
            sd_y,
            corr,
            weight,
        };
        GmmSpec {
            modes: vec![
                m(0.22, 0.28, 0.060, 0.050, 0.30, 0.22),
                m(0.70, 0.25, 0.100, 0.080, -0.20, 0.20),
                m(0.45, 0.55, 0.040, 0.045, 0.00, 0.17),
                m(0.25, 0.75, 0.080, 0.120, 0.40, 0.15),
                m(0.78, 0.70, 0.050, 0.040, 0.00, 0.16),
                m(0.55, 0.85, 0.150, 0.060, -0.30, 0.10),
            ],
            seed,
        }
    }

    /// Mixture density at a point.
    pub fn pdf(&self, x: f64, y: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let dx = (x - m.mean_x) / m.sd_x;
                let dy = (y - m.mean_y) / m.sd_y;
                let r2 = 1.0 - m.corr * m.corr;
                let q = (dx * dx - 2.0 * m.corr * dx * dy + dy * dy) / r2;
                let norm = 2.0 * std::f64::consts::PI * m.sd_x * m.sd_y * r2.sqrt();
                m.weight * (-0.5 * q).exp() / norm
            })
            .sum()
    }
}

/// Draw `n` reproducible points: pick a mode by weight, then a correlated
/// bivariate normal.
pub fn sample_gmm(spec: &GmmSpec, n: usize) -> Result<Vec<(f64, f64)>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Argument("sample size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pick: f64 = rng.gen();
        let mut mode = &spec.modes[spec.modes.len() - 1];
        for m in &spec.modes {
            if pick < m.weight {
                mode = m;
                break;
            }
            pick -= m.weight;
        }
        let u: f64 = rng.sample(StandardNormal);
        let v: f64 = rng.sample(StandardNormal);
        let x = mode.mean_x + mode.sd_x * u;
        let y =
            mode.mean_y + mode.sd_y * (mode.corr * u + (1.0 - mode.corr * mode.corr).sqrt() * v);
        out.push((x, y));
    }
    Ok(out)
}

/// Exact mixture density discretized per cell and renormalized over the
/// grid; the total-variation reference. Cells are integrated by midpoint
/// evaluation on an 8x8 subdivision (plain midpoint is too coarse at
/// shallow depths, where cells are wide relative to the mixture scales).
pub fn true_grid_density(spec: &GmmSpec, grid: &GridSpec) -> Result<GridDensity> {
    spec.validate()?;
    let b = grid.bounds();
    let side = grid.side() as usize;
    let sub = if grid.k() <= 7 { 8usize } else { 1 };
    let w = (b.x_max - b.x_min) / (side * sub) as f64;
    let h = (b.y_max - b.y_min) / (side * sub) as f64;
    let mut values = vec![0.0; grid.cell_count()];
    for row in 0..side * sub {
        let cy = b.y_min + (row as f64 + 0.5) * h;
        for col in 0..side * sub {
            let cx = b.x_min + (col as f64 + 0.5) * w;
            values[(row / sub) * side + col / sub] += spec.pdf(cx, cy);
        }
    }
    let total: f64 = values.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::Degenerate("mixture has no mass on the grid".into()));
    }
    values.iter_mut().for_each(|v| *v /= total);
    GridDensity::new(*grid, values)
}

/// Sweep settings for [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n_points: usize,
    pub k_list: Vec<u8>,
    pub alpha_list: Vec<f64>,
    pub delta: f64,
    pub bounds: Bounds,
    pub kde: KdeConfig,
    /// Seed for the cross-validation fold assignment.
    pub fit_seed: u64,
}

impl ExperimentConfig {
    pub fn new(n_points: usize, k_list: Vec<u8>, alpha_list: Vec<f64>) -> Result<ExperimentConfig> {
        if n_points == 0 || k_list.is_empty() || alpha_list.is_empty() {
            return Err(Error::Argument(
                "experiment needs points, at least one depth, and at least one alpha".into(),
            ));
        }
        Ok(ExperimentConfig {
            n_points,
            k_list,
            alpha_list,
            delta: 0.001,
            bounds: Bounds::new(0.0, 1.0, 0.0, 1.0)?,
            kde: KdeConfig::auto(),
            fit_seed: 0,
        })
    }
}

/// One experiment cell: fit quality and size at a depth/exponent pair.
/// `tv_hist` is the raw-histogram baseline on the same grid. A cell whose
/// selection collapses to the empty model records `nnz = 0` and a NaN `tv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentRow {
    pub k: u8,
    pub alpha: f64,
    pub tv: f64,
    pub nnz: usize,
    pub tv_hist: f64,
}

/// Fit one seeded sample at every `(k, alpha)` pair. Cells run in parallel;
/// the output is ordered by `k_list` then `alpha_list`.
pub fn run_experiment(gmm: &GmmSpec, cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    let points = sample_gmm(gmm, cfg.n_points)?;

    struct Prepared {
        k: u8,
        smoothed: GridDensity,
        truth: GridDensity,
        tv_hist: f64,
    }
    let mut prepared = Vec::with_capacity(cfg.k_list.len());
    for &k in &cfg.k_list {
        let grid = GridSpec::new(k, cfg.bounds)?;
        let embedding = embed_points(&points, &grid)?;
        let truth = true_grid_density(gmm, &grid)?;
        let tv_hist = embedding.density.tv_distance(&truth)?;
        let spreads = sample_spreads(&points, &grid);
        let (bx, by) = cfg.kde.resolve(embedding.retained, spreads.0, spreads.1)?;
        let smoothed = gaussian_kde(&embedding.density, bx, by)?;
        prepared.push(Prepared {
            k,
            smoothed,
            truth,
            tv_hist,
        });
    }

    let cells: Vec<(usize, f64)> = (0..prepared.len())
        .flat_map(|pi| cfg.alpha_list.iter().map(move |&a| (pi, a)))
        .collect();
    cells
        .par_iter()
        .map(|&(pi, alpha)| {
            let p = &prepared[pi];
            let fit_cfg = FitConfig {
                alpha,
                delta: cfg.delta,
                seed: cfg.fit_seed,
                ..FitConfig::default()
            };
            match fit_density(&p.smoothed, &fit_cfg) {
                Ok(fit) => Ok(ExperimentRow {
                    k: p.k,
                    alpha,
                    tv: fit.density.tv_distance(&p.truth)?,
                    nnz: fit.density.nnz(),
                    tv_hist: p.tv_hist,
                }),
                Err(Error::Degenerate(_)) => Ok(ExperimentRow {
                    k: p.k,
                    alpha,
                    tv: f64::NAN,
                    nnz: 0,
                    tv_hist: p.tv_hist,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

fn sample_spreads(points: &[(f64, f64)], grid: &GridSpec) -> (f64, f64) {
    let b = grid.bounds();
    let side = grid.side() as f64;
    let inside: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| grid.cell_of_point(*x, *y).is_some())
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

/// For each depth, the exponent that maximizes the model size (ties go to
/// the smaller exponent). Useful because model size is observable without
/// the generating truth, and the size-maximizing exponent tracks the best
/// fit quality.
pub fn alpha_heuristic(rows: &[ExperimentRow]) -> Vec<(u8, f64)> {
    let mut ks: Vec<u8> = Vec::new();
    for r in rows {
        if !ks.contains(&r.k) {
            ks.push(r.k);
        }
    }
    ks.into_iter()
        .map(|k| {
            let mut best: Option<&ExperimentRow> = None;
            for r in rows.iter().filter(|r| r.k == k) {
                best = match best {
                    Some(b) if r.nnz > b.nnz || (r.nnz == b.nnz && r.alpha < b.alpha) => Some(r),
                    None => Some(r),
                    keep => keep,
                };
            }
            (k, best.unwrap().alpha)
        })
        .collect()
}
