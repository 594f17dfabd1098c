//! Coordinate-descent engine for penalized regressions on the tile
//! dictionary, with an exact restricted-system refinement.
//!
//! Cyclic coordinate descent identifies the support and handles warm starts
//! cheaply, but the dictionary's nested columns are correlated enough that
//! plain sweeps converge slowly near the optimum. The refinement exploits
//! the quadtree: on any support, two columns interact only when their tiles
//! nest, so each tile's in-support ancestors form a chain. Eliminating tiles
//! deepest-first therefore factors the restricted Gram matrix with no
//! fill-in, and the equality-constrained solution comes out of one
//! O(support * depth^2) Cholesky pass. Sign crossings are handled by
//! stepping to the first flip and dropping that coordinate, as in standard
//! active-set methods.

use crate::dict::Dictionary;
use crate::error::{Error, Result};
use crate::grid::TileId;
use std::collections::BTreeMap;

/// Geometry and step size of one active column.
#[derive(Debug, Clone, Copy)]
struct ActiveTile {
    idx: usize,
    c0: usize,
    r0: usize,
    span: usize,
    weight: f64,
    sq_norm: f64,
}

/// Working state of a single penalized regression (one data mask).
pub(crate) struct CdState<'a> {
    dict: &'a Dictionary,
    side: usize,
    target: &'a [f64],
    /// None fits all cells; Some(mask) restricts the loss to `mask[i]` cells.
    mask: Option<&'a [bool]>,
    /// In-mask cell count per tile.
    counts: Vec<f64>,
    /// `weight^2 * counts` per tile; zero for tiles with no data.
    sq_norms: Vec<f64>,
    /// Correlation of every column with the in-mask target.
    target_corr: Vec<f64>,
    coef: Vec<f64>,
    /// `target - D coef`, maintained on all cells (held-out ones included,
    /// so fold errors can be read off directly).
    pub(crate) residual: Vec<f64>,
    active: Vec<ActiveTile>,
    in_active: Vec<bool>,
    scratch_masked: Vec<f64>,
    scratch_sums: Vec<f64>,
}

fn soft(value: f64, threshold: f64) -> f64 {
    if value > threshold {
        value - threshold
    } else if value < -threshold {
        value + threshold
    } else {
        0.0
    }
}

impl<'a> CdState<'a> {
    pub(crate) fn new(
        dict: &'a Dictionary,
        target: &'a [f64],
        mask: Option<&'a [bool]>,
    ) -> CdState<'a> {
        let side = 1usize << dict.k();
        let d = dict.size();
        let counts_leaf: Vec<f64> = match mask {
            None => vec![1.0; target.len()],
            Some(m) => m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        };
        let counts = dict.tile_sums(&counts_leaf);
        let mut sq_norms = vec![0.0; d];
        let mut idx = 0usize;
        for zoom in 0..=dict.k() {
            let w = dict.weight(&TileId::new(zoom, 0, 0).unwrap()).unwrap();
            let len = 1usize << (2 * zoom as usize);
            for i in idx..idx + len {
                sq_norms[i] = w * w * counts[i];
            }
            idx += len;
        }
        let mut state = CdState {
            dict,
            side,
            target,
            mask,
            counts,
            sq_norms,
            target_corr: Vec::new(),
            coef: vec![0.0; d],
            residual: target.to_vec(),
            active: Vec::new(),
            in_active: vec![false; d],
            scratch_masked: vec![0.0; target.len()],
            scratch_sums: vec![0.0; d],
        };
        state.compute_correlations();
        state.target_corr = state.scratch_sums.clone();
        state
    }

    pub(crate) fn activate(&mut self, idx: usize) {
        if self.in_active[idx] {
            return;
        }
        let tile = self.dict.tile_at(idx).unwrap();
        let span = 1usize << (self.dict.k() - tile.zoom());
        self.active.push(ActiveTile {
            idx,
            c0: tile.x() as usize * span,
            r0: tile.y() as usize * span,
            span,
            weight: self.dict.weight(&tile).unwrap(),
            sq_norm: self.sq_norms[idx],
        });
        self.in_active[idx] = true;
    }

    /// Sum of the residual over a tile block, restricted to in-mask cells.
    fn masked_block_sum(&self, t: &ActiveTile) -> f64 {
        let mut total = 0.0;
        match self.mask {
            None => {
                for row in t.r0..t.r0 + t.span {
                    let base = row * self.side + t.c0;
                    total += self.residual[base..base + t.span].iter().sum::<f64>();
                }
            }
            Some(mask) => {
                for row in t.r0..t.r0 + t.span {
                    let base = row * self.side + t.c0;
                    let values = &self.residual[base..base + t.span];
                    for (v, &keep) in values.iter().zip(&mask[base..base + t.span]) {
                        if keep {
                            total += v;
                        }
                    }
                }
            }
        }
        total
    }

    fn add_block(&mut self, t: &ActiveTile, amount: f64) {
        for row in t.r0..t.r0 + t.span {
            let base = row * self.side + t.c0;
            for v in &mut self.residual[base..base + t.span] {
                *v += amount;
            }
        }
    }

    /// One cycle of exact coordinate minimizations over the active set;
    /// returns the largest absolute coefficient change.
    pub(crate) fn sweep(&mut self, lambda: f64) -> f64 {
        let mut max_change = 0.0f64;
        for ai in 0..self.active.len() {
            let t = self.active[ai];
            let old = self.coef[t.idx];
            let new = if t.sq_norm == 0.0 {
                // no in-mask cells: the penalty zeroes the coefficient
                0.0
            } else {
                let corr = t.weight * self.masked_block_sum(&t);
                soft(corr + t.sq_norm * old, lambda) / t.sq_norm
            };
            if new != old {
                self.add_block(&t, (old - new) * t.weight);
                self.coef[t.idx] = new;
            }
            max_change = max_change.max((new - old).abs());
        }
        max_change
    }

    /// One cycle of projected (non-negative) coordinate minimizations.
    pub(crate) fn sweep_nonneg(&mut self) -> f64 {
        let mut max_change = 0.0f64;
        for ai in 0..self.active.len() {
            let t = self.active[ai];
            let old = self.coef[t.idx];
            let new = if t.sq_norm == 0.0 {
                0.0
            } else {
                let corr = t.weight * self.masked_block_sum(&t);
                (old + corr / t.sq_norm).max(0.0)
            };
            if new != old {
                self.add_block(&t, (old - new) * t.weight);
                self.coef[t.idx] = new;
            }
            max_change = max_change.max((new - old).abs());
        }
        max_change
    }

    pub(crate) fn coef_scale(&self) -> f64 {
        self.active
            .iter()
            .map(|t| self.coef[t.idx].abs())
            .fold(1.0f64, f64::max)
    }

    /// Rebuild the residual from scratch, clearing incremental round-off.
    pub(crate) fn refresh_residual(&mut self) {
        self.residual.copy_from_slice(self.target);
        for ai in 0..self.active.len() {
            let t = self.active[ai];
            let c = self.coef[t.idx];
            if c != 0.0 {
                self.add_block(&t, -c * t.weight);
            }
        }
    }

    /// Fill `scratch_sums` with the gradient correlation of every column
    /// against the in-mask residual.
    fn compute_correlations(&mut self) {
        let sums = match self.mask {
            None => self.dict.tile_sums(&self.residual),
            Some(mask) => {
                for (dst, (src, &m)) in self
                    .scratch_masked
                    .iter_mut()
                    .zip(self.residual.iter().zip(mask))
                {
                    *dst = if m { *src } else { 0.0 };
                }
                self.dict.tile_sums(&self.scratch_masked)
            }
        };
        self.scratch_sums = sums;
        let mut idx = 0usize;
        for zoom in 0..=self.dict.k() {
            let w = self.dict.weight(&TileId::new(zoom, 0, 0).unwrap()).unwrap();
            let level = 1usize << (2 * zoom as usize);
            if w != 1.0 {
                for v in &mut self.scratch_sums[idx..idx + level] {
                    *v *= w;
                }
            }
            idx += level;
        }
    }

    /// Largest correlation magnitude at the zero solution.
    pub(crate) fn max_target_correlation(&self) -> f64 {
        self.target_corr.iter().fold(0.0f64, |m, &c| m.max(c.abs()))
    }

    /// Largest optimality violation plus any inactive columns violating by
    /// more than `margin`. Certifies on a freshly rebuilt residual.
    pub(crate) fn kkt_check(&mut self, lambda: f64, margin: f64) -> (f64, Vec<usize>) {
        self.refresh_residual();
        self.compute_correlations();
        let mut worst = 0.0f64;
        let mut newly = Vec::new();
        for (idx, &corr) in self.scratch_sums.iter().enumerate() {
            let b = self.coef[idx];
            let viol = if b == 0.0 {
                corr.abs() - lambda
            } else {
                (corr - lambda * b.signum()).abs()
            };
            if viol > worst {
                worst = viol;
            }
            if viol > margin && !self.in_active[idx] {
                newly.push(idx);
            }
        }
        (worst, newly)
    }

    /// Stationarity violation of the current non-negative solution over the
    /// active set, on a freshly rebuilt residual.
    pub(crate) fn nonneg_violation(&mut self) -> f64 {
        self.refresh_residual();
        let mut worst = 0.0f64;
        for ai in 0..self.active.len() {
            let t = self.active[ai];
            if t.sq_norm == 0.0 {
                continue;
            }
            let corr = t.weight * self.masked_block_sum(&t);
            let viol = if self.coef[t.idx] > 0.0 {
                corr.abs()
            } else {
                corr.max(0.0)
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Solve the problem restricted to the current support and its sign
    /// pattern exactly, stepping back to the first sign crossing and
    /// dropping that coordinate when the pattern proves wrong. Leaves the
    /// residual stale; callers refresh before reading it.
    pub(crate) fn polish(&mut self, lambda: f64) {
        loop {
            let mut items: Vec<((u64, u8), usize)> = self
                .active
                .iter()
                .filter(|t| self.coef[t.idx] != 0.0 && t.sq_norm > 0.0)
                .map(|t| {
                    (
                        self.dict
                            .tile_at(t.idx)
                            .unwrap()
                            .traversal_key(self.dict.k()),
                        t.idx,
                    )
                })
                .collect();
            if items.is_empty() {
                return;
            }
            items.sort_unstable();
            let support: Vec<usize> = items.iter().map(|&(_, idx)| idx).collect();
            let signs: Vec<f64> = support.iter().map(|&idx| self.coef[idx].signum()).collect();
            let rhs: Vec<f64> = support
                .iter()
                .zip(&signs)
                .map(|(&idx, &s)| self.target_corr[idx] - lambda * s)
                .collect();

            let solution = chain_solve(self.dict, &self.counts, &support, rhs);
            let mut gamma = 1.0f64;
            let mut crossing = None;
            for (i, ((&idx, &s), &b)) in support.iter().zip(&signs).zip(&solution).enumerate() {
                if b * s <= 0.0 {
                    let cur = self.coef[idx];
                    let step = (cur / (cur - b)).clamp(0.0, 1.0);
                    if crossing.is_none() || step < gamma {
                        gamma = step;
                        crossing = Some(i);
                    }
                }
            }
            let Some(crossing) = crossing else {
                for (&idx, &b) in support.iter().zip(&solution) {
                    self.coef[idx] = b;
                }
                return;
            };
            for ((&idx, &s), &b) in support.iter().zip(&signs).zip(&solution) {
                let cur = self.coef[idx];
                let stepped = cur + gamma * (b - cur);
                self.coef[idx] = if stepped * s <= 0.0 { 0.0 } else { stepped };
            }
            // guarantee progress: the crossing coordinate leaves the
            // support even when round-off keeps it epsilon-positive
            self.coef[support[crossing]] = 0.0;
        }
    }

    pub(crate) fn sparse_coeffs(&self) -> BTreeMap<TileId, f64> {
        let mut out = BTreeMap::new();
        for t in &self.active {
            let c = self.coef[t.idx];
            if c != 0.0 {
                out.insert(self.dict.tile_at(t.idx).unwrap(), c);
            }
        }
        out
    }

    pub(crate) fn coeffs_for(&self, tiles: &[usize]) -> BTreeMap<TileId, f64> {
        tiles
            .iter()
            .map(|&idx| (self.dict.tile_at(idx).unwrap(), self.coef[idx]))
            .collect()
    }

    /// Drop zero coefficients from the active set to keep sweeps cheap.
    pub(crate) fn prune(&mut self) {
        let coef = &self.coef;
        let in_active = &mut self.in_active;
        self.active.retain(|t| {
            if coef[t.idx] != 0.0 {
                true
            } else {
                in_active[t.idx] = false;
                false
            }
        });
    }
}

/// Solve `G b = rhs` where `G` is the dictionary Gram matrix restricted to
/// `support` (tile indices sorted ancestors-first in traversal order) under
/// the in-mask cell counts. Nested tiles are the only interacting pairs, so
/// elimination deepest-first produces no fill-in and the factorization holds
/// at most one entry per (tile, in-support ancestor) pair.
///
/// Numerically dependent columns (a tile whose indicator is spanned by the
/// rest of the support, e.g. a parent with all four children present) get
/// their pivot skipped and solve to exactly zero; the spanning columns take
/// over their role, so the result still minimizes the restricted quadratic.
fn chain_solve(dict: &Dictionary, counts: &[f64], support: &[usize], rhs: Vec<f64>) -> Vec<f64> {
    let m = support.len();
    let tiles: Vec<TileId> = support
        .iter()
        .map(|&idx| dict.tile_at(idx).unwrap())
        .collect();
    let weights: Vec<f64> = tiles.iter().map(|t| dict.weight(t).unwrap()).collect();
    let cells: Vec<f64> = support.iter().map(|&idx| counts[idx]).collect();

    // strict in-support ancestors per node, nearest first
    let mut chains: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut stack: Vec<u32> = Vec::new();
    for (pos, tile) in tiles.iter().enumerate() {
        while let Some(&top) = stack.last() {
            if tiles[top as usize].contains(tile) {
                break;
            }
            stack.pop();
        }
        chains[pos] = stack.iter().rev().copied().collect();
        stack.push(pos as u32);
    }

    // initial matrix: diag = w^2 * cells(t); A[t, ancestor] = w_t w_a cells(t)
    let mut diag: Vec<f64> = (0..m).map(|p| weights[p] * weights[p] * cells[p]).collect();
    let mut offdiag: Vec<Vec<f64>> = (0..m)
        .map(|p| {
            chains[p]
                .iter()
                .map(|&a| weights[p] * weights[a as usize] * cells[p])
                .collect()
        })
        .collect();
    let diag0 = diag.clone();
    let mut skipped = vec![false; m];

    // factor deepest-first (reverse traversal order)
    for pos in (0..m).rev() {
        let chain = std::mem::take(&mut chains[pos]);
        let mut column = std::mem::take(&mut offdiag[pos]);
        let floor = 1e-12 * diag0[pos].max(f64::MIN_POSITIVE);
        if diag[pos] <= floor || diag[pos].is_nan() {
            skipped[pos] = true;
            diag[pos] = 1.0;
            column.iter_mut().for_each(|v| *v = 0.0);
        } else {
            let d = diag[pos].sqrt();
            diag[pos] = d;
            for v in column.iter_mut() {
                *v /= d;
            }
            for p in 0..chain.len() {
                let up = chain[p] as usize;
                diag[up] -= column[p] * column[p];
                for q in p + 1..chain.len() {
                    // ancestors of a node are ancestors of each other in
                    // chain order, so the update lands at offset q - p - 1
                    offdiag[up][q - p - 1] -= column[p] * column[q];
                }
            }
        }
        chains[pos] = chain;
        offdiag[pos] = column;
    }

    let solve_factored = |mut v: Vec<f64>| -> Vec<f64> {
        // forward: L y = v, in elimination order
        for pos in (0..m).rev() {
            if skipped[pos] {
                v[pos] = 0.0;
                continue;
            }
            let y = v[pos] / diag[pos];
            v[pos] = y;
            for (p, &up) in chains[pos].iter().enumerate() {
                v[up as usize] -= offdiag[pos][p] * y;
            }
        }
        // back: L^T b = y, in traversal order (ancestors first)
        for pos in 0..m {
            if skipped[pos] {
                v[pos] = 0.0;
                continue;
            }
            let mut acc = v[pos];
            for (p, &up) in chains[pos].iter().enumerate() {
                acc -= offdiag[pos][p] * v[up as usize];
            }
            v[pos] = acc / diag[pos];
        }
        v
    };
    let gram_residual = |b: &[f64]| -> Vec<f64> {
        let mut r = rhs.clone();
        for pos in 0..m {
            r[pos] -= diag0[pos] * b[pos];
            for &up in &chains[pos] {
                let g = weights[pos] * weights[up as usize] * cells[pos];
                r[pos] -= g * b[up as usize];
                r[up as usize] -= g * b[pos];
            }
        }
        r
    };

    // tight supports get ill-conditioned; two rounds of iterative
    // refinement hold the solve residual at machine level anyway
    let mut solution = solve_factored(rhs.clone());
    for _ in 0..2 {
        let correction = solve_factored(gram_residual(&solution));
        for (b, e) in solution.iter_mut().zip(correction) {
            *b += e;
        }
    }
    solution
}

/// Stopping rules for a path solve.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SolveOptions {
    /// Certify each point to this fraction of its penalty.
    pub margin_frac: f64,
    /// Sweep tolerance for shaping the support before refinement.
    pub support_tol: f64,
    /// Sweep cap per penalty.
    pub max_iter: usize,
}

/// Shared driver: fit every penalty in `lambdas` on one mask, certifying
/// each solution before `on_point` sees it. Warm-started across penalties.
pub(crate) fn solve_path<F>(
    dict: &Dictionary,
    target: &[f64],
    mask: Option<&[bool]>,
    lambdas: &[f64],
    opts: SolveOptions,
    mut on_point: F,
) -> Result<()>
where
    F: FnMut(usize, &CdState),
{
    let mut state = CdState::new(dict, target, mask);
    for (li, &lambda) in lambdas.iter().enumerate() {
        let margin = opts.margin_frac * lambda;
        let mut tol = opts.support_tol;
        let mut sweeps = 0usize;
        loop {
            loop {
                let scale = state.coef_scale();
                let change = state.sweep(lambda);
                sweeps += 1;
                if sweeps > opts.max_iter {
                    return Err(Error::Solver(format!(
                        "coordinate descent exceeded {} sweeps at lambda = {lambda:.6e}",
                        opts.max_iter
                    )));
                }
                if change <= tol * scale {
                    break;
                }
            }
            state.polish(lambda);
            let (worst, newly) = state.kkt_check(lambda, margin);
            if worst <= margin {
                break;
            }
            if newly.is_empty() {
                tol *= 0.5;
            } else {
                for idx in newly {
                    state.activate(idx);
                }
            }
        }
        on_point(li, &state);
        state.prune();
    }
    Ok(())
}
