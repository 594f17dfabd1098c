//! Sparse tile densities and the fast operations on them.
//!
//! A [`SparseDensity`] stores a density as a coefficient per tile; the value
//! at a cell is the sum of `coeff / |tile|` over the tiles covering it. Since
//! tiles are nested or disjoint, point evaluation touches at most `k + 1`
//! coefficients, a region probability touches each coefficient once, and
//! unions and intersections work directly on the coefficient maps without
//! ever expanding the grid.

use std::collections::BTreeMap;

use crate::dict::Dictionary;
use crate::error::{Error, Result};
use crate::fit::{hard_threshold, normalize_coeffs};
use crate::grid::{CellRect, GridDensity, GridSpec, TileId};

/// How the fitting pipeline produced a density; absent on derived densities
/// unless all inputs agree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitMeta {
    pub alpha: f64,
    pub delta: f64,
    pub lambda: f64,
}

/// Tolerance on the coefficient sum of a valid density.
pub const MASS_TOL: f64 = 1e-9;

/// A density represented by sparse tile coefficients.
///
/// Fitted densities have strictly positive coefficients; densities derived
/// by [`intersect`] may carry signed coefficients, but in both cases the
/// coefficients sum to 1 and evaluation is non-negative up to round-off.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDensity {
    spec: GridSpec,
    coeffs: BTreeMap<TileId, f64>,
    meta: Option<FitMeta>,
}

impl SparseDensity {
    pub fn new(
        spec: GridSpec,
        coeffs: BTreeMap<TileId, f64>,
        meta: Option<FitMeta>,
    ) -> Result<SparseDensity> {
        if coeffs.is_empty() {
            return Err(Error::Degenerate("density has no coefficients".into()));
        }
        let mut total = 0.0;
        for (tile, &c) in &coeffs {
            if tile.zoom() > spec.k() {
                return Err(Error::Argument(format!(
                    "tile {tile} is deeper than the grid (k = {})",
                    spec.k()
                )));
            }
            if !c.is_finite() || c == 0.0 {
                return Err(Error::Argument(format!(
                    "coefficient for tile {tile} must be finite and nonzero, got {c}"
                )));
            }
            total += c;
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Degenerate(format!(
                "coefficients must sum to 1 within {MASS_TOL}, got {total}"
            )));
        }
        Ok(SparseDensity { spec, coeffs, meta })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn coeffs(&self) -> &BTreeMap<TileId, f64> {
        &self.coeffs
    }

    pub fn meta(&self) -> Option<&FitMeta> {
        self.meta.as_ref()
    }

    /// Number of nonzero coefficients.
    pub fn nnz(&self) -> usize {
        self.coeffs.len()
    }

    /// Density value at one cell.
    pub fn eval(&self, col: u32, row: u32) -> Result<f64> {
        Ok(self.eval_counted(col, row)?.0)
    }

    /// Density value at one cell plus the number of coefficient lookups
    /// performed, which is at most `k + 1` regardless of the support size.
    pub fn eval_counted(&self, col: u32, row: u32) -> Result<(f64, usize)> {
        let mut value = 0.0;
        let mut lookups = 0usize;
        for tile in self.spec.ancestors(col, row)? {
            lookups += 1;
            if let Some(&c) = self.coeffs.get(&tile) {
                value += c / tile.cell_count(self.spec.k()).unwrap() as f64;
            }
        }
        Ok((value, lookups))
    }

    /// Probability mass of a cell rectangle, one term per coefficient.
    pub fn region_sum(&self, rect: &CellRect) -> Result<f64> {
        let mut total = 0.0;
        for (tile, &c) in &self.coeffs {
            let overlap = self.spec.rect_overlap(tile, rect)?;
            if overlap > 0 {
                total += c * overlap as f64 / tile.cell_count(self.spec.k()).unwrap() as f64;
            }
        }
        Ok(total)
    }

    /// Expand to the dense cell vector (the uniform-density projection of
    /// the coefficients). Entries can carry round-off dust of either sign.
    pub fn eval_grid(&self) -> Vec<f64> {
        Dictionary::new(self.spec.k(), 1.0)
            .and_then(|d| d.matvec(&self.coeffs))
            .expect("coefficients were validated against the grid depth")
    }

    /// Total variation distance to a dense reference density.
    pub fn tv_distance(&self, reference: &GridDensity) -> Result<f64> {
        if *reference.spec() != self.spec {
            return Err(Error::Argument(
                "total variation requires a common grid".into(),
            ));
        }
        if !reference.is_normalized(1e-6) {
            return Err(Error::Argument(
                "total variation requires a normalized reference".into(),
            ));
        }
        let x = self.eval_grid();
        Ok(0.5
            * x.iter()
                .zip(reference.values())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }

    /// The distinct cell values of the density, ascending. Computed from the
    /// tile hierarchy in one pass over the support; the result has at most
    /// `nnz + 1` entries.
    pub fn unique_values(&self) -> Vec<f64> {
        let k = self.spec.k();
        let mut items: Vec<(TileId, f64)> = self.coeffs.iter().map(|(t, &c)| (*t, c)).collect();
        if items.first().map(|(t, _)| *t) != Some(TileId::root()) {
            items.push((TileId::root(), 0.0));
        }
        items.sort_by_key(|(t, _)| t.traversal_key(k));

        // Stack of open ancestors: (tile, accumulated value, cells covered
        // by support descendants). A tile's own value is visible on whatever
        // cells its support descendants do not cover.
        let mut stack: Vec<(TileId, f64, usize)> = Vec::new();
        let mut values = Vec::new();
        for (tile, coeff) in items {
            while let Some(top) = stack.last() {
                if top.0.contains(&tile) {
                    break;
                }
                pop_value(&mut stack, &mut values, k);
            }
            let parent_acc = stack.last().map_or(0.0, |e| e.1);
            let cells = tile.cell_count(k).unwrap() as f64;
            stack.push((tile, parent_acc + coeff / cells, 0));
        }
        while !stack.is_empty() {
            pop_value(&mut stack, &mut values, k);
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        values
    }

    /// Smallest cell value of the density.
    pub fn min_value(&self) -> f64 {
        self.unique_values().first().copied().unwrap_or(0.0)
    }
}

fn pop_value(stack: &mut Vec<(TileId, f64, usize)>, values: &mut Vec<f64>, k: u8) {
    let (tile, acc, covered) = stack.pop().unwrap();
    let cells = tile.cell_count(k).unwrap();
    if cells > covered {
        values.push(acc);
    }
    if let Some(top) = stack.last_mut() {
        top.2 += cells;
    }
}

fn common_spec<'a, I>(densities: I) -> Result<GridSpec>
where
    I: IntoIterator<Item = &'a SparseDensity>,
{
    let mut it = densities.into_iter();
    let first = it
        .next()
        .ok_or_else(|| Error::Argument("need at least one density".into()))?;
    for d in it {
        if d.spec != first.spec {
            return Err(Error::Argument(
                "densities are defined on different grids".into(),
            ));
        }
    }
    Ok(first.spec)
}

fn common_meta<'a, I>(densities: I) -> Option<FitMeta>
where
    I: IntoIterator<Item = &'a SparseDensity>,
{
    let mut it = densities.into_iter();
    let first = it.next()?.meta?;
    for d in it {
        if d.meta != Some(first) {
            return None;
        }
    }
    Some(first)
}

fn check_delta(delta: f64) -> Result<()> {
    if !delta.is_finite() || !(0.0..1.0).contains(&delta) {
        return Err(Error::Argument(format!(
            "threshold fraction must be in [0, 1), got {delta}"
        )));
    }
    Ok(())
}

/// Prior-weighted mixture of densities, computed by merging the coefficient
/// maps, thresholding small entries at `delta`, and renormalizing. Priors
/// must be non-negative and sum to 1.
pub fn union(entries: &[(f64, &SparseDensity)], delta: f64) -> Result<SparseDensity> {
    check_delta(delta)?;
    let spec = common_spec(entries.iter().map(|(_, d)| *d))?;
    let mut prior_total = 0.0;
    for &(p, _) in entries {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::Argument(format!(
                "priors must be finite and non-negative, got {p}"
            )));
        }
        prior_total += p;
    }
    if (prior_total - 1.0).abs() > MASS_TOL {
        return Err(Error::Argument(format!(
            "priors must sum to 1 within {MASS_TOL}, got {prior_total}"
        )));
    }

    let mut merged: BTreeMap<TileId, f64> = BTreeMap::new();
    for (prior, d) in entries {
        for (tile, &c) in &d.coeffs {
            *merged.entry(*tile).or_insert(0.0) += prior * c;
        }
    }
    let coeffs = normalize_coeffs(&hard_threshold(&merged, delta))?;
    SparseDensity::new(spec, coeffs, common_meta(entries.iter().map(|(_, d)| *d)))
}

/// Normalized pointwise product of two densities: the density of a location
/// given that both events were observed there.
pub fn intersect(a: &SparseDensity, b: &SparseDensity, delta: f64) -> Result<SparseDensity> {
    intersect_counted(a, b, delta).map(|(d, _)| d)
}

/// [`intersect`] plus the number of tile visits performed, which is linear
/// in the two support sizes.
///
/// The product is solved on the joint support in one hierarchy pass: sweep
/// the supports in quadtree traversal order keeping a stack of open
/// ancestors, accumulate each factor's value per tile, and emit the
/// coefficient that lifts the product from the nearest supported ancestor's
/// value to this tile's value.
pub fn intersect_counted(
    a: &SparseDensity,
    b: &SparseDensity,
    delta: f64,
) -> Result<(SparseDensity, usize)> {
    check_delta(delta)?;
    let spec = common_spec([a, b])?;
    let k = spec.k();
    let mut visits = 0usize;

    let mut joint: BTreeMap<TileId, (f64, f64)> = BTreeMap::new();
    for (tile, &c) in &a.coeffs {
        visits += 1;
        joint.insert(*tile, (c, 0.0));
    }
    for (tile, &c) in &b.coeffs {
        visits += 1;
        joint.entry(*tile).or_insert((0.0, 0.0)).1 = c;
    }
    joint.entry(TileId::root()).or_insert((0.0, 0.0));

    let mut items: Vec<(TileId, f64, f64)> =
        joint.into_iter().map(|(t, (ca, cb))| (t, ca, cb)).collect();
    items.sort_by_key(|(t, _, _)| t.traversal_key(k));

    // stack entries: (tile, value of a, value of b, product)
    let mut stack: Vec<(TileId, f64, f64, f64)> = Vec::new();
    let mut raw: BTreeMap<TileId, f64> = BTreeMap::new();
    for (tile, ca, cb) in items {
        visits += 1;
        while let Some(top) = stack.last() {
            if top.0.contains(&tile) {
                break;
            }
            stack.pop();
            visits += 1;
        }
        let (pa, pb, pg) = stack.last().map_or((0.0, 0.0, 0.0), |e| (e.1, e.2, e.3));
        let cells = tile.cell_count(k).unwrap() as f64;
        let fa = pa + ca / cells;
        let fb = pb + cb / cells;
        let g = fa * fb;
        let c = cells * (g - pg);
        if c != 0.0 {
            raw.insert(tile, c);
        }
        stack.push((tile, fa, fb, g));
    }

    let coeffs = normalize_coeffs(&hard_threshold(&raw, delta))
        .map_err(|_| Error::Degenerate("densities place no joint mass anywhere".into()))?;
    let density = SparseDensity::new(spec, coeffs, common_meta([a, b]))?;
    Ok((density, visits))
}
