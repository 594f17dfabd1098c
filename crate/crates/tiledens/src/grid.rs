//! Quadtree tiles and grid geometry.
//!
//! A grid of depth `k` covers a square region of the plane with `2^k` cells
//! per axis. Tiles are the aligned square blocks of cells produced by cutting
//! the grid in half `zoom` times along each axis; any two tiles are either
//! nested or disjoint, which is what makes the sparse-density algebra in the
//! rest of this crate cheap.

use crate::error::{Error, Result};

/// Deepest grid supported. `4^12` cells is 16M entries per dense vector,
/// which is already past the point where the sparse representation pays off.
pub const MAX_DEPTH: u8 = 12;

/// One quadtree tile: an aligned `2^(k-zoom)` square block of grid cells.
///
/// `x` indexes tiles horizontally and `y` vertically, both in `[0, 2^zoom)`.
/// Tiles order lexicographically by `(zoom, y, x)`, the fixed order used for
/// serialization and for the linear dictionary index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TileId {
    zoom: u8,
    x: u32,
    y: u32,
}

/// How two tiles relate spatially. There is no partial-overlap case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TileRelation {
    Equal,
    /// The left tile strictly contains the right one.
    Contains,
    /// The left tile is strictly contained in the right one.
    Within,
    Disjoint,
}

impl TileId {
    pub fn new(zoom: u8, x: u32, y: u32) -> Result<TileId> {
        if zoom > MAX_DEPTH {
            return Err(Error::Argument(format!(
                "tile zoom {zoom} exceeds maximum depth {MAX_DEPTH}"
            )));
        }
        let side = 1u32 << zoom;
        if x >= side || y >= side {
            return Err(Error::Argument(format!(
                "tile ({zoom}, {x}, {y}) out of range: indices must be < 2^zoom = {side}"
            )));
        }
        Ok(TileId { zoom, x, y })
    }

    /// The zoom-0 tile covering the whole grid.
    pub fn root() -> TileId {
        TileId {
            zoom: 0,
            x: 0,
            y: 0,
        }
    }

    pub fn zoom(&self) -> u8 {
        self.zoom
    }

    pub fn x(&self) -> u32 {
        self.x
    }

    pub fn y(&self) -> u32 {
        self.y
    }

    /// The tile one zoom level up, or `None` for the root.
    pub fn parent(&self) -> Option<TileId> {
        if self.zoom == 0 {
            None
        } else {
            Some(TileId {
                zoom: self.zoom - 1,
                x: self.x >> 1,
                y: self.y >> 1,
            })
        }
    }

    /// Whether `self` covers `other` (equality counts as containment).
    pub fn contains(&self, other: &TileId) -> bool {
        if self.zoom > other.zoom {
            return false;
        }
        let shift = other.zoom - self.zoom;
        other.x >> shift == self.x && other.y >> shift == self.y
    }

    /// Classify the pair; tiles are never in partial overlap.
    pub fn relation(&self, other: &TileId) -> TileRelation {
        if self == other {
            TileRelation::Equal
        } else if self.contains(other) {
            TileRelation::Contains
        } else if other.contains(self) {
            TileRelation::Within
        } else {
            TileRelation::Disjoint
        }
    }

    /// Number of grid cells covered at depth `k`.
    pub fn cell_count(&self, k: u8) -> Result<usize> {
        if self.zoom > k {
            return Err(Error::Argument(format!(
                "tile zoom {} exceeds grid depth {k}",
                self.zoom
            )));
        }
        Ok(1usize << (2 * (k - self.zoom) as usize))
    }

    /// Sort key that lists a tile before everything it contains and keeps
    /// disjoint subtrees contiguous: the first covered cell in Morton order,
    /// tie-broken by zoom (ancestors first).
    pub(crate) fn traversal_key(&self, k: u8) -> (u64, u8) {
        let code = interleave_bits(self.x) | (interleave_bits(self.y) << 1);
        (code << (2 * (k - self.zoom) as u64), self.zoom)
    }
}

impl PartialOrd for TileId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TileId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.zoom, self.y, self.x).cmp(&(other.zoom, other.y, other.x))
    }
}

impl std::fmt::Display for TileId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.zoom, self.x, self.y)
    }
}

fn interleave_bits(v: u32) -> u64 {
    let mut v = v as u64;
    v = (v | (v << 16)) & 0x0000_ffff_0000_ffff;
    v = (v | (v << 8)) & 0x00ff_00ff_00ff_00ff;
    v = (v | (v << 4)) & 0x0f0f_0f0f_0f0f_0f0f;
    v = (v | (v << 2)) & 0x3333_3333_3333_3333;
    v = (v | (v << 1)) & 0x5555_5555_5555_5555;
    v
}

/// Total number of tiles across all zoom levels of a depth-`k` grid:
/// `1 + 4 + ... + 4^k = (4^(k+1) - 1) / 3`.
pub fn dictionary_size(k: u8) -> usize {
    ((1usize << (2 * (k as usize + 1))) - 1) / 3
}

/// Axis-aligned rectangle in data units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Bounds> {
        let b = Bounds {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        if ![x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::Argument("bounds must be finite".into()));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::Argument(format!(
                "degenerate bounds: need x_min < x_max and y_min < y_max, got {b:?}"
            )));
        }
        Ok(b)
    }

    /// Bounding box of a point set; `None` when empty.
    pub fn of_points(points: &[(f64, f64)]) -> Option<Bounds> {
        let mut it = points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite());
        let &(x0, y0) = it.next()?;
        let mut b = Bounds {
            x_min: x0,
            x_max: x0,
            y_min: y0,
            y_max: y0,
        };
        for &(x, y) in it {
            b.x_min = b.x_min.min(x);
            b.x_max = b.x_max.max(x);
            b.y_min = b.y_min.min(y);
            b.y_max = b.y_max.max(y);
        }
        Some(b)
    }

    /// Smallest square with the same lower-left corner that covers `self`.
    /// Degenerate boxes (single point) are padded to unit side length.
    pub fn square(&self) -> Bounds {
        let side = (self.x_max - self.x_min).max(self.y_max - self.y_min);
        let side = if side > 0.0 { side } else { 1.0 };
        Bounds {
            x_min: self.x_min,
            x_max: self.x_min + side,
            y_min: self.y_min,
            y_max: self.y_min + side,
        }
    }
}

/// Inclusive rectangle of grid cells, `c0..=c1` by `r0..=r1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRect {
    pub c0: u32,
    pub c1: u32,
    pub r0: u32,
    pub r1: u32,
}

impl CellRect {
    pub fn new(c0: u32, c1: u32, r0: u32, r1: u32) -> Result<CellRect> {
        if c0 > c1 || r0 > r1 {
            return Err(Error::Argument(format!(
                "empty cell rect: ({c0},{c1},{r0},{r1})"
            )));
        }
        Ok(CellRect { c0, c1, r0, r1 })
    }
}

/// Grid geometry: depth `k` plus the square region of the plane it covers.
///
/// Cells are indexed row-major: cell `i` sits at column `i mod 2^k`,
/// row `i / 2^k`, with row 0 on the `y_min` edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    k: u8,
    bounds: Bounds,
}

impl GridSpec {
    pub fn new(k: u8, bounds: Bounds) -> Result<GridSpec> {
        if k > MAX_DEPTH {
            return Err(Error::Argument(format!(
                "grid depth {k} exceeds maximum {MAX_DEPTH}"
            )));
        }
        Bounds::new(bounds.x_min, bounds.x_max, bounds.y_min, bounds.y_max)?;
        Ok(GridSpec { k, bounds })
    }

    /// Grid of depth `k` over the smallest square covering `bounds`,
    /// padding on the max side when the box is not square.
    pub fn square_covering(k: u8, bounds: Bounds) -> Result<GridSpec> {
        GridSpec::new(k, bounds.square())
    }

    pub fn k(&self) -> u8 {
        self.k
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    /// Cells per axis, `2^k`.
    pub fn side(&self) -> u32 {
        1u32 << self.k
    }

    /// Total cells, `4^k`.
    pub fn cell_count(&self) -> usize {
        1usize << (2 * self.k as usize)
    }

    /// Total tiles across all zoom levels.
    pub fn dictionary_size(&self) -> usize {
        dictionary_size(self.k)
    }

    pub fn cell_index(&self, col: u32, row: u32) -> usize {
        row as usize * self.side() as usize + col as usize
    }

    pub fn cell_at(&self, index: usize) -> (u32, u32) {
        let side = self.side() as usize;
        ((index % side) as u32, (index / side) as u32)
    }

    fn check_cell(&self, col: u32, row: u32) -> Result<()> {
        let side = self.side();
        if col >= side || row >= side {
            return Err(Error::Argument(format!(
                "cell ({col}, {row}) out of range for a {side}x{side} grid"
            )));
        }
        Ok(())
    }

    /// The zoom-`zoom` tile containing cell `(col, row)`.
    pub fn tile_of(&self, col: u32, row: u32, zoom: u8) -> Result<TileId> {
        self.check_cell(col, row)?;
        if zoom > self.k {
            return Err(Error::Argument(format!(
                "zoom {zoom} exceeds grid depth {}",
                self.k
            )));
        }
        let shift = self.k - zoom;
        Ok(TileId {
            zoom,
            x: col >> shift,
            y: row >> shift,
        })
    }

    /// All `k + 1` tiles containing cell `(col, row)`, zoom 0 first.
    pub fn ancestors(&self, col: u32, row: u32) -> Result<Vec<TileId>> {
        self.check_cell(col, row)?;
        Ok((0..=self.k)
            .map(|zoom| {
                let shift = self.k - zoom;
                TileId {
                    zoom,
                    x: col >> shift,
                    y: row >> shift,
                }
            })
            .collect())
    }

    /// Cell columns and rows covered by a tile, as an inclusive rect.
    pub fn tile_rect(&self, tile: &TileId) -> Result<CellRect> {
        if tile.zoom > self.k {
            return Err(Error::Argument(format!(
                "tile zoom {} exceeds grid depth {}",
                tile.zoom, self.k
            )));
        }
        let span = 1u32 << (self.k - tile.zoom);
        Ok(CellRect {
            c0: tile.x * span,
            c1: tile.x * span + span - 1,
            r0: tile.y * span,
            r1: tile.y * span + span - 1,
        })
    }

    /// Data-unit rectangle covered by a tile.
    pub fn tile_bounds(&self, tile: &TileId) -> Result<Bounds> {
        let rect = self.tile_rect(tile)?;
        let side = self.side() as f64;
        let w = (self.bounds.x_max - self.bounds.x_min) / side;
        let h = (self.bounds.y_max - self.bounds.y_min) / side;
        Ok(Bounds {
            x_min: self.bounds.x_min + rect.c0 as f64 * w,
            x_max: self.bounds.x_min + (rect.c1 + 1) as f64 * w,
            y_min: self.bounds.y_min + rect.r0 as f64 * h,
            y_max: self.bounds.y_min + (rect.r1 + 1) as f64 * h,
        })
    }

    /// Number of cells in `tile ∩ rect`, from interval overlaps in O(1).
    pub fn rect_overlap(&self, tile: &TileId, rect: &CellRect) -> Result<usize> {
        self.check_cell(rect.c0, rect.r0)?;
        self.check_cell(rect.c1, rect.r1)?;
        let t = self.tile_rect(tile)?;
        let cols = overlap_len(t.c0, t.c1, rect.c0, rect.c1);
        let rows = overlap_len(t.r0, t.r1, rect.r0, rect.r1);
        Ok(cols * rows)
    }

    /// Cell containing a data-unit point, or `None` outside the bounds.
    /// Points exactly on the max edge land in the last cell.
    pub fn cell_of_point(&self, x: f64, y: f64) -> Option<(u32, u32)> {
        let b = &self.bounds;
        if !(x >= b.x_min && x <= b.x_max && y >= b.y_min && y <= b.y_max) {
            return None;
        }
        let side = self.side();
        let fx = (x - b.x_min) / (b.x_max - b.x_min) * side as f64;
        let fy = (y - b.y_min) / (b.y_max - b.y_min) * side as f64;
        let col = (fx.floor() as u32).min(side - 1);
        let row = (fy.floor() as u32).min(side - 1);
        Some((col, row))
    }
}

fn overlap_len(a0: u32, a1: u32, b0: u32, b1: u32) -> usize {
    let lo = a0.max(b0);
    let hi = a1.min(b1);
    if lo > hi {
        0
    } else {
        (hi - lo + 1) as usize
    }
}

/// Dense non-negative vector over the cells of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<GridDensity> {
        if values.len() != spec.cell_count() {
            return Err(Error::Argument(format!(
                "grid vector length {} does not match 4^{} = {}",
                values.len(),
                spec.k(),
                spec.cell_count()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Argument(format!(
                "grid density values must be finite and non-negative, got {v}"
            )));
        }
        Ok(GridDensity { spec, values })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.sum() - 1.0).abs() <= tol
    }

    /// Total variation distance, half the l1 distance between the two
    /// cell-mass vectors. Both inputs must be normalized on a common grid.
    pub fn tv_distance(&self, other: &GridDensity) -> Result<f64> {
        if self.spec != other.spec {
            return Err(Error::Argument(
                "total variation requires a common grid".into(),
            ));
        }
        if !self.is_normalized(1e-6) || !other.is_normalized(1e-6) {
            return Err(Error::Argument(
                "total variation requires normalized densities".into(),
            ));
        }
        Ok(0.5
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }
}

/// Result of binning points onto a grid.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub density: GridDensity,
    pub retained: usize,
    pub dropped: usize,
}

/// Bin observations to cells and normalize counts into a histogram density.
/// Points outside the bounds are counted and dropped; an exact max-edge
/// coordinate falls into the last cell.
pub fn embed_points(points: &[(f64, f64)], spec: &GridSpec) -> Result<Embedding> {
    let mut counts = vec![0u64; spec.cell_count()];
    let mut retained = 0usize;
    let mut dropped = 0usize;
    for &(x, y) in points {
        match spec.cell_of_point(x, y) {
            Some((col, row)) => {
                counts[spec.cell_index(col, row)] += 1;
                retained += 1;
            }
            None => dropped += 1,
        }
    }
    if retained == 0 {
        return Err(Error::EmptyData(
            "no points fell inside the grid bounds".into(),
        ));
    }
    let scale = 1.0 / retained as f64;
    let values = counts.iter().map(|&c| c as f64 * scale).collect();
    Ok(Embedding {
        density: GridDensity::new(*spec, values)?,
        retained,
        dropped,
    })
}
