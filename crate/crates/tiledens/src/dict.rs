//! The implicit tile dictionary.
//!
//! Column `j` of the dictionary is the indicator of tile `j` scaled by
//! `|tile|^(-alpha)`: at `alpha = 0` a plain membership indicator, at
//! `alpha = 1` a uniform density over the tile (each column sums to 1 over
//! the grid). The matrix is never materialized; the solver only needs
//! products against it, which reduce to block sums over the quadtree.

use crate::error::{Error, Result};
use crate::grid::{dictionary_size, TileId};
use std::collections::BTreeMap;

/// Grid depth plus the tile-size weighting exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dictionary {
    k: u8,
    alpha: f64,
}

impl Dictionary {
    pub fn new(k: u8, alpha: f64) -> Result<Dictionary> {
        if k > crate::grid::MAX_DEPTH {
            return Err(Error::Argument(format!(
                "grid depth {k} exceeds maximum {}",
                crate::grid::MAX_DEPTH
            )));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Argument(format!(
                "alpha must be in [0, 1], got {alpha}"
            )));
        }
        Ok(Dictionary { k, alpha })
    }

    pub fn k(&self) -> u8 {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of columns, one per tile.
    pub fn size(&self) -> usize {
        dictionary_size(self.k)
    }

    /// Column weight `|tile|^(-alpha)`. The endpoints are computed exactly:
    /// 1 at `alpha = 0`, `1/|tile|` at `alpha = 1`.
    pub fn weight(&self, tile: &TileId) -> Result<f64> {
        Ok(self.level_weight(self.check_zoom(tile)?))
    }

    fn check_zoom(&self, tile: &TileId) -> Result<u8> {
        if tile.zoom() > self.k {
            return Err(Error::Argument(format!(
                "tile zoom {} exceeds grid depth {}",
                tile.zoom(),
                self.k
            )));
        }
        Ok(tile.zoom())
    }

    fn level_weight(&self, zoom: u8) -> f64 {
        let depth = (self.k - zoom) as f64;
        if self.alpha == 0.0 {
            1.0
        } else if self.alpha == 1.0 {
            (-2.0 * depth).exp2()
        } else {
            (-2.0 * self.alpha * depth).exp2()
        }
    }

    /// Squared Euclidean norm of a column: `weight^2 * |tile|`.
    pub fn column_sq_norm(&self, tile: &TileId) -> Result<f64> {
        let zoom = self.check_zoom(tile)?;
        let w = self.level_weight(zoom);
        let cells = 1u64 << (2 * (self.k - zoom) as u64);
        Ok(w * w * cells as f64)
    }

    /// Linear index of a tile in the fixed `(zoom, y, x)` ordering.
    pub fn tile_index(&self, tile: &TileId) -> Result<usize> {
        let zoom = self.check_zoom(tile)?;
        Ok(level_offset(zoom) + tile.y() as usize * (1usize << zoom) + tile.x() as usize)
    }

    /// Inverse of [`tile_index`](Self::tile_index).
    pub fn tile_at(&self, index: usize) -> Result<TileId> {
        if index >= self.size() {
            return Err(Error::Argument(format!(
                "tile index {index} out of range for dictionary of size {}",
                self.size()
            )));
        }
        let mut zoom = 0u8;
        while level_offset(zoom + 1) <= index {
            zoom += 1;
        }
        let rem = index - level_offset(zoom);
        let side = 1usize << zoom;
        TileId::new(zoom, (rem % side) as u32, (rem / side) as u32)
    }

    /// Apply the dictionary to a sparse coefficient vector, producing the
    /// dense cell vector with `x_i = sum of coeff * weight` over the tiles
    /// covering cell `i`. Each tile contributes a constant over its block.
    pub fn matvec(&self, coeffs: &BTreeMap<TileId, f64>) -> Result<Vec<f64>> {
        let side = 1usize << self.k;
        let mut out = vec![0.0; side * side];
        for (tile, &b) in coeffs {
            let zoom = self.check_zoom(tile)?;
            let contrib = b * self.level_weight(zoom);
            let span = 1usize << (self.k - zoom);
            let c0 = tile.x() as usize * span;
            let r0 = tile.y() as usize * span;
            for row in r0..r0 + span {
                let base = row * side;
                for v in &mut out[base + c0..base + c0 + span] {
                    *v += contrib;
                }
            }
        }
        Ok(out)
    }

    /// Inner products of every column with a grid vector, indexed by
    /// [`tile_index`](Self::tile_index). Tile sums are aggregated bottom-up
    /// from the leaves, so the whole pass is O(cells + tiles).
    pub fn transpose_matvec(&self, r: &[f64]) -> Result<Vec<f64>> {
        let side = 1usize << self.k;
        if r.len() != side * side {
            return Err(Error::Argument(format!(
                "grid vector length {} does not match 4^{} = {}",
                r.len(),
                self.k,
                side * side
            )));
        }
        let mut sums = self.tile_sums(r);
        for (zoom, level) in sums_levels_mut(&mut sums, self.k) {
            let w = self.level_weight(zoom);
            if w != 1.0 {
                for v in level {
                    *v *= w;
                }
            }
        }
        Ok(sums)
    }

    /// Sum of a grid vector over every tile (unweighted), bottom-up.
    pub(crate) fn tile_sums(&self, r: &[f64]) -> Vec<f64> {
        let k = self.k as usize;
        let mut sums = vec![0.0; self.size()];
        let leaf_base = level_offset(self.k);
        sums[leaf_base..].copy_from_slice(r);
        for zoom in (0..k).rev() {
            let side = 1usize << zoom;
            let child_side = side * 2;
            let base = level_offset(zoom as u8);
            let child_base = level_offset(zoom as u8 + 1);
            for y in 0..side {
                for x in 0..side {
                    let c = child_base + 2 * y * child_side + 2 * x;
                    sums[base + y * side + x] =
                        (sums[c] + sums[c + 1]) + (sums[c + child_side] + sums[c + child_side + 1]);
                }
            }
        }
        sums
    }
}

/// First linear index of the given zoom level: `(4^zoom - 1) / 3`.
pub(crate) fn level_offset(zoom: u8) -> usize {
    ((1usize << (2 * zoom as usize)) - 1) / 3
}

fn sums_levels_mut(sums: &mut [f64], k: u8) -> Vec<(u8, &mut [f64])> {
    let mut out = Vec::new();
    let mut rest = sums;
    for zoom in 0..=k {
        let len = 1usize << (2 * zoom as usize);
        let (level, tail) = rest.split_at_mut(len);
        out.push((zoom, level));
        rest = tail;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bounds, GridSpec};
    use rand::{Rng, SeedableRng};

    fn all_tiles(k: u8) -> Vec<TileId> {
        let mut tiles = Vec::new();
        for zoom in 0..=k {
            for y in 0..(1u32 << zoom) {
                for x in 0..(1u32 << zoom) {
                    tiles.push(TileId::new(zoom, x, y).unwrap());
                }
            }
        }
        tiles
    }

    /// Dense materialization, rows = cells, cols = tiles. Test oracle only.
    fn dense_matrix(dict: &Dictionary) -> Vec<Vec<f64>> {
        let spec = GridSpec::new(dict.k(), Bounds::new(0.0, 1.0, 0.0, 1.0).unwrap()).unwrap();
        let n = spec.cell_count();
        let mut m = vec![vec![0.0; dict.size()]; n];
        for t in all_tiles(dict.k()) {
            let j = dict.tile_index(&t).unwrap();
            let w = dict.weight(&t).unwrap();
            let r = spec.tile_rect(&t).unwrap();
            for row in r.r0..=r.r1 {
                for col in r.c0..=r.c1 {
                    m[spec.cell_index(col, row)][j] = w;
                }
            }
        }
        m
    }

    #[test]
    fn weight_examples() {
        let d = Dictionary::new(2, 1.0).unwrap();
        assert_eq!(d.weight(&TileId::root()).unwrap(), 1.0 / 16.0);
        for alpha in [0.0, 0.3, 1.0] {
            let d = Dictionary::new(4, alpha).unwrap();
            for t in all_tiles(4) {
                if alpha == 0.0 {
                    assert_eq!(d.weight(&t).unwrap(), 1.0);
                }
                let cells = t.cell_count(4).unwrap() as f64;
                let expect = cells.powf(-alpha);
                assert!((d.weight(&t).unwrap() - expect).abs() <= 1e-15);
            }
        }
        let d = Dictionary::new(3, 0.5).unwrap();
        assert_eq!(d.weight(&TileId::new(1, 0, 0).unwrap()).unwrap(), 0.25);
    }

    #[test]
    fn sq_norm_examples() {
        let d = Dictionary::new(2, 0.0).unwrap();
        assert_eq!(d.column_sq_norm(&TileId::root()).unwrap(), 16.0);
        for alpha in [0.0, 0.5, 1.0] {
            let d = Dictionary::new(3, alpha).unwrap();
            assert_eq!(
                d.column_sq_norm(&TileId::new(3, 1, 2).unwrap()).unwrap(),
                1.0
            );
        }
        let d = Dictionary::new(3, 0.5).unwrap();
        assert_eq!(
            d.column_sq_norm(&TileId::new(1, 0, 0).unwrap()).unwrap(),
            1.0
        );
    }

    #[test]
    fn tile_index_round_trips() {
        let d = Dictionary::new(4, 0.5).unwrap();
        for (expect, t) in all_tiles(4).iter().enumerate() {
            // all_tiles enumerates in (zoom, y, x) order
            assert_eq!(d.tile_index(t).unwrap(), expect);
            assert_eq!(&d.tile_at(expect).unwrap(), t);
        }
        assert!(d.tile_at(d.size()).is_err());
    }

    #[test]
    fn matvec_trivial_cases() {
        let d = Dictionary::new(2, 1.0).unwrap();
        let mut b = BTreeMap::new();
        b.insert(TileId::root(), 1.0);
        let x = d.matvec(&b).unwrap();
        assert!(x.iter().all(|&v| v == 1.0 / 16.0));
        let empty = BTreeMap::new();
        assert!(d.matvec(&empty).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matvec_matches_dense_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for alpha in [0.0, 0.5, 1.0] {
            let d = Dictionary::new(3, alpha).unwrap();
            let dense = dense_matrix(&d);
            let tiles = all_tiles(3);
            for _ in 0..20 {
                let mut b = BTreeMap::new();
                for _ in 0..6 {
                    let t = tiles[rng.gen_range(0..tiles.len())];
                    b.insert(t, rng.gen_range(-1.0..1.0));
                }
                let fast = d.matvec(&b).unwrap();
                for (i, row) in dense.iter().enumerate() {
                    let slow: f64 = b
                        .iter()
                        .map(|(t, &v)| row[d.tile_index(t).unwrap()] * v)
                        .sum();
                    assert!((fast[i] - slow).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn transpose_matvec_examples_and_oracle() {
        let d = Dictionary::new(2, 0.0).unwrap();
        let ones = vec![1.0; 16];
        let out = d.transpose_matvec(&ones).unwrap();
        assert_eq!(out[0], 16.0);
        assert!(out[level_offset(2)..].iter().all(|&v| v == 1.0));
        let zeros = vec![0.0; 16];
        assert!(d
            .transpose_matvec(&zeros)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let d = Dictionary::new(3, 0.5).unwrap();
        let dense = dense_matrix(&d);
        let r: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = d.transpose_matvec(&r).unwrap();
        for j in 0..d.size() {
            let slow: f64 = dense.iter().zip(&r).map(|(row, ri)| row[j] * ri).sum();
            assert!((fast[j] - slow).abs() <= 1e-12);
        }
    }

    #[test]
    fn adjointness() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for k in 1..=4u8 {
            let d = Dictionary::new(k, 0.37).unwrap();
            let tiles = all_tiles(k);
            let mut b = BTreeMap::new();
            for _ in 0..8 {
                let t = tiles[rng.gen_range(0..tiles.len())];
                b.insert(t, rng.gen_range(-1.0..1.0));
            }
            let r: Vec<f64> = (0..(1usize << (2 * k as usize)))
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let db = d.matvec(&b).unwrap();
            let dtr = d.transpose_matvec(&r).unwrap();
            let lhs: f64 = db.iter().zip(&r).map(|(a, b)| a * b).sum();
            let rhs: f64 = b
                .iter()
                .map(|(t, &v)| v * dtr[d.tile_index(t).unwrap()])
                .sum();
            assert!((lhs - rhs).abs() <= 1e-10);
        }
    }

    #[test]
    fn alpha_one_columns_sum_to_one() {
        // mass transport: sum of matvec output equals sum of coefficients
        let d = Dictionary::new(4, 1.0).unwrap();
        let ones = vec![1.0; 256];
        let col_sums = d.transpose_matvec(&ones).unwrap();
        for s in col_sums {
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn alpha_zero_has_identity_block() {
        let d = Dictionary::new(2, 0.0).unwrap();
        let dense = dense_matrix(&d);
        let leaf_base = level_offset(2);
        let spec = GridSpec::new(2, Bounds::new(0.0, 1.0, 0.0, 1.0).unwrap()).unwrap();
        for (i, dense_row) in dense.iter().enumerate() {
            let (col, row) = spec.cell_at(i);
            for j in 0..16 {
                let expect = if spec.cell_index(col, row) == j {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(dense_row[leaf_base + j], expect);
            }
        }
    }
}
