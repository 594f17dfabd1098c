//! Shared brute-force oracles for the integration tests. Everything here is
//! intentionally independent of the library's fast paths: dense matrices,
//! cellwise enumeration, and textbook Gaussian elimination.

// each test target compiles its own copy and uses a different subset
#![allow(dead_code)]

use rand::Rng;
use std::collections::BTreeMap;
use tiledens::{Bounds, Dictionary, GridDensity, GridSpec, SparseDensity, TileId};

pub fn unit_spec(k: u8) -> GridSpec {
    GridSpec::new(k, Bounds::new(0.0, 1.0, 0.0, 1.0).unwrap()).unwrap()
}

pub fn all_tiles(k: u8) -> Vec<TileId> {
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

/// Fully materialized dictionary, rows = cells, columns = tiles in the
/// library's linear order.
pub fn dense_dictionary(k: u8, alpha: f64) -> Vec<Vec<f64>> {
    let spec = unit_spec(k);
    let dict = Dictionary::new(k, alpha).unwrap();
    let mut matrix = vec![vec![0.0; dict.size()]; spec.cell_count()];
    for tile in all_tiles(k) {
        let j = dict.tile_index(&tile).unwrap();
        let w = dict.weight(&tile).unwrap();
        let rect = spec.tile_rect(&tile).unwrap();
        for row in rect.r0..=rect.r1 {
            for col in rect.c0..=rect.c1 {
                matrix[spec.cell_index(col, row)][j] = w;
            }
        }
    }
    matrix
}

/// Random normalized positive sparse density with `extra` tiles plus the
/// root (so the support always covers the grid).
pub fn random_density<R: Rng>(rng: &mut R, spec: &GridSpec, extra: usize) -> SparseDensity {
    let tiles = all_tiles(spec.k());
    let mut coeffs: BTreeMap<TileId, f64> = BTreeMap::new();
    coeffs.insert(TileId::root(), rng.gen_range(0.2..1.0));
    for _ in 0..extra {
        coeffs.insert(
            tiles[rng.gen_range(0..tiles.len())],
            rng.gen_range(0.05..1.0),
        );
    }
    let total: f64 = coeffs.values().sum();
    coeffs.values_mut().for_each(|v| *v /= total);
    SparseDensity::new(*spec, coeffs, None).unwrap()
}

pub fn random_grid_density<R: Rng>(rng: &mut R, spec: &GridSpec) -> GridDensity {
    let mut values: Vec<f64> = (0..spec.cell_count())
        .map(|_| rng.gen_range(0.0..1.0))
        .collect();
    let total: f64 = values.iter().sum();
    values.iter_mut().for_each(|v| *v /= total);
    GridDensity::new(*spec, values).unwrap()
}

/// Dense symmetric solve by Gaussian elimination with partial pivoting;
/// `None` when the pivot collapses.
pub fn gauss_solve(matrix: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let m = rhs.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut b = rhs.to_vec();
    for col in 0..m {
        let pivot =
            (col..m).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (pivot_rows, rest) = a.split_at_mut(col + 1);
        let pivot_row = &pivot_rows[col];
        let pivot_b = b[col];
        for (row, brow) in rest.iter_mut().zip(&mut b[col + 1..]) {
            let f = row[col] / pivot_row[col];
            for (dst, src) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *dst -= f * src;
            }
            *brow -= f * pivot_b;
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let mut acc = b[row];
        for c in row + 1..m {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}
