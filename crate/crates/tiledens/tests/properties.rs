//! Property tests over randomized tiles, densities, and documents.

mod common;

use common::unit_spec;
use proptest::prelude::*;
use std::collections::BTreeMap;
use tiledens::{intersect_counted, load, save, union, GridDensity, SparseDensity, TileId};

fn arb_tile(k: u8) -> impl Strategy<Value = TileId> {
    (0..=k as u32).prop_flat_map(move |zoom| {
        let side = 1u32 << zoom;
        (Just(zoom), 0..side, 0..side).prop_map(|(z, x, y)| TileId::new(z as u8, x, y).unwrap())
    })
}

fn arb_density(k: u8) -> impl Strategy<Value = SparseDensity> {
    proptest::collection::btree_map(arb_tile(k), 0.05f64..1.0, 1..12).prop_map(move |mut m| {
        // keep the support covering the grid so intersections are never void
        m.entry(TileId::root()).or_insert(0.5);
        let total: f64 = m.values().sum();
        m.values_mut().for_each(|v| *v /= total);
        SparseDensity::new(unit_spec(k), m, None).unwrap()
    })
}

fn arb_grid_density(k: u8) -> impl Strategy<Value = GridDensity> {
    let spec = unit_spec(k);
    proptest::collection::vec(0.001f64..1.0, spec.cell_count()).prop_map(move |mut v| {
        let total: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= total);
        GridDensity::new(spec, v).unwrap()
    })
}

proptest! {
    /// Any two tiles are equal, nested, or disjoint, and the relation is
    /// antisymmetric.
    #[test]
    fn tiles_nest_or_are_disjoint(a in arb_tile(4), b in arb_tile(4)) {
        use tiledens::TileRelation::*;
        let spec = unit_spec(4);
        let ra = spec.tile_rect(&a).unwrap();
        let rb = spec.tile_rect(&b).unwrap();
        let cols = ra.c0.max(rb.c0)..=ra.c1.min(rb.c1);
        let rows = ra.r0.max(rb.r0)..=ra.r1.min(rb.r1);
        let overlap = if cols.is_empty() || rows.is_empty() {
            0
        } else {
            (cols.end() - cols.start() + 1) as usize * (rows.end() - rows.start() + 1) as usize
        };
        let (na, nb) = (a.cell_count(4).unwrap(), b.cell_count(4).unwrap());
        match a.relation(&b) {
            Equal => prop_assert!(a == b && overlap == na),
            Contains => prop_assert!(overlap == nb && na > nb),
            Within => prop_assert!(overlap == na && nb > na),
            Disjoint => prop_assert!(overlap == 0),
        }
        // the relation flips consistently
        let flipped = b.relation(&a);
        match a.relation(&b) {
            Equal => prop_assert!(flipped == Equal),
            Contains => prop_assert!(flipped == Within),
            Within => prop_assert!(flipped == Contains),
            Disjoint => prop_assert!(flipped == Disjoint),
        }
    }

    /// Every ancestor at every zoom is the tile that `tile_of` names.
    #[test]
    fn ancestors_agree_with_tile_of(col in 0u32..16, row in 0u32..16) {
        let spec = unit_spec(4);
        let chain = spec.ancestors(col, row).unwrap();
        prop_assert_eq!(chain.len(), 5);
        for (zoom, tile) in chain.iter().enumerate() {
            prop_assert_eq!(tile, &spec.tile_of(col, row, zoom as u8).unwrap());
            prop_assert!(tile.contains(chain.last().unwrap()));
        }
    }

    /// Total grid mass of any density is its coefficient sum: 1.
    #[test]
    fn densities_carry_unit_mass(d in arb_density(4)) {
        let total: f64 = d.eval_grid().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        prop_assert!(d.unique_values().len() <= d.nnz() + 1);
    }

    /// Pre-threshold union evaluates to the prior mixture of its inputs.
    #[test]
    fn union_is_linear_before_thresholding(
        a in arb_density(3),
        b in arb_density(3),
        prior in 0.0f64..=1.0,
    ) {
        let u = union(&[(prior, &a), (1.0 - prior, &b)], 0.0).unwrap();
        // reconstruct the merge scale from the public coefficients
        let scale: f64 = a.coeffs().values().sum::<f64>() * prior
            + b.coeffs().values().sum::<f64>() * (1.0 - prior);
        let spec = unit_spec(3);
        for col in 0..spec.side() {
            for row in 0..spec.side() {
                let mixed = prior * a.eval(col, row).unwrap()
                    + (1.0 - prior) * b.eval(col, row).unwrap();
                let got = u.eval(col, row).unwrap() * scale;
                prop_assert!((got - mixed).abs() <= 1e-12, "{got} vs {mixed}");
            }
        }
    }

    /// Intersection stays within the joint support plus the root, before
    /// any thresholding.
    #[test]
    fn intersect_support_is_bounded(a in arb_density(3), b in arb_density(3)) {
        let (c, visits) = intersect_counted(&a, &b, 0.0).unwrap();
        prop_assert!(c.nnz() <= a.nnz() + b.nnz() + 1);
        prop_assert!(visits <= 4 * (a.nnz() + b.nnz() + 1));
        for tile in c.coeffs().keys() {
            prop_assert!(
                a.coeffs().contains_key(tile)
                    || b.coeffs().contains_key(tile)
                    || *tile == TileId::root()
            );
        }
    }

    /// Total variation behaves like a metric on random triples.
    #[test]
    fn tv_distance_is_a_metric(
        p in arb_grid_density(3),
        q in arb_grid_density(3),
        r in arb_grid_density(3),
    ) {
        let pq = p.tv_distance(&q).unwrap();
        let qp = q.tv_distance(&p).unwrap();
        prop_assert!((pq - qp).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&pq));
        prop_assert!(p.tv_distance(&p).unwrap() == 0.0);
        let pr = p.tv_distance(&r).unwrap();
        let rq = r.tv_distance(&q).unwrap();
        prop_assert!(pq <= pr + rq + 1e-12);
    }

    /// Documents round-trip exactly and serialize deterministically.
    #[test]
    fn documents_round_trip(d in arb_density(5)) {
        let text = save(&d);
        let back = load(&text).unwrap();
        prop_assert_eq!(&back, &d);
        prop_assert_eq!(save(&back), text);
    }

    /// Point embedding preserves every retained point and normalizes.
    #[test]
    fn embedding_is_a_normalized_histogram(
        points in proptest::collection::vec((-0.2f64..1.2, -0.2f64..1.2), 1..200),
    ) {
        let spec = unit_spec(3);
        match tiledens::embed_points(&points, &spec) {
            Ok(embedding) => {
                prop_assert_eq!(embedding.retained + embedding.dropped, points.len());
                prop_assert!((embedding.density.sum() - 1.0).abs() <= 1e-12);
            }
            Err(_) => {
                // only legal when nothing landed inside
                prop_assert!(points
                    .iter()
                    .all(|&(x, y)| spec.cell_of_point(x, y).is_none()));
            }
        }
    }
}

/// Thresholding keeps at most 1/delta coefficients, whatever the input.
#[test]
fn threshold_bound_holds_for_many_deltas() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
    for _ in 0..50 {
        let mut coeffs: BTreeMap<TileId, f64> = BTreeMap::new();
        for _ in 0..rng.gen_range(1..3000) {
            let zoom = rng.gen_range(0..=5u8);
            let side = 1u32 << zoom;
            coeffs.insert(
                TileId::new(zoom, rng.gen_range(0..side), rng.gen_range(0..side)).unwrap(),
                rng.gen_range(-1.0..1.0),
            );
        }
        for delta in [0.5, 0.01, 0.001] {
            let kept = tiledens::hard_threshold(&coeffs, delta);
            assert!(kept.len() as f64 <= (1.0 / delta).ceil());
        }
    }
}

proptest! {
    /// Arbitrary corruption of a valid document parses or fails cleanly,
    /// never panics, and accepted documents always carry valid densities.
    #[test]
    fn loader_survives_corruption(
        d in arb_density(3),
        line_no in 0usize..12,
        replacement in "[ -~]{0,30}",
    ) {
        let text = save(&d);
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let slot = line_no % lines.len();
        lines[slot] = replacement;
        let corrupted = lines.join("\n");
        if let Ok(parsed) = load(&corrupted) {
            // whatever got through must be a coherent density
            let total: f64 = parsed.coeffs().values().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            prop_assert!(parsed.coeffs().values().all(|c| c.is_finite() && *c != 0.0));
        }
    }
}
