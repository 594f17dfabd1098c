//! Combine fitted densities: prior-weighted unions and normalized
//! pointwise products, computed directly on the sparse coefficients.
//!
//! ```bash
//! cargo run --release --example set_operations
//! ```

use tiledens::{
    fit_points, intersect, intersect_counted, sample_gmm, union, Bounds, FitConfig, FitResult,
    GmmSpec, GridSpec, KdeConfig,
};

/// Two "time slices" of the same process: the same modes with drifted
/// mixture weights, like densities bucketed by hour.
fn slice(hour: usize) -> GmmSpec {
    let mut gmm = GmmSpec::six_mode_fixture(1000 + hour as u64);
    let phase = hour as f64 / 12.0;
    let mut total = 0.0;
    for (i, mode) in gmm.modes.iter_mut().enumerate() {
        mode.weight *= 1.0 + 0.5 * (std::f64::consts::TAU * (phase + i as f64 / 6.0)).sin();
        total += mode.weight;
    }
    for mode in &mut gmm.modes {
        mode.weight /= total;
    }
    gmm
}

fn fit_slice(hour: usize, spec: &GridSpec) -> tiledens::Result<FitResult> {
    let points = sample_gmm(&slice(hour), 50_000)?;
    fit_points(
        &points,
        spec,
        &KdeConfig::auto(),
        &FitConfig::new(0.5, 0.001)?,
    )
}

fn main() -> tiledens::Result<()> {
    let spec = GridSpec::new(5, Bounds::new(0.0, 1.0, 0.0, 1.0)?)?;
    let morning = fit_slice(8, &spec)?.density;
    let evening = fit_slice(20, &spec)?.density;
    println!(
        "morning: {} tiles, evening: {} tiles",
        morning.nnz(),
        evening.nnz()
    );

    // union: the density of an event from either slice, weighted by priors
    let either = union(&[(0.5, &morning), (0.5, &evening)], 0.001)?;
    println!(
        "union keeps {} tiles (supports mostly line up)",
        either.nnz()
    );

    // self-union returns the original density
    let same = union(&[(0.5, &morning), (0.5, &morning)], 0.001)?;
    assert_eq!(same.coeffs(), morning.coeffs());
    println!("self-union returns the original density");

    // intersection: where would one device be seen in both slices?
    let (both, visits) = intersect_counted(&morning, &evening, 0.001)?;
    println!(
        "intersection keeps {} tiles after {} tile visits (supports total {})",
        both.nnz(),
        visits,
        morning.nnz() + evening.nnz()
    );

    // the product concentrates: its peak value exceeds both factors' peaks
    let peak = |d: &tiledens::SparseDensity| d.unique_values().last().copied().unwrap_or(0.0);
    println!(
        "peak cell mass: morning {:.4}, evening {:.4}, intersection {:.4}",
        peak(&morning),
        peak(&evening),
        peak(&both)
    );

    // intersecting with the uniform density changes nothing
    let uniform = {
        let mut coeffs = std::collections::BTreeMap::new();
        coeffs.insert(tiledens::TileId::root(), 1.0);
        tiledens::SparseDensity::new(spec, coeffs, None)?
    };
    let conditioned = intersect(&morning, &uniform, 0.001)?;
    assert_eq!(conditioned.nnz(), morning.nnz());
    println!("intersection with the uniform density is an identity");
    Ok(())
}
