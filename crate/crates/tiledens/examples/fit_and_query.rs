//! Fit a sparse density to simulated points, then query it.
//!
//! ```bash
//! cargo run --release --example fit_and_query
//! ```

use tiledens::{
    embed_points, fit_points, sample_gmm, true_grid_density, Bounds, CellRect, FitConfig, GmmSpec,
    GridSpec, KdeConfig,
};

fn main() -> tiledens::Result<()> {
    // 200k draws from the committed six-mode benchmark mixture
    let gmm = GmmSpec::six_mode_fixture(42);
    let points = sample_gmm(&gmm, 200_000)?;

    let spec = GridSpec::new(5, Bounds::new(0.0, 1.0, 0.0, 1.0)?)?;
    let cfg = FitConfig::new(0.5, 0.001)?;
    let fit = fit_points(&points, &spec, &KdeConfig::auto(), &cfg)?;
    let density = &fit.density;

    println!(
        "fitted {} tiles at lambda = {:.4e}",
        density.nnz(),
        fit.lambda
    );

    // point evaluation walks at most k + 1 coefficients, whatever the support
    let (value, lookups) = density.eval_counted(16, 16)?;
    println!("cell (16, 16): value {value:.6}, {lookups} coefficient lookups");

    // region probability touches each coefficient once
    let quadrant = CellRect::new(0, 15, 0, 15)?;
    println!(
        "lower-left quadrant mass: {:.4}",
        density.region_sum(&quadrant)?
    );
    let everything = CellRect::new(0, 31, 0, 31)?;
    println!(
        "whole grid mass:          {:.4}",
        density.region_sum(&everything)?
    );

    // a piecewise-constant density takes at most nnz + 1 distinct values
    let values = density.unique_values();
    println!(
        "{} distinct cell values from {} tiles",
        values.len(),
        density.nnz()
    );

    // compare against the histogram and the generating truth
    let truth = true_grid_density(&gmm, &spec)?;
    let histogram = embed_points(&points, &spec)?.density;
    println!(
        "total variation to truth: fit {:.3} vs raw histogram {:.3}",
        density.tv_distance(&truth)?,
        histogram.tv_distance(&truth)?
    );
    Ok(())
}
