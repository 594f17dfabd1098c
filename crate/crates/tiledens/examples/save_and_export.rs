//! Persist a density to its canonical text document and export it for
//! external tools.
//!
//! ```bash
//! cargo run --release --example save_and_export
//! ```

use tiledens::{
    export_grid, export_tiles, fit_points, load, sample_gmm, save, Bounds, FitConfig, GmmSpec,
    GridSpec, KdeConfig,
};

fn main() -> tiledens::Result<()> {
    let gmm = GmmSpec::six_mode_fixture(7);
    let points = sample_gmm(&gmm, 50_000)?;
    let spec = GridSpec::new(4, Bounds::new(0.0, 1.0, 0.0, 1.0)?)?;
    let fit = fit_points(
        &points,
        &spec,
        &KdeConfig::auto(),
        &FitConfig::new(0.5, 0.001)?,
    )?;

    // the document is line-oriented, sorted, and byte-deterministic
    let text = save(&fit.density);
    println!("--- document header ---");
    for line in text.lines().take(7) {
        println!("{line}");
    }
    println!("... ({} lines total)", text.lines().count());

    // parsing a saved document reproduces the density exactly
    let restored = load(&text)?;
    assert_eq!(restored, fit.density);
    assert_eq!(save(&restored), text);
    println!("round trip is exact and a second save is byte-identical");

    // dense cell export for plotting
    let grid_csv = export_grid(&fit.density);
    let mass: f64 = grid_csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    println!(
        "grid CSV: {} rows, total mass {mass:.9}",
        grid_csv.lines().count() - 1
    );

    // one polygon per tile, in data-unit coordinates, for map overlays
    let geojson = export_tiles(&fit.density);
    let parsed: serde_json::Value = serde_json::from_str(&geojson).expect("valid GeoJSON");
    println!(
        "tile export: {} polygon features",
        parsed["features"].as_array().map_or(0, |f| f.len())
    );
    Ok(())
}
