//! Ingest points from CSV text, choose grid bounds, and fit.
//!
//! ```bash
//! cargo run --release --example fit_from_csv
//! ```

use tiledens::{embed_points, fit_points, read_points_csv, Bounds, FitConfig, GridSpec, KdeConfig};

fn main() -> tiledens::Result<()> {
    // any reader works; files are the usual case. Headers may also be
    // lon,lat, and extra columns are ignored.
    let csv = "\
x,y,label
1.02,3.98,a
1.10,4.11,a
0.95,4.02,b
1.04,3.91,a
6.97,7.03,c
7.10,6.88,c
6.88,7.12,c
2.50,5.50,b
";
    let points = read_points_csv(csv.as_bytes())?;
    println!("read {} points", points.len());

    // cover the data with the smallest square, padded on the long side
    let bounds = Bounds::of_points(&points).expect("non-empty");
    let spec = GridSpec::square_covering(3, bounds)?;
    let b = spec.bounds();
    println!(
        "grid: {}x{} cells over x [{:.2}, {:.2}], y [{:.2}, {:.2}]",
        spec.side(),
        spec.side(),
        b.x_min,
        b.x_max,
        b.y_min,
        b.y_max
    );

    let embedding = embed_points(&points, &spec)?;
    println!(
        "retained {}, dropped {}",
        embedding.retained, embedding.dropped
    );

    // tiny samples are fine; the smoothing bandwidth falls back to
    // Silverman's rule with a half-cell floor
    let fit = fit_points(
        &points,
        &spec,
        &KdeConfig::auto(),
        &FitConfig::new(0.5, 0.01)?,
    )?;
    println!("fitted {} tiles", fit.density.nnz());
    for (tile, weight) in fit.density.coeffs() {
        println!("  tile {tile}  weight {weight:.4}");
    }

    // malformed rows are rejected with their line number
    let broken = "x,y\n0.5,0.5\n0.7,north\n";
    match read_points_csv(broken.as_bytes()) {
        Err(e) => println!("malformed input: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
