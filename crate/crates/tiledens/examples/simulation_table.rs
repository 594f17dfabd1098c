//! Sweep grid depths and weighting exponents on the benchmark mixture,
//! reproducing the shape of the accuracy/size tables.
//!
//! ```bash
//! cargo run --release --example simulation_table
//! ```

use tiledens::{alpha_heuristic, run_experiment, ExperimentConfig, GmmSpec};

fn main() -> tiledens::Result<()> {
    let gmm = GmmSpec::six_mode_fixture(42);
    let cfg = ExperimentConfig::new(100_000, vec![3, 4, 5], vec![0.0, 0.25, 0.5, 0.75, 1.0])?;

    // cells run in parallel; the output order is fixed
    let rows = run_experiment(&gmm, &cfg)?;

    println!(
        "{:>2} {:>5} {:>8} {:>5} {:>8}",
        "k", "alpha", "tv", "nnz", "tv_hist"
    );
    for r in &rows {
        println!(
            "{:>2} {:>5} {:>8.3} {:>5} {:>8.3}",
            r.k, r.alpha, r.tv, r.nnz, r.tv_hist
        );
    }

    // the exponent that maximizes the model size needs no ground truth to
    // compute, and it tracks the best-accuracy exponent
    println!("\nsize-maximizing exponent per depth:");
    for (k, alpha) in alpha_heuristic(&rows) {
        let best_tv = rows
            .iter()
            .filter(|r| r.k == k && !r.tv.is_nan())
            .min_by(|a, b| a.tv.partial_cmp(&b.tv).unwrap())
            .map(|r| r.alpha);
        println!(
            "  k = {k}: alpha = {alpha} (lowest-tv alpha was {})",
            best_tv.map_or("n/a".into(), |a| a.to_string())
        );
    }
    Ok(())
}
