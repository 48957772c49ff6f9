//! Carves the (eta_total, T2) memory parameter plane into regions by the
//! smallest listed module count that beats the PLOB bound (CSV on stdout).
//!
//! ```bash
//! cargo run --example parameter_region > region.csv
//! ```

use maqkd::analysis::{region_grid, DistanceGrid};
use maqkd::model::SystemConfig;

fn log_grid(min: f64, max: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (min.ln() + (max.ln() - min.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn main() {
    let eta_grid = log_grid(1e-3, 1.0, 7);
    let t2_grid = log_grid(1e-2, 1e2, 7);
    let m_list = [1, 10, 100, 1000, 10_000, 100_000];
    let region = region_grid(
        &eta_grid,
        &t2_grid,
        &m_list,
        &SystemConfig::paper_defaults(),
        &DistanceGrid::default_scan(),
    )
    .unwrap();
    assert!(region.monotonicity_violations.is_empty());
    print!("{}", region.to_csv());
}
