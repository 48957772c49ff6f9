//! Rate-versus-distance dataset for m = 1, m = 400, and the saturated
//! limit, against the PLOB and single-node bounds (CSV on stdout).
//!
//! ```bash
//! cargo run --example rate_curve > rate_curve.csv
//! ```

use maqkd::analysis::{curve_to_csv, rate_curve, DistanceGrid, ModuleCount, Spacing, SweepSpec};
use maqkd::model::{ConfigPatch, SystemConfig};

fn main() {
    let spec = SweepSpec {
        grid: DistanceGrid {
            min_m: 1e3,
            max_m: 600e3,
            points: 120,
            spacing: Spacing::Log,
        },
        modules: vec![
            ModuleCount::Finite(1),
            ModuleCount::Finite(400),
            ModuleCount::Infinite,
        ],
        overrides: ConfigPatch::default(),
    };
    let points = rate_curve(&SystemConfig::paper_defaults(), &spec).unwrap();
    print!("{}", curve_to_csv(&points, false));
}
