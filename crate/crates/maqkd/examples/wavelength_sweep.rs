//! Minimum module count across the bundled fiber attenuation profile:
//! the no-conversion scenario where photons enter the fiber at their
//! native wavelength and the channel loss can be very high (CSV on
//! stdout).
//!
//! ```bash
//! cargo run --example wavelength_sweep > wavelength.csv
//! ```

use maqkd::analysis::{load_fiber_profile, wavelength_sweep, wavelength_to_csv};
use maqkd::model::SystemConfig;
use maqkd::EXAMPLE_FIBER_CSV;

fn main() {
    let profile = load_fiber_profile(EXAMPLE_FIBER_CSV).unwrap();
    let points = wavelength_sweep(&profile, &SystemConfig::paper_defaults(), 1_000_000, None)
        .unwrap();
    print!("{}", wavelength_to_csv(&points));
}
