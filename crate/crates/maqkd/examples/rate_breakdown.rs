//! Computes every intermediate quantity of one rate evaluation: the
//! default link at 100 km with 400 memory modules, next to the
//! single-module protocol at the same distance.
//!
//! ```bash
//! cargo run --example rate_breakdown
//! ```

use maqkd::model::SystemConfig;
use maqkd::rates::secret_key_rate;

fn main() {
    let base = SystemConfig::paper_defaults().with_distance(100e3);
    for m in [1u32, 400] {
        let b = secret_key_rate(&base.with_num_modules(m)).unwrap();
        println!("m = {m}");
        println!("  eta        = {:.6e}   (photon detection probability)", b.eta);
        println!("  eta'       = {:.6e}   (click probability incl. dark counts)", b.eta_prime);
        println!("  p_s        = {:.6e}   (per-round success probability)", b.p_s);
        println!("  tau        = {:.6e} s (round duration)", b.tau);
        println!("  alpha      = {:.9}  (undepolarized detection weight)", b.alpha_val);
        println!("  eps_mis    = {:.6e}   (misalignment error)", b.eps_mis);
        println!("  eps_dp     = {:.6e}   (dephasing error)", b.eps_dp);
        println!("  e_X        = {:.6e}   (X-basis QBER)", b.e_x);
        println!("  e_Z        = {:.6e}   (Z-basis QBER)", b.e_z);
        println!("  yield Y    = {:.6e}   (raw key bits per channel use)", b.yield_y);
        println!("  rate R     = {:.6e}   (secret bits per channel use per mode)", b.rate);
        println!();
    }
}
