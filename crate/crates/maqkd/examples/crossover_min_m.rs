//! Finds the smallest module count whose rate crosses the PLOB bound for
//! the default memory parameters, and reports the crossover window.
//!
//! ```bash
//! cargo run --example crossover_min_m
//! ```

use maqkd::analysis::{beats_plob, min_m_to_beat, DistanceGrid, MinModules};
use maqkd::model::SystemConfig;

fn main() {
    let cfg = SystemConfig::paper_defaults();
    let grid = DistanceGrid::default_scan();
    println!(
        "eta_total = {:.5}, T2 = {} s, L_att = {} km",
        cfg.eta_total(),
        cfg.memory.t2_dephasing,
        cfg.channel.att_length / 1e3
    );
    match min_m_to_beat(&cfg, 1_000_000, &grid).unwrap() {
        MinModules::Feasible(m) => {
            println!("smallest module count beating the PLOB bound: m = {m}");
            for (lo, hi) in beats_plob(&cfg, m, &grid).unwrap() {
                println!("  crossover window at m = {m}: {:.3} .. {:.3} km", lo / 1e3, hi / 1e3);
            }
            let wider = beats_plob(&cfg, 2 * m, &grid).unwrap();
            for (lo, hi) in wider {
                println!("  crossover window at m = {}: {:.3} .. {:.3} km", 2 * m, lo / 1e3, hi / 1e3);
            }
        }
        other => println!("no crossover: {other}"),
    }
}
