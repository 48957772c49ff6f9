//! Dumps the min-detection and produced-pair distributions for a small
//! multiplexed station, plus the closed-form expected pair count.
//!
//! ```bash
//! cargo run --example pair_distributions
//! ```

use maqkd::combinatorics::PairCountDistribution;

fn main() {
    let (m, eta_prime, p_bsm) = (8u32, 0.35, 0.9);
    let d = PairCountDistribution::compute(m, eta_prime, p_bsm);
    println!("m = {m}, eta' = {eta_prime}, p_BSM = {p_bsm}");
    println!("{:>3} {:>14} {:>14}", "k", "P(min = k)", "P(k pairs)");
    for k in 0..=m as usize {
        println!("{k:>3} {:>14.6e} {:>14.6e}", d.min_dist[k], d.pairs_dist[k]);
    }
    let mean_from_dist: f64 = d
        .pairs_dist
        .iter()
        .enumerate()
        .map(|(k, p)| k as f64 * p)
        .sum();
    println!("\nexpected pairs (closed form)   = {:.12}", d.expected_pairs);
    println!("expected pairs (distribution)  = {mean_from_dist:.12}");
}
