//! Reference capacity bounds for the crossover comparisons.

/// Fiber transmittance over length `l`: `exp(-l / L_att)`.
pub fn channel_transmittance(length: f64, att_length: f64) -> f64 {
    debug_assert!(length >= 0.0 && att_length > 0.0);
    (-length / att_length).exp()
}

/// Repeaterless (PLOB) bound: `-log2(1 - eta_ch)` secret bits per channel
/// use for a pure-loss channel of transmittance `eta_ch`. Returns
/// `f64::INFINITY` at `eta_ch = 1`.
pub fn plob_bound(eta_ch: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&eta_ch));
    if eta_ch >= 1.0 {
        return f64::INFINITY;
    }
    -(-eta_ch).ln_1p() / std::f64::consts::LN_2
}

/// Capacity bound for any protocol with a single untrusted node halfway
/// between the parties: `-log2(1 - sqrt(eta_ch))`. Externally sourced
/// companion bound; plotted for context, not subject to hard tolerances.
pub fn single_node_bound(eta_ch: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&eta_ch));
    plob_bound(eta_ch.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transmittance_examples() {
        assert_eq!(channel_transmittance(0.0, 22e3), 1.0);
        assert!((channel_transmittance(22e3, 22e3) - (-1.0f64).exp()).abs() < 1e-16);
        // High-precision reference for exp(-50/22).
        let t = channel_transmittance(50e3, 22e3);
        assert!((t - 0.10303080346176418).abs() < 1e-15 * t);
    }

    #[test]
    fn plob_examples() {
        assert!((plob_bound(0.5) - 1.0).abs() < 1e-15);
        // Small-transmittance scaling: bound / (eta/ln 2) -> 1.
        let eta = 1e-8;
        let ratio = plob_bound(eta) / (eta / std::f64::consts::LN_2);
        assert!((ratio - 1.0).abs() < 1e-6, "ratio {ratio}");
        // High-precision reference for -log2(1 - 0.102923).
        assert!((plob_bound(0.102923) - 0.15669627167097422).abs() < 1e-13);
        assert_eq!(plob_bound(1.0), f64::INFINITY);
    }

    #[test]
    fn single_node_examples() {
        assert!((single_node_bound(0.25) - 1.0).abs() < 1e-15);
        assert_eq!(single_node_bound(0.0), 0.0);
        // A middle node cannot reduce capacity.
        for i in 1..100 {
            let eta = f64::from(i) / 100.0;
            assert!(single_node_bound(eta) >= plob_bound(eta));
        }
    }

    #[test]
    fn plob_is_increasing_and_convex() {
        let grid: Vec<f64> = (1..999).map(|i| f64::from(i) / 1000.0).collect();
        let vals: Vec<f64> = grid.iter().map(|&e| plob_bound(e)).collect();
        for w in vals.windows(2) {
            assert!(w[1] > w[0]);
        }
        for w in vals.windows(3) {
            // Second finite difference nonnegative on the uniform grid.
            assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-12);
        }
    }
}
