//! Acceptance suite: one test per release criterion, each printing a
//! pass line (visible with `--nocapture`) and enforcing its runtime
//! budget. Tolerances are pinned here, not configurable.

use std::time::Instant;

use maqkd::analysis::{
    beats_plob, load_fiber_profile, min_m_to_beat, rate_curve, wavelength_sweep,
    wavelength_to_csv, DistanceGrid, MinModules, ModuleCount, Spacing, SweepSpec,
};
use maqkd::bounds::plob_bound;
use maqkd::combinatorics::{expected_pairs, min_detect_dist, pairs_dist};
use maqkd::model::{ConfigPatch, SystemConfig};
use maqkd::montecarlo::estimate;
use maqkd::rates::{
    binary_entropy, click_prob, detect_prob, exp_dephase_expectation, lambda_dp, qber_x, qber_z,
    secret_key_rate, yield_per_channel_use,
};

fn rel_err(actual: f64, expected: f64) -> f64 {
    (actual - expected).abs() / expected.abs().max(f64::MIN_POSITIVE)
}

fn point_a() -> SystemConfig {
    SystemConfig::paper_defaults()
}

/// Single-module quantities coded directly from their original
/// expressions, independent of the general-m implementation path.
mod single_module_oracle {
    use maqkd::model::SystemConfig;

    pub struct Oracle {
        pub yield_y: f64,
        pub e_x: f64,
    }

    pub fn evaluate(cfg: &SystemConfig) -> Oracle {
        let eta = cfg.eta_total()
            * (-cfg.channel.distance_total / (2.0 * cfg.channel.att_length)).exp();
        let pd = cfg.detector.dark_count;
        // 1 - (1 - eta)(1 - p_d)^2, expanded to avoid cancellation.
        let eta_prime = eta + (1.0 - eta) * (2.0 * pd - pd * pd);
        let yield_y = cfg.bsm.p_success
            / (2.0 / eta_prime - 1.0 / (2.0 * eta_prime - eta_prime * eta_prime));

        let t2 = cfg.memory.t2_dephasing;
        let flight = cfg.channel.distance_total / cfg.channel.light_speed;
        let tau = cfg.memory.t_prep + flight;
        let big_e = eta_prime * (-flight / t2).exp() / ((tau / t2).exp_m1() + eta_prime);
        let mean_lambda_a = 0.5 * (1.0 - big_e);
        let lambda_b = 0.5 * -(-flight / t2).exp_m1();
        let eps_dp = mean_lambda_a * (1.0 - lambda_b) + lambda_b * (1.0 - mean_lambda_a);

        let alpha = eta * (1.0 - pd) / eta_prime;
        let vis = cfg.bsm.ideality * alpha * alpha;
        let e = cfg.channel.misalignment;
        let eps_mis = 2.0 * e * (1.0 - e);
        let e_x = vis * (eps_mis * (1.0 - eps_dp) + eps_dp * (1.0 - eps_mis))
            + (1.0 - vis) / 2.0;
        let e_z = vis * eps_mis + (1.0 - vis) / 2.0;
        let rate = (0.5
            * yield_y
            * (1.0 - binary_entropy(e_x) - cfg.ec_inefficiency * binary_entropy(e_z)))
        .max(0.0);
        Oracle { yield_y, e_x, rate }
    }
}

fn random_config(rng: &mut impl rand::Rng) -> SystemConfig {
    let mut cfg = SystemConfig::paper_defaults()
        .with_eta_total(10f64.powf(rng.random_range(-3.0..0.0)))
        .with_t2(10f64.powf(rng.random_range(-3.0..2.0)))
        .with_att_length(rng.random_range(10e3..30e3))
        .with_distance(rng.random_range(0.0..150e3));
    cfg.memory.t_prep = 10f64.powf(rng.random_range(-7.0..-5.0));
    cfg.detector.dark_count = 10f64.powf(rng.random_range(-12.0..-7.0));
    cfg.channel.misalignment = rng.random_range(0.002..0.05);
    cfg.bsm.ideality = rng.random_range(0.9..1.0);
    cfg.bsm.p_success = rng.random_range(0.3..1.0);
    cfg.ec_inefficiency = rng.random_range(1.0..1.5);
    cfg.validate().unwrap();
    cfg
}

#[test]
fn criterion_1_single_module_reduction() {
    use rand::SeedableRng;
    let start = Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xC1);
    let mut worst_y = 0.0f64;
    let mut worst_ex = 0.0f64;
    for _ in 0..200 {
        let cfg = random_config(&mut rng).with_num_modules(1);
        let oracle = single_module_oracle::evaluate(&cfg);
        let y = yield_per_channel_use(&cfg);
        let ex = qber_x(&cfg).unwrap();
        worst_y = worst_y.max(rel_err(y, oracle.yield_y));
        worst_ex = worst_ex.max(rel_err(ex, oracle.e_x));
        assert!(
            rel_err(y, oracle.yield_y) <= 1e-12,
            "yield mismatch: {y} vs {} for {cfg:?}",
            oracle.yield_y
        );
        assert!(
            rel_err(ex, oracle.e_x) <= 1e-12,
            "e_X mismatch: {ex} vs {} for {cfg:?}",
            oracle.e_x
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1 s");
    println!(
        "[PASS] criterion 1: general-m path reduces to the single-module formulas \
         over 200 random configs (worst rel err: yield {worst_y:.2e}, e_X {worst_ex:.2e}; {elapsed:?})"
    );
}

#[test]
fn criterion_2_point_a_crossover_module_count() {
    let start = Instant::now();
    let result = min_m_to_beat(&point_a(), 1_000_000, &DistanceGrid::default_scan()).unwrap();
    let MinModules::Feasible(m) = result else {
        panic!("point A must have a finite crossover, got {result:?}");
    };
    assert!(
        (300..=500).contains(&m),
        "crossover module count {m} outside [300, 500]"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30 s");
    println!("[PASS] criterion 2: point-A crossover at m = {m}, inside [300, 500] ({elapsed:?})");
}

#[test]
fn criterion_3_single_module_never_beats_plob() {
    let start = Instant::now();
    let intervals = beats_plob(&point_a(), 1, &DistanceGrid::default_scan()).unwrap();
    assert!(
        intervals.is_empty(),
        "m = 1 unexpectedly beats PLOB on {intervals:?}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5 s");
    println!("[PASS] criterion 3: m = 1 stays below the PLOB bound at every grid distance ({elapsed:?})");
}

#[test]
fn criterion_4_monte_carlo_matches_closed_forms() {
    let start = Instant::now();
    let mut checked = 0usize;
    for eta_total in [0.3, 0.6] {
        for l_km in [1.0, 5.0] {
            for m in [1u32, 3, 8] {
                let cfg = point_a()
                    .with_eta_total(eta_total)
                    .with_distance(l_km * 1e3)
                    .with_num_modules(m);
                let seed = 1000 + checked as u64;
                let report = estimate(&cfg, 1_000_000, seed).unwrap();
                let breakdown = secret_key_rate(&cfg).unwrap();
                let analytic = [
                    ("Y", breakdown.yield_y),
                    ("exp_dephase", exp_dephase_expectation(&cfg, breakdown.p_s).unwrap()),
                    ("e_X", qber_x(&cfg).unwrap()),
                    ("e_Z", qber_z(&cfg).unwrap()),
                ];
                for ((name, est), (_, exact)) in
                    report.observables().iter().zip(analytic.iter())
                {
                    let window = 4.0 * est.std_error + 1e-12;
                    assert!(
                        (est.mean - exact).abs() <= window,
                        "{name} at eta_total={eta_total}, L={l_km} km, m={m}: \
                         {} vs {exact} exceeds 4 std errors ({:.3e})",
                        est.mean,
                        est.std_error
                    );
                }
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}, budget 2 min");
    println!(
        "[PASS] criterion 4: {checked} configs x 1e6 trials, all four observables \
         within 4 standard errors of the closed forms ({elapsed:?})"
    );
}

#[test]
fn criterion_5_combinatorics_oracles() {
    let start = Instant::now();

    // Normalization of the min-detection distribution.
    for m in 1..=200u32 {
        for eta_prime in [0.01, 0.1, 0.5, 0.9] {
            let total: f64 = min_detect_dist(m, eta_prime).iter().sum();
            assert!(
                (total - 1.0).abs() <= 1e-9,
                "min dist sum {total} at m={m}, eta'={eta_prime}"
            );
        }
    }

    // Closed form against the O(m^2) double sum.
    for m in 1..=50u32 {
        for (eta_prime, p_bsm) in [(0.07, 0.9), (0.3, 0.55), (0.8, 1.0)] {
            let closed = expected_pairs(m, eta_prime, p_bsm);
            let double_sum: f64 = pairs_dist(m, eta_prime, p_bsm)
                .iter()
                .enumerate()
                .map(|(k, p)| k as f64 * p)
                .sum();
            assert!(
                rel_err(closed, double_sum) <= 1e-10,
                "m={m}, eta'={eta_prime}, p_bsm={p_bsm}: {closed} vs {double_sum}"
            );
        }
    }

    // Exhaustive two-module enumeration with rounds truncated at N = 200.
    let mut cfg = point_a().with_eta_total(0.5).with_distance(0.0).with_num_modules(2);
    cfg.detector.dark_count = 0.0;
    let eta_prime = click_prob(detect_prob(&cfg), 0.0);
    assert_eq!(eta_prime, 0.5);
    let p_s = 1.0 - (1.0 - eta_prime) * (1.0 - eta_prime);
    let b = [
        (1.0 - eta_prime) * (1.0 - eta_prime),
        2.0 * eta_prime * (1.0 - eta_prime),
        eta_prime * eta_prime,
    ];
    let mut e_pairs = 0.0;
    for ka in 1..=2usize {
        for kb in 1..=2usize {
            e_pairs += (b[ka] / p_s) * (b[kb] / p_s) * ka.min(kb) as f64 * cfg.bsm.p_success;
        }
    }
    let mut e_max_rounds = 0.0;
    for a in 1..=200i32 {
        for bb in 1..=200i32 {
            let w = (1.0 - p_s).powi(a - 1) * p_s * (1.0 - p_s).powi(bb - 1) * p_s;
            e_max_rounds += w * f64::from(a.max(bb));
        }
    }
    let enumerated = e_pairs / (2.0 * e_max_rounds);
    let y = yield_per_channel_use(&cfg);
    assert!(
        (y - enumerated).abs() <= 1e-8,
        "yield {y} vs enumeration {enumerated}"
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30 s");
    println!(
        "[PASS] criterion 5: normalization (m <= 200), closed-form/double-sum equality \
         (m <= 50), and exhaustive m = 2 enumeration all hold ({elapsed:?})"
    );
}

#[test]
fn criterion_6_analytic_limits() {
    let start = Instant::now();

    // Saturated-yield limit at eta' = 0.1.
    let mut cfg = point_a().with_eta_total(0.1).with_distance(0.0).with_num_modules(100_000);
    cfg.detector.dark_count = 0.0;
    let y = yield_per_channel_use(&cfg);
    let limit = cfg.bsm.p_success * 0.1;
    assert!(
        (y - limit).abs() <= 0.01 * limit,
        "Y(1e5) = {y} not within 1% of {limit}"
    );

    // PLOB small-transmittance slope.
    let eta = 1e-8;
    let ratio = plob_bound(eta) / (eta / std::f64::consts::LN_2);
    assert!((ratio - 1.0).abs() <= 1e-6, "slope ratio {ratio}");

    // Exact limit conventions.
    assert_eq!(lambda_dp(f64::INFINITY, 2.0), 0.5);
    assert_eq!(binary_entropy(0.5), 1.0);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5 s");
    println!(
        "[PASS] criterion 6: saturated yield within 1%, PLOB slope within 1e-6, \
         exact dephasing/entropy limits ({elapsed:?})"
    );
}

#[test]
fn criterion_7_high_loss_trend() {
    let start = Instant::now();
    let profile = load_fiber_profile(maqkd::EXAMPLE_FIBER_CSV).unwrap();
    let points = wavelength_sweep(&profile, &point_a(), 1_000_000, None).unwrap();

    // Traverse by descending attenuation length: 22 km down to 5 m.
    let mut by_loss: Vec<_> = points.iter().collect();
    by_loss.sort_by(|a, b| b.att_length_m.partial_cmp(&a.att_length_m).unwrap());
    assert_eq!(by_loss[0].att_length_m, 22e3);
    assert_eq!(by_loss[by_loss.len() - 1].att_length_m, 5.0);

    let mut prev = u32::MAX;
    for p in &by_loss {
        let MinModules::Feasible(m) = p.min_m else {
            panic!("expected feasibility at {} nm, got {:?}", p.wavelength_nm, p.min_m);
        };
        assert!(
            m <= prev,
            "minimal m rose from {prev} to {m} as attenuation length fell to {} m",
            p.att_length_m
        );
        prev = m;
    }
    assert!(
        prev <= 9,
        "high-loss end needs m = {prev}, expected single digits"
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 1 min");
    println!(
        "[PASS] criterion 7: minimal m nonincreasing along descending attenuation \
         length, reaching m = {prev} at the high-loss end ({elapsed:?})"
    );
}

#[test]
fn criterion_8_worker_count_determinism() {
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                // Criterion 2 computation plus its curve dataset.
                let min_m =
                    min_m_to_beat(&point_a(), 1_000_000, &DistanceGrid::default_scan())
                        .unwrap()
                        .to_string();
                let spec = SweepSpec {
                    grid: DistanceGrid {
                        min_m: 1e3,
                        max_m: 600e3,
                        points: 200,
                        spacing: Spacing::Log,
                    },
                    modules: vec![ModuleCount::Finite(447), ModuleCount::Infinite],
                    overrides: ConfigPatch::default(),
                };
                let curve = maqkd::analysis::curve_to_csv(
                    &rate_curve(&point_a(), &spec).unwrap(),
                    true,
                );

                // One criterion-4 cell with a fixed seed.
                let cfg = point_a()
                    .with_eta_total(0.6)
                    .with_distance(1e3)
                    .with_num_modules(3);
                let sim = estimate(&cfg, 200_000, 77).unwrap().to_csv();

                // Criterion-7 sweep.
                let profile = load_fiber_profile(maqkd::EXAMPLE_FIBER_CSV).unwrap();
                let sweep = wavelength_to_csv(
                    &wavelength_sweep(&profile, &point_a(), 1_000_000, None).unwrap(),
                );
                (min_m, curve, sim, sweep)
            })
    };
    let single = run(1);
    let parallel = run(8);
    assert_eq!(single.0, parallel.0, "min-m result differs across pools");
    assert_eq!(single.1, parallel.1, "rate curve CSV differs across pools");
    assert_eq!(single.2, parallel.2, "simulate CSV differs across pools");
    assert_eq!(single.3, parallel.3, "wavelength CSV differs across pools");
    println!(
        "[PASS] criterion 8: min-m, rate-curve, simulate, and wavelength outputs are \
         byte-identical across 1-thread and 8-thread pools"
    );
}
