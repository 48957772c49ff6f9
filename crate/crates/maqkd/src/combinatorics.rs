//! Binomial machinery and the pairing-count distributions of the
//! multiplexed protocol.
//!
//! A round loads `k_A ~ Binomial(m, eta')` memories on Alice's side and
//! `k_B` on Bob's; `min(k_A, k_B)` memories can be paired and each pair
//! survives its Bell state measurement with probability `p_BSM`. The
//! functions here compute the exact distributions of those counts and the
//! closed-form expected pair count used in the yield hot path.

/// Lower bound on `n` before the binomial sums switch to a window around
/// the mean. Terms outside +/- [`WINDOW_SIGMAS`] standard deviations are
/// below 1e-30 relative weight.
const WINDOW_MIN_N: u32 = 10_000;
const WINDOW_SIGMAS: f64 = 12.0;

/// Largest `m` for which `C(m, i)` partial products stay exact in f64.
const EXACT_BINOM_MAX_M: u32 = 30;

/// Binomial probability mass `C(m, i) p^i (1-p)^(m-i)`.
///
/// Exact iterative arithmetic for `m <= 30`; log-gamma evaluation above
/// that, so the result neither overflows nor underflows prematurely for
/// large `m`.
///
/// Panics if `i > m` or `p` is outside `[0, 1]`.
pub fn binom_pmf(i: u32, m: u32, p: f64) -> f64 {
    assert!(i <= m, "binom_pmf: i = {i} out of range 0..={m}");
    assert!((0.0..=1.0).contains(&p), "binom_pmf: p = {p} not in [0, 1]");
    if p == 0.0 {
        return if i == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if i == m { 1.0 } else { 0.0 };
    }
    if m <= EXACT_BINOM_MAX_M {
        // C(m, i) prefix products are integers below 2^53, so this path is
        // bit-stable across platforms.
        let mut c = 1.0_f64;
        for k in 1..=i.min(m - i) {
            c = c * f64::from(m - k + 1) / f64::from(k);
        }
        return c * p.powi(i as i32) * (1.0 - p).powi((m - i) as i32);
    }
    ln_binom_pmf(i, m, p).exp()
}

fn ln_binom_pmf(i: u32, m: u32, p: f64) -> f64 {
    let (i, m, p) = (f64::from(i), f64::from(m), p);
    ln_choose(m, i) + i * p.ln() + (m - i) * (-p).ln_1p()
}

fn ln_choose(m: f64, i: f64) -> f64 {
    libm::lgamma(m + 1.0) - libm::lgamma(i + 1.0) - libm::lgamma(m - i + 1.0)
}

/// Probability mass function of `Binomial(n, p)` on the index range that
/// carries non-negligible weight.
struct BinomialWindow {
    pmf: Vec<f64>,
}

impl BinomialWindow {
    /// `force_full` disables the large-`n` window (used to validate it).
    fn new(n: u32, p: f64, force_full: bool) -> Self {
        debug_assert!(p > 0.0 && p < 1.0);
        let (lo, hi) = if n <= WINDOW_MIN_N || force_full {
            (0u32, n)
        } else {
            let nf = f64::from(n);
            let mean = nf * p;
            let sigma = (nf * p * (1.0 - p)).sqrt();
            let lo = (mean - WINDOW_SIGMAS * sigma - 2.0).floor().max(0.0) as u32;
            let hi = ((mean + WINDOW_SIGMAS * sigma + 2.0).ceil() as u32).min(n);
            (lo, hi)
        };
        // One log-gamma anchor at the mode, then the ratio recurrence
        // B_{i+1}/B_i = ((n-i)/(i+1)) (p/(1-p)) outward in both directions.
        let anchor = ((f64::from(n) + 1.0) * p).floor().min(f64::from(n)) as u32;
        let anchor = anchor.clamp(lo, hi);
        let mut pmf = vec![0.0; (hi - lo + 1) as usize];
        let ratio = p / (1.0 - p);
        pmf[(anchor - lo) as usize] = if n <= EXACT_BINOM_MAX_M {
            binom_pmf(anchor, n, p)
        } else {
            ln_binom_pmf(anchor, n, p).exp()
        };
        for i in anchor..hi {
            let b = pmf[(i - lo) as usize];
            pmf[(i + 1 - lo) as usize] = b * (f64::from(n - i) / f64::from(i + 1)) * ratio;
        }
        for i in (lo..anchor).rev() {
            let b = pmf[(i + 1 - lo) as usize];
            pmf[(i - lo) as usize] = b * (f64::from(i + 1) / f64::from(n - i)) / ratio;
        }
        BinomialWindow { pmf }
    }
}

/// Distribution of `min(k_A, k_B)` for two independent `Binomial(m, p_click)`
/// detection counts. Entry `l` is
/// `2 B_l Q_l - B_l^2` with `Q_l` the suffix sum `sum_{x >= l} B_x`,
/// computed in a single backward pass.
pub fn min_detect_dist(m: u32, p_click: f64) -> Vec<f64> {
    assert!(m >= 1, "min_detect_dist: m must be >= 1");
    let n = m as usize;
    let pmf: Vec<f64> = (0..=m).map(|i| binom_pmf(i, m, p_click)).collect();
    let mut suffix = vec![0.0; n + 2];
    for l in (0..=n).rev() {
        suffix[l] = suffix[l + 1] + pmf[l];
    }
    (0..=n)
        .map(|l| 2.0 * pmf[l] * suffix[l] - pmf[l] * pmf[l])
        .collect()
}

/// Distribution of the number of pairs produced in a round: entry `k >= 1`
/// is `sum_{y = k}^{m} P(min = y) B_k^y(p_bsm)`; entry 0 completes the
/// normalization.
pub fn pairs_dist(m: u32, p_click: f64, p_bsm: f64) -> Vec<f64> {
    assert!(m >= 1, "pairs_dist: m must be >= 1");
    let min_dist = min_detect_dist(m, p_click);
    let mut dist = vec![0.0; m as usize + 1];
    for k in 1..=m {
        let mut acc = 0.0;
        for y in k..=m {
            acc += min_dist[y as usize] * binom_pmf(k, y, p_bsm);
        }
        dist[k as usize] = acc;
    }
    let tail: f64 = dist[1..].iter().sum();
    dist[0] = (1.0 - tail).max(0.0);
    dist
}

/// The pair-deficit term `g_m(eta')`:
/// `eta'(1-eta') [ sum_i B_i^2 + sum_i B_i B_{i-1} ]` over the
/// `Binomial(m-1, eta')` pmf. Vanishes as `m -> infinity` at fixed
/// `eta' in (0, 1)`.
pub fn g_m(m: u32, p_click: f64) -> f64 {
    g_m_impl(m, p_click, false)
}

fn g_m_impl(m: u32, p_click: f64, force_full: bool) -> f64 {
    assert!(m >= 1, "g_m: m must be >= 1");
    assert!(
        (0.0..=1.0).contains(&p_click),
        "g_m: p_click = {p_click} not in [0, 1]"
    );
    if p_click == 0.0 || p_click == 1.0 {
        return 0.0;
    }
    if m == 1 {
        // Binomial(0, p) has the single atom B_0 = 1.
        return p_click * (1.0 - p_click);
    }
    let w = BinomialWindow::new(m - 1, p_click, force_full);
    let mut squares = 0.0;
    let mut adjacent = 0.0;
    for j in 0..w.pmf.len() {
        squares += w.pmf[j] * w.pmf[j];
        if j > 0 {
            adjacent += w.pmf[j] * w.pmf[j - 1];
        }
    }
    p_click * (1.0 - p_click) * (squares + adjacent)
}

/// Expected number of pairs produced per round (both sides unconditioned):
/// the closed form `m p_bsm [eta' - g_m(eta')]`, equal to
/// `sum_k k * pairs_dist[k]`.
pub fn expected_pairs(m: u32, p_click: f64, p_bsm: f64) -> f64 {
    expected_pairs_impl(m, p_click, p_bsm, false)
}

fn expected_pairs_impl(m: u32, p_click: f64, p_bsm: f64, force_full: bool) -> f64 {
    assert!(m >= 1, "expected_pairs: m must be >= 1");
    if p_click == 0.0 {
        return 0.0;
    }
    if p_click == 1.0 {
        return f64::from(m) * p_bsm;
    }
    // eta' - g_m = eta' [ (1 - S) + eta' S ] with S the bracketed sum of
    // g_m. Evaluating (1 - S) by its own positive-term expansion
    //   1 - S = sum_i B_i B_{i+1} + 2 sum_i B_i Q_{i+2}
    // avoids the catastrophic cancellation of eta' - g_m when eta' << 1.
    if m == 1 {
        return p_bsm * p_click * p_click;
    }
    let w = BinomialWindow::new(m - 1, p_click, force_full);
    let len = w.pmf.len();
    let mut suffix = vec![0.0; len + 1];
    for j in (0..len).rev() {
        suffix[j] = suffix[j + 1] + w.pmf[j];
    }
    let mut s = 0.0;
    let mut one_minus_s = 0.0;
    for j in 0..len {
        s += w.pmf[j] * w.pmf[j];
        if j + 1 < len {
            s += w.pmf[j] * w.pmf[j + 1];
            one_minus_s += w.pmf[j] * w.pmf[j + 1];
        }
        if j + 2 < len + 1 {
            one_minus_s += 2.0 * w.pmf[j] * suffix[(j + 2).min(len)];
        }
    }
    f64::from(m) * p_bsm * p_click * (one_minus_s + p_click * s)
}

/// Detection and pairing count distributions for one `(m, eta', p_BSM)`
/// point, bundled for emission.
#[derive(Debug, Clone)]
pub struct PairCountDistribution {
    pub m: u32,
    pub p_click: f64,
    pub p_bsm: f64,
    /// `P(min(k_A, k_B) = l)` for `l = 0..=m`.
    pub min_dist: Vec<f64>,
    /// `P(k pairs produced)` for `k = 0..=m`.
    pub pairs_dist: Vec<f64>,
    /// `sum_k k * pairs_dist[k]`, via the closed form.
    pub expected_pairs: f64,
}

impl PairCountDistribution {
    pub fn compute(m: u32, p_click: f64, p_bsm: f64) -> Self {
        PairCountDistribution {
            m,
            p_click,
            p_bsm,
            min_dist: min_detect_dist(m, p_click),
            pairs_dist: pairs_dist(m, p_click, p_bsm),
            expected_pairs: expected_pairs(m, p_click, p_bsm),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::Distribution;

    fn assert_rel(actual: f64, expected: f64, tol: f64) {
        let denom = expected.abs().max(f64::MIN_POSITIVE);
        assert!(
            (actual - expected).abs() / denom <= tol,
            "actual {actual} vs expected {expected} (rel err {})",
            (actual - expected).abs() / denom
        );
    }

    #[test]
    fn binom_pmf_fair_coin() {
        assert_eq!(binom_pmf(1, 2, 0.5), 0.5);
    }

    #[test]
    fn binom_pmf_degenerate_p() {
        for m in [1, 7, 100, 5000] {
            assert_eq!(binom_pmf(0, m, 0.0), 1.0);
            assert_eq!(binom_pmf(m / 2 + 1, m, 0.0), 0.0);
            assert_eq!(binom_pmf(m, m, 1.0), 1.0);
            assert_eq!(binom_pmf(0, m, 1.0), 0.0);
        }
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn binom_pmf_rejects_out_of_range_i() {
        binom_pmf(3, 2, 0.5);
    }

    /// Exact big-rational oracle for dyadic p: C(m, i) p^i (1-p)^(m-i).
    fn binom_exact(i: u32, m: u32, p_num: u64, p_den_log2: u32) -> f64 {
        use num::{BigInt, BigRational, One, ToPrimitive};
        let mut choose = BigInt::one();
        for k in 1..=i.min(m - i) {
            choose = choose * BigInt::from(m - k + 1) / BigInt::from(k);
        }
        let den = BigInt::one() << p_den_log2;
        let p = BigRational::new(BigInt::from(p_num), den.clone());
        let q = BigRational::new(den.clone() - BigInt::from(p_num), den);
        let value = BigRational::from(choose)
            * num::pow::pow(p, i as usize)
            * num::pow::pow(q, (m - i) as usize);
        value.to_f64().unwrap()
    }

    #[test]
    fn binom_pmf_matches_exact_rational_oracle_small_m() {
        // Dyadic probabilities keep the oracle exact.
        for &(num, den_log2) in &[(1u64, 1u32), (1, 2), (3, 6), (13, 7), (63, 6)] {
            let p = num as f64 / f64::from(1u32 << den_log2);
            for m in 1..=60u32 {
                for i in 0..=m {
                    let exact = binom_exact(i, m, num, den_log2);
                    let got = binom_pmf(i, m, p);
                    assert!(
                        (got - exact).abs() <= 1e-13 * exact.abs().max(1e-300),
                        "B_{i}^{m}({p}): got {got}, exact {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn binom_pmf_large_m_log_gamma_path() {
        // Exact value of C(1000, 500) / 2^1000 from the big-rational oracle.
        let exact = binom_exact(500, 1000, 1, 1);
        assert_rel(binom_pmf(500, 1000, 0.5), exact, 1e-11);
    }

    #[test]
    fn min_detect_dist_m1_half() {
        let d = min_detect_dist(1, 0.5);
        assert_eq!(d.len(), 2);
        // Brute force over the four two-detector outcomes: min = 1 iff both click.
        assert_rel(d[0], 0.75, 1e-15);
        assert_rel(d[1], 0.25, 1e-15);
    }

    #[test]
    fn min_detect_dist_m2_matches_enumeration() {
        let (m, p) = (2u32, 0.3);
        let d = min_detect_dist(m, p);
        // Exhaustive enumeration over (k_A, k_B) in {0,1,2}^2.
        let b: Vec<f64> = (0..=m).map(|i| binom_pmf(i, m, p)).collect();
        let mut expect = vec![0.0; 3];
        for ka in 0..=2usize {
            for kb in 0..=2usize {
                expect[ka.min(kb)] += b[ka] * b[kb];
            }
        }
        for l in 0..=2 {
            assert_rel(d[l], expect[l], 1e-14);
        }
    }

    #[test]
    fn min_detect_dist_certain_detection() {
        for m in [1u32, 5, 40] {
            let d = min_detect_dist(m, 1.0);
            for l in 0..m {
                assert_eq!(d[l as usize], 0.0);
            }
            assert_eq!(d[m as usize], 1.0);
        }
    }

    #[test]
    fn pairs_dist_single_module() {
        let (p_click, p_bsm) = (0.37, 0.81);
        let d = pairs_dist(1, p_click, p_bsm);
        assert_rel(d[1], p_click * p_click * p_bsm, 1e-14);
        assert_rel(d[0], 1.0 - p_click * p_click * p_bsm, 1e-14);
    }

    #[test]
    fn pairs_dist_perfect_bsm_passes_min_through() {
        let (m, p) = (6u32, 0.42);
        let min_d = min_detect_dist(m, p);
        let pair_d = pairs_dist(m, p, 1.0);
        for k in 1..=m as usize {
            assert_rel(pair_d[k], min_d[k], 1e-13);
        }
    }

    #[test]
    fn pairs_dist_matches_sampling_oracle() {
        // Raw binomial draws: k_A, k_B ~ Binomial(m, eta'), pairs ~
        // Binomial(min, p_bsm); frequencies must match within 4 standard
        // errors per bin.
        let (m, p_click, p_bsm) = (3u32, 0.4, 0.7);
        let n_draws = 10_000_000u64;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xD15);
        let draw = rand_distr::Binomial::new(u64::from(m), p_click).unwrap();
        let mut min_counts = [0u64; 4];
        let mut pair_counts = [0u64; 4];
        for _ in 0..n_draws {
            let ka = draw.sample(&mut rng);
            let kb = draw.sample(&mut rng);
            let lo = ka.min(kb);
            min_counts[lo as usize] += 1;
            let pairs = if lo == 0 {
                0
            } else {
                rand_distr::Binomial::new(lo, p_bsm).unwrap().sample(&mut rng)
            };
            pair_counts[pairs as usize] += 1;
        }
        let min_d = min_detect_dist(m, p_click);
        let pair_d = pairs_dist(m, p_click, p_bsm);
        let n = n_draws as f64;
        for k in 0..=3usize {
            for (counts, expect) in [(&min_counts, &min_d), (&pair_counts, &pair_d)] {
                let freq = counts[k] as f64 / n;
                let se = (expect[k] * (1.0 - expect[k]) / n).sqrt();
                assert!(
                    (freq - expect[k]).abs() <= 4.0 * se,
                    "bin {k}: freq {freq} vs {} (4se = {})",
                    expect[k],
                    4.0 * se
                );
            }
        }
    }

    #[test]
    fn g_m_single_module_reduces_to_variance_term() {
        for p in [0.1, 0.35, 0.9] {
            assert_rel(g_m(1, p), p * (1.0 - p), 1e-15);
        }
    }

    #[test]
    fn g_m_matches_direct_summation() {
        let (m, p) = (5u32, 0.35);
        let b: Vec<f64> = (0..m).map(|i| binom_pmf(i, m - 1, p)).collect();
        let mut sum = 0.0;
        for i in 0..b.len() {
            sum += b[i] * b[i];
            if i > 0 {
                sum += b[i] * b[i - 1];
            }
        }
        assert_rel(g_m(m, p), p * (1.0 - p) * sum, 1e-13);
    }

    #[test]
    fn g_m_decreases_toward_zero_with_m() {
        let g10 = g_m(10, 0.1);
        let g1e3 = g_m(1_000, 0.1);
        let g1e5 = g_m(100_000, 0.1);
        assert!(g1e5 < g1e3 && g1e3 < g10, "{g1e5} {g1e3} {g10}");
    }

    #[test]
    fn g_m_windowed_equals_unwindowed() {
        for m in [10_001u32, 15_000, 20_000] {
            for p in [0.01, 0.1, 0.5, 0.9] {
                let windowed = g_m_impl(m, p, false);
                let full = g_m_impl(m, p, true);
                assert_rel(windowed, full, 1e-9);
            }
        }
    }

    #[test]
    fn expected_pairs_single_module_closed_form() {
        for (p_click, p_bsm) in [(0.5, 1.0), (1e-5, 0.8), (0.99, 0.3)] {
            assert_rel(
                expected_pairs(1, p_click, p_bsm),
                p_bsm * p_click * p_click,
                1e-14,
            );
        }
    }

    #[test]
    fn expected_pairs_matches_double_sum() {
        let (m, p_click, p_bsm) = (50u32, 0.2, 0.8);
        let d = pairs_dist(m, p_click, p_bsm);
        let double_sum: f64 = d
            .iter()
            .enumerate()
            .map(|(k, pk)| k as f64 * pk)
            .sum();
        assert_rel(expected_pairs(m, p_click, p_bsm), double_sum, 1e-10);
    }

    #[test]
    fn expected_pairs_all_memories_load() {
        for m in [1u32, 17, 400] {
            assert_rel(expected_pairs(m, 1.0, 0.9), f64::from(m) * 0.9, 1e-15);
        }
    }

    #[test]
    fn expected_pairs_windowed_equals_unwindowed() {
        for m in [12_000u32, 20_000] {
            for p in [0.05, 0.5, 0.95] {
                assert_rel(
                    expected_pairs_impl(m, p, 0.7, false),
                    expected_pairs_impl(m, p, 0.7, true),
                    1e-9,
                );
            }
        }
    }

    #[test]
    fn expected_pairs_monotone_in_each_argument() {
        let ms = [1u32, 2, 5, 20, 80];
        let ps = [0.05, 0.2, 0.5, 0.9];
        let bs = [0.2, 0.6, 1.0];
        for window in ms.windows(2) {
            for &p in &ps {
                for &b in &bs {
                    assert!(
                        expected_pairs(window[1], p, b) >= expected_pairs(window[0], p, b) - 1e-12
                    );
                }
            }
        }
        for &m in &ms {
            for window in ps.windows(2) {
                for &b in &bs {
                    assert!(expected_pairs(m, window[1], b) >= expected_pairs(m, window[0], b));
                }
            }
            for &p in &ps {
                for window in bs.windows(2) {
                    assert!(expected_pairs(m, p, window[1]) >= expected_pairs(m, p, window[0]));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn min_detect_dist_normalizes(m in 1u32..=200, p in 0.0f64..=1.0) {
            let d = min_detect_dist(m, p);
            let total: f64 = d.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9, "sum = {total}");
            prop_assert!(d.iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
        }

        #[test]
        fn closed_form_matches_double_sum(
            m in 1u32..=50,
            p_click in 1e-3f64..=0.999,
            p_bsm in 1e-3f64..=1.0,
        ) {
            let d = pairs_dist(m, p_click, p_bsm);
            let double_sum: f64 = d.iter().enumerate().map(|(k, pk)| k as f64 * pk).sum();
            let closed = expected_pairs(m, p_click, p_bsm);
            prop_assert!(
                (closed - double_sum).abs() <= 1e-10 * double_sum.abs().max(1e-300),
                "closed {closed} vs double sum {double_sum}"
            );
        }

        #[test]
        fn pairs_dist_normalizes(
            m in 1u32..=120,
            p_click in 0.0f64..=1.0,
            p_bsm in 0.0f64..=1.0,
        ) {
            // p_bsm = 0 is outside the validated config range but the
            // distribution itself is still well formed.
            let d = pairs_dist(m, p_click, p_bsm);
            let total: f64 = d.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn expected_pairs_bounded_by_click_rate(
            m in 1u32..=200,
            p_click in 0.0f64..=1.0,
            p_bsm in 1e-3f64..=1.0,
        ) {
            let e = expected_pairs(m, p_click, p_bsm);
            prop_assert!(e <= f64::from(m) * p_bsm * p_click + 1e-9);
            prop_assert!(e >= 0.0);
        }
    }

    #[test]
    fn sampling_oracle_min_dist_eight_modules() {
        // Frequency check of min_detect_dist for m = 8 with raw draws.
        let (m, p_click) = (8u32, 0.23);
        let n_draws = 10_000_000u64;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xF00D);
        let draw = rand_distr::Binomial::new(u64::from(m), p_click).unwrap();
        let mut counts = vec![0u64; m as usize + 1];
        for _ in 0..n_draws {
            let ka = draw.sample(&mut rng);
            let kb = draw.sample(&mut rng);
            counts[ka.min(kb) as usize] += 1;
        }
        let d = min_detect_dist(m, p_click);
        let n = n_draws as f64;
        for l in 0..=m as usize {
            let freq = counts[l] as f64 / n;
            let se = (d[l] * (1.0 - d[l]) / n).sqrt().max(1e-12);
            assert!(
                (freq - d[l]).abs() <= 4.0 * se,
                "l = {l}: {freq} vs {} (4se {})",
                d[l],
                4.0 * se
            );
        }
    }
}
