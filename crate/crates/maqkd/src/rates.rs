//! Closed-form yield, error rates, and secret key rate of the protocol for
//! any module count `m >= 1`, plus the `m -> infinity` limit.
//!
//! Waiting-time expectations treat the per-side round counts `N_A`, `N_B`
//! as geometric variables with success parameter `p_s = 1 - (1 - eta')^m`;
//! every `m`-dependence enters through `p_s` and the pair-count
//! combinatorics. The single-module protocol is the exact `m = 1` special
//! case of the same code path.

use thiserror::Error;

use crate::combinatorics::expected_pairs;
use crate::model::SystemConfig;

/// Degenerate parameter combinations for which an error rate is undefined.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum RateError {
    #[error(
        "photon detection probability and dark count probability are both zero; \
         the detected-state mixture weight alpha(eta) is undefined"
    )]
    DegenerateDetection,
    #[error("round success probability is zero; no waiting-time expectation exists")]
    NoClicks,
}

/// Every intermediate quantity of one `(config, L)` rate evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBreakdown {
    /// Photon detection probability `eta` (channel and efficiencies).
    pub eta: f64,
    /// Click probability `eta'` including dark counts.
    pub eta_prime: f64,
    /// Per-round success probability `p_s` of each side.
    pub p_s: f64,
    /// Round duration `tau = T_p + L/c`, seconds.
    pub tau: f64,
    /// Weight `alpha(eta)` of the undepolarized detected state.
    pub alpha_val: f64,
    /// Total misalignment error `2e(1-e)`.
    pub eps_mis: f64,
    /// Expected dephasing error over the waiting times.
    pub eps_dp: f64,
    /// X-basis quantum bit error rate.
    pub e_x: f64,
    /// Z-basis quantum bit error rate.
    pub e_z: f64,
    /// Yield: raw key bits per channel use.
    pub yield_y: f64,
    /// Secret key rate per channel use per mode, clamped at zero.
    pub rate: f64,
    /// Unclamped signed value of the rate formula (used for crossover
    /// root finding).
    pub rate_raw: f64,
}

/// Binary entropy in bits, with `h(0) = h(1) = 0` by continuity.
///
/// Panics if `x` is outside `[0, 1]`.
pub fn binary_entropy(x: f64) -> f64 {
    assert!(
        (0.0..=1.0).contains(&x),
        "binary_entropy: {x} not in [0, 1]"
    );
    if x == 0.0 || x == 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Probability that a photon emitted by a memory module is detected:
/// `eta_total * exp(-L / (2 L_att))`.
pub fn detect_prob(cfg: &SystemConfig) -> f64 {
    cfg.eta_total() * (-cfg.channel.distance_total / (2.0 * cfg.channel.att_length)).exp()
}

/// Probability that a detector clicks, including dark counts:
/// `1 - (1 - eta)(1 - p_d)^2`, evaluated in the cancellation-free form
/// `eta + (1 - eta) p_d (2 - p_d)`.
pub fn click_prob(eta: f64, p_d: f64) -> f64 {
    eta + (1.0 - eta) * p_d * (2.0 - p_d)
}

/// Probability that at least one of `m` detectors clicks in a round:
/// `p_s = 1 - (1 - eta')^m` via `expm1`/`ln_1p`, which stays accurate for
/// arbitrarily small `eta'` (and degrades gracefully to `m * eta'`).
pub fn round_success(m: u32, eta_prime: f64) -> f64 {
    if m == 1 {
        return eta_prime;
    }
    if eta_prime >= 1.0 {
        return 1.0;
    }
    -(f64::from(m) * (-eta_prime).ln_1p()).exp_m1()
}

/// Weight of the undepolarized component of the state reaching the BB84
/// module: `alpha(eta) = eta (1 - p_d) / (1 - (1 - eta)(1 - p_d)^2)`.
pub fn alpha(eta: f64, p_d: f64) -> Result<f64, RateError> {
    if eta == 0.0 && p_d == 0.0 {
        return Err(RateError::DegenerateDetection);
    }
    Ok(eta * (1.0 - p_d) / click_prob(eta, p_d))
}

/// Time between rounds: `tau = T_p + L/c`.
pub fn round_duration(cfg: &SystemConfig) -> f64 {
    cfg.memory.t_prep + cfg.channel.distance_total / cfg.channel.light_speed
}

/// Dephasing weight after storage time `t`: `(1 - exp(-t/T2)) / 2`.
pub fn lambda_dp(t: f64, t2: f64) -> f64 {
    debug_assert!(t >= 0.0 && t2 > 0.0);
    -(-t / t2).exp_m1() / 2.0
}

/// `E[exp(-t_A / T2)]` for `t_A = N_B tau + L/c` with `N_B` geometric of
/// parameter `p_s`:
/// `p_s exp(-L/(c T2)) / (exp(tau/T2) + p_s - 1)`.
pub fn exp_dephase_expectation(cfg: &SystemConfig, p_s: f64) -> Result<f64, RateError> {
    if p_s <= 0.0 {
        return Err(RateError::NoClicks);
    }
    let t2 = cfg.memory.t2_dephasing;
    let flight = cfg.channel.distance_total / cfg.channel.light_speed;
    let tau = round_duration(cfg);
    // Denominator written as expm1(tau/T2) + p_s so the exp(tau/T2) - 1
    // part keeps precision when tau << T2.
    Ok(p_s * (-flight / t2).exp() / ((tau / t2).exp_m1() + p_s))
}

/// Total dephasing error:
/// `(1 - 2 lambda_dp(L/c)) (1/2 - E[exp(-t_A/T2)]/2) + lambda_dp(L/c)`,
/// the expectation of
/// `lambda_dp(t_A)(1 - lambda_dp(t_B)) + lambda_dp(t_B)(1 - lambda_dp(t_A))`
/// with `t_B = L/c`.
pub fn eps_dephasing(cfg: &SystemConfig) -> Result<f64, RateError> {
    let eta_prime = click_prob(detect_prob(cfg), cfg.detector.dark_count);
    let p_s = round_success(cfg.num_modules, eta_prime);
    eps_dephasing_from_ps(cfg, p_s)
}

fn eps_dephasing_from_ps(cfg: &SystemConfig, p_s: f64) -> Result<f64, RateError> {
    let lambda_b = lambda_dp(
        cfg.channel.distance_total / cfg.channel.light_speed,
        cfg.memory.t2_dephasing,
    );
    let big_e = exp_dephase_expectation(cfg, p_s)?;
    Ok((1.0 - 2.0 * lambda_b) * (0.5 - 0.5 * big_e) + lambda_b)
}

/// Total misalignment error `2e(1 - e)` from the two channel arms.
pub fn eps_misalignment(e: f64) -> f64 {
    debug_assert!((0.0..=0.5).contains(&e));
    2.0 * e * (1.0 - e)
}

/// X-basis QBER:
/// `lambda_BSM alpha^2 [eps_mis (1 - eps_dp) + eps_dp (1 - eps_mis)]
///  + (1 - lambda_BSM alpha^2) / 2`.
pub fn qber_x(cfg: &SystemConfig) -> Result<f64, RateError> {
    let eta = detect_prob(cfg);
    let a = alpha(eta, cfg.detector.dark_count)?;
    let eps_dp = eps_dephasing(cfg)?;
    Ok(qber_x_from_parts(cfg, a, eps_dp))
}

fn qber_x_from_parts(cfg: &SystemConfig, alpha_val: f64, eps_dp: f64) -> f64 {
    let visib = cfg.bsm.ideality * alpha_val * alpha_val;
    let eps_mis = eps_misalignment(cfg.channel.misalignment);
    visib * (eps_mis * (1.0 - eps_dp) + eps_dp * (1.0 - eps_mis)) + (1.0 - visib) / 2.0
}

/// Z-basis QBER: `lambda_BSM alpha^2 eps_mis + (1 - lambda_BSM alpha^2)/2`.
/// Independent of `m`, `T2`, and all waiting times.
pub fn qber_z(cfg: &SystemConfig) -> Result<f64, RateError> {
    let eta = detect_prob(cfg);
    let a = alpha(eta, cfg.detector.dark_count)?;
    Ok(qber_z_from_parts(cfg, a))
}

fn qber_z_from_parts(cfg: &SystemConfig, alpha_val: f64) -> f64 {
    let visib = cfg.bsm.ideality * alpha_val * alpha_val;
    visib * eps_misalignment(cfg.channel.misalignment) + (1.0 - visib) / 2.0
}

/// Yield `Y`: expected raw key bits per channel use, with channel uses
/// counted as `m * max(N_A, N_B)`:
///
/// `Y = [ expected_pairs / p_s^2 ] / [ m (2/p_s - 1/(2 p_s - p_s^2)) ]`.
///
/// Returns 0 when `eta' = 0` (no clicks ever, hence no key).
pub fn yield_per_channel_use(cfg: &SystemConfig) -> f64 {
    let eta_prime = click_prob(detect_prob(cfg), cfg.detector.dark_count);
    let p_s = round_success(cfg.num_modules, eta_prime);
    yield_from_parts(cfg.num_modules, eta_prime, p_s, cfg.bsm.p_success)
}

fn yield_from_parts(m: u32, eta_prime: f64, p_s: f64, p_bsm: f64) -> f64 {
    if eta_prime <= 0.0 {
        return 0.0;
    }
    let pairs = expected_pairs(m, eta_prime, p_bsm);
    let channel_uses = f64::from(m) * (2.0 / p_s - 1.0 / (2.0 * p_s - p_s * p_s));
    pairs / (p_s * p_s) / channel_uses
}

/// Full rate evaluation for the configured module count.
pub fn secret_key_rate(cfg: &SystemConfig) -> Result<RateBreakdown, RateError> {
    let eta = detect_prob(cfg);
    let eta_prime = click_prob(eta, cfg.detector.dark_count);
    let p_s = round_success(cfg.num_modules, eta_prime);
    let yield_y = yield_from_parts(cfg.num_modules, eta_prime, p_s, cfg.bsm.p_success);
    assemble_breakdown(cfg, eta, eta_prime, p_s, yield_y)
}

/// Rate evaluation in the `m -> infinity` limit: every round succeeds
/// (`p_s = 1`), the pair deficit `g_m` vanishes, and the yield becomes
/// `p_BSM * eta'`.
pub fn secret_key_rate_limit(cfg: &SystemConfig) -> Result<RateBreakdown, RateError> {
    let eta = detect_prob(cfg);
    let eta_prime = click_prob(eta, cfg.detector.dark_count);
    let yield_y = cfg.bsm.p_success * eta_prime;
    assemble_breakdown(cfg, eta, eta_prime, 1.0, yield_y)
}

fn assemble_breakdown(
    cfg: &SystemConfig,
    eta: f64,
    eta_prime: f64,
    p_s: f64,
    yield_y: f64,
) -> Result<RateBreakdown, RateError> {
    let alpha_val = alpha(eta, cfg.detector.dark_count)?;
    let eps_dp = eps_dephasing_from_ps(cfg, p_s)?;
    let e_x = qber_x_from_parts(cfg, alpha_val, eps_dp);
    let e_z = qber_z_from_parts(cfg, alpha_val);
    let rate_raw = 0.5
        * yield_y
        * (1.0 - binary_entropy(e_x) - cfg.ec_inefficiency * binary_entropy(e_z));
    Ok(RateBreakdown {
        eta,
        eta_prime,
        p_s,
        tau: round_duration(cfg),
        alpha_val,
        eps_mis: eps_misalignment(cfg.channel.misalignment),
        eps_dp,
        e_x,
        e_z,
        yield_y,
        rate: rate_raw.max(0.0),
        rate_raw,
    })
}
