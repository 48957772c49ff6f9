//! Discrete-event sampling oracle of the protocol rounds.
//!
//! One trial plays both sides through to a completed pairing step: round
//! counts `N_A`, `N_B` are geometric with the per-round success
//! probability `p_s`, the detection counts of the two successful rounds
//! are zero-truncated binomials, each of the `min(k_A, k_B)` pairings
//! survives its BSM with probability `p_BSM`, and each produced pair draws
//! its X/Z error bits from the channel-model mixture probabilities using
//! the trial's sampled waiting times. The estimates therefore validate the
//! closed forms in `rates` without duplicating their expectation algebra.
//!
//! Determinism: the trial budget is partitioned into fixed-size batches;
//! batch `i` always consumes its own ChaCha substream (`set_stream(i)`),
//! and the per-batch partial sums are reduced in batch order. Results are
//! bit-identical for any worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use thiserror::Error;

use crate::csvio::sig9;
use crate::model::SystemConfig;
use crate::rates::{
    alpha, click_prob, detect_prob, eps_misalignment, lambda_dp, qber_z, round_duration,
    round_success,
};

/// Smallest click probability the sampler accepts; below this the expected
/// number of rounds per trial is impractical at desk scale.
pub const MIN_CLICK_PROB: f64 = 1e-6;

/// Smallest accepted trial budget.
pub const MIN_TRIALS: u64 = 1_000;

const BATCH_SIZE: u64 = 8_192;

#[derive(Debug, Error, PartialEq)]
pub enum McError {
    #[error("n_trials = {0} is below the minimum of {MIN_TRIALS}")]
    TrialCountTooSmall(u64),
    #[error("click probability eta' = {0:e} is below the {MIN_CLICK_PROB:e} sampling guard")]
    ClickProbabilityTooSmall(f64),
    #[error(transparent)]
    Rate(#[from] crate::rates::RateError),
}

/// Outcome of one complete trial (both sides loaded, pairings performed).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialRecord {
    /// Rounds Alice performed until her first detection.
    pub n_a: u64,
    /// Rounds Bob performed until his first detection.
    pub n_b: u64,
    /// Detections in Alice's successful round (>= 1).
    pub k_a: u32,
    /// Detections in Bob's successful round (>= 1).
    pub k_b: u32,
    /// Pairs surviving the Bell state measurements.
    pub pairs_made: u32,
    /// Channel uses consumed: `m * max(N_A, N_B)`.
    pub channel_uses: u64,
}

impl TrialRecord {
    /// Dephasing time of Alice's loaded memories: `N_B tau + L/c`.
    pub fn t_a(&self, cfg: &SystemConfig) -> f64 {
        self.n_b as f64 * round_duration(cfg)
            + cfg.channel.distance_total / cfg.channel.light_speed
    }

    /// Dephasing time of Bob's loaded memories: `L/c`.
    pub fn t_b(&self, cfg: &SystemConfig) -> f64 {
        cfg.channel.distance_total / cfg.channel.light_speed
    }
}

/// Mean, standard error, and sample size of one estimated observable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_trials: u64,
}

/// Estimates of the four validated observables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McReport {
    /// Ratio estimate of the yield: total pairs over total channel uses.
    pub yield_y: McEstimate,
    /// Mean of `exp(-t_A / T2)` over trials.
    pub exp_dephase: McEstimate,
    /// X-basis error fraction over produced pairs.
    pub e_x: McEstimate,
    /// Z-basis error fraction over produced pairs.
    pub e_z: McEstimate,
    pub n_trials: u64,
    pub seed: u64,
}

impl McReport {
    pub fn observables(&self) -> [(&'static str, McEstimate); 4] {
        [
            ("Y", self.yield_y),
            ("exp_dephase", self.exp_dephase),
            ("e_X", self.e_x),
            ("e_Z", self.e_z),
        ]
    }

    /// One CSV row per observable: `name,mean,std_error,n_trials,seed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("observable,mean,std_error,n_trials,seed\n");
        for (name, est) in self.observables() {
            out.push_str(&format!(
                "{name},{},{},{},{}\n",
                sig9(est.mean),
                sig9(est.std_error),
                est.n_trials,
                self.seed
            ));
        }
        out
    }
}

/// Precomputed per-config sampling parameters.
struct TrialSampler {
    m: u32,
    eta_prime: f64,
    p_s: f64,
    p_bsm: f64,
    round_draw: rand_distr::Geometric,
}

impl TrialSampler {
    fn new(cfg: &SystemConfig) -> Result<Self, McError> {
        let eta_prime = click_prob(detect_prob(cfg), cfg.detector.dark_count);
        if eta_prime <= MIN_CLICK_PROB {
            return Err(McError::ClickProbabilityTooSmall(eta_prime));
        }
        let p_s = round_success(cfg.num_modules, eta_prime);
        Ok(TrialSampler {
            m: cfg.num_modules,
            eta_prime,
            p_s,
            p_bsm: cfg.bsm.p_success,
            round_draw: rand_distr::Geometric::new(p_s).expect("p_s in (0, 1]"),
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TrialRecord {
        let n_a = 1 + self.round_draw.sample(rng);
        let n_b = 1 + self.round_draw.sample(rng);
        let k_a = self.truncated_binomial(rng);
        let k_b = self.truncated_binomial(rng);
        let pairs = k_a.min(k_b);
        let pairs_made = if self.p_bsm >= 1.0 {
            pairs
        } else {
            rand_distr::Binomial::new(u64::from(pairs), self.p_bsm)
                .expect("valid p_bsm")
                .sample(rng) as u32
        };
        TrialRecord {
            n_a,
            n_b,
            k_a,
            k_b,
            pairs_made,
            channel_uses: u64::from(self.m) * n_a.max(n_b),
        }
    }

    /// Detection count of a successful round: `Binomial(m, eta')`
    /// conditioned on being >= 1.
    fn truncated_binomial<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if self.p_s >= 0.5 {
            // Acceptance is at least 1/2 per attempt.
            let draw = rand_distr::Binomial::new(u64::from(self.m), self.eta_prime)
                .expect("valid eta'");
            loop {
                let k = draw.sample(rng);
                if k >= 1 {
                    return k as u32;
                }
            }
        }
        // Small p_s: the conditional mass is concentrated at small k, so
        // walk the inverse CDF from k = 1 with the pmf ratio recurrence.
        let u = rng.random::<f64>() * self.p_s;
        let m = f64::from(self.m);
        let ratio = self.eta_prime / (1.0 - self.eta_prime);
        let mut k = 1u32;
        let mut pmf = m * self.eta_prime * ((m - 1.0) * (-self.eta_prime).ln_1p()).exp();
        let mut cum = pmf;
        while cum < u && k < self.m {
            pmf *= (m - f64::from(k)) / f64::from(k + 1) * ratio;
            cum += pmf;
            k += 1;
        }
        k
    }
}

/// Samples one trial. The RNG is caller-seeded, so a fixed seed replays
/// the identical record.
pub fn sample_trial<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<TrialRecord, McError> {
    Ok(TrialSampler::new(cfg)?.sample(rng))
}

#[derive(Clone, Copy, Default)]
struct Accum {
    n: u64,
    pairs: f64,
    pairs_sq: f64,
    uses: f64,
    uses_sq: f64,
    pairs_uses: f64,
    x_err: f64,
    x_sq: f64,
    x_pairs: f64,
    z_err: f64,
    z_sq: f64,
    z_pairs: f64,
    dephase: f64,
    dephase_sq: f64,
}

impl Accum {
    fn merge(mut self, other: &Accum) -> Accum {
        self.n += other.n;
        self.pairs += other.pairs;
        self.pairs_sq += other.pairs_sq;
        self.uses += other.uses;
        self.uses_sq += other.uses_sq;
        self.pairs_uses += other.pairs_uses;
        self.x_err += other.x_err;
        self.x_sq += other.x_sq;
        self.x_pairs += other.x_pairs;
        self.z_err += other.z_err;
        self.z_sq += other.z_sq;
        self.z_pairs += other.z_pairs;
        self.dephase += other.dephase;
        self.dephase_sq += other.dephase_sq;
        self
    }
}

/// Runs `n_trials` independent trials and estimates the yield, the
/// dephasing expectation, and both error rates, with standard errors
/// (delta-method for the ratio estimators).
pub fn estimate(cfg: &SystemConfig, n_trials: u64, seed: u64) -> Result<McReport, McError> {
    if n_trials < MIN_TRIALS {
        return Err(McError::TrialCountTooSmall(n_trials));
    }
    let sampler = TrialSampler::new(cfg)?;
    let visibility = {
        let a = alpha(detect_prob(cfg), cfg.detector.dark_count)?;
        cfg.bsm.ideality * a * a
    };
    let eps_mis = eps_misalignment(cfg.channel.misalignment);
    let e_z_prob = qber_z(cfg)?;
    let tau = round_duration(cfg);
    let flight = cfg.channel.distance_total / cfg.channel.light_speed;
    let t2 = cfg.memory.t2_dephasing;

    let n_batches = n_trials.div_ceil(BATCH_SIZE);
    let partials: Vec<Accum> = (0..n_batches)
        .into_par_iter()
        .map(|batch| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(batch);
            let count = BATCH_SIZE.min(n_trials - batch * BATCH_SIZE);
            let mut acc = Accum::default();
            for _ in 0..count {
                let trial = sampler.sample(&mut rng);
                let t_a = trial.n_b as f64 * tau + flight;
                let lambda_a = lambda_dp(t_a, t2);
                let lambda_b = lambda_dp(flight, t2);
                let lambda_eff =
                    lambda_a * (1.0 - lambda_b) + lambda_b * (1.0 - lambda_a);
                let p_x = visibility
                    * (eps_mis * (1.0 - lambda_eff) + lambda_eff * (1.0 - eps_mis))
                    + (1.0 - visibility) / 2.0;
                let mut x_err = 0u32;
                let mut z_err = 0u32;
                for _ in 0..trial.pairs_made {
                    if rng.random::<f64>() < p_x {
                        x_err += 1;
                    }
                    if rng.random::<f64>() < e_z_prob {
                        z_err += 1;
                    }
                }
                let pairs = f64::from(trial.pairs_made);
                let uses = trial.channel_uses as f64;
                let dephase = (-t_a / t2).exp();
                acc.n += 1;
                acc.pairs += pairs;
                acc.pairs_sq += pairs * pairs;
                acc.uses += uses;
                acc.uses_sq += uses * uses;
                acc.pairs_uses += pairs * uses;
                acc.x_err += f64::from(x_err);
                acc.x_sq += f64::from(x_err) * f64::from(x_err);
                acc.x_pairs += f64::from(x_err) * pairs;
                acc.z_err += f64::from(z_err);
                acc.z_sq += f64::from(z_err) * f64::from(z_err);
                acc.z_pairs += f64::from(z_err) * pairs;
                acc.dephase += dephase;
                acc.dephase_sq += dephase * dephase;
            }
            acc
        })
        .collect();
    // Ordered reduction: identical result for any rayon pool size.
    let total = partials.iter().fold(Accum::default(), Accum::merge);

    let n = total.n as f64;
    let yield_y = ratio_estimate(
        total.pairs,
        total.uses,
        total.pairs_sq,
        total.uses_sq,
        total.pairs_uses,
        total.n,
    );
    let e_x = ratio_estimate(
        total.x_err,
        total.pairs,
        total.x_sq,
        total.pairs_sq,
        total.x_pairs,
        total.n,
    );
    let e_z = ratio_estimate(
        total.z_err,
        total.pairs,
        total.z_sq,
        total.pairs_sq,
        total.z_pairs,
        total.n,
    );
    let dephase_mean = total.dephase / n;
    let dephase_var = ((total.dephase_sq - n * dephase_mean * dephase_mean) / (n - 1.0)).max(0.0);
    let exp_dephase = McEstimate {
        mean: dephase_mean,
        std_error: (dephase_var / n).sqrt(),
        n_trials,
    };
    Ok(McReport {
        yield_y,
        exp_dephase,
        e_x,
        e_z,
        n_trials,
        seed,
    })
}

/// Delta-method mean and standard error of `sum(a) / sum(b)` over `n`
/// i.i.d. per-trial pairs `(a_i, b_i)`.
fn ratio_estimate(sum_a: f64, sum_b: f64, sum_a2: f64, sum_b2: f64, sum_ab: f64, n: u64) -> McEstimate {
    let nf = n as f64;
    if sum_b == 0.0 {
        return McEstimate {
            mean: 0.0,
            std_error: 0.0,
            n_trials: n,
        };
    }
    let mean_a = sum_a / nf;
    let mean_b = sum_b / nf;
    let r = sum_a / sum_b;
    let var_a = ((sum_a2 - nf * mean_a * mean_a) / (nf - 1.0)).max(0.0);
    let var_b = ((sum_b2 - nf * mean_b * mean_b) / (nf - 1.0)).max(0.0);
    let cov = (sum_ab - nf * mean_a * mean_b) / (nf - 1.0);
    let var_r = ((var_a - 2.0 * r * cov + r * r * var_b) / (nf * mean_b * mean_b)).max(0.0);
    McEstimate {
        mean: r,
        std_error: var_r.sqrt(),
        n_trials: n,
    }
}
