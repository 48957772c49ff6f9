//! Secret key rate model for memory-assisted MDI-QKD with a multiplexed
//! middle station.
//!
//! The middle station holds `m` identical memory modules, each with one
//! quantum memory facing Alice and one facing Bob. Rounds of simultaneous
//! photon emissions repeat on each side until at least one memory is
//! loaded; loaded memories are then paired through a switch and measured
//! jointly, and the surviving pairs yield raw key. This crate computes the
//! asymptotic secret key rate of that protocol in closed form, validates
//! the closed forms against a discrete-event Monte-Carlo simulator, and
//! locates where the protocol beats the repeaterless PLOB capacity bound.
//!
//! Modules:
//!
//! - [`model`] — validated parameter records and the config file format
//! - [`combinatorics`] — stable binomial pmfs and pair-count distributions
//! - [`rates`] — yield, error rates, and the secret key rate formula
//! - [`bounds`] — PLOB and single-node capacity bounds
//! - [`montecarlo`] — seeded, deterministic protocol sampling oracle
//! - [`analysis`] — rate curves, crossover searches, parameter regions,
//!   and the wavelength/high-loss sweep
//!
//! Each major capability has a runnable example under `examples/`; the
//! `maqkd` binary exposes the same operations as subcommands.
//!
//! ```
//! use maqkd::model::SystemConfig;
//! use maqkd::rates::secret_key_rate;
//!
//! let cfg = SystemConfig::paper_defaults()
//!     .with_distance(100e3)
//!     .with_num_modules(400);
//! let breakdown = secret_key_rate(&cfg).unwrap();
//! assert!(breakdown.rate > 0.0);
//! assert!(breakdown.e_x >= breakdown.e_z);
//! ```

pub mod analysis;
pub mod bounds;
pub mod combinatorics;
pub mod csvio;
pub mod model;
pub mod montecarlo;
pub mod rates;

pub use analysis::{DistanceGrid, MinModules, ModuleCount, SweepSpec};
pub use model::{load_config, ConfigError, ConfigPatch, SystemConfig};
pub use montecarlo::{McEstimate, McReport, TrialRecord};
pub use rates::{secret_key_rate, secret_key_rate_limit, RateBreakdown, RateError};

/// The bundled default configuration file, identical to
/// [`SystemConfig::paper_defaults`].
pub const PAPER_DEFAULTS_TEXT: &str = include_str!("../data/paper_defaults.cfg");

/// The bundled synthetic fiber attenuation profile used by the
/// high-loss wavelength sweep example.
pub const EXAMPLE_FIBER_CSV: &str = include_str!("../data/fiber_example.csv");
