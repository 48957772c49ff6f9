//! Physical and protocol parameters of the multiplexed memory-assisted
//! MDI-QKD link, plus the flat key-value configuration format.
//!
//! All quantities are stored in SI base units (seconds, meters) with
//! probabilities as dimensionless values in `[0, 1]`. The configuration
//! file format expresses the two fiber lengths in kilometers; conversion
//! happens on ingest by shifting the decimal representation, so
//! serialize/parse round-trips are bit-exact.

use std::fmt::Write as _;

use thiserror::Error;

/// Quantum memory parameters.
///
/// One memory module holds two memories; all `m` modules are identical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryParams {
    /// Dephasing time constant `T2` in seconds.
    pub t2_dephasing: f64,
    /// Preparation time `T_p` per entanglement-generation trial, seconds.
    pub t_prep: f64,
    /// Success probability of preparing the photon-memory entangled state.
    pub eta_prep: f64,
    /// Memory-channel coupling efficiency, including the wavelength
    /// conversion efficiency when a conversion stage is present.
    pub eta_coupling: f64,
}

/// Optical channel parameters. The middle station sits halfway, so each
/// arm has length `distance_total / 2` and both arms share the same
/// misalignment error probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Alice-to-Bob distance `L` in meters.
    pub distance_total: f64,
    /// Fiber attenuation length `L_att` in meters.
    pub att_length: f64,
    /// Speed of light in the fiber, m/s.
    pub light_speed: f64,
    /// Misalignment error probability `e` per arm.
    pub misalignment: f64,
}

/// Threshold detector parameters of the BB84 measurement modules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// Dark count probability per detector per detection attempt.
    pub dark_count: f64,
    /// Detector efficiency.
    pub eta_det: f64,
}

/// Bell state measurement parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsmParams {
    /// BSM success probability.
    pub p_success: f64,
    /// BSM ideality: weight of the undepolarized component of the
    /// memory states entering the measurement.
    pub ideality: f64,
}

/// Complete, validated parameter set for one link configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConfig {
    pub memory: MemoryParams,
    pub channel: ChannelParams,
    pub detector: DetectorParams,
    pub bsm: BsmParams,
    /// Number of memory modules `m` operated in parallel.
    pub num_modules: u32,
    /// Error correction inefficiency `f` (>= 1).
    pub ec_inefficiency: f64,
}

/// Errors from parsing or validating a configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("unknown key `{key}`")]
    UnknownKey { key: String },
    #[error("duplicate key `{key}`")]
    DuplicateKey { key: String },
    #[error("invalid value `{value}` for `{key}`")]
    InvalidValue { key: String, value: String },
    #[error("{field} = {value} violates: {constraint}")]
    OutOfRange {
        field: &'static str,
        value: f64,
        constraint: &'static str,
    },
}

/// All recognized configuration keys, in canonical emission order.
pub const CONFIG_KEYS: [&str; 14] = [
    "memory.t2_s",
    "memory.t_prep_s",
    "memory.eta_prep",
    "memory.eta_coupling",
    "channel.distance_km",
    "channel.att_length_km",
    "channel.light_speed_m_per_s",
    "channel.misalignment",
    "detector.dark_count",
    "detector.eta_det",
    "bsm.p_success",
    "bsm.ideality",
    "protocol.num_modules",
    "protocol.ec_inefficiency",
];

impl SystemConfig {
    /// The default parameter set used throughout the bundled analyses:
    /// second-scale memory dephasing, telecom-fiber attenuation length,
    /// near-ideal BSM, and an overall efficiency
    /// `eta_total = 0.66 * 0.025 * 0.7 = 0.01155`.
    pub fn paper_defaults() -> Self {
        SystemConfig {
            memory: MemoryParams {
                t2_dephasing: 2.0,
                t_prep: 2e-6,
                eta_prep: 0.66,
                eta_coupling: 0.025,
            },
            channel: ChannelParams {
                distance_total: 100e3,
                att_length: 22e3,
                light_speed: 2e8,
                misalignment: 0.01,
            },
            detector: DetectorParams {
                dark_count: 1.8e-11,
                eta_det: 0.7,
            },
            bsm: BsmParams {
                p_success: 1.0,
                ideality: 0.98,
            },
            num_modules: 1,
            ec_inefficiency: 1.16,
        }
    }

    /// Overall efficiency `eta_total = eta_prep * eta_coupling * eta_det`.
    pub fn eta_total(&self) -> f64 {
        self.memory.eta_prep * self.memory.eta_coupling * self.detector.eta_det
    }

    /// Checks every documented field invariant, reporting the first
    /// violation by field name. Values are never silently clamped.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(
            field: &'static str,
            value: f64,
            ok: bool,
            constraint: &'static str,
        ) -> Result<(), ConfigError> {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange {
                    field,
                    value,
                    constraint,
                })
            }
        }

        let m = &self.memory;
        check("memory.t2_s", m.t2_dephasing, m.t2_dephasing > 0.0, "T2 > 0")?;
        check("memory.t_prep_s", m.t_prep, m.t_prep >= 0.0, "T_p >= 0")?;
        check(
            "memory.eta_prep",
            m.eta_prep,
            (0.0..=1.0).contains(&m.eta_prep),
            "0 <= eta_prep <= 1",
        )?;
        check(
            "memory.eta_coupling",
            m.eta_coupling,
            (0.0..=1.0).contains(&m.eta_coupling),
            "0 <= eta_coupling <= 1",
        )?;

        let c = &self.channel;
        check(
            "channel.distance_km",
            c.distance_total,
            c.distance_total >= 0.0,
            "L >= 0",
        )?;
        check(
            "channel.att_length_km",
            c.att_length,
            c.att_length > 0.0,
            "L_att > 0",
        )?;
        check(
            "channel.light_speed_m_per_s",
            c.light_speed,
            c.light_speed > 0.0,
            "c > 0",
        )?;
        check(
            "channel.misalignment",
            c.misalignment,
            (0.0..=0.5).contains(&c.misalignment),
            "0 <= e <= 1/2",
        )?;

        let d = &self.detector;
        check(
            "detector.dark_count",
            d.dark_count,
            (0.0..1.0).contains(&d.dark_count),
            "0 <= p_d < 1",
        )?;
        check(
            "detector.eta_det",
            d.eta_det,
            (0.0..=1.0).contains(&d.eta_det),
            "0 <= eta_det <= 1",
        )?;

        let b = &self.bsm;
        check(
            "bsm.p_success",
            b.p_success,
            b.p_success > 0.0 && b.p_success <= 1.0,
            "0 < p_BSM <= 1",
        )?;
        check(
            "bsm.ideality",
            b.ideality,
            (0.0..=1.0).contains(&b.ideality),
            "0 <= lambda_BSM <= 1",
        )?;

        check(
            "protocol.num_modules",
            f64::from(self.num_modules),
            self.num_modules >= 1,
            "m >= 1",
        )?;
        check(
            "protocol.ec_inefficiency",
            self.ec_inefficiency,
            self.ec_inefficiency >= 1.0,
            "f >= 1",
        )?;
        // Derived quantity; guaranteed by the factor ranges but checked anyway.
        check(
            "eta_total",
            self.eta_total(),
            (0.0..=1.0).contains(&self.eta_total()),
            "0 <= eta_total <= 1",
        )?;
        Ok(())
    }

    /// Serializes to the key-value text format, one `key = value` line per
    /// [`CONFIG_KEYS`] entry. `load_config` of the output reproduces the
    /// config exactly.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let value = match key {
                "memory.t2_s" => fmt_f64(self.memory.t2_dephasing),
                "memory.t_prep_s" => fmt_f64(self.memory.t_prep),
                "memory.eta_prep" => fmt_f64(self.memory.eta_prep),
                "memory.eta_coupling" => fmt_f64(self.memory.eta_coupling),
                "channel.distance_km" => meters_to_km_text(self.channel.distance_total),
                "channel.att_length_km" => meters_to_km_text(self.channel.att_length),
                "channel.light_speed_m_per_s" => fmt_f64(self.channel.light_speed),
                "channel.misalignment" => fmt_f64(self.channel.misalignment),
                "detector.dark_count" => fmt_f64(self.detector.dark_count),
                "detector.eta_det" => fmt_f64(self.detector.eta_det),
                "bsm.p_success" => fmt_f64(self.bsm.p_success),
                "bsm.ideality" => fmt_f64(self.bsm.ideality),
                "protocol.num_modules" => self.num_modules.to_string(),
                "protocol.ec_inefficiency" => fmt_f64(self.ec_inefficiency),
                _ => unreachable!(),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// Copy with a different total distance (meters).
    pub fn with_distance(&self, meters: f64) -> Self {
        let mut cfg = *self;
        cfg.channel.distance_total = meters;
        cfg
    }

    /// Copy with a different attenuation length (meters).
    pub fn with_att_length(&self, meters: f64) -> Self {
        let mut cfg = *self;
        cfg.channel.att_length = meters;
        cfg
    }

    /// Copy with a different module count.
    pub fn with_num_modules(&self, m: u32) -> Self {
        let mut cfg = *self;
        cfg.num_modules = m;
        cfg
    }

    /// Copy with the given overall efficiency. The rate model depends on the
    /// three efficiency factors only through their product, so the target is
    /// installed as `eta_prep` with unit coupling and detection.
    pub fn with_eta_total(&self, eta_total: f64) -> Self {
        let mut cfg = *self;
        cfg.memory.eta_prep = eta_total;
        cfg.memory.eta_coupling = 1.0;
        cfg.detector.eta_det = 1.0;
        cfg
    }

    /// Copy with a different dephasing time constant (seconds).
    pub fn with_t2(&self, t2: f64) -> Self {
        let mut cfg = *self;
        cfg.memory.t2_dephasing = t2;
        cfg
    }
}

fn fmt_f64(x: f64) -> String {
    // Rust's shortest-roundtrip Display guarantees parse(fmt(x)) == x.
    format!("{x}")
}

/// Parses and validates a complete configuration. Keys not present in the
/// text keep their [`SystemConfig::paper_defaults`] values; unknown and
/// duplicate keys are rejected.
pub fn load_config(text: &str) -> Result<SystemConfig, ConfigError> {
    ConfigPatch::parse(text)?.apply(&SystemConfig::paper_defaults())
}

/// A parsed set of `key = value` overrides, applied on top of a base
/// configuration. This is the unit of the CLI's precedence chain
/// (flags over file over defaults).
#[derive(Debug, Clone, Default)]
pub struct ConfigPatch {
    entries: Vec<(usize, String)>, // (index into CONFIG_KEYS, raw value text)
}

impl ConfigPatch {
    /// Parses key-value text. Lines are `key = value`; blank lines and
    /// `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<(usize, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Malformed {
                    line: lineno + 1,
                    text: raw.trim().to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if value.is_empty() {
                return Err(ConfigError::Malformed {
                    line: lineno + 1,
                    text: raw.trim().to_string(),
                });
            }
            let Some(idx) = CONFIG_KEYS.iter().position(|k| *k == key) else {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                });
            };
            if entries.iter().any(|(i, _)| *i == idx) {
                return Err(ConfigError::DuplicateKey {
                    key: key.to_string(),
                });
            }
            entries.push((idx, value.to_string()));
        }
        Ok(ConfigPatch { entries })
    }

    /// Single `key=value` assignment, as accepted by the CLI `--set` flag.
    pub fn parse_assignment(text: &str) -> Result<Self, ConfigError> {
        let patch = Self::parse(text)?;
        if patch.entries.len() == 1 {
            Ok(patch)
        } else {
            Err(ConfigError::Malformed {
                line: 1,
                text: text.to_string(),
            })
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Merges `other` on top of `self` (later assignments win).
    pub fn merged(&self, other: &ConfigPatch) -> ConfigPatch {
        let mut entries: Vec<(usize, String)> = self
            .entries
            .iter()
            .filter(|(i, _)| !other.entries.iter().any(|(j, _)| j == i))
            .cloned()
            .collect();
        entries.extend(other.entries.iter().cloned());
        ConfigPatch { entries }
    }

    /// Applies the overrides to `base` and validates the result.
    pub fn apply(&self, base: &SystemConfig) -> Result<SystemConfig, ConfigError> {
        let mut cfg = *base;
        for (idx, value) in &self.entries {
            let key = CONFIG_KEYS[*idx];
            match key {
                "protocol.num_modules" => {
                    cfg.num_modules = value.parse::<u32>().map_err(|_| {
                        ConfigError::InvalidValue {
                            key: key.to_string(),
                            value: value.clone(),
                        }
                    })?;
                }
                "channel.distance_km" => {
                    cfg.channel.distance_total = parse_km_to_meters(key, value)?;
                }
                "channel.att_length_km" => {
                    cfg.channel.att_length = parse_km_to_meters(key, value)?;
                }
                _ => {
                    let parsed =
                        value
                            .parse::<f64>()
                            .map_err(|_| ConfigError::InvalidValue {
                                key: key.to_string(),
                                value: value.clone(),
                            })?;
                    match key {
                        "memory.t2_s" => cfg.memory.t2_dephasing = parsed,
                        "memory.t_prep_s" => cfg.memory.t_prep = parsed,
                        "memory.eta_prep" => cfg.memory.eta_prep = parsed,
                        "memory.eta_coupling" => cfg.memory.eta_coupling = parsed,
                        "channel.light_speed_m_per_s" => cfg.channel.light_speed = parsed,
                        "channel.misalignment" => cfg.channel.misalignment = parsed,
                        "detector.dark_count" => cfg.detector.dark_count = parsed,
                        "detector.eta_det" => cfg.detector.eta_det = parsed,
                        "bsm.p_success" => cfg.bsm.p_success = parsed,
                        "bsm.ideality" => cfg.bsm.ideality = parsed,
                        "protocol.ec_inefficiency" => cfg.ec_inefficiency = parsed,
                        _ => unreachable!(),
                    }
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_km_to_meters(key: &str, value: &str) -> Result<f64, ConfigError> {
    let shifted = shift_decimal(value, 3).ok_or_else(|| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
    })?;
    shifted.parse::<f64>().map_err(|_| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn meters_to_km_text(meters: f64) -> String {
    // The inverse decimal shift of the shortest-roundtrip representation,
    // so km -> m -> km survives without a lossy binary division by 1000.
    shift_decimal(&fmt_f64(meters), -3).expect("Display of f64 is a valid decimal")
}

/// Multiplies a decimal number literal by 10^shift exactly, as a text
/// transformation. Returns `None` if `s` is not a decimal literal.
fn shift_decimal(s: &str, shift: i32) -> Option<String> {
    let s = s.trim();
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", s.strip_prefix('+').unwrap_or(s)),
    };
    // Scientific notation: adjust the exponent.
    if let Some(epos) = body.find(['e', 'E']) {
        let (mantissa, exp) = (&body[..epos], &body[epos + 1..]);
        if mantissa.is_empty() || !mantissa.chars().all(|c| c.is_ascii_digit() || c == '.') {
            return None;
        }
        let exp: i64 = exp.parse().ok()?;
        return Some(format!("{sign}{mantissa}e{}", exp + i64::from(shift)));
    }
    if body.is_empty() || !body.chars().all(|c| c.is_ascii_digit() || c == '.') {
        return None;
    }
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i.to_string(), f.to_string()),
        None => (body.to_string(), String::new()),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let mut digits: Vec<u8> = int_part.bytes().chain(frac_part.bytes()).collect();
    // Decimal point position counted from the left of `digits`.
    let mut point = int_part.len() as i64 + i64::from(shift);
    // Pad so the point lands inside the digit string.
    while point > digits.len() as i64 {
        digits.push(b'0');
    }
    while point < 0 {
        digits.insert(0, b'0');
        point += 1;
    }
    let point = point as usize;
    let int_str: String = if point == 0 {
        "0".to_string()
    } else {
        String::from_utf8(digits[..point].to_vec()).unwrap()
    };
    let frac_str: String = String::from_utf8(digits[point..].to_vec()).unwrap();
    let frac_trimmed = frac_str.trim_end_matches('0');
    let int_trimmed = {
        let t = int_str.trim_start_matches('0');
        if t.is_empty() {
            "0"
        } else {
            t
        }
    };
    Some(if frac_trimmed.is_empty() {
        format!("{sign}{int_trimmed}")
    } else {
        format!("{sign}{int_trimmed}.{frac_trimmed}")
    })
}
