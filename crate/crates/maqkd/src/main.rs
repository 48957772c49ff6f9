//! Command-line front end: configuration loading with
//! flags-over-file-over-defaults precedence, and one subcommand per
//! library capability.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use maqkd::analysis::{
    self, DistanceGrid, ModuleCount, Spacing, SweepSpec, DEFAULT_M_CAP,
};
use maqkd::combinatorics::PairCountDistribution;
use maqkd::csvio::sig9;
use maqkd::model::{ConfigPatch, SystemConfig};
use maqkd::montecarlo;
use maqkd::rates::{click_prob, detect_prob, secret_key_rate};

/// Environment variable naming the default configuration file.
const CONFIG_ENV: &str = "MAQKD_CONFIG";

#[derive(Parser)]
#[command(
    name = "maqkd",
    version,
    about = "Secret key rates of multiplexed memory-assisted MDI-QKD and PLOB crossover analysis"
)]
struct Cli {
    /// Configuration file (key = value lines); falls back to $MAQKD_CONFIG,
    /// then to the built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one configuration key (repeatable), e.g. --set memory.t2_s=5
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Cap the number of parallel worker threads.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the full rate breakdown at one distance.
    Rate {
        /// Total Alice-to-Bob distance in km (overrides the config value).
        #[arg(long, value_name = "KM")]
        distance_km: Option<String>,
        /// Number of memory modules (overrides the config value).
        #[arg(long)]
        m: Option<u32>,
        /// Also write the breakdown as a one-row CSV.
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Rate-versus-distance sweep with the PLOB and single-node bounds.
    Sweep {
        /// Comma-separated module counts; `inf` selects the saturated limit.
        #[arg(long, default_value = "1,400,inf", value_name = "LIST")]
        m: String,
        #[arg(long, default_value_t = 1.0, value_name = "KM")]
        l_min_km: f64,
        #[arg(long, default_value_t = 600.0, value_name = "KM")]
        l_max_km: f64,
        #[arg(long, default_value_t = 500)]
        points: usize,
        /// Linear distance spacing instead of logarithmic.
        #[arg(long)]
        linear: bool,
        /// Append eta, eta', p_s, eps_dp, e_X, e_Z columns per point.
        #[arg(long)]
        emit_intermediates: bool,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Classify the (eta_total, T2) plane by the smallest listed module
    /// count that beats the PLOB bound.
    Region {
        #[arg(long, default_value_t = 1e-3)]
        eta_min: f64,
        #[arg(long, default_value_t = 1.0)]
        eta_max: f64,
        #[arg(long, default_value_t = 13)]
        eta_points: usize,
        #[arg(long, default_value_t = 1e-2, value_name = "S")]
        t2_min_s: f64,
        #[arg(long, default_value_t = 1e2, value_name = "S")]
        t2_max_s: f64,
        #[arg(long, default_value_t = 13)]
        t2_points: usize,
        #[arg(long, default_value = "1,10,100,1000,10000,100000", value_name = "LIST")]
        m_list: String,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Smallest module count beating the PLOB bound for the configuration.
    MinM {
        #[arg(long, default_value_t = DEFAULT_M_CAP)]
        m_cap: u32,
    },
    /// Minimum-module sweep across a fiber attenuation profile.
    Wavelength {
        /// Fiber profile CSV: wavelength_nm plus att_length_km or
        /// loss_db_per_km.
        #[arg(long, value_name = "PATH")]
        fiber: PathBuf,
        #[arg(long, default_value_t = DEFAULT_M_CAP)]
        m_cap: u32,
        /// Resample to this many evenly spaced wavelengths.
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo estimates of Y, E[exp(-t_A/T2)], e_X, e_Z.
    Simulate {
        /// Number of trials; scientific notation accepted (1e6).
        #[arg(long, default_value = "1e6")]
        trials: String,
        /// Master seed; identical seeds replay identical estimates.
        #[arg(long)]
        seed: u64,
        #[arg(long, value_name = "KM")]
        distance_km: Option<String>,
        #[arg(long)]
        m: Option<u32>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Detection-minimum and produced-pair distributions at one distance.
    Dist {
        #[arg(long, value_name = "KM")]
        distance_km: Option<String>,
        #[arg(long)]
        m: Option<u32>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("failed to configure worker pool")?;
    }
    let cfg = effective_config(&cli)?;
    match &cli.command {
        Command::Rate {
            distance_km,
            m,
            csv,
        } => cmd_rate(cfg, distance_km.as_deref(), *m, csv.as_deref()),
        Command::Sweep {
            m,
            l_min_km,
            l_max_km,
            points,
            linear,
            emit_intermediates,
            out,
        } => {
            let modules = parse_module_list(m)?;
            let spec = SweepSpec {
                grid: DistanceGrid {
                    min_m: l_min_km * 1e3,
                    max_m: l_max_km * 1e3,
                    points: *points,
                    spacing: if *linear { Spacing::Linear } else { Spacing::Log },
                },
                modules,
                overrides: ConfigPatch::default(),
            };
            let curve = analysis::rate_curve(&cfg, &spec)?;
            emit(out.as_deref(), &analysis::curve_to_csv(&curve, *emit_intermediates))
        }
        Command::Region {
            eta_min,
            eta_max,
            eta_points,
            t2_min_s,
            t2_max_s,
            t2_points,
            m_list,
            out,
        } => {
            let m_list = parse_u32_list(m_list)?;
            let eta_grid = log_grid(*eta_min, *eta_max, *eta_points)?;
            let t2_grid = log_grid(*t2_min_s, *t2_max_s, *t2_points)?;
            let region = analysis::region_grid(
                &eta_grid,
                &t2_grid,
                &m_list,
                &cfg,
                &DistanceGrid::default_scan(),
            )?;
            for (i, j) in &region.monotonicity_violations {
                eprintln!(
                    "warning: non-monotone classification at eta_total={}, T2={}",
                    sig9(region.eta_grid[*i]),
                    sig9(region.t2_grid[*j])
                );
            }
            emit(out.as_deref(), &region.to_csv())
        }
        Command::MinM { m_cap } => {
            let result =
                analysis::min_m_to_beat(&cfg, *m_cap, &DistanceGrid::default_scan())?;
            println!("{result}");
            Ok(())
        }
        Command::Wavelength {
            fiber,
            m_cap,
            points,
            out,
        } => {
            let text = fs::read_to_string(fiber)
                .with_context(|| format!("cannot read fiber profile {}", fiber.display()))?;
            let profile = analysis::load_fiber_profile(&text)?;
            let sweep = analysis::wavelength_sweep(&profile, &cfg, *m_cap, *points)?;
            emit(out.as_deref(), &analysis::wavelength_to_csv(&sweep))
        }
        Command::Simulate {
            trials,
            seed,
            distance_km,
            m,
            out,
        } => {
            let cfg = apply_common_overrides(cfg, distance_km.as_deref(), *m)?;
            let n_trials = parse_trials(trials)?;
            let report = montecarlo::estimate(&cfg, n_trials, *seed)?;
            emit(out.as_deref(), &report.to_csv())
        }
        Command::Dist {
            distance_km,
            m,
            out,
        } => {
            let cfg = apply_common_overrides(cfg, distance_km.as_deref(), *m)?;
            let eta_prime = click_prob(detect_prob(&cfg), cfg.detector.dark_count);
            let d =
                PairCountDistribution::compute(cfg.num_modules, eta_prime, cfg.bsm.p_success);
            let mut csv = String::from("k,min_dist,pairs_dist\n");
            for k in 0..d.min_dist.len() {
                csv.push_str(&format!(
                    "{k},{},{}\n",
                    sig9(d.min_dist[k]),
                    sig9(d.pairs_dist[k])
                ));
            }
            emit(out.as_deref(), &csv)
        }
    }
}

/// Resolves the configuration with flags > file > built-in defaults.
fn effective_config(cli: &Cli) -> Result<SystemConfig> {
    let mut cfg = SystemConfig::paper_defaults();
    let path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    if let Some(path) = path {
        let text = fs::read_to_string(&path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        cfg = ConfigPatch::parse(&text)
            .and_then(|p| p.apply(&cfg))
            .with_context(|| format!("invalid config file {}", path.display()))?;
    }
    for assignment in &cli.set {
        cfg = ConfigPatch::parse_assignment(assignment)
            .and_then(|p| p.apply(&cfg))
            .with_context(|| format!("invalid --set {assignment}"))?;
    }
    Ok(cfg)
}

/// Applies the per-subcommand distance/module overrides. Distances go
/// through the config parser so that km values keep their exact decimal
/// semantics.
fn apply_common_overrides(
    cfg: SystemConfig,
    distance_km: Option<&str>,
    m: Option<u32>,
) -> Result<SystemConfig> {
    let mut cfg = cfg;
    if let Some(km) = distance_km {
        cfg = ConfigPatch::parse_assignment(&format!("channel.distance_km={km}"))
            .and_then(|p| p.apply(&cfg))
            .with_context(|| format!("invalid --distance-km {km}"))?;
    }
    if let Some(m) = m {
        cfg = cfg.with_num_modules(m);
        cfg.validate()?;
    }
    Ok(cfg)
}

fn cmd_rate(
    cfg: SystemConfig,
    distance_km: Option<&str>,
    m: Option<u32>,
    csv: Option<&std::path::Path>,
) -> Result<()> {
    let cfg = apply_common_overrides(cfg, distance_km, m)?;
    let b = secret_key_rate(&cfg)?;
    let fields: [(&str, f64); 14] = [
        ("distance_km", cfg.channel.distance_total / 1e3),
        ("m", f64::from(cfg.num_modules)),
        ("eta", b.eta),
        ("eta_prime", b.eta_prime),
        ("p_s", b.p_s),
        ("tau_s", b.tau),
        ("alpha", b.alpha_val),
        ("eps_mis", b.eps_mis),
        ("eps_dp", b.eps_dp),
        ("e_x", b.e_x),
        ("e_z", b.e_z),
        ("yield", b.yield_y),
        ("rate_raw", b.rate_raw),
        ("rate", b.rate),
    ];
    for (name, value) in fields {
        println!("{name} = {value}");
    }
    if let Some(path) = csv {
        let header: Vec<&str> = fields.iter().map(|(n, _)| *n).collect();
        let row: Vec<String> = fields.iter().map(|(_, v)| sig9(*v)).collect();
        let content = format!("{}\n{}\n", header.join(","), row.join(","));
        fs::write(path, content)
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn parse_module_list(text: &str) -> Result<Vec<ModuleCount>> {
    let list: Result<Vec<ModuleCount>, String> =
        text.split(',').map(|s| s.trim().parse()).collect();
    let list = list.map_err(|e| anyhow::anyhow!(e))?;
    if list.is_empty() {
        bail!("module list is empty");
    }
    Ok(list)
}

fn parse_u32_list(text: &str) -> Result<Vec<u32>> {
    text.split(',')
        .map(|s| {
            let m: u32 = s
                .trim()
                .parse()
                .with_context(|| format!("bad module count `{s}`"))?;
            if m == 0 {
                bail!("module counts must be >= 1");
            }
            Ok(m)
        })
        .collect()
}

fn parse_trials(text: &str) -> Result<u64> {
    let value: f64 = text
        .parse()
        .with_context(|| format!("invalid trial count `{text}`"))?;
    if !(value.is_finite() && value >= 1.0 && value.fract() == 0.0 && value <= 2f64.powi(53)) {
        bail!("trial count `{text}` must be a positive integer");
    }
    Ok(value as u64)
}

fn log_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && min < max && points >= 2) {
        bail!("invalid log grid {min}..{max} with {points} points");
    }
    Ok((0..points)
        .map(|i| (min.ln() + (max.ln() - min.ln()) * i as f64 / (points - 1) as f64).exp())
        .collect())
}

/// Writes `content` to the given path, or to stdout when no path is set.
fn emit(path: Option<&std::path::Path>, content: &str) -> Result<()> {
    match path {
        Some(path) => {
            fs::write(path, content).with_context(|| format!("cannot write {}", path.display()))
        }
        None => std::io::stdout()
            .write_all(content.as_bytes())
            .context("cannot write to stdout"),
    }
}
