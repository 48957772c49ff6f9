//! Reproduction drivers: rate-versus-distance curves, minimum-module
//! crossover searches against the PLOB bound, the memory parameter region
//! carving, and the wavelength/high-loss sweep over a fiber attenuation
//! profile.

use rayon::prelude::*;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::bounds::{channel_transmittance, plob_bound, single_node_bound};
use crate::csvio::sig9;
use crate::model::{ConfigError, ConfigPatch, SystemConfig};
use crate::rates::{secret_key_rate, secret_key_rate_limit, RateBreakdown, RateError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error("invalid grid: {0}")]
    BadGrid(String),
}

/// Distance grid specification in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceGrid {
    pub min_m: f64,
    pub max_m: f64,
    pub points: usize,
    pub spacing: Spacing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

impl DistanceGrid {
    /// The default crossover scan: 2000 log-spaced points from 1 m to
    /// 800 km, resolving both sub-kilometer high-loss links and telecom
    /// distances.
    pub fn default_scan() -> Self {
        DistanceGrid {
            min_m: 1.0,
            max_m: 800e3,
            points: 2000,
            spacing: Spacing::Log,
        }
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.min_m < self.max_m) {
            return Err(AnalysisError::BadGrid(format!(
                "min {} must be below max {}",
                self.min_m, self.max_m
            )));
        }
        if self.points < 2 {
            return Err(AnalysisError::BadGrid("need at least 2 points".into()));
        }
        if self.spacing == Spacing::Log && self.min_m <= 0.0 {
            return Err(AnalysisError::BadGrid(
                "log spacing requires a positive minimum".into(),
            ));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| {
                let w = i as f64 / (n - 1) as f64;
                match self.spacing {
                    Spacing::Linear => self.min_m + w * (self.max_m - self.min_m),
                    Spacing::Log => {
                        (self.min_m.ln() + w * (self.max_m.ln() - self.min_m.ln())).exp()
                    }
                }
            })
            .collect()
    }
}

/// A module count in a sweep: a finite `m` or the saturated-protocol limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModuleCount {
    Finite(u32),
    Infinite,
}

impl fmt::Display for ModuleCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModuleCount::Finite(m) => write!(f, "{m}"),
            ModuleCount::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for ModuleCount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(ModuleCount::Infinite);
        }
        let m: u32 = t.parse().map_err(|_| format!("invalid module count `{s}`"))?;
        if m == 0 {
            return Err("module count must be >= 1".into());
        }
        Ok(ModuleCount::Finite(m))
    }
}

/// Specification of one rate-versus-distance sweep.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub grid: DistanceGrid,
    pub modules: Vec<ModuleCount>,
    /// Partial configuration deltas applied on top of the base config.
    pub overrides: ConfigPatch,
}

/// One (distance, module count) evaluation with its reference bounds.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub distance_m: f64,
    pub modules: ModuleCount,
    pub breakdown: RateBreakdown,
    pub plob: f64,
    pub single_node: f64,
}

fn breakdown_for(cfg: &SystemConfig, modules: ModuleCount) -> Result<RateBreakdown, RateError> {
    match modules {
        ModuleCount::Finite(m) => secret_key_rate(&cfg.with_num_modules(m)),
        ModuleCount::Infinite => secret_key_rate_limit(cfg),
    }
}

/// Evaluates the secret key rate and both capacity bounds over the sweep
/// grid, distance-major then module order. Points are independent and
/// evaluated in parallel with deterministic output ordering.
pub fn rate_curve(cfg: &SystemConfig, spec: &SweepSpec) -> Result<Vec<CurvePoint>, AnalysisError> {
    spec.grid.validate()?;
    if spec.modules.is_empty() {
        return Err(AnalysisError::BadGrid("no module counts listed".into()));
    }
    let cfg = spec.overrides.apply(cfg)?;
    let distances = spec.grid.values();
    let rows: Result<Vec<Vec<CurvePoint>>, RateError> = distances
        .par_iter()
        .map(|&l| {
            let at_l = cfg.with_distance(l);
            let eta_ch = channel_transmittance(l, cfg.channel.att_length);
            spec.modules
                .iter()
                .map(|&modules| {
                    Ok(CurvePoint {
                        distance_m: l,
                        modules,
                        breakdown: breakdown_for(&at_l, modules)?,
                        plob: plob_bound(eta_ch),
                        single_node: single_node_bound(eta_ch),
                    })
                })
                .collect()
        })
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}

/// CSV emission for [`rate_curve`]. With `intermediates` the per-point
/// diagnostic quantities are appended as extra columns.
pub fn curve_to_csv(points: &[CurvePoint], intermediates: bool) -> String {
    let mut out = String::from("L_km,m,R,plob,single_node");
    if intermediates {
        out.push_str(",eta,eta_prime,p_s,eps_dp,e_x,e_z");
    }
    out.push('\n');
    for p in points {
        let b = &p.breakdown;
        out.push_str(&format!(
            "{},{},{},{},{}",
            sig9(p.distance_m / 1e3),
            p.modules,
            sig9(b.rate),
            sig9(p.plob),
            sig9(p.single_node)
        ));
        if intermediates {
            out.push_str(&format!(
                ",{},{},{},{},{},{}",
                sig9(b.eta),
                sig9(b.eta_prime),
                sig9(b.p_s),
                sig9(b.eps_dp),
                sig9(b.e_x),
                sig9(b.e_z)
            ));
        }
        out.push('\n');
    }
    out
}

/// Signed margin between the unclamped rate and the PLOB bound at
/// distance `l`.
fn plob_margin(cfg: &SystemConfig, l: f64) -> Result<f64, RateError> {
    let b = secret_key_rate(&cfg.with_distance(l))?;
    Ok(b.rate_raw - plob_bound(channel_transmittance(l, cfg.channel.att_length)))
}

fn limit_margin(cfg: &SystemConfig, l: f64) -> Result<f64, RateError> {
    let b = secret_key_rate_limit(&cfg.with_distance(l))?;
    Ok(b.rate_raw - plob_bound(channel_transmittance(l, cfg.channel.att_length)))
}

/// Distance intervals (meters) on which the raw rate with `m` modules
/// exceeds the PLOB bound, located by a sign-change scan over the grid and
/// refined to 1 m by bisection. Empty when no grid point qualifies.
pub fn beats_plob(
    cfg: &SystemConfig,
    m: u32,
    grid: &DistanceGrid,
) -> Result<Vec<(f64, f64)>, AnalysisError> {
    grid.validate()?;
    let cfg = cfg.with_num_modules(m);
    let ls = grid.values();
    let margins: Result<Vec<f64>, RateError> =
        ls.par_iter().map(|&l| plob_margin(&cfg, l)).collect();
    let margins = margins?;

    let mut intervals = Vec::new();
    let mut i = 0;
    while i < ls.len() {
        if margins[i] > 0.0 {
            let run_start = i;
            while i + 1 < ls.len() && margins[i + 1] > 0.0 {
                i += 1;
            }
            let run_end = i;
            let lo = if run_start == 0 {
                ls[0]
            } else {
                bisect_edge(&cfg, ls[run_start - 1], ls[run_start], true)?
            };
            let hi = if run_end == ls.len() - 1 {
                ls[run_end]
            } else {
                bisect_edge(&cfg, ls[run_end], ls[run_end + 1], false)?
            };
            intervals.push((lo, hi));
        }
        i += 1;
    }
    Ok(intervals)
}

/// Refines a crossover edge to 1 m. For a rising edge the left endpoint is
/// non-positive; for a falling edge the right endpoint is.
fn bisect_edge(
    cfg: &SystemConfig,
    mut lo: f64,
    mut hi: f64,
    rising: bool,
) -> Result<f64, RateError> {
    while hi - lo > 1.0 {
        let mid = 0.5 * (lo + hi);
        let positive = plob_margin(cfg, mid)? > 0.0;
        if positive == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(if rising { hi } else { lo })
}

/// Scan-only variant used by the module-count searches.
fn beats_anywhere(
    cfg: &SystemConfig,
    m: u32,
    distances: &[f64],
) -> Result<bool, RateError> {
    let cfg = cfg.with_num_modules(m);
    for &l in distances {
        if plob_margin(&cfg, l)? > 0.0 {
            return Ok(true);
        }
    }
    Ok(false)
}

fn limit_beats_anywhere(cfg: &SystemConfig, distances: &[f64]) -> Result<bool, RateError> {
    for &l in distances {
        if limit_margin(cfg, l)? > 0.0 {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Result of a minimum-module search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinModules {
    /// Smallest module count whose rate exceeds the PLOB bound somewhere.
    Feasible(u32),
    /// Even the `m -> infinity` protocol stays below the bound everywhere.
    Infeasible,
    /// The search cap was exhausted without a crossover, but the limit
    /// protocol does cross, so some larger `m` would succeed.
    InfeasibleAtCap(u32),
}

impl fmt::Display for MinModules {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MinModules::Feasible(m) => write!(f, "{m}"),
            MinModules::Infeasible => write!(f, "infeasible"),
            MinModules::InfeasibleAtCap(cap) => write!(f, ">{cap}"),
        }
    }
}

/// Default cap for the minimum-module searches.
pub const DEFAULT_M_CAP: u32 = 1_000_000;

/// Minimal number of modules needed to beat the PLOB bound at any grid
/// distance: the saturated limit is checked first (an immediate
/// `Infeasible` when it fails), then exponential search plus bisection,
/// assuming the crossover predicate is monotone in `m`. The result's
/// neighbors are verified; a monotonicity violation degrades to a linear
/// scan.
pub fn min_m_to_beat(
    cfg: &SystemConfig,
    m_cap: u32,
    grid: &DistanceGrid,
) -> Result<MinModules, AnalysisError> {
    grid.validate()?;
    let distances = grid.values();
    if !limit_beats_anywhere(cfg, &distances)? {
        return Ok(MinModules::Infeasible);
    }

    // Exponential search for the first feasible power of two (or the cap).
    let mut lo = 0u32; // largest known-infeasible m
    let mut hi: Option<u32> = None;
    let mut probe = 1u32;
    loop {
        if beats_anywhere(cfg, probe, &distances)? {
            hi = Some(probe);
            break;
        }
        lo = probe;
        if probe >= m_cap {
            break;
        }
        probe = probe.saturating_mul(2).min(m_cap);
    }
    let Some(mut hi) = hi else {
        return Ok(MinModules::InfeasibleAtCap(m_cap));
    };

    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if beats_anywhere(cfg, mid, &distances)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    // Neighbor verification; on violation fall back to a linear scan.
    let consistent = beats_anywhere(cfg, hi, &distances)?
        && (hi == 1 || !beats_anywhere(cfg, hi - 1, &distances)?);
    if consistent {
        return Ok(MinModules::Feasible(hi));
    }
    for m in 1..=m_cap {
        if beats_anywhere(cfg, m, &distances)? {
            return Ok(MinModules::Feasible(m));
        }
    }
    Ok(MinModules::InfeasibleAtCap(m_cap))
}

/// Classification of the memory parameter plane: for each
/// `(eta_total, T2)` cell, the smallest listed module count that beats the
/// PLOB bound.
#[derive(Debug, Clone)]
pub struct RegionResult {
    pub eta_grid: Vec<f64>,
    pub t2_grid: Vec<f64>,
    /// Row-major over `eta_grid` (rows) and `t2_grid` (columns); `None`
    /// marks cells where no listed module count suffices.
    pub cells: Vec<Option<u32>>,
    /// Cells whose classification increases along growing `eta_total` or
    /// `T2` (a physically unexpected reversal). Flagged, never hidden.
    pub monotonicity_violations: Vec<(usize, usize)>,
}

impl RegionResult {
    pub fn cell(&self, eta_idx: usize, t2_idx: usize) -> Option<u32> {
        self.cells[eta_idx * self.t2_grid.len() + t2_idx]
    }

    /// CSV rows `eta_total,T2_s,min_m` in row-major cell order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eta_total,T2_s,min_m\n");
        for (i, &eta) in self.eta_grid.iter().enumerate() {
            for (j, &t2) in self.t2_grid.iter().enumerate() {
                let label = match self.cell(i, j) {
                    Some(m) => m.to_string(),
                    None => "infeasible".to_string(),
                };
                out.push_str(&format!("{},{},{label}\n", sig9(eta), sig9(t2)));
            }
        }
        out
    }
}

/// Classifies every cell of the `(eta_total, T2)` lattice against the
/// sorted `m_list`. Cells are independent and evaluated in parallel;
/// output ordering is row-major and reproducible across worker counts.
pub fn region_grid(
    eta_grid: &[f64],
    t2_grid: &[f64],
    m_list: &[u32],
    base_cfg: &SystemConfig,
    grid: &DistanceGrid,
) -> Result<RegionResult, AnalysisError> {
    grid.validate()?;
    if eta_grid.is_empty() || t2_grid.is_empty() || m_list.is_empty() {
        return Err(AnalysisError::BadGrid(
            "region grids and module list must be nonempty".into(),
        ));
    }
    let mut m_list: Vec<u32> = m_list.to_vec();
    m_list.sort_unstable();
    m_list.dedup();
    let distances = grid.values();

    let cells: Result<Vec<Option<u32>>, AnalysisError> = (0..eta_grid.len() * t2_grid.len())
        .into_par_iter()
        .map(|flat| {
            let cfg = base_cfg
                .with_eta_total(eta_grid[flat / t2_grid.len()])
                .with_t2(t2_grid[flat % t2_grid.len()]);
            if !limit_beats_anywhere(&cfg, &distances)? {
                return Ok(None);
            }
            for &m in &m_list {
                if beats_anywhere(&cfg, m, &distances)? {
                    return Ok(Some(m));
                }
            }
            Ok(None)
        })
        .collect();
    let cells = cells?;

    let rank = |c: Option<u32>| c.map_or(u64::MAX, u64::from);
    let mut violations = Vec::new();
    for i in 0..eta_grid.len() {
        for j in 0..t2_grid.len() {
            let here = rank(cells[i * t2_grid.len() + j]);
            if i > 0 && eta_grid[i] > eta_grid[i - 1] {
                let below = rank(cells[(i - 1) * t2_grid.len() + j]);
                if here > below {
                    violations.push((i, j));
                }
            }
            if j > 0 && t2_grid[j] > t2_grid[j - 1] {
                let left = rank(cells[i * t2_grid.len() + j - 1]);
                if here > left {
                    violations.push((i, j));
                }
            }
        }
    }
    Ok(RegionResult {
        eta_grid: eta_grid.to_vec(),
        t2_grid: t2_grid.to_vec(),
        cells,
        monotonicity_violations: violations,
    })
}

#[derive(Debug, Error)]
pub enum FiberError {
    #[error("fiber profile needs columns `wavelength_nm` and `att_length_km` or `loss_db_per_km`, got `{0}`")]
    Header(String),
    #[error("fiber profile line {line}: `{text}` is not `wavelength,attenuation`")]
    Malformed { line: usize, text: String },
    #[error("fiber profile line {line}: wavelengths must be strictly increasing")]
    NonMonotoneWavelength { line: usize },
    #[error("fiber profile line {line}: attenuation must be positive and finite")]
    BadAttenuation { line: usize },
    #[error("wavelength {0} nm is outside the profile range {1}..{2} nm")]
    OutOfRange(f64, f64, f64),
}

/// Attenuation length versus wavelength table for one fiber, interpolated
/// linearly in loss (1 / L_att), the physically additive quantity.
#[derive(Debug, Clone)]
pub struct FiberProfile {
    /// `(wavelength_nm, att_length_m)`, strictly increasing wavelengths.
    rows: Vec<(f64, f64)>,
}

impl FiberProfile {
    pub fn rows(&self) -> &[(f64, f64)] {
        &self.rows
    }

    pub fn wavelength_range(&self) -> (f64, f64) {
        (self.rows[0].0, self.rows[self.rows.len() - 1].0)
    }

    /// Interpolated attenuation length (meters) at `wavelength_nm`.
    pub fn att_length_at(&self, wavelength_nm: f64) -> Result<f64, FiberError> {
        let (min, max) = self.wavelength_range();
        if wavelength_nm < min || wavelength_nm > max {
            return Err(FiberError::OutOfRange(wavelength_nm, min, max));
        }
        if let Some(&(_, att)) = self.rows.iter().find(|(w, _)| *w == wavelength_nm) {
            return Ok(att);
        }
        let hi = self
            .rows
            .iter()
            .position(|(w, _)| *w > wavelength_nm)
            .expect("bounded above by range check");
        let (w0, a0) = self.rows[hi - 1];
        let (w1, a1) = self.rows[hi];
        let t = (wavelength_nm - w0) / (w1 - w0);
        let inv = (1.0 - t) / a0 + t / a1;
        Ok(1.0 / inv)
    }
}

/// Parses a fiber profile CSV. The attenuation column is either
/// `att_length_km` (used as is) or `loss_db_per_km` (converted via
/// `L_att = 10 / (ln 10 * a_dB)` km).
pub fn load_fiber_profile(text: &str) -> Result<FiberProfile, FiberError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| FiberError::Header(String::new()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let db_per_km = match cols.as_slice() {
        ["wavelength_nm", "att_length_km"] => false,
        ["wavelength_nm", "loss_db_per_km"] => true,
        _ => return Err(FiberError::Header(header.trim().to_string())),
    };

    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (idx, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Option<(f64, f64)> = match parts.as_slice() {
            [w, a] => match (w.parse::<f64>(), a.parse::<f64>()) {
                (Ok(w), Ok(a)) => Some((w, a)),
                _ => None,
            },
            _ => None,
        };
        let Some((wavelength, attenuation)) = parsed else {
            return Err(FiberError::Malformed {
                line: idx + 1,
                text: line.to_string(),
            });
        };
        if !attenuation.is_finite() || attenuation <= 0.0 || !wavelength.is_finite() {
            return Err(FiberError::BadAttenuation { line: idx + 1 });
        }
        let att_length_m = if db_per_km {
            10e3 / (std::f64::consts::LN_10 * attenuation)
        } else {
            attenuation * 1e3
        };
        if let Some(&(prev, _)) = rows.last() {
            if wavelength <= prev {
                return Err(FiberError::NonMonotoneWavelength { line: idx + 1 });
            }
        }
        rows.push((wavelength, att_length_m));
    }
    if rows.len() < 2 {
        return Err(FiberError::Header(
            "profile needs at least two rows".to_string(),
        ));
    }
    Ok(FiberProfile { rows })
}

/// One wavelength of the high-loss sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavelengthPoint {
    pub wavelength_nm: f64,
    pub att_length_m: f64,
    pub min_m: MinModules,
}

/// Minimum-module search across the fiber profile. With `samples = None`
/// the profile's own wavelengths are used; otherwise that many evenly
/// spaced wavelengths across the profile range are interpolated.
pub fn wavelength_sweep(
    profile: &FiberProfile,
    base_cfg: &SystemConfig,
    m_cap: u32,
    samples: Option<usize>,
) -> Result<Vec<WavelengthPoint>, AnalysisError> {
    let wavelengths: Vec<f64> = match samples {
        None => profile.rows().iter().map(|&(w, _)| w).collect(),
        Some(n) => {
            if n < 2 {
                return Err(AnalysisError::BadGrid(
                    "wavelength resampling needs at least 2 points".into(),
                ));
            }
            let (lo, hi) = profile.wavelength_range();
            (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect()
        }
    };
    let grid = DistanceGrid::default_scan();
    wavelengths
        .par_iter()
        .map(|&w| {
            let att = profile.att_length_at(w)?;
            let min_m = min_m_to_beat(&base_cfg.with_att_length(att), m_cap, &grid)?;
            Ok(WavelengthPoint {
                wavelength_nm: w,
                att_length_m: att,
                min_m,
            })
        })
        .collect()
}

/// CSV rows `lambda_nm,L_att_km,min_m`.
pub fn wavelength_to_csv(points: &[WavelengthPoint]) -> String {
    let mut out = String::from("lambda_nm,L_att_km,min_m\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{}\n",
            sig9(p.wavelength_nm),
            sig9(p.att_length_m / 1e3),
            p.min_m
        ));
    }
    out
}
