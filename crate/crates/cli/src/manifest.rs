//! Run settings: a TOML manifest merged with command-line flags (flags win).

use std::path::{Path, PathBuf};

use clap::Args;
use esbid_core::simulate::ValuationStep;
use esbid_core::sweep::{SweepSpec, Technology};
use esbid_core::valuation::ValuationHorizon;
use esbid_core::{CaseId, Resolution, RunOptions};
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub const OUT_DIR_ENV: &str = "ESBID_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "esbid-out";
pub const STANDARD_DURATIONS: [f64; 7] = [1.0, 2.0, 4.0, 6.0, 12.0, 24.0, 72.0];

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    /// Zones to run (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub zones: Option<Vec<String>>,
    /// Storage durations in hours (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub durations: Option<Vec<f64>>,
    /// Case ids, e.g. RT-SB-PF (comma separated; default all six).
    #[arg(long, value_delimiter = ',')]
    pub cases: Option<Vec<String>>,
    /// Power rating, MW.
    #[arg(long)]
    pub power_rating: Option<f64>,
    /// One-way efficiency.
    #[arg(long)]
    pub efficiency: Option<f64>,
    /// Discharge cost, $/MWh.
    #[arg(long)]
    pub discharge_cost: Option<f64>,
    /// Minimum SoC grid size (raised to honour the grid step limit).
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// SoC bid segments per hour of storage duration.
    #[arg(long)]
    pub segments_per_hour: Option<usize>,
    /// Valuation and bid step in minutes; default is each forecast's own resolution.
    #[arg(long)]
    pub valuation_step_minutes: Option<u32>,
    /// Restart valuation from the terminal curve every N periods.
    #[arg(long)]
    pub valuation_window: Option<usize>,
    /// Hours left out of the metric at the start of the tape.
    #[arg(long)]
    pub warmup_hours: Option<f64>,
    /// Hours left out of the metric at the end of the tape.
    #[arg(long)]
    pub cooldown_hours: Option<f64>,
    /// Day-ahead price CSV (timestamp,zone,price_usd_per_mwh).
    #[arg(long)]
    pub da_path: Option<PathBuf>,
    /// Real-time price CSV.
    #[arg(long)]
    pub rt_path: Option<PathBuf>,
    /// Forward-fill missing intervals instead of failing.
    #[arg(long)]
    pub fill_gaps: Option<bool>,
    /// Output directory (default: $ESBID_OUT_DIR, then ./esbid-out).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Scenarios run in parallel (results do not depend on it).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Seed for synthetic tapes, used when no price files are given.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Length of synthetic tapes in days.
    #[arg(long)]
    pub synthetic_days: Option<usize>,
    /// Write per-interval dispatch traces.
    #[arg(long)]
    pub traces: Option<bool>,
}

impl RunManifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        let mut m: RunManifest = toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut m.da_path, &mut m.rt_path, &mut m.out_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(m)
    }

    /// Fill every field unset here from `fallback`.
    pub fn or(self, fallback: RunManifest) -> RunManifest {
        RunManifest {
            zones: self.zones.or(fallback.zones),
            durations: self.durations.or(fallback.durations),
            cases: self.cases.or(fallback.cases),
            power_rating: self.power_rating.or(fallback.power_rating),
            efficiency: self.efficiency.or(fallback.efficiency),
            discharge_cost: self.discharge_cost.or(fallback.discharge_cost),
            grid_points: self.grid_points.or(fallback.grid_points),
            segments_per_hour: self.segments_per_hour.or(fallback.segments_per_hour),
            valuation_step_minutes: self.valuation_step_minutes.or(fallback.valuation_step_minutes),
            valuation_window: self.valuation_window.or(fallback.valuation_window),
            warmup_hours: self.warmup_hours.or(fallback.warmup_hours),
            cooldown_hours: self.cooldown_hours.or(fallback.cooldown_hours),
            da_path: self.da_path.or(fallback.da_path),
            rt_path: self.rt_path.or(fallback.rt_path),
            fill_gaps: self.fill_gaps.or(fallback.fill_gaps),
            out_dir: self.out_dir.or(fallback.out_dir),
            workers: self.workers.or(fallback.workers),
            seed: self.seed.or(fallback.seed),
            synthetic_days: self.synthetic_days.or(fallback.synthetic_days),
            traces: self.traces.or(fallback.traces),
        }
    }
}

/// Fully resolved settings. Serialized into the JSON summary, so it holds
/// nothing that may differ between otherwise identical runs (worker
/// count, output location).
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub zones: Vec<String>,
    pub durations: Vec<f64>,
    pub cases: Vec<CaseId>,
    pub technology: Technology,
    pub grid_points: usize,
    pub segments_per_hour: usize,
    pub valuation_step_minutes: Option<u32>,
    pub valuation_window: Option<usize>,
    pub warmup_hours: f64,
    pub cooldown_hours: f64,
    pub da_path: Option<PathBuf>,
    pub rt_path: Option<PathBuf>,
    pub fill_gaps: bool,
    pub seed: u64,
    pub synthetic_days: usize,
    #[serde(skip)]
    pub out_dir: PathBuf,
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub traces: bool,
}

fn positive(name: &str, v: f64) -> Result<f64, UsageError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(UsageError(format!("--{name} must be positive, got {v}")))
    }
}

impl Settings {
    pub fn resolve(m: RunManifest, default_zones: &[&str], default_durations: &[f64]) -> Result<Self, UsageError> {
        let zones = m.zones.unwrap_or_else(|| default_zones.iter().map(|z| z.to_string()).collect());
        if zones.is_empty() || zones.iter().any(|z| z.trim().is_empty()) {
            return Err(UsageError("at least one non-empty zone is required".into()));
        }
        let durations = m.durations.unwrap_or_else(|| default_durations.to_vec());
        if durations.is_empty() {
            return Err(UsageError("at least one duration is required".into()));
        }
        for &d in &durations {
            positive("durations", d)?;
        }
        let cases = match m.cases {
            None => CaseId::ALL.to_vec(),
            Some(list) if list.is_empty() => return Err(UsageError("at least one case is required".into())),
            Some(list) => list
                .iter()
                .map(|c| c.parse::<CaseId>().map_err(|e| UsageError(e.to_string())))
                .collect::<Result<_, _>>()?,
        };
        let base = Technology::default();
        let technology = Technology {
            power_rating: positive("power-rating", m.power_rating.unwrap_or(base.power_rating))?,
            efficiency: m.efficiency.unwrap_or(base.efficiency),
            discharge_cost: m.discharge_cost.unwrap_or(base.discharge_cost),
        };
        let defaults = SweepSpec::default();
        if m.segments_per_hour == Some(0) || m.valuation_step_minutes == Some(0) || m.valuation_window == Some(0) {
            return Err(UsageError("segments, valuation step and window must be positive".into()));
        }
        let out_dir = m
            .out_dir
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        Ok(Settings {
            zones,
            durations,
            cases,
            technology,
            grid_points: m.grid_points.unwrap_or(defaults.grid_points),
            segments_per_hour: m.segments_per_hour.unwrap_or(defaults.options.segments_per_hour),
            valuation_step_minutes: m.valuation_step_minutes,
            valuation_window: m.valuation_window,
            warmup_hours: m.warmup_hours.unwrap_or(0.0),
            cooldown_hours: m.cooldown_hours.unwrap_or(0.0),
            da_path: m.da_path,
            rt_path: m.rt_path,
            fill_gaps: m.fill_gaps.unwrap_or(false),
            seed: m.seed.unwrap_or(0),
            synthetic_days: m.synthetic_days.unwrap_or(7),
            out_dir,
            workers: m.workers.unwrap_or(1).max(1),
            traces: m.traces.unwrap_or(false),
        })
    }

    pub fn run_options(&self) -> anyhow::Result<RunOptions> {
        let valuation_step = match self.valuation_step_minutes {
            None => ValuationStep::Native,
            Some(min) => ValuationStep::Fixed(Resolution::from_minutes(min)?),
        };
        Ok(RunOptions {
            segments_per_hour: self.segments_per_hour,
            valuation_step,
            valuation_horizon: self.valuation_window.map_or(ValuationHorizon::Full, ValuationHorizon::Windowed),
            warmup_hours: self.warmup_hours,
            cooldown_hours: self.cooldown_hours,
        })
    }

    pub fn sweep_spec(&self) -> anyhow::Result<SweepSpec> {
        Ok(SweepSpec {
            technology: self.technology,
            durations: self.durations.clone(),
            cases: self.cases.clone(),
            grid_points: self.grid_points,
            options: self.run_options()?,
            workers: self.workers,
        })
    }
}
