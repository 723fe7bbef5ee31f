use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{DateTime, TimeZone, Utc};
use clap::Args;
use esbid_core::bids::BidSchedule;
use esbid_core::data_io::{self, GapPolicy};
use esbid_core::report::{self, InputRecord, SummaryDocument, SUMMARY_SCHEMA_VERSION};
use esbid_core::simulate::{bids_from_surface, value_forecast, CaseConfig};
use esbid_core::sweep::{case_tapes, grid_for, ZoneInputs};
use esbid_core::synth::SquareWave;
use esbid_core::valuation::backward_induct_with;
use esbid_core::{dispatch, Error, PowerBid, PriceSeries, ValueCurve};

use crate::manifest::{Settings, STANDARD_DURATIONS};
use crate::{MarketArg, RunArgs, UsageError};

const DEFAULT_ZONES: [&str; 1] = ["NYC"];
const SWEEP_ZONES: [&str; 4] = ["WEST", "NORTH", "NYC", "LONGIL"];
const DEFAULT_DURATIONS: [f64; 1] = [4.0];

#[derive(Debug, Clone, Args)]
pub struct WaveArgs {
    /// Off-peak level, $/MWh.
    #[arg(long)]
    pub low: Option<f64>,
    /// On-peak level, $/MWh.
    #[arg(long)]
    pub high: Option<f64>,
    #[arg(long)]
    pub peak_start_hour: Option<u32>,
    #[arg(long)]
    pub peak_hours: Option<u32>,
    /// Real-time noise standard deviation.
    #[arg(long)]
    pub rt_noise: Option<f64>,
    /// Day-ahead noise standard deviation.
    #[arg(long)]
    pub da_noise: Option<f64>,
}

impl WaveArgs {
    fn wave(&self) -> SquareWave {
        let d = SquareWave::default();
        SquareWave {
            low: self.low.unwrap_or(d.low),
            high: self.high.unwrap_or(d.high),
            peak_start_hour: self.peak_start_hour.unwrap_or(d.peak_start_hour),
            peak_hours: self.peak_hours.unwrap_or(d.peak_hours),
            rt_noise: self.rt_noise.unwrap_or(d.rt_noise),
            da_noise: self.da_noise.unwrap_or(d.da_noise),
        }
    }
}

fn synthetic_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap()
}

struct Inputs {
    zones: Vec<ZoneInputs>,
    records: Vec<InputRecord>,
}

/// Price tapes for every zone: from the configured files, or synthetic
/// (zone `i` seeded with `seed + i`) when no file is given.
fn load_inputs(s: &Settings, wave: &SquareWave) -> anyhow::Result<Inputs> {
    let mut zones = Vec::new();
    let mut records = Vec::new();
    let gaps = if s.fill_gaps { GapPolicy::FillPrevious } else { GapPolicy::Error };
    let load = |path: &Path, zone: &str, market: &'static str, records: &mut Vec<InputRecord>| -> anyhow::Result<PriceSeries> {
        let loaded = data_io::load_prices_with(path, zone, None, gaps)?;
        if loaded.filled_intervals > 0 {
            eprintln!("warning: {}: forward-filled {} {market} intervals for {zone}", path.display(), loaded.filled_intervals);
        }
        records.push(InputRecord::new(&loaded.series, market, loaded.filled_intervals));
        Ok(loaded.series)
    };
    for (i, zone) in s.zones.iter().enumerate() {
        let (day_ahead, real_time) = if s.da_path.is_none() && s.rt_path.is_none() {
            let (da, rt) = wave.generate(zone, synthetic_start(), s.synthetic_days, s.seed.wrapping_add(i as u64))?;
            records.push(InputRecord::new(&da, "day_ahead", 0));
            records.push(InputRecord::new(&rt, "real_time", 0));
            (Some(da), Some(rt))
        } else {
            let da = s.da_path.as_deref().map(|p| load(p, zone, "day_ahead", &mut records)).transpose()?;
            let rt = s.rt_path.as_deref().map(|p| load(p, zone, "real_time", &mut records)).transpose()?;
            (da, rt)
        };
        zones.push(ZoneInputs { zone: zone.clone(), day_ahead, real_time });
    }
    Ok(Inputs { zones, records })
}

fn file_stem(zone: &str) -> String {
    zone.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn tag(zone: &str, duration: f64) -> String {
    format!("{}_{}h", file_stem(zone), duration)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).map_err(Error::from).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> esbid_core::Result<()>) -> anyhow::Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(Error::from)?;
    Ok(())
}

pub fn value(args: &RunArgs, market: MarketArg, stride: usize) -> anyhow::Result<()> {
    let s = Settings::resolve(args.merged()?, &DEFAULT_ZONES, &DEFAULT_DURATIONS)?;
    if stride == 0 {
        return Err(UsageError("--stride must be at least 1".into()).into());
    }
    let options = s.run_options()?;
    let inputs = load_inputs(&s, &SquareWave::default())?;
    let dir = s.out_dir.join("value");
    for z in &inputs.zones {
        let (tape, suffix) = match market {
            MarketArg::Da => (z.day_ahead.as_ref(), "da"),
            MarketArg::Rt => (z.real_time.as_ref(), "rt"),
        };
        let tape = tape.ok_or_else(|| Error::InvalidSeries(format!("zone `{}`: no {suffix} prices given", z.zone)))?;
        let forecast = tape.to_resolution(options.valuation_step.resolve(tape))?;
        for &d in &s.durations {
            let params = s.technology.storage(d).validate()?;
            let grid = grid_for(&params, forecast.dt_hours(), s.grid_points)?;
            let surface = backward_induct_with(&forecast, &params, &grid, &ValueCurve::zero(grid), options.valuation_horizon)?;
            let path = dir.join(format!("{}_{suffix}.csv", tag(&z.zone, d)));
            write_file(&path, |w| report::write_surface(w, &surface, forecast.start(), stride))?;
            println!("{} ({} curves, {} grid points)", path.display(), surface.curves().len(), grid.len());
        }
    }
    Ok(())
}

pub fn bids(args: &RunArgs) -> anyhow::Result<()> {
    let s = Settings::resolve(args.merged()?, &DEFAULT_ZONES, &DEFAULT_DURATIONS)?;
    let options = s.run_options()?;
    let inputs = load_inputs(&s, &SquareWave::default())?;
    let dir = s.out_dir.join("bids");
    for z in &inputs.zones {
        for &d in &s.durations {
            let params = s.technology.storage(d).validate()?;
            for &case in &s.cases {
                let config = CaseConfig::new(case);
                let (da, rt) = case_tapes(z, case)?;
                let dt = esbid_core::simulate::valuation_dt(&config, da, rt, &options);
                let grid = grid_for(&params, dt, s.grid_points)?;
                let surface = value_forecast(&config, da, rt, &params, &grid, &options)?;
                let schedule = bids_from_surface(case.bid_model(), &surface, &params, &options)?;
                let start = da.start();
                let stem = format!("{}_{case}", tag(&z.zone, d));
                let path = dir.join(format!("{stem}.csv"));
                write_file(&path, |w| report::write_bids(w, &schedule, start, surface.resolution().as_duration(), &params))?;
                // SoC bids enter the curve through their width-weighted mean value
                let discharge: Vec<f64> = match &schedule {
                    BidSchedule::Power(b) => b.iter().map(|b| b.discharge_bid).collect(),
                    BidSchedule::Soc(c) => c.iter().map(|c| PowerBid::from_average(c.mean_value(), &params).discharge_bid).collect(),
                };
                let curve = data_io::duration_curve(&discharge)?;
                write_file(&dir.join(format!("{stem}_duration.csv")), |w| report::write_duration_curve(w, &curve))?;
                println!("{} ({} periods)", path.display(), schedule.len());
            }
        }
    }
    Ok(())
}

pub fn simulate(args: &RunArgs, full_matrix: bool) -> anyhow::Result<()> {
    let merged = args.merged()?;
    let s = if full_matrix {
        Settings::resolve(merged, &SWEEP_ZONES, &STANDARD_DURATIONS)?
    } else {
        Settings::resolve(merged, &DEFAULT_ZONES, &DEFAULT_DURATIONS)?
    };
    let spec = s.sweep_spec()?;
    let inputs = load_inputs(&s, &SquareWave::default())?;
    let trace_dir = s.out_dir.join("traces");
    let rows = esbid_core::run_sweep(&inputs.zones, &spec, |key, results| {
        if !s.traces {
            return Ok(());
        }
        fs::create_dir_all(&trace_dir)?;
        for r in results.iter().filter(|r| s.cases.contains(&r.case_id)) {
            let path = trace_dir.join(format!("{}_{}.csv", tag(key.zone, key.duration_hours), r.case_id));
            let mut w = BufWriter::new(File::create(path)?);
            report::write_trace(&mut w, r)?;
            w.flush()?;
        }
        Ok(())
    })?;

    let out = &s.out_dir;
    write_file(&out.join("summary.csv"), |w| report::write_summary_csv(w, &rows))?;
    write_file(&out.join("utilization.csv"), |w| report::write_utilization_matrix(w, &rows))?;
    for z in &inputs.zones {
        for (tape, market) in [(&z.day_ahead, "da"), (&z.real_time, "rt")] {
            if let Some(tape) = tape {
                let curve = data_io::duration_curve(tape.values())?;
                let path = out.join("prices").join(format!("{}_{market}_duration.csv", file_stem(&z.zone)));
                write_file(&path, |w| report::write_duration_curve(w, &curve))?;
            }
        }
    }
    let doc = SummaryDocument {
        schema_version: SUMMARY_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        settings: &s,
        inputs: inputs.records,
        rows,
    };
    let json: PathBuf = out.join("summary.json");
    write_file(&json, |w| report::write_summary_json(w, &doc))?;
    println!("{} rows -> {}", doc.rows.len(), out.join("summary.csv").display());
    Ok(())
}

pub fn dispatch_demo(scenario: &Path) -> anyhow::Result<()> {
    let market = dispatch::load_scenario(scenario)?;
    let result = dispatch::clear_market(&market)?;
    print!("{}", dispatch::format_table(&result));
    Ok(())
}

pub fn synth(args: &RunArgs, wave: &WaveArgs) -> anyhow::Result<()> {
    let m = args.merged()?;
    if m.da_path.is_some() || m.rt_path.is_some() {
        return Err(UsageError("synth writes tapes; it takes no input paths".into()).into());
    }
    let s = Settings::resolve(m, &SWEEP_ZONES, &DEFAULT_DURATIONS)?;
    let inputs = load_inputs(&s, &wave.wave())?;
    let da: Vec<&PriceSeries> = inputs.zones.iter().filter_map(|z| z.day_ahead.as_ref()).collect();
    let rt: Vec<&PriceSeries> = inputs.zones.iter().filter_map(|z| z.real_time.as_ref()).collect();
    for (name, tapes) in [("da.csv", &da), ("rt.csv", &rt)] {
        let path = s.out_dir.join(name);
        write_file(&path, |w| data_io::write_price_table(w, tapes))?;
        println!("{}", path.display());
    }
    Ok(())
}
