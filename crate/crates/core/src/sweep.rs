//! The experiment matrix: zones × durations × cases.
//!
//! Scenarios (one zone and duration) run in parallel on a fixed-size pool;
//! cases inside a scenario run sequentially and share value surfaces when
//! they value the same forecast. Results come back in matrix order, so the
//! output never depends on the worker count.

use std::collections::btree_map::{BTreeMap, Entry};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{SoCGrid, StorageParams, DEFAULT_GRID_POINTS};
use crate::series::PriceSeries;
use crate::simulate::{
    check_case_inputs, forecast_for, run_case_on_surface, valuation_dt, value_forecast, CaseConfig, CaseId, Market,
    RunOptions, SimulationResult,
};

/// Price tapes for one zone. Either may be absent when no requested case
/// needs it.
#[derive(Debug, Clone)]
pub struct ZoneInputs {
    pub zone: String,
    pub day_ahead: Option<PriceSeries>,
    pub real_time: Option<PriceSeries>,
}

/// Storage technology shared by every duration of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Technology {
    pub power_rating: f64,
    pub efficiency: f64,
    pub discharge_cost: f64,
}

impl Default for Technology {
    fn default() -> Self {
        Self { power_rating: 1.0, efficiency: 0.9, discharge_cost: 10.0 }
    }
}

impl Technology {
    pub fn storage(&self, duration_hours: f64) -> StorageParams {
        StorageParams::new(self.power_rating, self.power_rating * duration_hours, self.efficiency, self.discharge_cost)
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub technology: Technology,
    pub durations: Vec<f64>,
    pub cases: Vec<CaseId>,
    /// Minimum grid size; raised per valuation step to honour the grid
    /// step limit.
    pub grid_points: usize,
    pub options: RunOptions,
    pub workers: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            technology: Technology::default(),
            durations: vec![1.0, 2.0, 4.0, 6.0, 12.0, 24.0, 72.0],
            cases: CaseId::ALL.to_vec(),
            grid_points: DEFAULT_GRID_POINTS,
            options: RunOptions::default(),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub zone: String,
    pub duration_hours: f64,
    pub case: CaseId,
    pub total_profit: f64,
    /// Profit inside the metric window (equal to total profit unless
    /// warm-up or cool-down hours were excluded).
    pub metric_profit: f64,
    /// Metric profit over the reference case's; `None` when the reference
    /// earned nothing.
    pub utilization: Option<f64>,
    pub cycles: f64,
    pub discharged_mwh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioKey<'a> {
    pub zone: &'a str,
    pub duration_hours: f64,
}

/// Grid for a storage valued at `dt` hours.
pub fn grid_for(params: &StorageParams, dt: f64, min_points: usize) -> Result<SoCGrid> {
    SoCGrid::for_storage(params, min_points.max(SoCGrid::min_points(params, dt)), dt)
}

/// The (day-ahead, real-time) pair for a case. A tape the case does not
/// use may be absent and is replaced by the other one.
pub fn case_tapes(inputs: &ZoneInputs, case: CaseId) -> Result<(&PriceSeries, &PriceSeries)> {
    let need = |m: Market| match m {
        Market::DayAhead => inputs.day_ahead.as_ref(),
        Market::RealTime => inputs.real_time.as_ref(),
    };
    let missing = |m: Market| {
        Error::InvalidSeries(format!(
            "zone `{}`: case {case} needs {} prices",
            inputs.zone,
            if m == Market::DayAhead { "day-ahead" } else { "real-time" }
        ))
    };
    let cfg = CaseConfig::new(case);
    for m in [cfg.valuation_source, cfg.settlement] {
        need(m).ok_or_else(|| missing(m))?;
    }
    let da = inputs.day_ahead.as_ref().or(inputs.real_time.as_ref()).unwrap();
    let rt = inputs.real_time.as_ref().or(inputs.day_ahead.as_ref()).unwrap();
    Ok((da, rt))
}

/// Run the requested cases plus the reference case for one scenario.
/// Returns results for `cases` in order, followed by the reference run if
/// it was not requested. Without real-time prices there is no reference
/// run and utilization is left undefined.
pub fn run_scenario(inputs: &ZoneInputs, duration_hours: f64, spec: &SweepSpec) -> Result<Vec<SimulationResult>> {
    let params = spec.technology.storage(duration_hours);
    params.validate()?;
    let mut cases = spec.cases.clone();
    if !cases.contains(&CaseId::REFERENCE) && inputs.real_time.is_some() {
        cases.push(CaseId::REFERENCE);
    }
    let mut surfaces = BTreeMap::new();
    let mut results = Vec::with_capacity(cases.len());
    for case in cases {
        let config = CaseConfig::new(case);
        let (da, rt) = case_tapes(inputs, case)?;
        let dt = valuation_dt(&config, da, rt, &spec.options);
        let grid = grid_for(&params, dt, spec.grid_points)?;
        check_case_inputs(&config, da, rt, &params, &grid, &spec.options)?;
        let step = spec.options.valuation_step.resolve(forecast_for(&config, da, rt));
        let key = (config.valuation_source == Market::RealTime, step);
        if let Entry::Vacant(slot) = surfaces.entry(key) {
            slot.insert(value_forecast(&config, da, rt, &params, &grid, &spec.options)?);
        }
        results.push(run_case_on_surface(&config, da, rt, &params, &surfaces[&key], &spec.options)?);
    }
    Ok(results)
}

fn summarize(zone: &str, duration_hours: f64, results: &[SimulationResult], requested: &[CaseId]) -> Vec<SummaryRow> {
    let reference = results.iter().find(|r| r.case_id == CaseId::REFERENCE).map(|r| r.metric_profit());
    results
        .iter()
        .filter(|r| requested.contains(&r.case_id))
        .map(|r| SummaryRow {
            zone: zone.to_string(),
            duration_hours,
            case: r.case_id,
            total_profit: r.total_profit,
            metric_profit: r.metric_profit(),
            utilization: reference.filter(|&p| p > 0.0).map(|p| r.metric_profit() / p),
            cycles: r.cycles,
            discharged_mwh: r.discharged_energy,
        })
        .collect()
}

/// Run the full matrix. `sink` sees every scenario's raw results (e.g. to
/// write traces) and may be called from several threads at once.
pub fn run_sweep<F>(zones: &[ZoneInputs], spec: &SweepSpec, sink: F) -> Result<Vec<SummaryRow>>
where
    F: Fn(ScenarioKey<'_>, &[SimulationResult]) -> Result<()> + Sync,
{
    if zones.is_empty() || spec.durations.is_empty() || spec.cases.is_empty() {
        return Err(Error::InvalidSeries("sweep needs at least one zone, duration and case".into()));
    }
    if let Some(d) = spec.durations.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Error::InvalidParam { field: "duration", reason: format!("must be positive, got {d}") });
    }
    let tasks: Vec<(&ZoneInputs, f64)> =
        zones.iter().flat_map(|z| spec.durations.iter().map(move |&d| (z, d))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParam { field: "workers", reason: e.to_string() })?;
    let outcomes: Vec<Result<Vec<SummaryRow>>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(z, d)| {
                let results = run_scenario(z, d, spec)?;
                sink(ScenarioKey { zone: &z.zone, duration_hours: d }, &results)?;
                Ok(summarize(&z.zone, d, &results, &spec.cases))
            })
            .collect()
    });
    let mut rows = Vec::new();
    for outcome in outcomes {
        rows.extend(outcome?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SquareWave;
    use chrono::{DateTime, Utc};

    fn zone(name: &str, seed: u64) -> ZoneInputs {
        let (da, rt) = SquareWave::default().generate(name, DateTime::<Utc>::UNIX_EPOCH, 2, seed).unwrap();
        ZoneInputs { zone: name.into(), day_ahead: Some(da), real_time: Some(rt) }
    }

    fn spec(workers: usize) -> SweepSpec {
        SweepSpec { durations: vec![1.0, 4.0], workers, ..SweepSpec::default() }
    }

    #[test]
    fn matrix_order_and_reference() {
        let rows = run_sweep(&[zone("A", 1), zone("B", 2)], &spec(1), |_, _| Ok(())).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 6);
        assert_eq!((rows[0].zone.as_str(), rows[0].duration_hours, rows[0].case), ("A", 1.0, CaseId::DaPbDf));
        assert_eq!((rows[23].zone.as_str(), rows[23].duration_hours, rows[23].case), ("B", 4.0, CaseId::RtSbPf));
        for r in rows.iter().filter(|r| r.case == CaseId::REFERENCE) {
            assert_eq!(r.utilization, Some(1.0));
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let zones = [zone("A", 3), zone("B", 4)];
        let one = run_sweep(&zones, &spec(1), |_, _| Ok(())).unwrap();
        let four = run_sweep(&zones, &spec(4), |_, _| Ok(())).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn shared_surfaces_match_independent_runs() {
        let z = zone("A", 5);
        let s = spec(1);
        let shared = run_scenario(&z, 4.0, &s).unwrap();
        let params = s.technology.storage(4.0);
        for r in &shared {
            let cfg = CaseConfig::new(r.case_id);
            let (da, rt) = case_tapes(&z, r.case_id).unwrap();
            let grid = grid_for(&params, valuation_dt(&cfg, da, rt, &s.options), s.grid_points).unwrap();
            let alone = crate::simulate::run_case(&cfg, da, rt, &params, &grid, &s.options).unwrap();
            assert_eq!(alone.total_profit, r.total_profit, "{}", r.case_id);
        }
    }

    #[test]
    fn day_ahead_only_has_no_utilization() {
        let mut z = zone("A", 1);
        z.real_time = None;
        let s = SweepSpec { cases: vec![CaseId::DaSbDf, CaseId::DaPbDf], ..spec(1) };
        let rows = run_sweep(&[z], &s, |_, _| Ok(())).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.utilization.is_none() && r.total_profit > 0.0));
    }

    #[test]
    fn missing_tape_is_reported() {
        let mut z = zone("A", 1);
        z.real_time = None;
        let s = SweepSpec { cases: vec![CaseId::RtSbDf], ..spec(1) };
        assert!(matches!(run_sweep(&[z], &s, |_, _| Ok(())), Err(Error::InvalidSeries(_))));
    }
}
