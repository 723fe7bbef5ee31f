//! Sequential single-period dispatch of a price-taking storage.
//!
//! Under the price-taker assumption the storage dispatch cleared by the
//! market equals the solution of a one-period arbitrage problem at the
//! settlement price, so the market is simulated by stepping that problem
//! forward and carrying the SoC between intervals.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bids::{
    charge_threshold, discharge_threshold, make_power_bids, make_soc_bids, BidSchedule, PowerBid, SoCBidCurve,
    DEFAULT_SEGMENTS_PER_HOUR,
};
use crate::error::{Error, Result};
use crate::model::{DispatchDecision, SoCGrid, StorageParams};
use crate::series::{PriceSeries, Resolution};
use crate::valuation::{backward_induct_with, ValuationHorizon, ValueCurve, ValueSurface};

/// Power-bid dispatch: discharge everything available above the discharge
/// bid, charge as much as possible below the charge bid, idle otherwise
/// (including when the price equals a bid). Never discharges at a negative
/// price. If crossed bids make both sides attractive, the side with the
/// larger bid surplus wins.
pub fn step_power_bid(e_prev: f64, price: f64, bid: &PowerBid, params: &StorageParams, dt: f64) -> Result<DispatchDecision> {
    params.check_soc(e_prev)?;
    let discharge = price >= 0.0 && price > bid.discharge_bid;
    let charge = price < bid.charge_bid;
    let p_max = params.discharge_limit(e_prev, dt);
    let b_max = params.charge_limit(e_prev, dt);
    let (p, b) = match (discharge, charge) {
        (true, true) => {
            let gain_d = (price - bid.discharge_bid) * p_max;
            let gain_c = (bid.charge_bid - price) * b_max;
            if gain_d >= gain_c {
                (p_max, 0.0)
            } else {
                (0.0, b_max)
            }
        }
        (true, false) => (p_max, 0.0),
        (false, true) => (0.0, b_max),
        (false, false) => (0.0, 0.0),
    };
    if p == 0.0 && b == 0.0 {
        return Ok(DispatchDecision::idle(e_prev));
    }
    Ok(DispatchDecision::settle(params, e_prev, price, p, b, dt))
}

/// SoC-bid dispatch: the one-period problem with a concave piecewise-linear
/// opportunity value, solved by walking segments away from the current SoC.
///
/// Discharge continues into the next lower segment while the price beats
/// that segment's discharge threshold `c + v/η` (disabled at negative
/// prices); charge continues upward while the price is below `v·η`. Each
/// walk stops at a segment whose threshold fails, at the power rating, or
/// at an SoC limit.
pub fn step_soc_bid(e_prev: f64, price: f64, curve: &SoCBidCurve, params: &StorageParams, dt: f64) -> Result<DispatchDecision> {
    params.check_soc(e_prev)?;
    let eta = params.efficiency;
    let values = curve.segment_values();
    let bounds = curve.boundaries();
    let lo_lim = params.soc_min.max(curve.lower());
    let hi_lim = params.soc_max.min(curve.upper());

    let mut p = 0.0;
    let mut value_delta = 0.0;
    if price >= 0.0 {
        let mut budget = params.power_rating;
        let mut e = e_prev;
        while budget > 0.0 && e > lo_lim {
            let Some(j) = curve.segment_below(e) else { break };
            if !(price > discharge_threshold(values[j], params)) {
                break;
            }
            let floor = bounds[j].max(lo_lim);
            let need = (e - floor) * eta / dt;
            if need <= budget {
                p += need;
                budget -= need;
                value_delta -= values[j] * (e - floor);
                e = floor;
            } else {
                p = params.power_rating;
                value_delta -= values[j] * budget * dt / eta;
                budget = 0.0;
            }
        }
    }

    let mut b = 0.0;
    if p == 0.0 {
        let mut budget = params.power_rating;
        let mut e = e_prev;
        while budget > 0.0 && e < hi_lim {
            let Some(j) = curve.segment_above(e) else { break };
            if !(price < charge_threshold(values[j], params)) {
                break;
            }
            let ceil = bounds[j + 1].min(hi_lim);
            let need = (ceil - e) / (eta * dt);
            if need <= budget {
                b += need;
                budget -= need;
                value_delta += values[j] * (ceil - e);
                e = ceil;
            } else {
                b = params.power_rating;
                value_delta += values[j] * budget * eta * dt;
                budget = 0.0;
            }
        }
    }

    // summing segment pieces can overshoot the rating by an ulp
    let (p, b) = (p.min(params.power_rating), b.min(params.power_rating));
    if p == 0.0 && b == 0.0 {
        return Ok(DispatchDecision::idle(e_prev));
    }
    let mut decision = DispatchDecision::settle(params, e_prev, price, p, b, dt);
    decision.opportunity_value_delta = value_delta;
    Ok(decision)
}

/// Which market a price tape comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Market {
    DayAhead,
    RealTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BidModel {
    Power,
    Soc,
}

/// The six market / bid model / forecast combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseId {
    #[serde(rename = "DA-PB-DF")]
    DaPbDf,
    #[serde(rename = "DA-SB-DF")]
    DaSbDf,
    #[serde(rename = "RT-PB-DF")]
    RtPbDf,
    #[serde(rename = "RT-SB-DF")]
    RtSbDf,
    #[serde(rename = "RT-PB-PF")]
    RtPbPf,
    #[serde(rename = "RT-SB-PF")]
    RtSbPf,
}

impl CaseId {
    pub const ALL: [CaseId; 6] = [
        CaseId::DaPbDf,
        CaseId::DaSbDf,
        CaseId::RtPbDf,
        CaseId::RtSbDf,
        CaseId::RtPbPf,
        CaseId::RtSbPf,
    ];

    /// The perfect-foresight SoC-bid case every other case is normalized by.
    pub const REFERENCE: CaseId = CaseId::RtSbPf;

    pub fn as_str(self) -> &'static str {
        match self {
            CaseId::DaPbDf => "DA-PB-DF",
            CaseId::DaSbDf => "DA-SB-DF",
            CaseId::RtPbDf => "RT-PB-DF",
            CaseId::RtSbDf => "RT-SB-DF",
            CaseId::RtPbPf => "RT-PB-PF",
            CaseId::RtSbPf => "RT-SB-PF",
        }
    }

    /// Market whose prices drive the valuation (the forecast).
    pub fn valuation_source(self) -> Market {
        match self {
            CaseId::RtPbPf | CaseId::RtSbPf => Market::RealTime,
            _ => Market::DayAhead,
        }
    }

    pub fn bid_model(self) -> BidModel {
        match self {
            CaseId::DaPbDf | CaseId::RtPbDf | CaseId::RtPbPf => BidModel::Power,
            _ => BidModel::Soc,
        }
    }

    /// Market whose prices settle the dispatch.
    pub fn settlement(self) -> Market {
        match self {
            CaseId::DaPbDf | CaseId::DaSbDf => Market::DayAhead,
            _ => Market::RealTime,
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CaseId::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidSeries(format!("unknown case id `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseConfig {
    pub case_id: CaseId,
    pub valuation_source: Market,
    pub bid_model: BidModel,
    pub settlement: Market,
    /// MWh at the start of the horizon.
    pub initial_soc: f64,
}

impl CaseConfig {
    pub fn new(case_id: CaseId) -> Self {
        Self {
            case_id,
            valuation_source: case_id.valuation_source(),
            bid_model: case_id.bid_model(),
            settlement: case_id.settlement(),
            initial_soc: 0.0,
        }
    }

    pub fn with_initial_soc(mut self, soc: f64) -> Self {
        self.initial_soc = soc;
        self
    }
}

/// Period length of valuation, which is also the bid resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValuationStep {
    /// The forecast tape's own resolution: hourly for day-ahead forecasts,
    /// five minutes for perfect real-time forecasts.
    #[default]
    Native,
    /// Resample every forecast to this step (block means or repetition).
    Fixed(Resolution),
}

impl ValuationStep {
    pub fn resolve(self, forecast: &PriceSeries) -> Resolution {
        match self {
            ValuationStep::Native => forecast.resolution(),
            ValuationStep::Fixed(r) => r,
        }
    }
}

/// Settings shared by every case of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub segments_per_hour: usize,
    pub valuation_step: ValuationStep,
    pub valuation_horizon: ValuationHorizon,
    /// Hours excluded from the start of metric aggregation.
    pub warmup_hours: f64,
    /// Hours excluded from the end of metric aggregation (the zero terminal
    /// value depresses the last few durations' worth of dispatch).
    pub cooldown_hours: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            segments_per_hour: DEFAULT_SEGMENTS_PER_HOUR,
            valuation_step: ValuationStep::Native,
            valuation_horizon: ValuationHorizon::Full,
            warmup_hours: 0.0,
            cooldown_hours: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub case_id: CaseId,
    pub initial_soc: f64,
    /// Settlement prices the decisions were taken against.
    pub prices: PriceSeries,
    pub decisions: Vec<DispatchDecision>,
    pub total_profit: f64,
    /// MWh delivered to the grid.
    pub discharged_energy: f64,
    /// Discharged energy over energy capacity.
    pub cycles: f64,
    /// Intervals `[start, end)` counted by [`metric_profit`](Self::metric_profit).
    pub metric_window: (usize, usize),
}

impl SimulationResult {
    /// Profit over the metric window (the whole run unless warm-up or
    /// cool-down exclusions were configured).
    pub fn metric_profit(&self) -> f64 {
        let (a, b) = self.metric_window;
        self.decisions[a..b].iter().map(|d| d.realized_profit).sum()
    }

    pub fn span_hours(&self) -> f64 {
        self.prices.span_hours()
    }

    pub fn soc_trajectory(&self) -> impl Iterator<Item = f64> + '_ {
        self.decisions.iter().map(|d| d.soc_after)
    }
}

/// Step a bid schedule through a settlement tape.
///
/// A settlement interval uses the bid of the valuation period it ends in,
/// i.e. the value-to-go at or after the interval's end: one hourly bid
/// covers twelve 5-minute intervals, and an hourly interval settled
/// against 5-minute bids uses the last bid of the hour.
pub fn settle(
    case_id: CaseId,
    schedule: &BidSchedule,
    bid_step: Resolution,
    settlement: &PriceSeries,
    params: &StorageParams,
    initial_soc: f64,
) -> Result<SimulationResult> {
    params.check_soc(initial_soc)?;
    let dt = settlement.dt_hours();
    let step_secs = settlement.resolution().as_secs() as u64;
    let bid_secs = bid_step.as_secs() as u64;
    let period_of = |k: usize| (((k as u64 + 1) * step_secs).div_ceil(bid_secs) - 1) as usize;
    let needed = period_of(settlement.len() - 1) + 1;
    if schedule.len() < needed {
        return Err(Error::HorizonMismatch(format!(
            "{} bids cover less than the {} periods of settlement",
            schedule.len(),
            needed
        )));
    }
    let mut soc = initial_soc;
    let mut decisions = Vec::with_capacity(settlement.len());
    for (k, &price) in settlement.values().iter().enumerate() {
        let period = period_of(k);
        let d = match schedule {
            BidSchedule::Power(bids) => step_power_bid(soc, price, &bids[period], params, dt)?,
            BidSchedule::Soc(curves) => step_soc_bid(soc, price, &curves[period], params, dt)?,
        };
        soc = d.soc_after;
        decisions.push(d);
    }
    let total_profit = decisions.iter().map(|d| d.realized_profit).sum();
    let discharged_energy: f64 = decisions.iter().map(|d| d.discharge_power * dt).sum();
    Ok(SimulationResult {
        case_id,
        initial_soc,
        prices: settlement.clone(),
        metric_window: (0, decisions.len()),
        decisions,
        total_profit,
        discharged_energy,
        cycles: discharged_energy / params.energy_capacity,
    })
}

/// The forecast tape a case values.
pub fn forecast_for<'a>(config: &CaseConfig, da_prices: &'a PriceSeries, rt_prices: &'a PriceSeries) -> &'a PriceSeries {
    match config.valuation_source {
        Market::DayAhead => da_prices,
        Market::RealTime => rt_prices,
    }
}

/// Valuation period length for a case, in hours.
pub fn valuation_dt(config: &CaseConfig, da_prices: &PriceSeries, rt_prices: &PriceSeries, options: &RunOptions) -> f64 {
    options.valuation_step.resolve(forecast_for(config, da_prices, rt_prices)).hours()
}

/// Value a case's forecast tape at its valuation step.
pub fn value_forecast(
    config: &CaseConfig,
    da_prices: &PriceSeries,
    rt_prices: &PriceSeries,
    params: &StorageParams,
    grid: &SoCGrid,
    options: &RunOptions,
) -> Result<ValueSurface> {
    let source = forecast_for(config, da_prices, rt_prices);
    let forecast = source.to_resolution(options.valuation_step.resolve(source))?;
    backward_induct_with(&forecast, params, grid, &ValueCurve::zero(*grid), options.valuation_horizon)
}

/// Convert a surface into the bid schedule of `bid_model`.
pub fn bids_from_surface(bid_model: BidModel, surface: &ValueSurface, params: &StorageParams, options: &RunOptions) -> Result<BidSchedule> {
    Ok(match bid_model {
        BidModel::Power => BidSchedule::Power(make_power_bids(surface, params)?),
        BidModel::Soc => BidSchedule::Soc(make_soc_bids(surface, params, options.segments_per_hour)?),
    })
}

/// Bids for a case: value the forecast tape, then convert per the bid
/// model. Returns the schedule and its period length.
pub fn build_bids(
    config: &CaseConfig,
    da_prices: &PriceSeries,
    rt_prices: &PriceSeries,
    params: &StorageParams,
    grid: &SoCGrid,
    options: &RunOptions,
) -> Result<(BidSchedule, Resolution)> {
    let surface = value_forecast(config, da_prices, rt_prices, params, grid, options)?;
    Ok((bids_from_surface(config.bid_model, &surface, params, options)?, surface.resolution()))
}

fn check_horizons(da: &PriceSeries, rt: &PriceSeries) -> Result<()> {
    if da.start() != rt.start() || da.end() != rt.end() {
        return Err(Error::HorizonMismatch(format!(
            "day-ahead covers {}..{}, real-time covers {}..{}",
            da.start(),
            da.end(),
            rt.start(),
            rt.end()
        )));
    }
    Ok(())
}

/// Run one case end to end: valuation on the forecast tape at the
/// valuation step, bid construction, then sequential settlement at the
/// settlement tape's native resolution.
pub fn run_case(
    config: &CaseConfig,
    da_prices: &PriceSeries,
    rt_prices: &PriceSeries,
    params: &StorageParams,
    grid: &SoCGrid,
    options: &RunOptions,
) -> Result<SimulationResult> {
    check_case_inputs(config, da_prices, rt_prices, params, grid, options)?;
    let surface = value_forecast(config, da_prices, rt_prices, params, grid, options)?;
    run_case_on_surface(config, da_prices, rt_prices, params, &surface, options)
}

/// Validate what [`run_case`] needs before any valuation work.
pub fn check_case_inputs(
    config: &CaseConfig,
    da_prices: &PriceSeries,
    rt_prices: &PriceSeries,
    params: &StorageParams,
    grid: &SoCGrid,
    options: &RunOptions,
) -> Result<()> {
    params.validate()?;
    check_horizons(da_prices, rt_prices)?;
    if grid.soc_min() != params.soc_min || grid.soc_max() != params.soc_max {
        return Err(Error::InvalidGrid("grid range differs from the storage SoC range".into()));
    }
    // re-check the step limit for this case's valuation period
    SoCGrid::for_storage(params, grid.len(), valuation_dt(config, da_prices, rt_prices, options))?;
    Ok(())
}

/// The bid and settlement half of [`run_case`], for callers that share one
/// surface between cases valuing the same forecast.
pub fn run_case_on_surface(
    config: &CaseConfig,
    da_prices: &PriceSeries,
    rt_prices: &PriceSeries,
    params: &StorageParams,
    surface: &ValueSurface,
    options: &RunOptions,
) -> Result<SimulationResult> {
    let schedule = bids_from_surface(config.bid_model, surface, params, options)?;
    let settlement = match config.settlement {
        Market::DayAhead => da_prices,
        Market::RealTime => rt_prices,
    };
    let mut result = settle(config.case_id, &schedule, surface.resolution(), settlement, params, config.initial_soc)?;
    let per_hour = 1.0 / settlement.dt_hours();
    let skip_start = ((options.warmup_hours * per_hour).round() as usize).min(result.decisions.len());
    let skip_end = ((options.cooldown_hours * per_hour).round() as usize).min(result.decisions.len() - skip_start);
    result.metric_window = (skip_start, result.decisions.len() - skip_end);
    Ok(result)
}

/// Profit of `result` relative to the reference run over the same horizon.
pub fn utilization(result: &SimulationResult, reference: &SimulationResult) -> Result<f64> {
    let reference_profit = reference.metric_profit();
    if !(reference_profit > 0.0) {
        return Err(Error::NonPositiveReference(reference_profit));
    }
    if (result.span_hours() - reference.span_hours()).abs() > 1e-9 {
        return Err(Error::HorizonMismatch(format!(
            "result spans {} h, reference {} h",
            result.span_hours(),
            reference.span_hours()
        )));
    }
    Ok(result.metric_profit() / reference_profit)
}
