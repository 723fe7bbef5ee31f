//! Marginal opportunity value of stored energy by backward induction.
//!
//! `q_t(e)` is the derivative of the value-to-go `Q_t` with respect to the
//! SoC at the end of period `t`. Given `q_t` and the price of period `t`,
//! the curve one period earlier follows in closed form from five cases
//! (full charge, SoC-capped charge, idle, SoC-capped discharge, full
//! discharge). Curves are stored on an [`SoCGrid`] and read back by
//! nearest-point lookup, which makes `Q_t` piecewise linear.

use crate::error::{Error, Result};
use crate::model::{GridPosition, SoCGrid, StorageParams};
use crate::series::{PriceSeries, Resolution};

/// Marginal value `q(e)` in $/MWh sampled on a grid; non-increasing in SoC.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueCurve {
    grid: SoCGrid,
    values: Vec<f64>,
}

impl ValueCurve {
    pub fn new(grid: SoCGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("non-finite marginal value at grid index {i}")));
        }
        check_non_increasing(&values)?;
        Ok(Self { grid, values })
    }

    pub fn constant(grid: SoCGrid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    /// The zero terminal condition: stored energy is worth nothing after the horizon.
    pub fn zero(grid: SoCGrid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    /// Sample `f` at every grid point.
    pub fn from_fn(grid: SoCGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.points().map(f).collect())
    }

    pub fn grid(&self) -> &SoCGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `q(e)` at the nearest grid point.
    pub fn value_at(&self, e: f64) -> Result<f64> {
        Ok(self.values[self.grid.soc_to_index(e)?])
    }

    /// Lookup extended beyond the SoC range: `+inf` below the minimum
    /// (energy that does not exist is infinitely valuable) and `-inf` above
    /// the maximum (energy that cannot be stored is worthless).
    fn extended(&self, e: f64) -> f64 {
        match self.grid.locate(e) {
            GridPosition::Below => f64::INFINITY,
            GridPosition::At(i) => self.values[i],
            GridPosition::Above => f64::NEG_INFINITY,
        }
    }

    /// `∫ q(e) de` over `[lo, hi]`, exact for the piecewise-constant curve
    /// implied by nearest-point lookup (each grid point owns the cell
    /// halfway to its neighbours).
    pub fn integral(&self, lo: f64, hi: f64) -> Result<f64> {
        let (min, max) = (self.grid.soc_min(), self.grid.soc_max());
        if !(lo < hi) {
            return Err(Error::DegenerateRange { lo, hi });
        }
        let tol = (max - min) * 1e-12;
        if lo < min - tol || hi > max + tol {
            return Err(Error::SocOutOfRange { soc: if lo < min { lo } else { hi }, min, max });
        }
        let (lo, hi) = (lo.max(min), hi.min(max));
        let step = self.grid.step();
        let half = 0.5 * step;
        let first = (((lo - min) / step) - 0.5).floor().max(0.0) as usize;
        let last = ((((hi - min) / step) + 0.5).ceil() as usize).min(self.grid.len() - 1);
        let mut total = 0.0;
        for i in first..=last {
            let centre = self.grid.point(i);
            let cell_lo = (centre - half).max(min).max(lo);
            let cell_hi = (centre + half).min(max).min(hi);
            if cell_hi > cell_lo {
                total += self.values[i] * (cell_hi - cell_lo);
            }
        }
        Ok(total)
    }
}

fn check_non_increasing(values: &[f64]) -> Result<()> {
    match values.windows(2).position(|w| w[1] > w[0]) {
        Some(i) => Err(Error::NonMonotone { index: i + 1, prev: values[i], next: values[i + 1] }),
        None => Ok(()),
    }
}

/// Average marginal value over `[lo, hi]`.
pub fn average_marginal(curve: &ValueCurve, lo: f64, hi: f64) -> Result<f64> {
    Ok(curve.integral(lo, hi)? / (hi - lo))
}

/// Which branch of the one-period recursion produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateCase {
    /// Charging at full power stays optimal; value of the SoC one full charge step up.
    FullCharge,
    /// Charging is capped by the SoC; value set by the price, `λ/η`.
    PartialCharge,
    /// Price lies between the charge and discharge thresholds.
    Idle,
    /// Discharge is capped by the SoC; value set by the price, `(λ − c)η`.
    PartialDischarge,
    /// Discharging at full power stays optimal; value one full discharge step down.
    FullDischarge,
}

impl UpdateCase {
    pub fn is_discharge(self) -> bool {
        matches!(self, UpdateCase::PartialDischarge | UpdateCase::FullDischarge)
    }
}

/// One grid point of the recursion.
///
/// `q_up` is the next-period value after a full-power charge step,
/// `q_here` the value at the same SoC and `q_down` after a full-power
/// discharge step (extended with ∓inf past the SoC limits). Ties go to the
/// earlier case. The discharge thresholds are clipped at zero, so neither
/// discharge case can fire at a negative price.
pub fn update_point(price: f64, q_up: f64, q_here: f64, q_down: f64, efficiency: f64, discharge_cost: f64) -> (UpdateCase, f64) {
    let eta = efficiency;
    let c = discharge_cost;
    if price <= q_up * eta {
        (UpdateCase::FullCharge, q_up)
    } else if price <= q_here * eta {
        (UpdateCase::PartialCharge, price / eta)
    } else if price <= (q_here / eta + c).max(0.0) {
        (UpdateCase::Idle, q_here)
    } else if price <= (q_down / eta + c).max(0.0) {
        (UpdateCase::PartialDischarge, (price - c) * eta)
    } else {
        (UpdateCase::FullDischarge, q_down)
    }
}

/// Step the marginal value curve one period back in time.
///
/// `q_next` is the curve at the end of the period, `price` the period's
/// (predicted) price and `dt` the period length in hours; full-power SoC
/// moves are `P·η·dt` when charging and `P·dt/η` when discharging.
pub fn update_step(q_next: &ValueCurve, price: f64, params: &StorageParams, dt: f64) -> Result<ValueCurve> {
    let (curve, _) = update_step_with_cases(q_next, price, params, dt)?;
    Ok(curve)
}

/// [`update_step`] that also reports the branch taken at each grid point.
pub fn update_step_with_cases(
    q_next: &ValueCurve,
    price: f64,
    params: &StorageParams,
    dt: f64,
) -> Result<(ValueCurve, Vec<UpdateCase>)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidSeries(format!("time step {dt} must be positive")));
    }
    if !price.is_finite() {
        return Err(Error::InvalidSeries(format!("non-finite price {price}")));
    }
    let grid = *q_next.grid();
    let up = params.power_rating * params.efficiency * dt;
    let down = params.power_rating / params.efficiency * dt;
    let mut values = Vec::with_capacity(grid.len());
    let mut cases = Vec::with_capacity(grid.len());
    for (i, e) in grid.points().enumerate() {
        let (case, v) = update_point(
            price,
            q_next.extended(e + up),
            q_next.values[i],
            q_next.extended(e - down),
            params.efficiency,
            params.discharge_cost,
        );
        values.push(v);
        cases.push(case);
    }
    // The recursion is monotone in exact arithmetic; `λ/η` and `(λ − c)η`
    // can overshoot a neighbouring copied value by an ulp.
    for i in 1..values.len() {
        if values[i] > values[i - 1] {
            debug_assert!(values[i] - values[i - 1] <= 1e-9 * values[i].abs().max(1.0));
            values[i] = values[i - 1];
        }
    }
    Ok((ValueCurve { grid, values }, cases))
}

/// Marginal value curves at every period boundary `t = 0..=T`.
///
/// `curves[t]` is the value of energy held at the end of period `t`
/// (so `curves[0]` is the start of the horizon and `curves[T]` the terminal
/// condition).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    resolution: Resolution,
    curves: Vec<ValueCurve>,
}

impl ValueSurface {
    pub fn horizon(&self) -> usize {
        self.curves.len() - 1
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn dt_hours(&self) -> f64 {
        self.resolution.hours()
    }

    pub fn curves(&self) -> &[ValueCurve] {
        &self.curves
    }

    pub fn curve(&self, t: usize) -> &ValueCurve {
        &self.curves[t]
    }

    pub fn grid(&self) -> &SoCGrid {
        self.curves[0].grid()
    }
}

/// How far ahead the valuation looks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValuationHorizon {
    /// One backward pass over the whole tape.
    #[default]
    Full,
    /// Consecutive windows of this many periods, each valued on its own with
    /// the terminal condition at its end (e.g. day-by-day forecasts).
    Windowed(usize),
}

/// Value the whole prediction tape in one backward pass.
pub fn backward_induct(
    prediction: &PriceSeries,
    params: &StorageParams,
    grid: &SoCGrid,
    terminal: &ValueCurve,
) -> Result<ValueSurface> {
    backward_induct_with(prediction, params, grid, terminal, ValuationHorizon::Full)
}

pub fn backward_induct_with(
    prediction: &PriceSeries,
    params: &StorageParams,
    grid: &SoCGrid,
    terminal: &ValueCurve,
    horizon: ValuationHorizon,
) -> Result<ValueSurface> {
    if prediction.is_empty() {
        return Err(Error::InvalidSeries("cannot value an empty price series".into()));
    }
    if terminal.grid() != grid {
        return Err(Error::InvalidGrid("terminal curve is on a different grid".into()));
    }
    let window = match horizon {
        ValuationHorizon::Full => usize::MAX,
        ValuationHorizon::Windowed(0) => {
            return Err(Error::InvalidSeries("valuation window must be at least one period".into()))
        }
        ValuationHorizon::Windowed(w) => w,
    };
    let dt = prediction.dt_hours();
    let prices = prediction.values();
    let t_len = prices.len();
    let mut curves = vec![terminal.clone(); t_len + 1];
    for t in (1..=t_len).rev() {
        // window boundaries keep the terminal curve: each window is valued
        // as if the horizon ended there
        if t - 1 > 0 && (t - 1) % window == 0 {
            continue;
        }
        let next = if t < t_len && t % window == 0 { terminal } else { &curves[t] };
        curves[t - 1] = update_step(next, prices[t - 1], params, dt)?;
    }
    Ok(ValueSurface { resolution: prediction.resolution(), curves })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> StorageParams {
        StorageParams::new(0.5, 1.0, 0.9, 10.0)
    }

    fn grid() -> SoCGrid {
        SoCGrid::new(0.0, 1.0, 1001).unwrap()
    }

    #[test]
    fn rejects_increasing_curve() {
        let g = SoCGrid::new(0.0, 1.0, 3).unwrap();
        let err = ValueCurve::new(g, vec![1.0, 2.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NonMonotone { index: 1, .. }));
    }

    #[test]
    fn price_20_splits_at_p_over_eta() {
        let q = update_step(&ValueCurve::zero(grid()), 20.0, &params(), 1.0).unwrap();
        let threshold = 0.5 / 0.9;
        for (e, v) in grid().points().zip(q.values()) {
            let expect = if e < threshold { 9.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-12, "e={e} v={v}");
        }
    }

    #[test]
    fn price_5_is_idle() {
        let (q, cases) = update_step_with_cases(&ValueCurve::zero(grid()), 5.0, &params(), 1.0).unwrap();
        assert!(q.values().iter().all(|&v| v == 0.0));
        assert!(cases.iter().all(|&c| c == UpdateCase::Idle));
    }

    #[test]
    fn negative_price_values_near_full_soc_negative() {
        let (q, cases) = update_step_with_cases(&ValueCurve::zero(grid()), -5.0, &params(), 1.0).unwrap();
        for ((e, v), case) in grid().points().zip(q.values()).zip(&cases) {
            assert!(!case.is_discharge());
            if e <= 0.55 + 1e-12 {
                assert_eq!(*v, 0.0, "e={e}");
            } else {
                assert!((v + 5.0 / 0.9).abs() < 1e-12, "e={e} v={v}");
            }
        }
    }

    #[test]
    fn average_marginal_examples() {
        let q = update_step(&ValueCurve::zero(grid()), 20.0, &params(), 1.0).unwrap();
        // one grid step of slack: the step of the curve sits inside a cell
        let tol = 9.0 * grid().step();
        assert!((average_marginal(&q, 0.0, 1.0).unwrap() - 5.0).abs() < tol);
        assert!((average_marginal(&q, 0.0, 0.5).unwrap() - 9.0).abs() < 1e-12);
        assert!((average_marginal(&q, 0.5, 1.0).unwrap() - 1.0).abs() < 2.0 * tol);
        assert!(matches!(average_marginal(&q, 0.5, 0.5), Err(Error::DegenerateRange { .. })));
        assert!(average_marginal(&q, 0.5, 1.5).is_err());
    }

    #[test]
    fn integral_matches_fine_riemann_sum() {
        let q = update_step(&ValueCurve::zero(grid()), 20.0, &params(), 1.0).unwrap();
        let n = 10 * 1000;
        let h = 1.0 / n as f64;
        let riemann: f64 = (0..n).map(|k| q.value_at((k as f64 + 0.5) * h).unwrap() * h).sum();
        assert!((q.integral(0.0, 1.0).unwrap() - riemann).abs() < 1e-9);
    }

    #[test]
    fn two_period_surface() {
        let p = PriceSeries::from_values(Resolution::HOURLY, vec![5.0, 30.0]).unwrap();
        let s = backward_induct(&p, &params(), &grid(), &ValueCurve::zero(grid())).unwrap();
        assert_eq!(s.horizon(), 2);
        assert!(s.curve(2).values().iter().all(|&v| v == 0.0));
        for (e, v) in grid().points().zip(s.curve(1).values()) {
            let expect = if e < 0.5 / 0.9 { 18.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-12);
        }
        let again = update_step(s.curve(1), 5.0, &params(), 1.0).unwrap();
        assert_eq!(&again, s.curve(0));
    }

    #[test]
    fn saturated_terminal_value_propagates() {
        // Charging always pays; where a full-power charge fits the value is
        // the terminal constant, above that the charge is SoC-capped and
        // the marginal unit is worth the avoided purchase λ/η.
        let m = 1e6;
        let price = 123.0;
        let p = PriceSeries::from_values(Resolution::HOURLY, vec![price]).unwrap();
        let term = ValueCurve::constant(grid(), m).unwrap();
        let s = backward_induct(&p, &params(), &grid(), &term).unwrap();
        for (e, &v) in grid().points().zip(s.curve(0).values()) {
            if e <= 1.0 - 0.5 * 0.9 + 1e-12 {
                assert_eq!(v, m, "e={e}");
            } else {
                assert!((v - price / 0.9).abs() < 1e-9, "e={e}");
            }
        }
    }

    #[test]
    fn no_spread_means_no_value() {
        let p = PriceSeries::from_values(Resolution::HOURLY, vec![10.0; 48]).unwrap();
        let s = backward_induct(&p, &params(), &grid(), &ValueCurve::zero(grid())).unwrap();
        assert!(s.curves().iter().all(|c| c.values().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn windowed_resets_at_boundaries() {
        let p = PriceSeries::from_values(Resolution::HOURLY, vec![5.0, 30.0, 5.0, 30.0]).unwrap();
        let zero = ValueCurve::zero(grid());
        let s = backward_induct_with(&p, &params(), &grid(), &zero, ValuationHorizon::Windowed(2)).unwrap();
        assert_eq!(s.curve(2), &zero);
        let full = backward_induct(&p, &params(), &grid(), &zero).unwrap();
        assert_ne!(full.curve(2), &zero);
        assert_eq!(s.curve(0), full.curve(2));
        assert!(backward_induct(&p, &params(), &SoCGrid::new(0.0, 1.0, 11).unwrap(), &zero).is_err());
    }
}
