//! Storage parameters, the discrete SoC grid and per-interval dispatch records.
//!
//! Units throughout the crate: energy in MWh, power in MW, money in $,
//! prices in $/MWh and time steps in hours. Interval energy is power × Δt.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of SoC grid points used by valuation.
pub const DEFAULT_GRID_POINTS: usize = 1001;

/// The grid must resolve at least this many points inside one full-power
/// interval of SoC movement.
pub const MIN_POINTS_PER_FULL_POWER_STEP: f64 = 10.0;

/// Physical and economic parameters of one storage unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageParams {
    /// Charge and discharge power rating, MW.
    pub power_rating: f64,
    /// Energy capacity, MWh.
    pub energy_capacity: f64,
    /// One-way efficiency, applied on both charge and discharge.
    pub efficiency: f64,
    /// Marginal discharge cost, $/MWh.
    pub discharge_cost: f64,
    pub soc_min: f64,
    pub soc_max: f64,
}

impl StorageParams {
    /// Parameters with the full `[0, energy_capacity]` SoC range.
    pub fn new(power_rating: f64, energy_capacity: f64, efficiency: f64, discharge_cost: f64) -> Self {
        Self {
            power_rating,
            energy_capacity,
            efficiency,
            discharge_cost,
            soc_min: 0.0,
            soc_max: energy_capacity,
        }
    }

    /// A unit with the given duration (hours), 81% round-trip efficiency
    /// and $10/MWh discharge cost.
    pub fn with_duration(power_rating: f64, duration_hours: f64) -> Self {
        Self::new(power_rating, power_rating * duration_hours, 0.9, 10.0)
    }

    pub fn with_soc_limits(mut self, soc_min: f64, soc_max: f64) -> Self {
        self.soc_min = soc_min;
        self.soc_max = soc_max;
        self
    }

    /// Returns the parameters unchanged when every invariant holds.
    pub fn validate(self) -> Result<Self> {
        fn bad(field: &'static str, reason: String) -> Error {
            Error::InvalidParam { field, reason }
        }
        let finite = [
            ("power_rating", self.power_rating),
            ("energy_capacity", self.energy_capacity),
            ("efficiency", self.efficiency),
            ("discharge_cost", self.discharge_cost),
            ("soc_min", self.soc_min),
            ("soc_max", self.soc_max),
        ];
        for (field, v) in finite {
            if !v.is_finite() {
                return Err(bad(field, format!("{v} is not finite")));
            }
        }
        if self.power_rating <= 0.0 {
            return Err(bad("power_rating", format!("{} must be positive", self.power_rating)));
        }
        if self.energy_capacity <= 0.0 {
            return Err(bad("energy_capacity", format!("{} must be positive", self.energy_capacity)));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(bad("efficiency", format!("{} must lie in (0, 1]", self.efficiency)));
        }
        if self.discharge_cost < 0.0 {
            return Err(bad("discharge_cost", format!("{} must be non-negative", self.discharge_cost)));
        }
        if self.soc_min < 0.0 {
            return Err(bad("soc_min", format!("{} must be non-negative", self.soc_min)));
        }
        if self.soc_min >= self.soc_max {
            return Err(bad("soc_min", format!("{} must be below soc_max {}", self.soc_min, self.soc_max)));
        }
        if self.soc_max > self.energy_capacity {
            return Err(bad(
                "soc_max",
                format!("{} exceeds energy_capacity {}", self.soc_max, self.energy_capacity),
            ));
        }
        Ok(self)
    }

    /// Energy-to-power ratio in hours.
    pub fn duration_hours(&self) -> f64 {
        self.energy_capacity / self.power_rating
    }

    pub fn usable_energy(&self) -> f64 {
        self.soc_max - self.soc_min
    }

    /// Largest feasible discharge power from SoC `soc` over a step of `dt` hours.
    pub fn discharge_limit(&self, soc: f64, dt: f64) -> f64 {
        self.power_rating.min((soc - self.soc_min).max(0.0) * self.efficiency / dt)
    }

    /// Largest feasible charge power from SoC `soc` over a step of `dt` hours.
    pub fn charge_limit(&self, soc: f64, dt: f64) -> f64 {
        self.power_rating.min((self.soc_max - soc).max(0.0) / (self.efficiency * dt))
    }

    /// SoC after discharging `p` and charging `b` for `dt` hours, clamped
    /// to the SoC limits to absorb floating-point overshoot.
    pub fn soc_after(&self, soc: f64, p: f64, b: f64, dt: f64) -> f64 {
        let next = soc - p * dt / self.efficiency + b * self.efficiency * dt;
        next.clamp(self.soc_min, self.soc_max)
    }

    pub fn contains_soc(&self, soc: f64) -> bool {
        soc >= self.soc_min && soc <= self.soc_max
    }

    pub(crate) fn check_soc(&self, soc: f64) -> Result<()> {
        if self.contains_soc(soc) {
            Ok(())
        } else {
            Err(Error::SocOutOfRange { soc, min: self.soc_min, max: self.soc_max })
        }
    }
}

/// Equally spaced SoC levels over `[soc_min, soc_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoCGrid {
    soc_min: f64,
    soc_max: f64,
    num_points: usize,
}

/// Where an SoC value falls relative to a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridPosition {
    Below,
    At(usize),
    Above,
}

impl SoCGrid {
    pub fn new(soc_min: f64, soc_max: f64, num_points: usize) -> Result<Self> {
        if num_points < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {num_points}")));
        }
        if !(soc_min.is_finite() && soc_max.is_finite()) || soc_min >= soc_max {
            return Err(Error::InvalidGrid(format!("bad range [{soc_min}, {soc_max}]")));
        }
        Ok(Self { soc_min, soc_max, num_points })
    }

    /// Grid over the storage SoC range whose step resolves a full-power
    /// move over `dt` hours with at least ten points.
    pub fn for_storage(params: &StorageParams, num_points: usize, dt: f64) -> Result<Self> {
        let grid = Self::new(params.soc_min, params.soc_max, num_points)?;
        let limit = Self::max_step(params, dt);
        if grid.step() > limit * (1.0 + 1e-12) {
            return Err(Error::InvalidGrid(format!(
                "step {} MWh exceeds P*eta*dt/10 = {} MWh; use at least {} points",
                grid.step(),
                limit,
                Self::min_points(params, dt)
            )));
        }
        Ok(grid)
    }

    /// The default-sized grid, enlarged when needed to honour the step limit.
    pub fn auto(params: &StorageParams, dt: f64) -> Result<Self> {
        let n = DEFAULT_GRID_POINTS.max(Self::min_points(params, dt));
        Self::for_storage(params, n, dt)
    }

    fn max_step(params: &StorageParams, dt: f64) -> f64 {
        params.power_rating * params.efficiency * dt / MIN_POINTS_PER_FULL_POWER_STEP
    }

    /// Smallest point count satisfying the step limit for this storage and step.
    pub fn min_points(params: &StorageParams, dt: f64) -> usize {
        let cells = (params.usable_energy() / Self::max_step(params, dt) - 1e-9).ceil();
        (cells as usize + 1).max(2)
    }

    pub fn soc_min(&self) -> f64 {
        self.soc_min
    }

    pub fn soc_max(&self) -> f64 {
        self.soc_max
    }

    pub fn len(&self) -> usize {
        self.num_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.soc_max - self.soc_min) / (self.num_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.num_points {
            self.soc_max
        } else {
            self.soc_min + i as f64 * self.step()
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_points).map(|i| self.point(i))
    }

    /// Slack for deciding whether a computed SoC is inside the grid range.
    fn tolerance(&self) -> f64 {
        (self.soc_max - self.soc_min) * 1e-9
    }

    /// Nearest grid point, ties toward lower SoC. Values within a tiny
    /// tolerance of either end snap onto that end.
    pub fn locate(&self, e: f64) -> GridPosition {
        let tol = self.tolerance();
        if e < self.soc_min - tol {
            return GridPosition::Below;
        }
        if e > self.soc_max + tol {
            return GridPosition::Above;
        }
        let x = ((e - self.soc_min) / self.step()).max(0.0);
        let lo = x.floor();
        let idx = if x - lo > 0.5 { lo as usize + 1 } else { lo as usize };
        GridPosition::At(idx.min(self.num_points - 1))
    }

    /// Index of the grid point nearest to `e`.
    pub fn soc_to_index(&self, e: f64) -> Result<usize> {
        match self.locate(e) {
            GridPosition::At(i) => Ok(i),
            _ => Err(Error::SocOutOfRange { soc: e, min: self.soc_min, max: self.soc_max }),
        }
    }
}

/// Outcome of one settlement interval.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DispatchDecision {
    /// MW
    pub discharge_power: f64,
    /// MW
    pub charge_power: f64,
    /// MWh at the end of the interval.
    pub soc_after: f64,
    /// price × (p − b) × Δt − c × p × Δt, in $.
    pub realized_profit: f64,
    /// Change of the bid opportunity value; only set by SoC-bid dispatch.
    pub opportunity_value_delta: f64,
}

impl DispatchDecision {
    pub(crate) fn idle(soc: f64) -> Self {
        Self { soc_after: soc, ..Default::default() }
    }

    pub(crate) fn settle(params: &StorageParams, soc: f64, price: f64, p: f64, b: f64, dt: f64) -> Self {
        Self {
            discharge_power: p,
            charge_power: b,
            soc_after: params.soc_after(soc, p, b, dt),
            realized_profit: price * (p - b) * dt - params.discharge_cost * p * dt,
            opportunity_value_delta: 0.0,
        }
    }

    pub fn net_power(&self) -> f64 {
        self.discharge_power - self.charge_power
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_accepts_reference_storage() {
        assert!(StorageParams::new(1.0, 6.0, 0.9, 10.0).validate().is_ok());
        assert!(StorageParams::new(1.0, 1.0, 1.0, 0.0).validate().is_ok());
    }

    #[test]
    fn validate_names_offending_field() {
        let err = StorageParams::new(1.0, 1.0, 1.2, 10.0).validate().unwrap_err();
        assert!(matches!(err, Error::InvalidParam { field: "efficiency", .. }), "{err}");

        let err = StorageParams::new(0.0, 1.0, 0.9, 10.0).validate().unwrap_err();
        assert!(matches!(err, Error::InvalidParam { field: "power_rating", .. }));

        let err = StorageParams::new(1.0, 1.0, 0.9, -1.0).validate().unwrap_err();
        assert!(matches!(err, Error::InvalidParam { field: "discharge_cost", .. }));

        let err = StorageParams::new(1.0, 1.0, 0.9, 1.0).with_soc_limits(0.5, 0.5).validate().unwrap_err();
        assert!(matches!(err, Error::InvalidParam { field: "soc_min", .. }));

        let err = StorageParams::new(1.0, 1.0, 0.9, 1.0).with_soc_limits(0.0, 1.5).validate().unwrap_err();
        assert!(matches!(err, Error::InvalidParam { field: "soc_max", .. }));
    }

    #[test]
    fn duration_is_derived() {
        let p = StorageParams::new(2.0, 12.0, 0.9, 10.0);
        assert_eq!(p.duration_hours(), 6.0);
    }

    #[test]
    fn soc_to_index_examples() {
        let g = SoCGrid::new(0.0, 1.0, 1001).unwrap();
        assert_eq!(g.soc_to_index(0.5).unwrap(), 500);
        assert_eq!(g.soc_to_index(0.0).unwrap(), 0);
        assert_eq!(g.soc_to_index(1.0).unwrap(), 1000);
        assert!(g.soc_to_index(1.1).is_err());
        assert!(g.soc_to_index(-0.1).is_err());

        // brute-force nearest point
        let e = 0.50049;
        let (best, _) = g
            .points()
            .enumerate()
            .map(|(i, x)| (i, (x - e).abs()))
            .fold((0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
        assert_eq!(best, 500);
        assert_eq!(g.soc_to_index(e).unwrap(), best);
    }

    #[test]
    fn ties_round_toward_lower_soc() {
        let g = SoCGrid::new(0.0, 4.0, 5).unwrap();
        assert_eq!(g.soc_to_index(1.5).unwrap(), 1);
        assert_eq!(g.soc_to_index(1.5000001).unwrap(), 2);
    }

    #[test]
    fn grid_step_limit_enforced() {
        let p = StorageParams::new(1.0, 72.0, 0.9, 10.0);
        assert!(SoCGrid::for_storage(&p, 1001, 1.0).is_ok());
        assert!(SoCGrid::for_storage(&p, 1001, 1.0 / 12.0).is_err());
        let g = SoCGrid::auto(&p, 1.0 / 12.0).unwrap();
        assert!(g.step() <= p.power_rating * p.efficiency / 12.0 / 10.0 + 1e-12);
        assert!(SoCGrid::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn settle_never_leaves_bounds() {
        let p = StorageParams::new(0.5, 1.0, 0.9, 10.0);
        let d = DispatchDecision::settle(&p, 0.3, 30.0, p.discharge_limit(0.3, 1.0), 0.0, 1.0);
        assert_eq!(d.soc_after, 0.0);
        assert!((d.realized_profit - 5.4).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn grid_round_trip(n in 2usize..3000, lo in -5.0f64..5.0, width in 0.01f64..100.0) {
            let g = SoCGrid::new(lo, lo + width, n).unwrap();
            for i in 0..n {
                proptest::prop_assert_eq!(g.soc_to_index(g.point(i)).unwrap(), i);
            }
        }
    }
}
