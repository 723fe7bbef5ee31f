//! Market bids derived from a value surface.
//!
//! Bids for period `t` are built from the curve at the end of that period,
//! `q_t`, the value-to-go the dispatch trades against.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::StorageParams;
use crate::valuation::{average_marginal, ValueSurface};

/// Default SoC bid resolution: segments per hour of storage duration.
pub const DEFAULT_SEGMENTS_PER_HOUR: usize = 20;

/// SoC-independent discharge and charge price thresholds, $/MWh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerBid {
    pub discharge_bid: f64,
    pub charge_bid: f64,
}

impl PowerBid {
    /// Bids implied by an average marginal value `q̄`:
    /// discharge at `c + q̄/η`, charge at `q̄·η`.
    pub fn from_average(avg_marginal: f64, params: &StorageParams) -> Self {
        Self {
            discharge_bid: discharge_threshold(avg_marginal, params),
            charge_bid: charge_threshold(avg_marginal, params),
        }
    }
}

/// Price above which discharging energy valued at `value` pays off.
pub(crate) fn discharge_threshold(value: f64, params: &StorageParams) -> f64 {
    params.discharge_cost + value / params.efficiency
}

/// Price below which charging energy valued at `value` pays off.
pub(crate) fn charge_threshold(value: f64, params: &StorageParams) -> f64 {
    value * params.efficiency
}

/// Piecewise-constant marginal value over SoC segments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoCBidCurve {
    boundaries: Vec<f64>,
    segment_values: Vec<f64>,
}

impl SoCBidCurve {
    /// `boundaries` has one more entry than `segment_values`, strictly
    /// increasing; values must be non-increasing.
    pub fn new(boundaries: Vec<f64>, segment_values: Vec<f64>) -> Result<Self> {
        if segment_values.is_empty() {
            return Err(Error::ZeroSegments);
        }
        if boundaries.len() != segment_values.len() + 1 {
            return Err(Error::InvalidGrid(format!(
                "{} boundaries for {} segments",
                boundaries.len(),
                segment_values.len()
            )));
        }
        if boundaries.windows(2).any(|w| !(w[1] > w[0])) || boundaries.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidGrid("segment boundaries must be finite and strictly increasing".into()));
        }
        if let Some(i) = segment_values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("non-finite value for segment {i}")));
        }
        if let Some(i) = segment_values.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::NonMonotone { index: i + 1, prev: segment_values[i], next: segment_values[i + 1] });
        }
        Ok(Self { boundaries, segment_values })
    }

    /// `values.len()` equal-width segments spanning `[lo, hi]`.
    pub fn equal_width(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        let bounds = equal_boundaries(lo, hi, values.len().max(1));
        Self::new(bounds, values)
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn segment_values(&self) -> &[f64] {
        &self.segment_values
    }

    pub fn num_segments(&self) -> usize {
        self.segment_values.len()
    }

    pub fn lower(&self) -> f64 {
        self.boundaries[0]
    }

    pub fn upper(&self) -> f64 {
        *self.boundaries.last().unwrap()
    }

    /// Segment whose interior or upper edge contains `e` (the segment a
    /// discharge from `e` draws on first).
    pub(crate) fn segment_below(&self, e: f64) -> Option<usize> {
        if e <= self.lower() {
            return None;
        }
        let j = self.boundaries[1..].partition_point(|&b| b < e);
        Some(j.min(self.num_segments() - 1))
    }

    /// Segment whose interior or lower edge contains `e` (the segment a
    /// charge from `e` fills first).
    pub(crate) fn segment_above(&self, e: f64) -> Option<usize> {
        if e >= self.upper() {
            return None;
        }
        let j = self.boundaries[1..].partition_point(|&b| b <= e);
        Some(j.min(self.num_segments() - 1))
    }

    /// Width-weighted mean of the segment values.
    pub fn mean_value(&self) -> f64 {
        let total: f64 = self
            .segment_values
            .iter()
            .zip(self.boundaries.windows(2))
            .map(|(v, w)| v * (w[1] - w[0]))
            .sum();
        total / (self.upper() - self.lower())
    }
}

fn equal_boundaries(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let width = (hi - lo) / n as f64;
    (0..=n).map(|j| if j == n { hi } else { lo + j as f64 * width }).collect()
}

/// One bid per valuation period.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", content = "bids", rename_all = "snake_case")]
pub enum BidSchedule {
    Power(Vec<PowerBid>),
    Soc(Vec<SoCBidCurve>),
}

impl BidSchedule {
    pub fn len(&self) -> usize {
        match self {
            BidSchedule::Power(v) => v.len(),
            BidSchedule::Soc(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Hourly discharge/charge bids from the SoC-averaged marginal value.
pub fn make_power_bids(surface: &ValueSurface, params: &StorageParams) -> Result<Vec<PowerBid>> {
    (1..=surface.horizon())
        .map(|t| {
            let avg = average_marginal(surface.curve(t), params.soc_min, params.soc_max)?;
            Ok(PowerBid::from_average(avg, params))
        })
        .collect()
}

/// Number of SoC segments for a storage: `segments_per_hour × duration`, rounded.
pub fn segment_count(params: &StorageParams, segments_per_hour: usize) -> Result<usize> {
    let j = (segments_per_hour as f64 * params.duration_hours()).round() as usize;
    if j == 0 {
        Err(Error::ZeroSegments)
    } else {
        Ok(j)
    }
}

/// SoC bids with `segments_per_hour` equal-width segments per hour of duration.
pub fn make_soc_bids(surface: &ValueSurface, params: &StorageParams, segments_per_hour: usize) -> Result<Vec<SoCBidCurve>> {
    make_soc_bids_with_count(surface, params, segment_count(params, segments_per_hour)?)
}

/// SoC bids with exactly `segments` equal-width segments over the SoC range.
/// Each segment value is the mean of `q_t` over the segment.
pub fn make_soc_bids_with_count(surface: &ValueSurface, params: &StorageParams, segments: usize) -> Result<Vec<SoCBidCurve>> {
    if segments == 0 {
        return Err(Error::ZeroSegments);
    }
    let bounds = equal_boundaries(params.soc_min, params.soc_max, segments);
    (1..=surface.horizon())
        .map(|t| {
            let curve = surface.curve(t);
            let mut values = bounds
                .windows(2)
                .map(|w| average_marginal(curve, w[0], w[1]))
                .collect::<Result<Vec<_>>>()?;
            // Averages of a non-increasing curve are non-increasing up to
            // rounding in the quadrature; remove the rounding.
            for j in 1..values.len() {
                if values[j] > values[j - 1] {
                    values[j] = values[j - 1];
                }
            }
            SoCBidCurve::new(bounds.clone(), values)
        })
        .collect()
}
