//! Uniformly sampled price tapes.

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling interval of a [`PriceSeries`], in whole seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Resolution(u32);

impl Resolution {
    pub const FIVE_MINUTES: Resolution = Resolution(300);
    pub const HOURLY: Resolution = Resolution(3600);
    pub const DAILY: Resolution = Resolution(86_400);

    pub fn from_secs(secs: u32) -> Result<Self> {
        if secs == 0 {
            return Err(Error::InvalidSeries("resolution must be positive".into()));
        }
        Ok(Self(secs))
    }

    pub fn from_minutes(minutes: u32) -> Result<Self> {
        Self::from_secs(minutes * 60)
    }

    pub fn as_secs(self) -> u32 {
        self.0
    }

    /// Length of one interval in hours (the Δt used by all energy accounting).
    pub fn hours(self) -> f64 {
        self.0 as f64 / 3600.0
    }

    pub fn as_duration(self) -> Duration {
        Duration::seconds(self.0 as i64)
    }

    /// How many intervals of `self` fit in one interval of `coarser`, if exact.
    pub fn ratio_to(self, coarser: Resolution) -> Option<usize> {
        coarser.0.is_multiple_of(self.0).then(|| (coarser.0 / self.0) as usize)
    }
}

impl std::fmt::Display for Resolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            s if s % 3600 == 0 => write!(f, "{}h", s / 3600),
            s if s % 60 == 0 => write!(f, "{}min", s / 60),
            s => write!(f, "{s}s"),
        }
    }
}

/// A gap-free, uniformly spaced price tape for one zone, in $/MWh.
/// Negative prices are valid.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    zone: String,
    start: DateTime<Utc>,
    resolution: Resolution,
    values: Vec<f64>,
}

impl PriceSeries {
    pub fn new(zone: impl Into<String>, start: DateTime<Utc>, resolution: Resolution, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSeries("price series is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("non-finite price at index {i}")));
        }
        Ok(Self { zone: zone.into(), start, resolution, values })
    }

    /// Convenience constructor for tests and synthetic tapes starting at the epoch.
    pub fn from_values(resolution: Resolution, values: Vec<f64>) -> Result<Self> {
        Self::new("SYN", DateTime::<Utc>::UNIX_EPOCH, resolution, values)
    }

    pub fn zone(&self) -> &str {
        &self.zone
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn dt_hours(&self) -> f64 {
        self.resolution.hours()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, i: usize) -> DateTime<Utc> {
        self.start + Duration::seconds(i as i64 * self.resolution.as_secs() as i64)
    }

    /// Exclusive end of the covered interval.
    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.len())
    }

    pub fn span_hours(&self) -> f64 {
        self.len() as f64 * self.dt_hours()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.zone.clone(), self.start, self.resolution, values)
    }

    /// Block means at a coarser resolution. The length must divide evenly.
    pub fn resample_mean(&self, target: Resolution) -> Result<Self> {
        let k = self.resolution.ratio_to(target).ok_or_else(|| {
            Error::InvalidSeries(format!("{target} is not a multiple of {}", self.resolution))
        })?;
        if !self.len().is_multiple_of(k) {
            return Err(Error::InvalidSeries(format!(
                "{} intervals of {} do not fill whole {target} blocks",
                self.len(),
                self.resolution
            )));
        }
        let values = self.values.chunks(k).map(|c| c.iter().sum::<f64>() / k as f64).collect();
        Ok(Self { zone: self.zone.clone(), start: self.start, resolution: target, values })
    }

    /// Each value repeated to fill a finer resolution.
    pub fn repeat_to(&self, target: Resolution) -> Result<Self> {
        let k = target.ratio_to(self.resolution).ok_or_else(|| {
            Error::InvalidSeries(format!("{} is not a multiple of {target}", self.resolution))
        })?;
        let values = self.values.iter().flat_map(|&v| std::iter::repeat_n(v, k)).collect();
        Ok(Self { zone: self.zone.clone(), start: self.start, resolution: target, values })
    }

    /// Convert to `target` by block averaging (coarser) or repetition (finer).
    pub fn to_resolution(&self, target: Resolution) -> Result<Self> {
        use std::cmp::Ordering::*;
        match target.cmp(&self.resolution) {
            Equal => Ok(self.clone()),
            Greater => self.resample_mean(target),
            Less => self.repeat_to(target),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(PriceSeries::from_values(Resolution::HOURLY, vec![]).is_err());
        assert!(PriceSeries::from_values(Resolution::HOURLY, vec![1.0, f64::NAN]).is_err());
        assert!(PriceSeries::from_values(Resolution::HOURLY, vec![-30.0]).is_ok());
    }

    #[test]
    fn resample_and_repeat() {
        let s = PriceSeries::from_values(Resolution::FIVE_MINUTES, (0..24).map(f64::from).collect()).unwrap();
        let h = s.resample_mean(Resolution::HOURLY).unwrap();
        assert_eq!(h.values(), &[5.5, 17.5]);
        let back = h.repeat_to(Resolution::FIVE_MINUTES).unwrap();
        assert_eq!(back.len(), 24);
        assert!(s.resample_mean(Resolution::from_secs(7 * 60).unwrap()).is_err());
        let short = PriceSeries::from_values(Resolution::FIVE_MINUTES, vec![1.0; 13]).unwrap();
        assert!(short.resample_mean(Resolution::HOURLY).is_err());
    }

    #[test]
    fn timestamps_are_uniform() {
        let s = PriceSeries::from_values(Resolution::FIVE_MINUTES, vec![0.0; 3]).unwrap();
        assert_eq!(s.timestamp(2) - s.timestamp(0), Duration::minutes(10));
        assert_eq!(s.end(), s.timestamp(3));
        assert_eq!(Resolution::FIVE_MINUTES.to_string(), "5min");
        assert_eq!(Resolution::HOURLY.to_string(), "1h");
    }
}
