//! Plot-ready report tables (CSV) and the JSON run summary.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so
//! output is plain decimal, locale-free and byte-stable across runs.

use std::io::Write;

use serde::Serialize;

use crate::bids::BidSchedule;
use crate::data_io::DurationCurve;
use crate::error::Result;
use crate::series::PriceSeries;
use crate::simulate::{CaseId, SimulationResult};
use crate::sweep::SummaryRow;
use crate::valuation::ValueSurface;

fn stamp(series_start: chrono::DateTime<chrono::Utc>, step: chrono::Duration, k: usize) -> String {
    (series_start + step * k as i32).format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Long-format surface dump: one row per (boundary, SoC sample). Boundary
/// `t` is the end of period `t`; `stride` thins the SoC grid (1 = every point).
pub fn write_surface<W: Write>(writer: W, surface: &ValueSurface, start: chrono::DateTime<chrono::Utc>, stride: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["boundary", "timestamp", "soc_mwh", "marginal_value"])?;
    let grid = surface.grid();
    let step = surface.resolution().as_duration();
    let stride = stride.max(1);
    let mut idx: Vec<usize> = (0..grid.len()).step_by(stride).collect();
    if idx.last() != Some(&(grid.len() - 1)) {
        idx.push(grid.len() - 1);
    }
    for (t, curve) in surface.curves().iter().enumerate() {
        let ts = stamp(start, step, t);
        let t = t.to_string();
        for &i in &idx {
            w.write_record([t.as_str(), &ts, &grid.point(i).to_string(), &curve.values()[i].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Bid schedule table. Power bids: one row per period. SoC bids: one row
/// per (period, segment) with both price thresholds.
pub fn write_bids<W: Write>(
    writer: W,
    schedule: &BidSchedule,
    start: chrono::DateTime<chrono::Utc>,
    step: chrono::Duration,
    params: &crate::model::StorageParams,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    match schedule {
        BidSchedule::Power(bids) => {
            w.write_record(["period", "timestamp", "discharge_bid", "charge_bid"])?;
            for (k, b) in bids.iter().enumerate() {
                w.write_record([&k.to_string(), &stamp(start, step, k), &b.discharge_bid.to_string(), &b.charge_bid.to_string()])?;
            }
        }
        BidSchedule::Soc(curves) => {
            w.write_record(["period", "timestamp", "segment", "soc_lo", "soc_hi", "value", "discharge_bid", "charge_bid"])?;
            for (k, c) in curves.iter().enumerate() {
                let ts = stamp(start, step, k);
                for (j, (v, b)) in c.segment_values().iter().zip(c.boundaries().windows(2)).enumerate() {
                    let d = crate::bids::discharge_threshold(*v, params);
                    let ch = crate::bids::charge_threshold(*v, params);
                    w.write_record([
                        &k.to_string(),
                        &ts,
                        &j.to_string(),
                        &b[0].to_string(),
                        &b[1].to_string(),
                        &v.to_string(),
                        &d.to_string(),
                        &ch.to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-interval dispatch trace.
pub fn write_trace<W: Write>(writer: W, result: &SimulationResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "interval",
        "timestamp",
        "price",
        "discharge_mw",
        "charge_mw",
        "soc_after_mwh",
        "profit",
        "opportunity_value_delta",
    ])?;
    for (k, d) in result.decisions.iter().enumerate() {
        w.write_record([
            &k.to_string(),
            &result.prices.timestamp(k).format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            &result.prices.values()[k].to_string(),
            &d.discharge_power.to_string(),
            &d.charge_power.to_string(),
            &d.soc_after.to_string(),
            &d.realized_profit.to_string(),
            &d.opportunity_value_delta.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn write_summary_csv<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "zone",
        "duration_h",
        "case",
        "total_profit",
        "metric_profit",
        "utilization",
        "cycles",
        "discharged_mwh",
    ])?;
    for r in rows {
        w.write_record([
            r.zone.as_str(),
            &r.duration_hours.to_string(),
            r.case.as_str(),
            &r.total_profit.to_string(),
            &r.metric_profit.to_string(),
            &opt(r.utilization),
            &r.cycles.to_string(),
            &r.discharged_mwh.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Utilization matrix: one row per (zone, duration), one column per case.
pub fn write_utilization_matrix<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<()> {
    let mut cases: Vec<CaseId> = rows.iter().map(|r| r.case).collect();
    cases.sort();
    cases.dedup();
    let mut keys: Vec<(&str, f64)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|k| k.0 == r.zone && k.1 == r.duration_hours) {
            keys.push((&r.zone, r.duration_hours));
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["zone".to_string(), "duration_h".to_string()];
    header.extend(cases.iter().map(|c| c.to_string()));
    w.write_record(&header)?;
    for (zone, d) in keys {
        let mut rec = vec![zone.to_string(), d.to_string()];
        for c in &cases {
            let u = rows.iter().find(|r| r.zone == zone && r.duration_hours == d && r.case == *c).and_then(|r| r.utilization);
            rec.push(opt(u));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_duration_curve<W: Write>(writer: W, curve: &DurationCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rank", "value", "marker"])?;
    for (k, v) in curve.values.iter().enumerate() {
        let marker = if k == curve.top_index {
            "top_1pct"
        } else if k == curve.bottom_index {
            "bottom_1pct"
        } else {
            ""
        };
        w.write_record([&k.to_string(), &v.to_string(), marker])?;
    }
    w.flush()?;
    Ok(())
}

/// One price input as recorded in the summary document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputRecord {
    pub zone: String,
    pub market: &'static str,
    pub start: String,
    pub resolution: String,
    pub intervals: usize,
    pub mean_price: f64,
    /// Intervals forward-filled on load.
    pub filled_intervals: usize,
}

impl InputRecord {
    pub fn new(series: &PriceSeries, market: &'static str, filled_intervals: usize) -> Self {
        Self {
            zone: series.zone().to_string(),
            market,
            start: series.start().format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            resolution: series.resolution().to_string(),
            intervals: series.len(),
            mean_price: series.mean(),
            filled_intervals,
        }
    }
}

/// The JSON summary document. Deliberately free of wall-clock data so
/// identical runs produce identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryDocument<S: Serialize> {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub settings: S,
    pub inputs: Vec<InputRecord>,
    pub rows: Vec<SummaryRow>,
}

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

pub fn write_summary_json<W: Write, S: Serialize>(mut writer: W, doc: &SummaryDocument<S>) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, doc)?;
    writer.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SoCGrid, StorageParams};
    use crate::series::Resolution;
    use crate::valuation::{backward_induct, ValueCurve};

    fn text(f: impl FnOnce(&mut Vec<u8>)) -> String {
        let mut buf = Vec::new();
        f(&mut buf);
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn surface_dump_shape() {
        let p = StorageParams::new(0.5, 1.0, 0.9, 10.0);
        let g = SoCGrid::new(0.0, 1.0, 11).unwrap();
        let prices = PriceSeries::from_values(Resolution::HOURLY, vec![5.0, 30.0]).unwrap();
        let s = backward_induct(&prices, &p, &g, &ValueCurve::zero(g)).unwrap();
        let out = text(|b| write_surface(b, &s, prices.start(), 4).unwrap());
        let lines: Vec<&str> = out.lines().collect();
        // 3 boundaries x soc samples 0, 0.4, 0.8, 1.0
        assert_eq!(lines.len(), 1 + 3 * 4);
        assert_eq!(lines[1], "0,1970-01-01T00:00:00Z,0,18");
        assert!(lines[12].starts_with("2,1970-01-01T02:00:00Z,1,0"));
    }

    #[test]
    fn summary_tables() {
        let row = |case, u| SummaryRow {
            zone: "NYC".into(),
            duration_hours: 4.0,
            case,
            total_profit: 10.5,
            metric_profit: 10.5,
            utilization: u,
            cycles: 0.25,
            discharged_mwh: 1.0,
        };
        let rows = vec![row(CaseId::RtSbPf, Some(1.0)), row(CaseId::DaPbDf, None)];
        let out = text(|b| write_summary_csv(b, &rows).unwrap());
        assert_eq!(out.lines().nth(1).unwrap(), "NYC,4,RT-SB-PF,10.5,10.5,1,0.25,1");
        assert_eq!(out.lines().nth(2).unwrap(), "NYC,4,DA-PB-DF,10.5,10.5,,0.25,1");
        let m = text(|b| write_utilization_matrix(b, &rows).unwrap());
        assert_eq!(m, "zone,duration_h,DA-PB-DF,RT-SB-PF\nNYC,4,,1\n");
        let doc = SummaryDocument { schema_version: 1, tool_version: "x", settings: (), inputs: vec![], rows };
        let json = text(|b| write_summary_json(b, &doc).unwrap());
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["rows"][0]["case"], "RT-SB-PF");
        assert!(v["rows"][1]["utilization"].is_null());
    }

    #[test]
    fn duration_curve_markers() {
        let c = crate::data_io::duration_curve(&(0..200).map(f64::from).collect::<Vec<_>>()).unwrap();
        let out = text(|b| write_duration_curve(b, &c).unwrap());
        assert_eq!(out.lines().nth(3).unwrap(), "2,197,top_1pct");
        assert_eq!(out.lines().nth(199).unwrap(), "198,1,bottom_1pct");
    }
}
