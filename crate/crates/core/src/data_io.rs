//! Price CSV ingest and export, plus the resampling and summary statistics
//! used for reports.
//!
//! Files have the header `timestamp,zone,price_usd_per_mwh`, one row per
//! interval, UTC timestamps (`2019-01-01T00:00:00Z`; a missing offset is
//! read as UTC, a non-zero offset is rejected). Several zones may share a
//! file; rows of other zones are ignored.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::series::{PriceSeries, Resolution};

pub const CSV_HEADER: [&str; 3] = ["timestamp", "zone", "price_usd_per_mwh"];

/// What to do with missing intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GapPolicy {
    #[default]
    Error,
    /// Repeat the previous price and count the filled intervals.
    FillPrevious,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPrices {
    pub series: PriceSeries,
    /// Intervals filled under [`GapPolicy::FillPrevious`].
    pub filled_intervals: usize,
}

fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        if t.offset().local_minus_utc() != 0 {
            return Err(format!("timestamp `{s}` is not UTC"));
        }
        return Ok(t.with_timezone(&Utc));
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|t| t.and_utc())
        .ok_or_else(|| format!("unparseable timestamp `{s}`"))
}

/// Read one zone from a price CSV. Gaps are an error.
pub fn load_prices(path: &Path, zone: &str, expected: Option<Resolution>) -> Result<PriceSeries> {
    Ok(load_prices_with(path, zone, expected, GapPolicy::Error)?.series)
}

pub fn load_prices_with(path: &Path, zone: &str, expected: Option<Resolution>, gaps: GapPolicy) -> Result<LoadedPrices> {
    let file = std::fs::File::open(path)?;
    read_prices(file, &path.display().to_string(), zone, expected, gaps)
}

/// Parse price rows for `zone` from any reader. The resolution is the
/// smallest step between consecutive rows; every step must be a whole
/// multiple of it.
pub fn read_prices<R: Read>(
    reader: R,
    source_name: &str,
    zone: &str,
    expected: Option<Resolution>,
    gaps: GapPolicy,
) -> Result<LoadedPrices> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let parse_err = |line: u64, msg: String| Error::Parse { source_name: source_name.to_string(), line, msg };
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(parse_err(1, format!("expected header `{}`", CSV_HEADER.join(","))));
    }

    let mut rows: Vec<(u64, DateTime<Utc>, f64)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.get(1) != Some(zone) {
            continue;
        }
        let ts = parse_timestamp(&record[0]).map_err(|m| parse_err(line, m))?;
        let price: f64 = record[2].parse().map_err(|_| parse_err(line, format!("unparseable price `{}`", &record[2])))?;
        if !price.is_finite() {
            return Err(parse_err(line, format!("non-finite price `{}`", &record[2])));
        }
        if let Some(&(_, prev, _)) = rows.last() {
            if ts == prev {
                return Err(parse_err(line, format!("duplicate timestamp {ts}")));
            }
            if ts < prev {
                return Err(parse_err(line, format!("timestamp {ts} goes backwards")));
            }
        }
        rows.push((line, ts, price));
    }
    if rows.is_empty() {
        return Err(Error::InvalidSeries(format!("{source_name}: no rows for zone `{zone}`")));
    }

    let step_secs = rows.windows(2).map(|w| (w[1].1 - w[0].1).num_seconds()).min();
    let resolution = match (step_secs, expected) {
        (None, Some(r)) => r,
        (None, None) => {
            return Err(Error::InvalidSeries(format!("{source_name}: cannot infer resolution from one row")));
        }
        (Some(s), _) => Resolution::from_secs(u32::try_from(s).map_err(|_| parse_err(0, format!("step of {s} s")))?)?,
    };
    if let Some(r) = expected {
        if r != resolution {
            return Err(Error::InvalidSeries(format!("{source_name}: resolution is {resolution}, expected {r}")));
        }
    }

    let res = resolution.as_duration();
    let mut values = Vec::with_capacity(rows.len());
    let mut filled = 0;
    for (k, &(line, ts, price)) in rows.iter().enumerate() {
        if k > 0 {
            let prev = rows[k - 1].1;
            let delta = (ts - prev).num_seconds();
            if delta % resolution.as_secs() as i64 != 0 {
                return Err(parse_err(line, format!("{ts} is off the {resolution} grid")));
            }
            let missing = (delta / resolution.as_secs() as i64 - 1) as usize;
            if missing > 0 {
                match gaps {
                    GapPolicy::Error => {
                        return Err(Error::Gap { source_name: source_name.to_string(), at: prev + res });
                    }
                    GapPolicy::FillPrevious => {
                        let last = *values.last().unwrap();
                        values.extend(std::iter::repeat_n(last, missing));
                        filled += missing;
                    }
                }
            }
        }
        values.push(price);
    }
    Ok(LoadedPrices { series: PriceSeries::new(zone, rows[0].1, resolution, values)?, filled_intervals: filled })
}

/// Write a series in the input schema. Prices use the shortest decimal
/// that reads back to the same `f64`.
pub fn write_prices<W: Write>(writer: W, series: &PriceSeries) -> Result<()> {
    write_price_table(writer, &[series])
}

/// Several zones in one file, one zone after another.
pub fn write_price_table<W: Write>(writer: W, zones: &[&PriceSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for series in zones {
        for (i, v) in series.values().iter().enumerate() {
            let ts = series.timestamp(i).format("%Y-%m-%dT%H:%M:%SZ").to_string();
            w.write_record([ts.as_str(), series.zone(), &v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_prices(path: &Path, series: &PriceSeries) -> Result<()> {
    write_prices(std::fs::File::create(path)?, series)
}

/// Repeat each hourly price twelve times.
pub fn expand_hourly_to_5min(series: &PriceSeries) -> Result<PriceSeries> {
    if series.resolution() != Resolution::HOURLY {
        return Err(Error::InvalidSeries(format!("expected an hourly series, got {}", series.resolution())));
    }
    series.repeat_to(Resolution::FIVE_MINUTES)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MovingStats {
    /// Trailing mean over the window, one value per interval from the
    /// first complete window on.
    pub mean: PriceSeries,
    /// Per-day population standard deviation, averaged over the trailing
    /// window of whole days; one value per day from the first complete
    /// window on.
    pub daily_deviation: PriceSeries,
}

/// Trailing-window mean and window-averaged daily standard deviation.
/// The deviation window is the price window rounded down to whole days
/// (at least one); only complete days count.
pub fn moving_stats(series: &PriceSeries, window_hours: f64) -> Result<MovingStats> {
    let per_interval = series.dt_hours();
    let w = (window_hours / per_interval).round() as usize;
    if w == 0 || window_hours > series.span_hours() + 1e-9 {
        return Err(Error::InvalidSeries(format!(
            "window of {window_hours} h does not fit a {} h series",
            series.span_hours()
        )));
    }
    let v = series.values();
    let mut mean = Vec::with_capacity(v.len() + 1 - w);
    let mut sum: f64 = v[..w].iter().sum();
    mean.push(sum / w as f64);
    for i in w..v.len() {
        sum += v[i] - v[i - w];
        mean.push(sum / w as f64);
    }
    // the running sum drifts; recompute exactly every so often
    for (k, m) in mean.iter_mut().enumerate().step_by(4096) {
        *m = v[k..k + w].iter().sum::<f64>() / w as f64;
    }

    let per_day = series
        .resolution()
        .ratio_to(Resolution::DAILY)
        .ok_or_else(|| Error::InvalidSeries(format!("{} does not divide a day", series.resolution())))?;
    let days = v.len() / per_day;
    let window_days = ((window_hours / 24.0).floor() as usize).max(1);
    if days < window_days {
        return Err(Error::InvalidSeries(format!("series has {days} complete days, window needs {window_days}")));
    }
    let daily_std: Vec<f64> = v
        .chunks_exact(per_day)
        .map(|day| {
            let m = day.iter().sum::<f64>() / per_day as f64;
            (day.iter().map(|x| (x - m).powi(2)).sum::<f64>() / per_day as f64).sqrt()
        })
        .collect();
    let deviation: Vec<f64> = daily_std.windows(window_days).map(|d| d.iter().sum::<f64>() / window_days as f64).collect();

    let first_day_end = series.start() + Resolution::DAILY.as_duration() * (window_days as i32 - 1);
    Ok(MovingStats {
        mean: PriceSeries::new(series.zone(), series.timestamp(w - 1), series.resolution(), mean)?,
        daily_deviation: PriceSeries::new(series.zone(), first_day_end, Resolution::DAILY, deviation)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DurationCurve {
    /// Values sorted descending.
    pub values: Vec<f64>,
    /// Index of the top 1% quantile, `⌊0.01·N⌋`.
    pub top_index: usize,
    /// Index of the bottom 1% quantile, `⌊0.99·N⌋`.
    pub bottom_index: usize,
}

pub fn duration_curve(values: &[f64]) -> Result<DurationCurve> {
    if values.is_empty() {
        return Err(Error::InvalidSeries("duration curve of an empty series".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len();
    Ok(DurationCurve { values: sorted, top_index: n / 100, bottom_index: n * 99 / 100 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn hourly_csv(zone: &str, n: usize, skip: Option<usize>) -> String {
        let start = Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap();
        let mut s = String::from("timestamp,zone,price_usd_per_mwh\n");
        for i in (0..n).filter(|&i| Some(i) != skip) {
            let t = start + chrono::Duration::hours(i as i64);
            s += &format!("{},{zone},{}\n", t.format("%Y-%m-%dT%H:%M:%SZ"), 20.0 + (i % 7) as f64 * 1.25);
        }
        s
    }

    fn read(text: &str, zone: &str, gaps: GapPolicy) -> Result<LoadedPrices> {
        read_prices(text.as_bytes(), "mem", zone, None, gaps)
    }

    #[test]
    fn reads_a_year() {
        let text = hourly_csv("NYC", 8760, None) + &hourly_csv("WEST", 3, None)[33..];
        let s = read(&text, "NYC", GapPolicy::Error).unwrap().series;
        assert_eq!(s.len(), 8760);
        assert_eq!(s.resolution(), Resolution::HOURLY);
        assert_eq!(s.start(), Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap());
        assert!(read_prices(text.as_bytes(), "mem", "NYC", Some(Resolution::FIVE_MINUTES), GapPolicy::Error).is_err());
    }

    #[test]
    fn gap_is_named_or_filled() {
        let text = hourly_csv("NYC", 10, Some(4));
        match read(&text, "NYC", GapPolicy::Error) {
            Err(Error::Gap { at, .. }) => assert_eq!(at, Utc.with_ymd_and_hms(2019, 1, 1, 4, 0, 0).unwrap()),
            other => panic!("{other:?}"),
        }
        let filled = read(&text, "NYC", GapPolicy::FillPrevious).unwrap();
        assert_eq!(filled.filled_intervals, 1);
        assert_eq!(filled.series.len(), 10);
        assert_eq!(filled.series.values()[4], filled.series.values()[3]);
    }

    #[test]
    fn bad_rows_report_their_line() {
        let mut text = hourly_csv("NYC", 5, None);
        text = text.replacen(",22.5\n", ",abc\n", 1);
        assert!(matches!(read(&text, "NYC", GapPolicy::Error), Err(Error::Parse { line: 4, .. })));
        let dup = hourly_csv("NYC", 3, None) + &hourly_csv("NYC", 3, None)[33..];
        assert!(matches!(read(&dup, "NYC", GapPolicy::Error), Err(Error::Parse { line: 5, .. })));
        let local = "timestamp,zone,price_usd_per_mwh\n2019-01-01T00:00:00-05:00,NYC,1\n";
        assert!(matches!(read(local, "NYC", GapPolicy::Error), Err(Error::Parse { line: 2, .. })));
        assert!(read("a,b,c\n", "NYC", GapPolicy::Error).is_err());
        assert!(read(&hourly_csv("NYC", 3, None), "LONGIL", GapPolicy::Error).is_err());
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let vals = vec![0.1 + 0.2, -3.0e-7, 1e15 / 3.0, 42.0, f64::MIN_POSITIVE];
        let start = Utc.with_ymd_and_hms(2019, 3, 10, 6, 0, 0).unwrap();
        let s = PriceSeries::new("NYC", start, Resolution::FIVE_MINUTES, vals).unwrap();
        let mut buf = Vec::new();
        write_prices(&mut buf, &s).unwrap();
        let back = read_prices(buf.as_slice(), "mem", "NYC", None, GapPolicy::Error).unwrap().series;
        assert_eq!(back, s);
        let mut again = Vec::new();
        write_prices(&mut again, &back).unwrap();
        assert_eq!(buf, again);
        let text = String::from_utf8(buf).unwrap();
        assert!(!text.contains("e-") && !text.contains("e1"), "{text}");
    }

    proptest::proptest! {
        #[test]
        fn file_round_trip(vals in proptest::collection::vec(-1e6f64..1e6, 1..60), other in -500.0f64..500.0) {
            let dir = tempfile::tempdir().unwrap();
            let start = Utc.with_ymd_and_hms(2019, 7, 1, 0, 0, 0).unwrap();
            let a = PriceSeries::new("A", start, Resolution::HOURLY, vals.clone()).unwrap();
            let path = dir.path().join("a.csv");
            save_prices(&path, &a).unwrap();
            proptest::prop_assert_eq!(&load_prices(&path, "A", Some(Resolution::HOURLY)).unwrap(), &a);

            let b = PriceSeries::new("B", start, Resolution::HOURLY, vec![other; vals.len()]).unwrap();
            let both = dir.path().join("ab.csv");
            write_price_table(std::fs::File::create(&both).unwrap(), &[&a, &b]).unwrap();
            proptest::prop_assert_eq!(&load_prices(&both, "A", Some(Resolution::HOURLY)).unwrap(), &a);
            proptest::prop_assert_eq!(&load_prices(&both, "B", Some(Resolution::HOURLY)).unwrap(), &b);
        }
    }

    #[test]
    fn hourly_expansion() {
        let s = PriceSeries::from_values(Resolution::HOURLY, vec![10.0, 20.0]).unwrap();
        let x = expand_hourly_to_5min(&s).unwrap();
        assert_eq!(x.values(), [[10.0; 12], [20.0; 12]].concat());
        assert_eq!(x.mean(), s.mean());
        assert!(expand_hourly_to_5min(&x).is_err());
        let year = PriceSeries::from_values(Resolution::HOURLY, vec![1.0; 8760]).unwrap();
        assert_eq!(expand_hourly_to_5min(&year).unwrap().len(), 105_120);
    }

    #[test]
    fn moving_stats_closed_forms() {
        let flat = PriceSeries::from_values(Resolution::HOURLY, vec![30.0; 24 * 10]).unwrap();
        let st = moving_stats(&flat, 72.0).unwrap();
        assert!(st.mean.values().iter().all(|&m| m == 30.0));
        assert_eq!(st.mean.len(), 240 - 71);
        assert!(st.daily_deviation.values().iter().all(|&d| d == 0.0));
        assert_eq!(st.daily_deviation.len(), 8);

        let wave: Vec<f64> = (0..24 * 6).map(|h| if h % 24 < 12 { 1.0 } else { -1.0 }).collect();
        let st = moving_stats(&PriceSeries::from_values(Resolution::HOURLY, wave).unwrap(), 48.0).unwrap();
        assert!(st.daily_deviation.values().iter().all(|&d| (d - 1.0).abs() < 1e-15));
        assert!(moving_stats(&flat, 241.0).is_err());
    }

    #[test]
    fn duration_curves() {
        let d = duration_curve(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(d.values, vec![3.0, 2.0, 1.0]);
        let vals: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64).collect();
        let d = duration_curve(&vals).unwrap();
        assert_eq!((d.top_index, d.bottom_index), (10, 990));
        let mut a = d.values.clone();
        let mut b = vals.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        assert_eq!(duration_curve(&[5.0; 4]).unwrap().values, vec![5.0; 4]);
        assert!(duration_curve(&[]).is_err());
    }
}
