//! Hourly load series: CSV ingestion and export, typical profiles, synthetic
//! generation, date splitting and min-max scaling.
//!
//! The CSV layout and the column-mapping file are described in
//! `docs/data_schema.md`.

use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, Timelike};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}, column `{column}`: {msg}")]
    Parse { line: u64, column: String, msg: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: timestamp does not increase")]
    NonMonotonicTime { line: u64 },
    #[error("line {line}: timestamp is not on the hourly grid")]
    IrregularSpacing { line: u64 },
    #[error("{} missing hour(s), first at {}", .0.missing.len(), .0.missing.first().map(|t| t.to_string()).unwrap_or_default())]
    Gaps(GapReport),
    #[error("invalid request: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Hours absent from the file.
    pub missing: Vec<NaiveDateTime>,
    /// Whether those hours were filled by interpolation.
    pub interpolated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GapPolicy {
    /// Any missing hour is an error.
    #[default]
    Fail,
    /// Fill runs of up to three missing hours linearly; longer runs fail.
    Interpolate,
    /// Keep the series as read and only report.
    Keep,
}

/// Maps file headers onto the series. This is also the shape of the
/// column-mapping file for third-party datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub timestamp: String,
    pub load: String,
    /// Extra numeric columns to keep; `None` keeps every other column.
    pub extras: Option<Vec<String>>,
    pub gaps: GapPolicy,
}

impl Default for Schema {
    fn default() -> Self {
        Self { timestamp: "timestamp".into(), load: "load".into(), extras: None, gaps: GapPolicy::Fail }
    }
}

impl Schema {
    pub fn from_file(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| DataError::Invalid(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RawSeries {
    pub timestamps: Vec<NaiveDateTime>,
    /// [MW]
    pub load: Vec<f64>,
    pub extras: Vec<Column>,
}

impl RawSeries {
    pub fn len(&self) -> usize {
        self.load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load.is_empty()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> RawSeries {
        RawSeries {
            timestamps: self.timestamps[range.clone()].to_vec(),
            load: self.load[range.clone()].to_vec(),
            extras: self.extras.iter().map(|c| Column { name: c.name.clone(), values: c.values[range.clone()].to_vec() }).collect(),
        }
    }

    /// Index of the first timestamp at or after `t`.
    pub fn position(&self, t: NaiveDateTime) -> usize {
        self.timestamps.partition_point(|s| *s < t)
    }
}

/// Accepts `YYYY-MM-DD[T| ]HH:MM[:SS]`, optionally with a fixed UTC offset,
/// which is dropped (wall-clock time is kept).
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    DateTime::parse_from_rfc3339(s).ok().map(|t| t.naive_local())
}

fn on_hour_grid(t: NaiveDateTime) -> bool {
    t.minute() == 0 && t.second() == 0 && t.nanosecond() == 0
}

/// Reads a CSV with a header row according to `schema`. Lines starting with
/// `#` are skipped.
pub fn ingest_csv(path: &Path, schema: &Schema) -> Result<(RawSeries, GapReport), DataError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| DataError::MissingColumn(name.into()));
    let ts_col = find(&schema.timestamp)?;
    let load_col = find(&schema.load)?;
    let extra_cols: Vec<(usize, String)> = match &schema.extras {
        Some(names) => names.iter().map(|n| find(n).map(|i| (i, n.clone()))).collect::<Result<_, _>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != ts_col && *i != load_col)
            .map(|(i, h)| (i, h.to_string()))
            .collect(),
    };

    let mut series = RawSeries {
        extras: extra_cols.iter().map(|(_, n)| Column { name: n.clone(), values: Vec::new() }).collect(),
        ..Default::default()
    };
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let t = parse_timestamp(field(ts_col)).ok_or_else(|| DataError::Parse {
            line,
            column: schema.timestamp.clone(),
            msg: format!("cannot parse `{}` as a timestamp", field(ts_col)),
        })?;
        if !on_hour_grid(t) {
            return Err(DataError::IrregularSpacing { line });
        }
        if let Some(prev) = series.timestamps.last() {
            if t <= *prev {
                return Err(DataError::NonMonotonicTime { line });
            }
        }
        let number = |i: usize, name: &str| -> Result<f64, DataError> {
            field(i).parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| DataError::Parse {
                line,
                column: name.into(),
                msg: format!("`{}` is not a finite number", field(i)),
            })
        };
        let load = number(load_col, &schema.load)?;
        if load <= 0.0 {
            return Err(DataError::Parse { line, column: schema.load.clone(), msg: format!("load {load} must be positive") });
        }
        series.timestamps.push(t);
        series.load.push(load);
        for (k, (i, name)) in extra_cols.iter().enumerate() {
            series.extras[k].values.push(number(*i, name)?);
        }
    }

    let missing = missing_hours(&series.timestamps);
    let mut report = GapReport { missing, interpolated: false };
    if report.missing.is_empty() {
        return Ok((series, report));
    }
    match schema.gaps {
        GapPolicy::Fail => Err(DataError::Gaps(report)),
        GapPolicy::Keep => Ok((series, report)),
        GapPolicy::Interpolate => {
            let filled = interpolate(&series, 3).ok_or_else(|| DataError::Gaps(report.clone()))?;
            report.interpolated = true;
            Ok((filled, report))
        }
    }
}

fn missing_hours(ts: &[NaiveDateTime]) -> Vec<NaiveDateTime> {
    let mut out = Vec::new();
    for w in ts.windows(2) {
        let mut t = w[0] + Duration::hours(1);
        while t < w[1] {
            out.push(t);
            t += Duration::hours(1);
        }
    }
    out
}

/// Linear fill of gaps no longer than `max_run` hours; `None` if any gap is longer.
fn interpolate(s: &RawSeries, max_run: i64) -> Option<RawSeries> {
    let mut out = RawSeries {
        extras: s.extras.iter().map(|c| Column { name: c.name.clone(), values: Vec::new() }).collect(),
        ..Default::default()
    };
    for i in 0..s.len() {
        if i > 0 {
            let run = (s.timestamps[i] - s.timestamps[i - 1]).num_hours() - 1;
            if run > max_run {
                return None;
            }
            for k in 1..=run {
                let f = k as f64 / (run + 1) as f64;
                out.timestamps.push(s.timestamps[i - 1] + Duration::hours(k));
                out.load.push(s.load[i - 1] + f * (s.load[i] - s.load[i - 1]));
                for (c, src) in out.extras.iter_mut().zip(&s.extras) {
                    c.values.push(src.values[i - 1] + f * (src.values[i] - src.values[i - 1]));
                }
            }
        }
        out.timestamps.push(s.timestamps[i]);
        out.load.push(s.load[i]);
        for (c, src) in out.extras.iter_mut().zip(&s.extras) {
            c.values.push(src.values[i]);
        }
    }
    Some(out)
}

/// Writes `timestamp,load,<extras…>`; readable back with [`Schema::default`].
pub fn export_csv(series: &RawSeries, path: &Path) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["timestamp".to_string(), "load".to_string()];
    header.extend(series.extras.iter().map(|c| c.name.clone()));
    w.write_record(&header)?;
    for i in 0..series.len() {
        let mut row = vec![series.timestamps[i].format(TIMESTAMP_FORMAT).to_string(), series.load[i].to_string()];
        row.extend(series.extras.iter().map(|c| c.values[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    /// One value: the mean over the window.
    #[default]
    Mean,
    /// 24 values: the mean of each hour of day over the window.
    HourOfDay,
}

/// Typical load over `window` (indices into the series).
pub fn typical_profile(series: &RawSeries, window: std::ops::Range<usize>, mode: ProfileMode) -> Result<Vec<f64>, DataError> {
    if window.is_empty() || window.end > series.len() {
        return Err(DataError::Invalid(format!("window {window:?} is empty or exceeds {} samples", series.len())));
    }
    match mode {
        ProfileMode::Mean => Ok(vec![series.load[window.clone()].iter().sum::<f64>() / window.len() as f64]),
        ProfileMode::HourOfDay => {
            let mut sum = [0.0; 24];
            let mut count = [0usize; 24];
            for i in window {
                let h = series.timestamps[i].hour() as usize;
                sum[h] += series.load[i];
                count[h] += 1;
            }
            if let Some(h) = count.iter().position(|c| *c == 0) {
                return Err(DataError::Invalid(format!("window has no sample at hour {h}")));
            }
            Ok(sum.iter().zip(count).map(|(s, c)| s / c as f64).collect())
        }
    }
}

/// Parameters of the synthetic load generator:
/// `base·(1 + daily·sin(2πt/24 + phase) + weekly·sin(2πt/168)) + noise`,
/// with Gaussian noise of standard deviation `noise·base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub start: NaiveDateTime,
    pub hours: usize,
    pub base: f64,
    pub daily_amplitude: f64,
    pub weekly_amplitude: f64,
    pub phase: f64,
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2015, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
            // All of 2015 plus January 2016.
            hours: 8760 + 744,
            base: 1000.0,
            daily_amplitude: 0.1,
            weekly_amplitude: 0.05,
            phase: 0.0,
            noise: 0.01,
        }
    }
}

pub fn synthesize(spec: &SynthSpec, seed: u64) -> Result<RawSeries, DataError> {
    if !(spec.base > 0.0) || spec.noise < 0.0 || spec.daily_amplitude.abs() + spec.weekly_amplitude.abs() >= 1.0 {
        return Err(DataError::Invalid("synthetic spec needs base > 0, noise ≥ 0 and total amplitude below 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, spec.noise * spec.base).map_err(|e| DataError::Invalid(e.to_string()))?;
    let tau = std::f64::consts::TAU;
    let mut s = RawSeries::default();
    for t in 0..spec.hours {
        let x = t as f64;
        let shape = 1.0 + spec.daily_amplitude * (tau * x / 24.0 + spec.phase).sin() + spec.weekly_amplitude * (tau * x / 168.0).sin();
        let load = (spec.base * shape + normal.sample(&mut rng)).max(1e-3 * spec.base);
        s.timestamps.push(spec.start + Duration::hours(t as i64));
        s.load.push(load);
    }
    Ok(s)
}

/// Splits at `boundary`: train holds timestamps before it, test the rest.
pub fn split(series: &RawSeries, boundary: NaiveDateTime) -> (RawSeries, RawSeries) {
    let k = series.position(boundary);
    (series.slice(0..k), series.slice(k..series.len()))
}

/// Per-column min-max scaling to `[0, 1]`; constant columns map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let first = rows.first().ok_or_else(|| DataError::Invalid("cannot fit scaling on no rows".into()))?;
        let mut min = first.clone();
        let mut max = first.clone();
        for r in rows {
            if r.len() != min.len() {
                return Err(DataError::Invalid("ragged rows".into()));
            }
            for (j, v) in r.iter().enumerate() {
                min[j] = min[j].min(*v);
                max[j] = max[j].max(*v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| {
                let span = self.max[j] - self.min[j];
                if span > 0.0 {
                    (v - self.min[j]) / span
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn invert(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(j, v)| self.min[j] + v * (self.max[j] - self.min[j])).collect()
    }
}
