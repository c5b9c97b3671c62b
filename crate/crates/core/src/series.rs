//! Time series data model, the named store tools address series through,
//! and CSV/JSON ingestion.
//!
//! Missing cells are stored as `NaN` internally and serialize as `null`.
//! Tools that cannot tolerate gaps ask for [`TimeSeries::dense_channel`],
//! which fails instead of imputing.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Relative tolerance used when deciding whether index spacing is constant.
const SPACING_RTOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("parse error in {source_name}: {message}")]
    Parse { source_name: String, message: String },
    #[error("series '{0}' is already registered")]
    DuplicateName(String),
    #[error("series '{0}' is empty")]
    Empty(String),
    #[error("unknown series '{name}'; known series: [{}]", known.join(", "))]
    UnknownName { name: String, known: Vec<String> },
    #[error("invalid series '{name}': {message}")]
    Invalid { name: String, message: String },
    #[error("unknown channel '{channel}' in series '{name}'; channels: [{}]", channels.join(", "))]
    UnknownChannel {
        name: String,
        channel: String,
        channels: Vec<String>,
    },
    #[error("series '{name}' channel '{channel}' has {count} missing value(s); this tool does not impute gaps")]
    MissingValues {
        name: String,
        channel: String,
        count: usize,
    },
    #[error("{0}")]
    Io(String),
}

pub type Result<T, E = SeriesError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesFormat {
    Csv,
    Json,
}

impl SeriesFormat {
    /// Guess the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Self::Csv),
            "json" => Some(Self::Json),
            _ => None,
        }
    }
}

/// Position of a derived series inside its root series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub root: String,
    pub parent: String,
    pub op: String,
    /// Half-open window `[start, end)` of root positions this series covers.
    pub window: (usize, usize),
}

/// A named, indexed, possibly multivariate numeric sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    name: String,
    channels: Vec<String>,
    index: Vec<f64>,
    values: Vec<Vec<f64>>,
    interval: Option<f64>,
    lineage: Option<Lineage>,
}

impl TimeSeries {
    /// Build a series, validating every structural invariant.
    ///
    /// Non-finite cells are treated as missing. `interval` is inferred from the
    /// index when spacing is constant.
    pub fn new(name: impl Into<String>, channels: Vec<String>, index: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let name = name.into();
        let invalid = |message: String| SeriesError::Invalid {
            name: name.clone(),
            message,
        };
        if index.is_empty() {
            return Err(SeriesError::Empty(name));
        }
        if channels.is_empty() || channels.len() != values.len() {
            return Err(invalid(format!(
                "{} channel name(s) for {} value row(s)",
                channels.len(),
                values.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for ch in &channels {
            if !seen.insert(ch.as_str()) {
                return Err(invalid(format!("duplicate channel name '{ch}'")));
            }
        }
        for (ch, row) in channels.iter().zip(&values) {
            if row.len() != index.len() {
                return Err(invalid(format!(
                    "channel '{ch}' has {} values, index has {}",
                    row.len(),
                    index.len()
                )));
            }
        }
        if index.iter().any(|t| !t.is_finite()) {
            return Err(invalid("index contains non-finite entries".into()));
        }
        if index.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("index is not strictly increasing".into()));
        }
        let values = values
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|v| if v.is_finite() { v } else { f64::NAN })
                    .collect()
            })
            .collect();
        let interval = constant_spacing(&index);
        Ok(Self {
            name,
            channels,
            index,
            values,
            interval,
            lineage: None,
        })
    }

    /// Univariate series on positional index `0..values.len()`.
    pub fn from_values(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let index = (0..values.len()).map(|i| i as f64).collect();
        Self::new(name, vec!["value".into()], index, vec![values])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn index(&self) -> &[f64] {
        &self.index
    }

    pub fn interval(&self) -> Option<f64> {
        self.interval
    }

    pub fn lineage(&self) -> Option<&Lineage> {
        self.lineage.as_ref()
    }

    /// Series length `T`.
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Channel count `d`.
    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    /// True when the index is exactly `0, 1, ..., T-1`.
    pub fn is_positional(&self) -> bool {
        self.index.iter().enumerate().all(|(i, &t)| t == i as f64)
    }

    /// Raw channel values, `NaN` marking missing cells.
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn channel_position(&self, channel: &str) -> Result<usize> {
        self.channels
            .iter()
            .position(|c| c == channel)
            .ok_or_else(|| SeriesError::UnknownChannel {
                name: self.name.clone(),
                channel: channel.to_string(),
                channels: self.channels.clone(),
            })
    }

    /// Channel values, failing when any cell is missing.
    pub fn dense_channel(&self, c: usize) -> Result<&[f64]> {
        let row = &self.values[c];
        let count = row.iter().filter(|v| v.is_nan()).count();
        if count > 0 {
            return Err(SeriesError::MissingValues {
                name: self.name.clone(),
                channel: self.channels[c].clone(),
                count,
            });
        }
        Ok(row)
    }

    pub fn missing_counts(&self) -> Vec<usize> {
        self.values
            .iter()
            .map(|row| row.iter().filter(|v| v.is_nan()).count())
            .collect()
    }

    pub fn meta(&self) -> SeriesMeta {
        SeriesMeta {
            name: self.name.clone(),
            length: self.len(),
            dim: self.dim(),
            channels: self.channels.clone(),
            interval: self.interval,
            start: self.index[0],
            end: self.index[self.len() - 1],
            missing: self.channels.iter().cloned().zip(self.missing_counts()).collect(),
        }
    }

    /// Copy of positions `[start, end)` across all channels.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(SeriesError::Invalid {
                name: self.name.clone(),
                message: format!("window [{start}, {end}) is empty or out of range"),
            });
        }
        Self::new(
            self.name.clone(),
            self.channels.clone(),
            self.index[start..end].to_vec(),
            self.values.iter().map(|r| r[start..end].to_vec()).collect(),
        )
    }

    pub(crate) fn with_lineage(mut self, lineage: Lineage) -> Self {
        self.lineage = Some(lineage);
        self
    }

    pub(crate) fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

fn constant_spacing(index: &[f64]) -> Option<f64> {
    if index.len() < 2 {
        return None;
    }
    let step = index[1] - index[0];
    let tol = SPACING_RTOL * step.abs().max(1.0);
    index
        .windows(2)
        .all(|w| ((w[1] - w[0]) - step).abs() <= tol)
        .then_some(step)
}

/// JSON shape: `{ "name": str, "index": [num], "channels": { "<ch>": [num|null] } }`.
#[derive(Serialize, Deserialize)]
struct SeriesDoc {
    name: String,
    index: Vec<f64>,
    channels: IndexMap<String, Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lineage: Option<Lineage>,
}

impl Serialize for TimeSeries {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let channels = self
            .channels
            .iter()
            .zip(&self.values)
            .map(|(c, row)| (c.clone(), row.iter().map(|v| v.is_finite().then_some(*v)).collect()))
            .collect();
        SeriesDoc {
            name: self.name.clone(),
            index: self.index.clone(),
            channels,
            lineage: self.lineage.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TimeSeries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = SeriesDoc::deserialize(deserializer)?;
        let (channels, values): (Vec<_>, Vec<_>) = doc
            .channels
            .into_iter()
            .map(|(c, row)| (c, row.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect()))
            .unzip();
        let ts = TimeSeries::new(doc.name, channels, doc.index, values).map_err(serde::de::Error::custom)?;
        Ok(match doc.lineage {
            Some(l) => ts.with_lineage(l),
            None => ts,
        })
    }
}

/// Basic metadata reported by `series_info`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub name: String,
    pub length: usize,
    pub dim: usize,
    pub channels: Vec<String>,
    pub interval: Option<f64>,
    pub start: f64,
    pub end: f64,
    /// Missing-cell count per channel.
    pub missing: BTreeMap<String, usize>,
}

/// Parse a time value: a number, or an ISO-8601 / `YYYY-MM-DD[ HH:MM[:SS]]`
/// datetime converted to unix seconds.
pub fn parse_time(text: &str) -> Option<f64> {
    let text = text.trim();
    if let Ok(v) = text.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(text) {
        return Some(dt.timestamp() as f64);
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(text, fmt) {
            return Some(dt.and_utc().timestamp() as f64);
        }
    }
    chrono::NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp() as f64)
}

fn parse_cell(text: &str) -> f64 {
    text.trim().parse::<f64>().unwrap_or(f64::NAN)
}

/// Parse CSV text: header row, first column time, remaining columns channels.
/// Rows are sorted by time; unparsable value cells become missing.
pub fn parse_csv(text: &str, name: &str) -> Result<TimeSeries> {
    let perr = |message: String| SeriesError::Parse {
        source_name: name.to_string(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| perr(e.to_string()))?.clone();
    if headers.len() < 2 {
        return Err(perr("need a time column and at least one value column".into()));
    }
    let channels: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut rows: Vec<(f64, Vec<f64>)> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| perr(e.to_string()))?;
        let time = record
            .get(0)
            .and_then(parse_time)
            .ok_or_else(|| perr(format!("row {}: unparsable time value", line + 2)))?;
        let vals = (1..headers.len())
            .map(|i| record.get(i).map(parse_cell).unwrap_or(f64::NAN))
            .collect();
        rows.push((time, vals));
    }
    if rows.is_empty() {
        return Err(SeriesError::Empty(name.to_string()));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let index = rows.iter().map(|r| r.0).collect();
    let values = (0..channels.len())
        .map(|c| rows.iter().map(|r| r.1[c]).collect())
        .collect();
    TimeSeries::new(name, channels, index, values)
}

/// Parse the documented JSON shape. When the document carries a different
/// `name`, the caller-supplied name wins.
pub fn parse_json(text: &str, name: &str) -> Result<TimeSeries> {
    let perr = |message: String| SeriesError::Parse {
        source_name: name.to_string(),
        message,
    };
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| perr(e.to_string()))?;
    let index = doc
        .get("index")
        .and_then(|v| v.as_array())
        .ok_or_else(|| perr("missing 'index' array".into()))?;
    let index: Vec<f64> = index
        .iter()
        .map(|v| match v {
            serde_json::Value::Number(n) => n.as_f64(),
            serde_json::Value::String(s) => parse_time(s),
            _ => None,
        })
        .collect::<Option<_>>()
        .ok_or_else(|| perr("index entries must be numbers or datetimes".into()))?;
    let channels = doc
        .get("channels")
        .and_then(|v| v.as_object())
        .ok_or_else(|| perr("missing 'channels' object".into()))?;
    if index.is_empty() {
        return Err(SeriesError::Empty(name.to_string()));
    }
    let mut names = Vec::new();
    let mut rows = Vec::new();
    for (ch, vals) in channels {
        let vals = vals
            .as_array()
            .ok_or_else(|| perr(format!("channel '{ch}' is not an array")))?;
        if vals.len() != index.len() {
            return Err(perr(format!(
                "channel '{ch}' has {} values, index has {}",
                vals.len(),
                index.len()
            )));
        }
        names.push(ch.clone());
        rows.push(
            vals.iter()
                .map(|v| match v {
                    serde_json::Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
                    serde_json::Value::String(s) => parse_cell(s),
                    _ => f64::NAN,
                })
                .collect::<Vec<f64>>(),
        );
    }
    // sort by index, carrying every channel along
    let mut order: Vec<usize> = (0..index.len()).collect();
    order.sort_by(|&a, &b| index[a].total_cmp(&index[b]));
    let index = order.iter().map(|&i| index[i]).collect();
    let rows = rows
        .into_iter()
        .map(|r| order.iter().map(|&i| r[i]).collect())
        .collect();
    TimeSeries::new(name, names, index, rows)
}

/// Render a series as CSV (header `t,<channels...>`), missing cells as `NaN`.
pub fn to_csv(series: &TimeSeries) -> String {
    let mut out = String::from("t");
    for ch in series.channels() {
        out.push(',');
        out.push_str(ch);
    }
    out.push('\n');
    for (i, t) in series.index().iter().enumerate() {
        out.push_str(&format!("{t:?}"));
        for row in series.values() {
            out.push(',');
            if row[i].is_nan() {
                out.push_str("NaN");
            } else {
                out.push_str(&format!("{:?}", row[i]));
            }
        }
        out.push('\n');
    }
    out
}

/// Named collection of series. Tools read from it and register derived
/// results as new entries; stored series are never mutated.
#[derive(Debug, Clone, Default)]
pub struct SeriesStore {
    entries: BTreeMap<String, Arc<TimeSeries>>,
}

impl SeriesStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    /// Names of the series that were loaded rather than derived.
    pub fn root_names(&self) -> Vec<String> {
        self.entries
            .values()
            .filter(|s| s.lineage.is_none())
            .map(|s| s.name.clone())
            .collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Register a series under its own name.
    pub fn insert(&mut self, series: TimeSeries) -> Result<Arc<TimeSeries>> {
        if self.entries.contains_key(series.name()) {
            return Err(SeriesError::DuplicateName(series.name().to_string()));
        }
        let series = Arc::new(series);
        self.entries.insert(series.name().to_string(), Arc::clone(&series));
        Ok(series)
    }

    /// Load a file and register it under `name`.
    pub fn load(&mut self, path: impl AsRef<Path>, format: SeriesFormat, name: &str) -> Result<Arc<TimeSeries>> {
        if self.contains(name) {
            return Err(SeriesError::DuplicateName(name.to_string()));
        }
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SeriesError::Io(format!("{}: {e}", path.display())))?;
        let series = match format {
            SeriesFormat::Csv => parse_csv(&text, name)?,
            SeriesFormat::Json => parse_json(&text, name)?,
        };
        self.insert(series)
    }

    pub fn get(&self, name: &str) -> Result<Arc<TimeSeries>> {
        self.entries.get(name).cloned().ok_or_else(|| SeriesError::UnknownName {
            name: name.to_string(),
            known: self.names(),
        })
    }

    /// Store a derived series under `<parent>#<op>#<k>` with the smallest free
    /// `k >= 1`, and return the new name.
    pub fn put_derived(&mut self, parent: &TimeSeries, op: &str, series: TimeSeries, window: (usize, usize)) -> String {
        let name = (1..)
            .map(|k| format!("{}#{op}#{k}", parent.name()))
            .find(|n| !self.entries.contains_key(n))
            .expect("unbounded counter");
        let (root, window) = match parent.lineage() {
            Some(l) => (l.root.clone(), (l.window.0 + window.0, l.window.0 + window.1)),
            None => (parent.name().to_string(), window),
        };
        let series = series.renamed(name.clone()).with_lineage(Lineage {
            root,
            parent: parent.name().to_string(),
            op: op.to_string(),
            window,
        });
        self.entries.insert(name.clone(), Arc::new(series));
        name
    }

    /// Root series name and root window for any stored name.
    pub fn provenance(&self, name: &str) -> Option<(String, (usize, usize))> {
        let s = self.entries.get(name)?;
        Some(match s.lineage() {
            Some(l) => (l.root.clone(), l.window),
            None => (s.name().to_string(), (0, s.len())),
        })
    }
}

impl fmt::Display for TimeSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (T={}, d={}, channels=[{}])",
            self.name,
            self.len(),
            self.dim(),
            self.channels.join(", ")
        )
    }
}
