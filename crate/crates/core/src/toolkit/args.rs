//! Argument binding, coercion and typed access for tool calls.

use std::sync::Arc;

use serde_json::{Map, Value};

use super::{ParamSpec, ParamType, ToolError, ToolSpec};
use crate::series::{parse_time, SeriesStore, TimeSeries};

/// Raw arguments as drafted by the model, before they meet a [`ToolSpec`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgInput {
    Named(Map<String, Value>),
    Positional(Vec<String>),
}

/// Bind raw input to a spec: positional values are assigned to parameters in
/// declaration order, and a series parameter greedily absorbs consecutive
/// positional values that name stored series. Every value is then coerced
/// to its declared type.
pub fn bind(spec: &ToolSpec, input: &ArgInput, store: &SeriesStore) -> Result<Map<String, Value>, ToolError> {
    let raw = match input {
        ArgInput::Named(map) => map.clone(),
        ArgInput::Positional(values) => bind_positional(spec, values, store)?,
    };
    let mut out = Map::new();
    for (key, value) in &raw {
        let param = spec.parameters.iter().find(|p| p.name == *key).ok_or_else(|| {
            ToolError::invalid(format!(
                "unknown parameter '{key}' (accepted: {})",
                spec.parameters
                    .iter()
                    .map(|p| p.name.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })?;
        if value.is_null() {
            continue;
        }
        out.insert(key.clone(), coerce_value(param, value)?);
    }
    for p in &spec.parameters {
        if out.contains_key(&p.name) {
            continue;
        }
        if p.required {
            return Err(ToolError::invalid(format!("missing required parameter '{}'", p.name)));
        }
        if let Some(d) = &p.default {
            out.insert(p.name.clone(), d.clone());
        }
    }
    Ok(out)
}

fn bind_positional(spec: &ToolSpec, values: &[String], store: &SeriesStore) -> Result<Map<String, Value>, ToolError> {
    let mut out = Map::new();
    let mut rest = values.iter().peekable();
    let last_series = spec.parameters.iter().rposition(|p| p.ty == ParamType::Series);
    for (i, param) in spec.parameters.iter().enumerate() {
        if rest.peek().is_none() {
            break;
        }
        if param.ty == ParamType::Series && Some(i) == last_series {
            let first = rest.next().expect("peeked").clone();
            let mut names = vec![first];
            while let Some(next) = rest.peek() {
                if store.contains(next) {
                    names.push(rest.next().expect("peeked").clone());
                } else {
                    break;
                }
            }
            let v = if names.len() == 1 {
                Value::String(names.remove(0))
            } else {
                Value::Array(names.into_iter().map(Value::String).collect())
            };
            out.insert(param.name.clone(), v);
        } else {
            out.insert(param.name.clone(), Value::String(rest.next().expect("peeked").clone()));
        }
    }
    if let Some(extra) = rest.next() {
        return Err(ToolError::invalid(format!(
            "too many positional arguments (unexpected '{extra}')"
        )));
    }
    Ok(out)
}

fn type_error(param: &ParamSpec, value: &Value) -> ToolError {
    ToolError::invalid(format!(
        "invalid argument '{}': expected {}, got {}",
        param.name,
        param.ty.describe(),
        value
    ))
}

fn as_number(value: &Value) -> Option<f64> {
    match value {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok().filter(|v| v.is_finite()),
        _ => None,
    }
}

fn as_integer(value: &Value) -> Option<i64> {
    let v = as_number(value)?;
    (v.fract() == 0.0 && v.abs() < 9.0e15).then_some(v as i64)
}

pub(crate) fn coerce_value(param: &ParamSpec, value: &Value) -> Result<Value, ToolError> {
    let err = || type_error(param, value);
    Ok(match &param.ty {
        ParamType::Series => match value {
            Value::String(s) if !s.trim().is_empty() => Value::String(s.trim().to_string()),
            Value::Array(items) if !items.is_empty() => {
                let names = items
                    .iter()
                    .map(|v| v.as_str().map(|s| Value::String(s.trim().to_string())))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(err)?;
                if names.len() == 1 {
                    names.into_iter().next().expect("one")
                } else {
                    Value::Array(names)
                }
            }
            _ => return Err(err()),
        },
        ParamType::Int => Value::from(as_integer(value).ok_or_else(err)?),
        ParamType::Count => {
            let v = as_integer(value).filter(|v| *v >= 0).ok_or_else(err)?;
            Value::from(v)
        }
        ParamType::Real => Value::from(as_number(value).ok_or_else(err)?),
        ParamType::Text => match value {
            Value::String(s) => Value::String(s.clone()),
            other => Value::String(other.to_string()),
        },
        ParamType::Choice(options) => {
            let s = value.as_str().ok_or_else(err)?.trim().to_ascii_lowercase();
            let s = s.replace('-', "");
            options
                .iter()
                .find(|o| o.replace('-', "") == s)
                .map(|o| Value::String(o.clone()))
                .ok_or_else(|| {
                    ToolError::invalid(format!(
                        "invalid argument '{}': expected one of [{}], got {}",
                        param.name,
                        options.join(", "),
                        value
                    ))
                })?
        }
        ParamType::Locator => coerce_locator(value).ok_or_else(err)?,
        ParamType::Range => match value {
            Value::Array(items) if items.len() == 2 => Value::Array(
                items
                    .iter()
                    .map(coerce_locator)
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(err)?,
            ),
            Value::Object(map) => {
                let start = map.get("start").and_then(coerce_locator).ok_or_else(err)?;
                let end = map.get("end").and_then(coerce_locator).ok_or_else(err)?;
                Value::Array(vec![start, end])
            }
            Value::String(s) => {
                let parts: Vec<&str> = s
                    .trim_matches(|c| c == '[' || c == ']' || c == '(' || c == ')')
                    .split([':', ','])
                    .collect();
                if parts.len() != 2 {
                    return Err(err());
                }
                Value::Array(
                    parts
                        .iter()
                        .map(|p| coerce_locator(&Value::String(p.trim().to_string())))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(err)?,
                )
            }
            _ => return Err(err()),
        },
        ParamType::CountList => {
            let items: Vec<Value> = match value {
                Value::Array(items) => items.clone(),
                Value::String(s) => s
                    .trim_matches(|c| c == '[' || c == ']')
                    .split([',', ' ', ';'])
                    .filter(|p| !p.is_empty())
                    .map(|p| Value::String(p.to_string()))
                    .collect(),
                _ => return Err(err()),
            };
            let counts = items
                .iter()
                .map(|v| as_integer(v).filter(|c| *c >= 0).map(Value::from))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(err)?;
            if counts.is_empty() {
                return Err(err());
            }
            Value::Array(counts)
        }
        ParamType::Channel => match value {
            Value::Number(_) => Value::from(as_integer(value).filter(|v| *v >= 0).ok_or_else(err)?),
            Value::String(s) => Value::String(s.trim().to_string()),
            _ => return Err(err()),
        },
    })
}

fn coerce_locator(value: &Value) -> Option<Value> {
    match value {
        Value::Number(n) if n.as_f64().is_some_and(f64::is_finite) => Some(value.clone()),
        Value::String(s) => {
            let s = s.trim();
            if let Ok(v) = s.parse::<f64>() {
                return v.is_finite().then(|| Value::from(v));
            }
            parse_time(s).map(|_| Value::String(s.to_string()))
        }
        Value::Object(map) if map.len() == 1 => {
            let (k, v) = map.iter().next()?;
            match k.as_str() {
                "pos" | "index" => as_integer(v).filter(|p| *p >= 0).map(|p| {
                    let mut m = Map::new();
                    m.insert("pos".into(), Value::from(p));
                    Value::Object(m)
                }),
                "time" | "timestamp" => {
                    let t = as_number(v).or_else(|| v.as_str().and_then(parse_time))?;
                    let mut m = Map::new();
                    m.insert("time".into(), Value::from(t));
                    Some(Value::Object(m))
                }
                _ => None,
            }
        }
        _ => None,
    }
}

enum Located {
    Pos(i64),
    Time(f64),
    Either(f64),
}

fn locate(value: &Value) -> Located {
    match value {
        Value::Object(m) => match (m.get("pos"), m.get("time")) {
            (Some(p), _) => Located::Pos(p.as_i64().unwrap_or(-1)),
            (_, Some(t)) => Located::Time(t.as_f64().unwrap_or(f64::NAN)),
            _ => Located::Pos(-1),
        },
        Value::String(s) => Located::Time(parse_time(s).unwrap_or(f64::NAN)),
        other => Located::Either(other.as_f64().unwrap_or(f64::NAN)),
    }
}

/// A unit-step integer index, as left by slicing a positional series. Bare
/// integers address such series by position.
fn counting_index(series: &TimeSeries) -> bool {
    series.interval() == Some(1.0) && series.index()[0].fract() == 0.0
}

fn exact_time(series: &TimeSeries, t: f64) -> Option<usize> {
    let idx = series.index();
    let tol = 1e-9 * t.abs().max(1.0);
    let i = idx.partition_point(|v| *v < t - tol);
    (i < idx.len() && (idx[i] - t).abs() <= tol).then_some(i)
}

fn range_message(series: &TimeSeries, what: &str, value: &Value) -> ToolError {
    let idx = series.index();
    let last = series.len() - 1;
    let times = if series.is_positional() {
        String::new()
    } else {
        format!(" or timestamps {:?}..{:?}", idx[0], idx[last])
    };
    ToolError::invalid(format!(
        "{what} {value} is out of range for '{}': valid positions 0..{last}{times}",
        series.name()
    ))
}

/// Resolve a point locator to a position in `0..T`.
///
/// Numbers are timestamps when they match an index entry exactly and
/// positions otherwise; strings are timestamps; `{"pos": n}` and
/// `{"time": t}` are explicit.
pub fn resolve_point(series: &TimeSeries, value: &Value, what: &str) -> Result<usize, ToolError> {
    let n = series.len() as i64;
    let found = match locate(value) {
        Located::Pos(p) => (0..n).contains(&p).then_some(p as usize),
        Located::Time(t) => exact_time(series, t),
        Located::Either(v) => (!counting_index(series))
            .then(|| exact_time(series, v))
            .flatten()
            .or_else(|| (v.fract() == 0.0 && v >= 0.0 && (v as i64) < n).then_some(v as usize)),
    };
    found.ok_or_else(|| range_message(series, what, value))
}

/// Resolve a range bound to a position in `0..=T`. Timestamps that fall
/// between index entries round up to the next entry.
pub fn resolve_bound(series: &TimeSeries, value: &Value, what: &str) -> Result<usize, ToolError> {
    let n = series.len();
    let idx = series.index();
    let by_time = |t: f64| -> Option<usize> {
        if !t.is_finite() {
            return None;
        }
        if let Some(i) = exact_time(series, t) {
            return Some(i);
        }
        let step = series.interval().unwrap_or(0.0);
        if t < idx[0] || t > idx[n - 1] + step {
            return None;
        }
        Some(idx.partition_point(|v| *v < t))
    };
    let found = match locate(value) {
        Located::Pos(p) => (0..=n as i64).contains(&p).then_some(p as usize),
        Located::Time(t) => by_time(t),
        Located::Either(v) => (!counting_index(series))
            .then(|| exact_time(series, v))
            .flatten()
            .or_else(|| {
                if v.fract() == 0.0 && v >= 0.0 && v as usize <= n {
                    Some(v as usize)
                } else if counting_index(series) {
                    None
                } else {
                    by_time(v)
                }
            }),
    };
    found.ok_or_else(|| range_message(series, what, value))
}

/// Typed view over validated arguments.
pub struct Args<'a> {
    pub(crate) map: &'a Map<String, Value>,
    pub(crate) store: &'a SeriesStore,
}

impl<'a> Args<'a> {
    pub fn new(map: &'a Map<String, Value>, store: &'a SeriesStore) -> Self {
        Self { map, store }
    }

    pub fn raw(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key)
    }

    pub fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    /// The series named by `key`; a list of names is rejected.
    pub fn series(&self, key: &str) -> Result<Arc<TimeSeries>, ToolError> {
        match self.map.get(key) {
            Some(Value::String(name)) => Ok(self.store.get(name)?),
            Some(Value::Array(_)) => Err(ToolError::new("x must be 1-D")),
            _ => Err(ToolError::invalid(format!("missing required parameter '{key}'"))),
        }
    }

    /// A single-channel, gap-free series named by `key`.
    pub fn univariate(&self, key: &str) -> Result<(Arc<TimeSeries>, Vec<f64>), ToolError> {
        let series = self.series(key)?;
        if series.dim() != 1 {
            return Err(ToolError::new("x must be 1-D"));
        }
        let values = series.dense_channel(0)?.to_vec();
        Ok((series, values))
    }

    pub fn real(&self, key: &str) -> Result<f64, ToolError> {
        self.opt_real(key)?
            .ok_or_else(|| ToolError::invalid(format!("missing required parameter '{key}'")))
    }

    pub fn opt_real(&self, key: &str) -> Result<Option<f64>, ToolError> {
        Ok(self.map.get(key).and_then(Value::as_f64))
    }

    pub fn count(&self, key: &str) -> Result<usize, ToolError> {
        self.opt_count(key)?
            .ok_or_else(|| ToolError::invalid(format!("missing required parameter '{key}'")))
    }

    pub fn opt_count(&self, key: &str) -> Result<Option<usize>, ToolError> {
        Ok(self.map.get(key).and_then(Value::as_u64).map(|v| v as usize))
    }

    pub fn int_or(&self, key: &str, default: i64) -> i64 {
        self.map.get(key).and_then(Value::as_i64).unwrap_or(default)
    }

    pub fn choice_or(&self, key: &str, default: &'static str) -> String {
        self.map.get(key).and_then(Value::as_str).unwrap_or(default).to_string()
    }

    pub fn text(&self, key: &str) -> Result<String, ToolError> {
        self.map
            .get(key)
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ToolError::invalid(format!("missing required parameter '{key}'")))
    }

    pub fn counts(&self, key: &str) -> Option<Vec<usize>> {
        self.map
            .get(key)
            .and_then(Value::as_array)
            .map(|items| items.iter().filter_map(Value::as_u64).map(|v| v as usize).collect())
    }

    pub fn point(&self, series: &TimeSeries, key: &str) -> Result<usize, ToolError> {
        let v = self
            .map
            .get(key)
            .ok_or_else(|| ToolError::invalid(format!("missing required parameter '{key}'")))?;
        resolve_point(series, v, key)
    }

    pub fn bound(&self, series: &TimeSeries, key: &str) -> Result<usize, ToolError> {
        let v = self
            .map
            .get(key)
            .ok_or_else(|| ToolError::invalid(format!("missing required parameter '{key}'")))?;
        resolve_bound(series, v, key)
    }

    /// Optional half-open window; defaults to the whole series.
    pub fn window(&self, series: &TimeSeries, key: &str) -> Result<(usize, usize), ToolError> {
        match self.map.get(key).and_then(Value::as_array) {
            None => Ok((0, series.len())),
            Some(pair) => {
                let start = resolve_bound(series, &pair[0], key)?;
                let end = resolve_bound(series, &pair[1], key)?;
                if start >= end {
                    return Err(ToolError::invalid(format!("{key} [{start}, {end}) is empty")));
                }
                Ok((start, end))
            }
        }
    }
}
