use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single attribute value. Numeric values are always domain points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Str(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Str(_) => None,
        }
    }

    pub fn as_ref(&self) -> ValueRef<'_> {
        match self {
            Value::Num(x) => ValueRef::Num(*x),
            Value::Str(s) => ValueRef::Str(s),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

/// Borrowed view of a value, used on evaluation hot paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueRef<'a> {
    Num(f64),
    Str(&'a str),
}

impl ValueRef<'_> {
    pub fn to_owned(self) -> Value {
        match self {
            ValueRef::Num(x) => Value::Num(x),
            ValueRef::Str(s) => Value::Str(s.to_string()),
        }
    }

    /// Total order within a kind; numbers sort before strings.
    pub fn compare(self, other: ValueRef<'_>) -> Ordering {
        match (self, other) {
            (ValueRef::Num(a), ValueRef::Num(b)) => a.total_cmp(&b),
            (ValueRef::Str(a), ValueRef::Str(b)) => a.cmp(b),
            (ValueRef::Num(_), ValueRef::Str(_)) => Ordering::Less,
            (ValueRef::Str(_), ValueRef::Num(_)) => Ordering::Greater,
        }
    }
}

/// Relative tolerance used when matching numbers against domain points.
pub const POINT_TOLERANCE: f64 = 1e-9;

pub fn same_point(a: f64, b: f64) -> bool {
    (a - b).abs() <= POINT_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Finite ordered domain. Numeric domains are sorted points; each point stands
/// for the bin of values closer to it than to any other point.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl Domain {
    pub fn numeric(mut points: Vec<f64>) -> Result<Domain> {
        if points.is_empty() {
            return Err(Error::Config("domain must not be empty".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("numeric domain points must be finite".into()));
        }
        points.sort_by(f64::total_cmp);
        if points.windows(2).any(|w| same_point(w[0], w[1])) {
            return Err(Error::Config("domain contains duplicate values".into()));
        }
        Ok(Domain::Numeric(points))
    }

    pub fn categorical(values: Vec<String>) -> Result<Domain> {
        if values.is_empty() {
            return Err(Error::Config("domain must not be empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for v in &values {
            if !seen.insert(v.as_str()) {
                return Err(Error::Config(format!("domain contains duplicate value `{v}`")));
            }
        }
        Ok(Domain::Categorical(values))
    }

    pub fn len(&self) -> usize {
        match self {
            Domain::Numeric(p) => p.len(),
            Domain::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Domain::Numeric(_))
    }

    pub fn get(&self, level: usize) -> ValueRef<'_> {
        match self {
            Domain::Numeric(p) => ValueRef::Num(p[level]),
            Domain::Categorical(v) => ValueRef::Str(&v[level]),
        }
    }

    pub fn value(&self, level: usize) -> Value {
        self.get(level).to_owned()
    }

    pub fn num(&self, level: usize) -> Option<f64> {
        match self {
            Domain::Numeric(p) => Some(p[level]),
            Domain::Categorical(_) => None,
        }
    }

    pub fn values(&self) -> Vec<Value> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }

    /// Exact membership lookup (numeric points matched within [`POINT_TOLERANCE`]).
    pub fn index_of(&self, v: ValueRef<'_>) -> Option<usize> {
        match (self, v) {
            (Domain::Numeric(p), ValueRef::Num(x)) => {
                let i = p.partition_point(|q| *q < x);
                [i.checked_sub(1), Some(i)]
                    .into_iter()
                    .flatten()
                    .find(|&j| j < p.len() && same_point(p[j], x))
            }
            (Domain::Categorical(vals), ValueRef::Str(s)) => vals.iter().position(|c| c == s),
            _ => None,
        }
    }

    /// Parses raw text (e.g. a CSV cell) into a domain level.
    pub fn parse_level(&self, raw: &str) -> Option<usize> {
        match self {
            Domain::Numeric(_) => raw.trim().parse::<f64>().ok().and_then(|x| self.index_of(ValueRef::Num(x))),
            Domain::Categorical(_) => self.index_of(ValueRef::Str(raw)),
        }
    }

    /// Nearest numeric point to `x`, provided `x` lies within [min, max].
    /// Ties go to the lower point.
    pub fn snap(&self, x: f64) -> Option<usize> {
        let Domain::Numeric(p) = self else { return None };
        let (lo, hi) = (p[0], p[p.len() - 1]);
        if !x.is_finite() || (x < lo && !same_point(x, lo)) || (x > hi && !same_point(x, hi)) {
            return None;
        }
        let i = p.partition_point(|q| *q < x);
        if i == 0 {
            return Some(0);
        }
        if i == p.len() {
            return Some(p.len() - 1);
        }
        if x - p[i - 1] <= p[i] - x {
            Some(i - 1)
        } else {
            Some(i)
        }
    }

    pub fn to_spec(&self) -> DomainSpec {
        match self {
            Domain::Numeric(p) => DomainSpec::Numbers(p.clone()),
            Domain::Categorical(v) => DomainSpec::Strings(v.clone()),
        }
    }
}

/// Serialized form of a domain in configuration documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DomainSpec {
    Numbers(Vec<f64>),
    Strings(Vec<String>),
    Grid {
        range: [f64; 3],
        #[serde(default)]
        values: Vec<f64>,
    },
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain> {
        match self {
            DomainSpec::Numbers(p) => Domain::numeric(p.clone()),
            DomainSpec::Strings(v) => Domain::categorical(v.clone()),
            DomainSpec::Grid { range, values } => {
                let [lo, hi, step] = *range;
                if step.is_nan() || step <= 0.0 || hi < lo {
                    return Err(Error::Config(format!("invalid grid range {range:?}")));
                }
                let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
                if n > 10_000_000 {
                    return Err(Error::Config("grid domain too large".into()));
                }
                let mut points: Vec<f64> = (0..n).map(|i| round_grid(lo + i as f64 * step)).collect();
                for v in values {
                    if !points.iter().any(|p| same_point(*p, *v)) {
                        points.push(*v);
                    }
                }
                Domain::numeric(points)
            }
        }
    }
}

fn round_grid(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Level index cache for categorical lookups on hot paths.
#[derive(Debug, Default, Clone)]
pub struct LevelIndex {
    by_string: HashMap<String, usize>,
}

impl LevelIndex {
    pub fn new(domain: &Domain) -> Self {
        let mut by_string = HashMap::new();
        if let Domain::Categorical(v) = domain {
            for (i, s) in v.iter().enumerate() {
                by_string.insert(s.clone(), i);
            }
        }
        LevelIndex { by_string }
    }

    pub fn lookup(&self, domain: &Domain, raw: &str) -> Option<usize> {
        match domain {
            Domain::Categorical(_) => self.by_string.get(raw).copied(),
            Domain::Numeric(_) => domain.parse_level(raw),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_with_extra_values_snaps_to_nearest_integer() {
        let d = DomainSpec::Grid { range: [0.0, 1000.0, 1.0], values: vec![15.99] }.build().unwrap();
        assert_eq!(d.len(), 1002);
        let lvl = d.snap(1.1 * 529.0).unwrap();
        assert_eq!(d.num(lvl), Some(582.0));
        assert!(d.index_of(ValueRef::Num(15.99)).is_some());
        assert!(d.snap(1000.5).is_none());
    }

    #[test]
    fn snap_ties_go_low() {
        let d = Domain::numeric(vec![0.0, 1.0]).unwrap();
        assert_eq!(d.snap(0.5), Some(0));
        assert_eq!(d.snap(0.51), Some(1));
    }

    #[test]
    fn duplicate_values_rejected() {
        assert!(Domain::categorical(vec!["a".into(), "a".into()]).is_err());
        assert!(Domain::numeric(vec![]).is_err());
    }
}
