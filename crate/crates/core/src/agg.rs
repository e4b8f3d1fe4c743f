use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Supported aggregates, both for summary functions and for query outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Aggregate {
    Count,
    Sum,
    Avg,
}

impl Aggregate {
    /// Applies the aggregate to a list of numbers. `None` for an empty AVG.
    pub fn apply(self, values: &[f64]) -> Option<f64> {
        match self {
            Aggregate::Count => Some(values.len() as f64),
            Aggregate::Sum => Some(values.iter().sum()),
            Aggregate::Avg if values.is_empty() => None,
            Aggregate::Avg => Some(values.iter().sum::<f64>() / values.len() as f64),
        }
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregate::Count => "COUNT",
            Aggregate::Sum => "SUM",
            Aggregate::Avg => "AVG",
        })
    }
}

impl FromStr for Aggregate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "COUNT" => Ok(Aggregate::Count),
            "SUM" => Ok(Aggregate::Sum),
            "AVG" => Ok(Aggregate::Avg),
            other => Err(Error::UnsupportedAggregate(other.to_string())),
        }
    }
}
