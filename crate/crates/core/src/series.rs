//! Exogenous inputs shared by several models: step-indexed series and
//! time-indexed capability paths.

use serde::{Deserialize, Serialize};

/// A per-step input that is either constant or tabulated.
///
/// Tabulated series hold their last value past the end of the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Series {
    Constant(f64),
    Table(Vec<f64>),
}

impl Series {
    pub fn at(&self, step: usize) -> f64 {
        match self {
            Series::Constant(v) => *v,
            Series::Table(values) => match values.get(step) {
                Some(v) => *v,
                None => values.last().copied().unwrap_or(0.0),
            },
        }
    }

    pub fn is_empty_table(&self) -> bool {
        matches!(self, Series::Table(v) if v.is_empty())
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Series::Constant(v) => vec![*v],
            Series::Table(v) => v.clone(),
        }
    }
}

impl Default for Series {
    fn default() -> Self {
        Series::Constant(0.0)
    }
}

/// AI capability A(t) as a function of model time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CapabilityPath {
    Constant { value: f64 },
    Linear { initial: f64, slope: f64 },
    Exponential { initial: f64, rate: f64 },
}

impl CapabilityPath {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            CapabilityPath::Constant { value } => value,
            CapabilityPath::Linear { initial, slope } => initial + slope * t,
            CapabilityPath::Exponential { initial, rate } => initial * (rate * t).exp(),
        }
    }

    /// Validation messages; empty when the path is non-negative for t >= 0.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match *self {
            CapabilityPath::Constant { value } => {
                if !(value >= 0.0 && value.is_finite()) {
                    out.push(format!("value must be finite and >= 0, got {value}"));
                }
            }
            CapabilityPath::Linear { initial, slope } => {
                if !(initial >= 0.0 && initial.is_finite()) {
                    out.push(format!("initial must be finite and >= 0, got {initial}"));
                }
                if !(slope >= 0.0 && slope.is_finite()) {
                    out.push(format!("slope must be finite and >= 0, got {slope}"));
                }
            }
            CapabilityPath::Exponential { initial, rate } => {
                if !(initial >= 0.0 && initial.is_finite()) {
                    out.push(format!("initial must be finite and >= 0, got {initial}"));
                }
                if !rate.is_finite() {
                    out.push(format!("rate must be finite, got {rate}"));
                }
            }
        }
        out
    }
}

impl Default for CapabilityPath {
    fn default() -> Self {
        CapabilityPath::Constant { value: 1.0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_holds_last_value() {
        let s = Series::Table(vec![1.0, 2.0]);
        assert_eq!(s.at(0), 1.0);
        assert_eq!(s.at(1), 2.0);
        assert_eq!(s.at(9), 2.0);
        assert_eq!(Series::Constant(3.5).at(100), 3.5);
    }

    #[test]
    fn series_deserializes_from_number_or_array() {
        let c: Series = serde_json::from_str("0.5").unwrap();
        let t: Series = serde_json::from_str("[0.1, 0.2]").unwrap();
        assert_eq!(c, Series::Constant(0.5));
        assert_eq!(t, Series::Table(vec![0.1, 0.2]));
    }

    #[test]
    fn capability_paths() {
        assert_eq!(
            CapabilityPath::Linear {
                initial: 1.0,
                slope: 2.0
            }
            .at(3.0),
            7.0
        );
        let e = CapabilityPath::Exponential {
            initial: 2.0,
            rate: 0.0,
        };
        assert_eq!(e.at(10.0), 2.0);
        let p: CapabilityPath = serde_json::from_str(r#"{"kind":"constant","value":4}"#).unwrap();
        assert_eq!(p.at(1.0), 4.0);
    }
}
