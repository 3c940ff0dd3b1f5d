use alloc::string::String;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::SqlError;

/// A cell value. Deserializes from JSON `null`, integers, floats and strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub(crate) fn type_name(&self) -> &'static str {
        match self {
            Value::Null => "null",
            Value::Integer(_) => "integer",
            Value::Real(_) => "real",
            Value::Text(_) => "text",
        }
    }

    pub(crate) fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Integer(v) => Some(*v as f64),
            Value::Real(v) => Some(*v),
            _ => None,
        }
    }

    pub(crate) fn truthy(&self) -> Result<bool, SqlError> {
        match self {
            Value::Null => Ok(false),
            Value::Integer(v) => Ok(*v != 0),
            Value::Real(v) => Ok(*v != 0.0),
            Value::Text(_) => Err(SqlError::mismatch("text used as a condition")),
        }
    }

    pub(crate) fn bool(b: bool) -> Value {
        Value::Integer(i64::from(b))
    }

    /// Normalized form used for equality, grouping and multiset comparison.
    ///
    /// Integral reals collapse to integers and other reals are rounded to
    /// 12 significant digits, so the relation "canonical forms are equal"
    /// is an equivalence that tolerates summation-order noise.
    pub(crate) fn canonical(&self) -> Canon {
        match self {
            Value::Null => Canon::Null,
            Value::Integer(v) => Canon::Int(*v),
            Value::Text(s) => Canon::Text(s.clone()),
            Value::Real(x) => {
                if x.is_nan() {
                    return Canon::Real(f64::NAN.to_bits());
                }
                if (*x as i64) as f64 == *x && x.abs() < 9.0e15 {
                    return Canon::Int(*x as i64);
                }
                let rounded: f64 = alloc::format!("{x:.11e}").parse().unwrap_or(*x);
                if (rounded as i64) as f64 == rounded && rounded.abs() < 9.0e15 {
                    return Canon::Int(rounded as i64);
                }
                Canon::Real(rounded.to_bits())
            }
        }
    }

    /// SQL comparison; `None` when either side is NULL.
    pub(crate) fn compare(&self, other: &Value) -> Result<Option<Ordering>, SqlError> {
        match (self, other) {
            (Value::Null, _) | (_, Value::Null) => Ok(None),
            (Value::Integer(a), Value::Integer(b)) => Ok(Some(a.cmp(b))),
            (Value::Text(a), Value::Text(b)) => Ok(Some(a.cmp(b))),
            (a, b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => Ok(x.partial_cmp(&y)),
                _ => Err(SqlError::mismatch(alloc::format!("cannot compare {} with {}", a.type_name(), b.type_name()))),
            },
        }
    }

    /// Total order for ORDER BY, MIN and MAX: NULL < numbers < text.
    pub(crate) fn sort_cmp(&self, other: &Value) -> Ordering {
        fn rank(v: &Value) -> u8 {
            match v {
                Value::Null => 0,
                Value::Integer(_) | Value::Real(_) => 1,
                Value::Text(_) => 2,
            }
        }
        match (self, other) {
            (Value::Integer(a), Value::Integer(b)) => a.cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            (a, b) if rank(a) == 1 && rank(b) == 1 => {
                let (x, y) = (a.as_f64().unwrap_or(0.0), b.as_f64().unwrap_or(0.0));
                x.total_cmp(&y)
            }
            (a, b) => rank(a).cmp(&rank(b)),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Integer(v) => write!(f, "{v}"),
            Value::Real(v) => write!(f, "{v}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Integer(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Canon {
    Null,
    Int(i64),
    Real(u64),
    Text(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_collapses_numeric_noise() {
        assert_eq!(Value::Real(3.0).canonical(), Value::Integer(3).canonical());
        assert_eq!(Value::Real(0.1 + 0.2).canonical(), Value::Real(0.3).canonical());
        assert_ne!(Value::Real(0.3).canonical(), Value::Real(0.31).canonical());
        assert_eq!(Value::Real(-0.0).canonical(), Value::Integer(0).canonical());
        assert_ne!(Value::Text("1".into()).canonical(), Value::Integer(1).canonical());
    }

    #[test]
    fn comparison_rules() {
        assert_eq!(Value::Integer(1).compare(&Value::Real(1.5)).unwrap(), Some(Ordering::Less));
        assert_eq!(Value::Null.compare(&Value::Integer(1)).unwrap(), None);
        assert!(Value::Text("a".into()).compare(&Value::Integer(1)).is_err());
        assert_eq!(Value::Null.sort_cmp(&Value::Integer(-5)), Ordering::Less);
        assert_eq!(Value::Text("a".into()).sort_cmp(&Value::Real(1e9)), Ordering::Greater);
    }

    #[test]
    fn json_shapes() {
        let v: alloc::vec::Vec<Value> = serde_json::from_str(r#"[null, 3, 2.5, "x"]"#).unwrap();
        assert_eq!(v, alloc::vec![Value::Null, Value::Integer(3), Value::Real(2.5), Value::Text("x".into())]);
    }
}
