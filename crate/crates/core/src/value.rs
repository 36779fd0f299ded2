//! Scalar cell values and their comparison rules.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A single cell in a row. `Null` is the absence of a value and compares
/// with nothing, including itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

/// The declared type of a column. Every non-null value stored in a column
/// must match the column's kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Bool,
    Int,
    Float,
    Text,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ValueKind::Bool => "bool",
            ValueKind::Int => "int",
            ValueKind::Float => "float",
            ValueKind::Text => "text",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("cannot compare {left} with {right}")]
pub struct KindMismatch {
    pub left: ValueKind,
    pub right: ValueKind,
}

impl Value {
    /// The kind of this value, or `None` for `Null`.
    pub fn kind(&self) -> Option<ValueKind> {
        match self {
            Value::Null => None,
            Value::Bool(_) => Some(ValueKind::Bool),
            Value::Int(_) => Some(ValueKind::Int),
            Value::Float(_) => Some(ValueKind::Float),
            Value::Text(_) => Some(ValueKind::Text),
        }
    }

    /// Whether this value may be stored in a column of `kind`.
    /// Nulls fit any column.
    pub fn fits(&self, kind: ValueKind) -> bool {
        match self.kind() {
            None => true,
            Some(k) => k == kind,
        }
    }

    /// Three-way comparison used by predicate evaluation.
    ///
    /// Returns `Ok(None)` when either side is null (SQL-style: the predicate
    /// is then false). Ints and floats compare numerically with each other;
    /// any other cross-kind comparison is an error.
    pub fn compare(&self, other: &Value) -> Result<Option<Ordering>, KindMismatch> {
        use Value::*;
        match (self, other) {
            (Null, _) | (_, Null) => Ok(None),
            (Bool(a), Bool(b)) => Ok(Some(a.cmp(b))),
            (Int(a), Int(b)) => Ok(Some(a.cmp(b))),
            (Text(a), Text(b)) => Ok(Some(a.cmp(b))),
            (Float(a), Float(b)) => Ok(a.partial_cmp(b)),
            (Int(a), Float(b)) => Ok((*a as f64).partial_cmp(b)),
            (Float(a), Int(b)) => Ok(a.partial_cmp(&(*b as f64))),
            (a, b) => Err(KindMismatch {
                // both sides are non-null here
                left: a.kind().unwrap(),
                right: b.kind().unwrap(),
            }),
        }
    }

    /// Equality under [`Value::compare`] semantics: null equals nothing.
    pub fn compares_equal(&self, other: &Value) -> Result<bool, KindMismatch> {
        Ok(self.compare(other)? == Some(Ordering::Equal))
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Null => serde_json::Value::Null,
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::Int(i) => serde_json::Value::from(*i),
            Value::Float(f) => serde_json::Value::from(*f),
            Value::Text(s) => serde_json::Value::from(s.as_str()),
        }
    }

    /// Parse a JSON scalar as a value of the given column kind.
    pub fn from_json(kind: ValueKind, json: &serde_json::Value) -> Result<Value, String> {
        use serde_json::Value as J;
        let value = match (kind, json) {
            (_, J::Null) => Value::Null,
            (ValueKind::Bool, J::Bool(b)) => Value::Bool(*b),
            (ValueKind::Int, J::Number(n)) => match n.as_i64() {
                Some(i) => Value::Int(i),
                None => return Err(format!("{n} is not a valid int")),
            },
            (ValueKind::Float, J::Number(n)) => match n.as_f64() {
                Some(f) => Value::Float(f),
                None => return Err(format!("{n} is not a valid float")),
            },
            (ValueKind::Text, J::String(s)) => Value::Text(s.clone()),
            (kind, other) => return Err(format!("expected {kind}, got {other}")),
        };
        Ok(value)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<i32> for Value {
    fn from(v: i32) -> Self {
        Value::Int(v as i64)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

/// A value usable as a primary-key: totally ordered and hashable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KeyValue {
    Int(i64),
    Text(String),
}

impl Value {
    /// Convert to a key if the value's kind supports keying.
    pub fn as_key(&self) -> Option<KeyValue> {
        match self {
            Value::Int(i) => Some(KeyValue::Int(*i)),
            Value::Text(s) => Some(KeyValue::Text(s.clone())),
            _ => None,
        }
    }
}

impl fmt::Display for KeyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyValue::Int(i) => write!(f, "{i}"),
            KeyValue::Text(s) => write!(f, "{s}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_compares_with_nothing() {
        assert_eq!(Value::Null.compare(&Value::Int(1)), Ok(None));
        assert_eq!(Value::Int(1).compare(&Value::Null), Ok(None));
        assert_eq!(Value::Null.compare(&Value::Null), Ok(None));
        assert_eq!(Value::Null.compares_equal(&Value::Null), Ok(false));
    }

    #[test]
    fn numeric_kinds_compare_across() {
        assert_eq!(
            Value::Int(2).compare(&Value::Float(2.0)),
            Ok(Some(Ordering::Equal))
        );
        assert_eq!(
            Value::Float(1.5).compare(&Value::Int(2)),
            Ok(Some(Ordering::Less))
        );
    }

    #[test]
    fn text_and_int_do_not_compare() {
        let err = Value::Text("a".into()).compare(&Value::Int(1)).unwrap_err();
        assert_eq!(err.left, ValueKind::Text);
        assert_eq!(err.right, ValueKind::Int);
    }

    #[test]
    fn display_quotes_text_like_sql() {
        assert_eq!(Value::Text("O'Hara".into()).to_string(), "'O''Hara'");
        assert_eq!(Value::Float(80.0).to_string(), "80.0");
        assert_eq!(Value::Int(7).to_string(), "7");
    }
}
