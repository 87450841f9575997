//! Cell values and symbol schemas.
//!
//! Every global a module declares is typed by a [`ValueKind`]; the matching
//! runtime representation is a [`Value`]. Real arrays carry a fixed length
//! that is part of the schema, so a bead's data context has a known shape at
//! creation time.

use std::fmt;

/// Schema-level type of a module global.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValueKind {
    Int,
    Real,
    Bytes,
    /// Fixed-length array of reals; the length is part of the schema.
    RealArray(usize),
}

impl ValueKind {
    pub fn default_value(&self) -> Value {
        match self {
            ValueKind::Int => Value::Int(0),
            ValueKind::Real => Value::Real(0.0),
            ValueKind::Bytes => Value::Bytes(Vec::new()),
            ValueKind::RealArray(n) => Value::RealArray(vec![0.0; *n]),
        }
    }

    /// Does `v` conform to this kind (including array length)?
    pub fn admits(&self, v: &Value) -> bool {
        match (self, v) {
            (ValueKind::Int, Value::Int(_)) => true,
            (ValueKind::Real, Value::Real(_)) => true,
            (ValueKind::Bytes, Value::Bytes(_)) => true,
            (ValueKind::RealArray(n), Value::RealArray(xs)) => xs.len() == *n,
            _ => false,
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueKind::Int => write!(f, "int"),
            ValueKind::Real => write!(f, "real"),
            ValueKind::Bytes => write!(f, "bytes"),
            ValueKind::RealArray(n) => write!(f, "real[{n}]"),
        }
    }
}

/// A runtime value stored in a cell or carried in a message payload.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
    Bytes(Vec<u8>),
    RealArray(Vec<f64>),
}

impl Value {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Real(_) => "real",
            Value::Bytes(_) => "bytes",
            Value::RealArray(_) => "real[]",
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            Value::Bytes(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_real_array(&self) -> Option<&[f64]> {
        match self {
            Value::RealArray(v) => Some(v),
            _ => None,
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Bytes(v.as_bytes().to_vec())
    }
}

impl From<Vec<f64>> for Value {
    fn from(v: Vec<f64>) -> Self {
        Value::RealArray(v)
    }
}
