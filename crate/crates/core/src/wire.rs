//! JSON wire encoding for values crossing a service boundary.
//!
//! Records travel as objects whose member names are element keys; labels
//! never appear on the wire. Objects are emitted with sorted member names and
//! no whitespace, so equal values always produce equal bytes.

use serde_json::{Map, Number, Value as Json};
use thiserror::Error;

use crate::model::{BaseType, Key, KnownField, RecordValue, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("closures cannot cross a service boundary")]
    HigherOrderValue,
    #[error("malformed wire value: {0}")]
    MalformedWire(String),
    #[error("wire value does not match the expected type: {0}")]
    TypeMismatch(String),
}

/// Encodes a first-order value. `declared` is checked against the known
/// fields; unknown fields are emitted as they are.
pub fn encode_value(v: &Value, declared: &BaseType) -> Result<Json, WireError> {
    match (v, declared) {
        (Value::Closure { .. }, _) => Err(WireError::HigherOrderValue),
        (Value::Int(n), BaseType::Int) => Ok(Json::Number(Number::from(*n))),
        (Value::Str(s), BaseType::Str) => Ok(Json::String(s.clone())),
        (Value::Record(r), BaseType::Record(fields)) => {
            let mut obj = Map::new();
            for f in &r.known {
                let json = match fields.iter().find(|d| d.key == f.key) {
                    Some(d) => encode_value(&f.value, &d.ty)?,
                    None => encode_untyped(&f.value)?,
                };
                obj.insert(f.key.as_str().to_string(), json);
            }
            for (k, uv) in &r.unknown {
                obj.insert(k.as_str().to_string(), encode_untyped(uv)?);
            }
            Ok(Json::Object(obj))
        }
        (_, BaseType::Named { name, .. }) => Err(WireError::TypeMismatch(format!("type {name} is not expanded"))),
        (v, t) => Err(WireError::TypeMismatch(format!("{} value for {} type", shape(v), type_shape(t)))),
    }
}

/// Encodes without a declared type, as used for unknown fields.
pub fn encode_untyped(v: &Value) -> Result<Json, WireError> {
    match v {
        Value::Closure { .. } => Err(WireError::HigherOrderValue),
        Value::Int(n) => Ok(Json::Number(Number::from(*n))),
        Value::Str(s) => Ok(Json::String(s.clone())),
        Value::Record(r) => {
            let mut obj = Map::new();
            for (k, _, mv) in r.members() {
                obj.insert(k.as_str().to_string(), encode_untyped(mv)?);
            }
            Ok(Json::Object(obj))
        }
    }
}

/// Decodes against `expected`: matching members become known fields under
/// the expected labels, every other member becomes an unknown field.
pub fn decode_value(w: &Json, expected: &BaseType) -> Result<Value, WireError> {
    match expected {
        BaseType::Int => match w {
            Json::Number(n) => n
                .as_i64()
                .map(Value::Int)
                .ok_or_else(|| WireError::MalformedWire(format!("{n} is not a 64-bit integer"))),
            other => Err(WireError::TypeMismatch(format!("expected int, found {}", json_shape(other)))),
        },
        BaseType::Str => match w {
            Json::String(s) => Ok(Value::Str(s.clone())),
            other => Err(WireError::TypeMismatch(format!("expected string, found {}", json_shape(other)))),
        },
        BaseType::Record(fields) => {
            let Json::Object(obj) = w else {
                return Err(WireError::TypeMismatch(format!("expected record, found {}", json_shape(w))));
            };
            let mut known = Vec::with_capacity(fields.len());
            for f in fields {
                let member = obj
                    .get(f.key.as_str())
                    .ok_or_else(|| WireError::MalformedWire(format!("missing member {}", f.key)))?;
                known.push(KnownField {
                    label: f.label.clone(),
                    key: f.key.clone(),
                    value: decode_value(member, &f.ty)?,
                });
            }
            let mut unknown = Vec::new();
            for (name, member) in obj {
                if fields.iter().all(|f| f.key.as_str() != name) {
                    unknown.push((Key::new(name.clone()), decode_untyped(member)?));
                }
            }
            Ok(Value::Record(RecordValue { known, unknown }))
        }
        BaseType::Named { name, .. } => Err(WireError::TypeMismatch(format!("type {name} is not expanded"))),
    }
}

/// Decodes with no type information: every record member is unknown.
pub fn decode_untyped(w: &Json) -> Result<Value, WireError> {
    match w {
        Json::Number(n) => {
            n.as_i64().map(Value::Int).ok_or_else(|| WireError::MalformedWire(format!("{n} is not a 64-bit integer")))
        }
        Json::String(s) => Ok(Value::Str(s.clone())),
        Json::Object(obj) => {
            let unknown = obj
                .iter()
                .map(|(k, v)| decode_untyped(v).map(|v| (Key::new(k.clone()), v)))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Value::Record(RecordValue { known: Vec::new(), unknown }))
        }
        other => Err(WireError::MalformedWire(format!("unsupported {}", json_shape(other)))),
    }
}

/// Canonical bytes: sorted members, no whitespace.
pub fn to_canonical_string(w: &Json) -> String {
    // serde_json's default map is ordered by member name.
    serde_json::to_string(w).expect("JSON values always serialise")
}

pub fn encode_to_string(v: &Value, declared: &BaseType) -> Result<String, WireError> {
    encode_value(v, declared).map(|w| to_canonical_string(&w))
}

pub fn decode_from_str(text: &str, expected: &BaseType) -> Result<Value, WireError> {
    let w: Json = serde_json::from_str(text).map_err(|e| WireError::MalformedWire(e.to_string()))?;
    decode_value(&w, expected)
}

fn shape(v: &Value) -> &'static str {
    match v {
        Value::Int(_) => "int",
        Value::Str(_) => "string",
        Value::Closure { .. } => "closure",
        Value::Record(_) => "record",
    }
}

fn type_shape(t: &BaseType) -> &'static str {
    match t {
        BaseType::Int => "int",
        BaseType::Str => "string",
        BaseType::Record(_) => "record",
        BaseType::Named { .. } => "named",
    }
}

fn json_shape(w: &Json) -> &'static str {
    match w {
        Json::Null => "null",
        Json::Bool(_) => "boolean",
        Json::Number(_) => "number",
        Json::String(_) => "string",
        Json::Array(_) => "array",
        Json::Object(_) => "object",
    }
}
