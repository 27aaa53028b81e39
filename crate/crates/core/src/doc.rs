//! Canonical document encoding.
//!
//! Every stored payload and every `json-doc` report goes through
//! [`to_canonical`]: object keys sorted bytewise, no insignificant
//! whitespace, shortest round-trip float formatting, UTF-8, one trailing
//! newline. Two equal values always encode to identical bytes.

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
#[error("document encoding failed: {0}")]
pub struct DocError(#[from] serde_json::Error);

pub fn to_canonical<T: Serialize + ?Sized>(value: &T) -> Result<String, DocError> {
    let value = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&value, &mut out);
    out.push('\n');
    Ok(out)
}

/// Re-encode an already parsed document.
pub fn canonicalize(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, &mut out);
    out.push('\n');
    out
}

/// True when `text` is exactly the canonical encoding of a JSON object.
pub fn is_canonical_object(text: &str) -> bool {
    match serde_json::from_str::<Value>(text) {
        Ok(v @ Value::Object(_)) => canonicalize(&v) == text,
        _ => false,
    }
}

fn write_value(value: &Value, out: &mut String) {
    match value {
        Value::Null | Value::Bool(_) | Value::Number(_) | Value::String(_) => {
            // serde_json's scalar encoding is already deterministic
            out.push_str(&value.to_string());
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push('{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_value(v, out);
            }
            out.push('}');
        }
    }
}
