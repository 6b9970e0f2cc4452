use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// Record types readable from JSONL.
pub trait JsonlRecord: DeserializeOwned + Serialize {
    /// Fields that must be present on every line.
    const REQUIRED: &'static [&'static str];

    /// Extra semantic checks after deserialization.
    fn validate(&self) -> std::result::Result<(), String> {
        Ok(())
    }
}

pub fn load_jsonl<T: JsonlRecord>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&text, &path.display().to_string())
}

/// Parses JSONL text; `source` names the input in error messages.
pub fn parse_jsonl<T: JsonlRecord>(text: &str, source: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let format_err = |message: String| Error::Format {
            path: source.to_string(),
            line,
            message,
        };
        let value: Value = serde_json::from_str(raw).map_err(|e| format_err(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| format_err("expected a JSON object".into()))?;
        if let Some(field) = T::REQUIRED.iter().find(|f| !obj.contains_key(**f)) {
            return Err(Error::Schema {
                path: source.to_string(),
                line,
                field: field.to_string(),
            });
        }
        let item: T = serde_json::from_value(value).map_err(|e| format_err(e.to_string()))?;
        item.validate().map_err(format_err)?;
        out.push(item);
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::Numeric(e.to_string()))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let text = to_jsonl(items)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
