//! Text formatting and parsing shared by the CSV and config writers.

use crate::error::{Result, SsdaError};

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        }
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse_f64(s: &str, context: &str) -> Result<f64> {
    let t = s.trim();
    match t {
        "NaN" | "nan" => Ok(f64::NAN),
        "inf" | "+inf" | "Infinity" => Ok(f64::INFINITY),
        "-inf" | "-Infinity" => Ok(f64::NEG_INFINITY),
        _ => t.parse::<f64>().map_err(|e| SsdaError::Parse {
            context: context.to_string(),
            message: format!("'{t}' is not a number ({e})"),
        }),
    }
}

pub fn parse_f64_list(s: &str, context: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|p| parse_f64(p, context)).collect()
}

pub fn join_f64(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(fmt17).collect::<Vec<_>>().join(",")
}

/// Parses flat `key = value` text. `#` starts a comment; blank lines are skipped.
/// Keys keep their first-seen order; a repeated key is an error.
pub fn parse_key_values(text: &str, context: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| SsdaError::Parse {
            context: format!("{context}:{}", lineno + 1),
            message: format!("expected `key = value`, got '{line}'"),
        })?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(SsdaError::Parse { context: format!("{context}:{}", lineno + 1), message: "empty key".into() });
        }
        if out.iter().any(|(k, _)| *k == key) {
            return Err(SsdaError::Parse {
                context: format!("{context}:{}", lineno + 1),
                message: format!("duplicate key '{key}'"),
            });
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}
