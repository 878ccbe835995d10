//! The formatter: turns provider text into validated CWE and severity
//! answers. It never panics; anything unusable is a `FormatViolation`.

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::model::{
    parse_cwe_id, CweId, CweSet, SeverityLabel, SeverityScore, MAX_TOP_CANDIDATES,
};

fn violation(msg: impl Into<String>) -> Error {
    Error::FormatViolation(msg.into())
}

/// Content of the first fenced code block, if any.
fn unfence(text: &str) -> &str {
    let Some(open) = text.find("```") else {
        return text;
    };
    let after = &text[open + 3..];
    // Skip the info string (```json).
    let body = after.split_once('\n').map_or("", |(_, b)| b);
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

/// The first balanced `{...}` in `text`, honouring JSON string escapes.
fn first_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Lenient pre-pass: drops code fences and surrounding prose, then parses
/// the first JSON object.
pub fn extract_object(text: &str) -> Result<Map<String, Value>> {
    let candidate = first_object(unfence(text))
        .or_else(|| first_object(text))
        .ok_or_else(|| violation("no JSON object in output"))?;
    match serde_json::from_str(candidate) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(violation("output is not a JSON object")),
        Err(e) => Err(violation(format!("invalid JSON: {e}"))),
    }
}

fn cwe_list(map: &Map<String, Value>, key: &str) -> Result<CweSet> {
    let items = match map.get(key) {
        Some(Value::Array(items)) => items,
        Some(Value::Null) | None => return Err(violation(format!("missing {key:?} list"))),
        Some(_) => return Err(violation(format!("{key:?} is not a list"))),
    };
    let mut set = CweSet::new();
    for item in items {
        let id = match item {
            Value::String(s) => parse_cwe_id(s),
            Value::Number(n) => n
                .as_u64()
                .and_then(|n| u32::try_from(n).ok())
                .map_or_else(|| Err(violation(format!("bad CWE number {n}"))), CweId::new),
            other => Err(violation(format!("bad CWE entry {other}"))),
        };
        set.insert(id.map_err(|e| violation(format!("{key}: {e}")))?);
    }
    Ok(set)
}

/// Parses `{"exact": [...], "top5": [...]}` into (exact, top).
pub fn format_cwe_output(text: &str) -> Result<(CweSet, CweSet)> {
    let map = extract_object(text)?;
    let exact = cwe_list(&map, "exact")?;
    let top = cwe_list(&map, "top5")?;
    if top.len() > MAX_TOP_CANDIDATES {
        return Err(violation(format!(
            "{} top candidates (max {MAX_TOP_CANDIDATES})",
            top.len()
        )));
    }
    if !exact.is_subset(&top) {
        return Err(violation(format!("exact {exact} is not within top candidates {top}")));
    }
    Ok((exact, top))
}

/// Parses `{"label": ..., "score": ...}`. The score may be a number or a
/// numeric string; `(null, -1)` is the decline answer.
pub fn format_severity_output(text: &str) -> Result<(Option<SeverityLabel>, SeverityScore)> {
    let map = extract_object(text)?;
    let label = match map.get("label") {
        Some(Value::Null) => None,
        Some(Value::String(s)) => Some(
            s.trim()
                .parse::<SeverityLabel>()
                .map_err(|_| violation(format!("unknown label {s:?}")))?,
        ),
        Some(other) => return Err(violation(format!("label {other} is not a string"))),
        None => return Err(violation("missing \"label\"")),
    };
    let value = match map.get("score") {
        Some(Value::Number(n)) => n.as_f64().ok_or_else(|| violation("score not representable"))?,
        Some(Value::String(s)) => s
            .trim()
            .parse::<f64>()
            .map_err(|_| violation(format!("non-numeric score {s:?}")))?,
        Some(other) => return Err(violation(format!("score {other} is not a number"))),
        None => return Err(violation("missing \"score\"")),
    };
    let score = SeverityScore::new(value).map_err(|e| violation(e.to_string()))?;
    Ok((label, score))
}
