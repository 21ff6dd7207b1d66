//! Pulling a JSON document out of a chat reply.

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Direct,
    CodeFence,
    BalancedScan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub value: Value,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no JSON document found ({})", attempts.iter().map(|(s, e)| format!("{s:?}: {e}")).collect::<Vec<_>>().join("; "))]
pub struct ExtractError {
    pub attempts: Vec<(Strategy, String)>,
}

/// Tries a direct parse, then the contents of each code fence, then the
/// first balanced top-level object or array that parses.
pub fn extract_json(raw: &str) -> Result<Extracted, ExtractError> {
    let mut attempts = Vec::new();

    match serde_json::from_str::<Value>(raw.trim()) {
        Ok(value) => return Ok(Extracted { value, strategy: Strategy::Direct }),
        Err(e) => attempts.push((Strategy::Direct, e.to_string())),
    }

    let fences = fenced_blocks(raw);
    if fences.is_empty() {
        attempts.push((Strategy::CodeFence, "no code fence".into()));
    }
    for block in &fences {
        match serde_json::from_str::<Value>(block.trim()) {
            Ok(value) => return Ok(Extracted { value, strategy: Strategy::CodeFence }),
            Err(e) => attempts.push((Strategy::CodeFence, e.to_string())),
        }
    }

    match balanced_scan(raw) {
        Some(value) => Ok(Extracted { value, strategy: Strategy::BalancedScan }),
        None => {
            attempts.push((Strategy::BalancedScan, "no balanced object or array parses".into()));
            Err(ExtractError { attempts })
        }
    }
}

/// Bodies of ``` fences. The info string (`json`, `JSON`, ...) is dropped;
/// an unterminated fence runs to the end of the text.
fn fenced_blocks(raw: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = raw;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = match after.find('\n') {
            Some(nl) if after[..nl].trim().chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') => nl + 1,
            _ => 0,
        };
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                out.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => {
                out.push(body);
                break;
            }
        }
    }
    out
}

/// End offset (exclusive) of the bracket group opening at `start`, skipping
/// brackets inside string literals.
fn group_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut stack = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => stack.push(b'}'),
            b'[' => stack.push(b']'),
            b'}' | b']' => {
                if stack.pop() != Some(b) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

fn balanced_scan(raw: &str) -> Option<Value> {
    let bytes = raw.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if matches!(bytes[i], b'{' | b'[') {
            if let Some(end) = group_end(bytes, i) {
                if let Ok(v) = serde_json::from_str::<Value>(&raw[i..end]) {
                    return Some(v);
                }
            }
        }
        i += 1;
    }
    None
}
