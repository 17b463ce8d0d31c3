use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StrictJsonError {
    #[error("unexpected text before the JSON document")]
    LeadingGarbage,
    #[error("unexpected text after the JSON document at byte {0}")]
    TrailingGarbage(usize),
    #[error("invalid JSON at byte {0}: {1}")]
    InvalidJson(usize, String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrictJson {
    pub document: Value,
    /// The reply was wrapped in a markdown code fence.
    pub fenced: bool,
}

/// Strips one markdown fence (```` ```lang ... ``` ````) around `text`, if
/// that is exactly what it is.
pub fn strip_fence(text: &str) -> Option<&str> {
    let t = text.trim();
    let inner = t.strip_prefix("```")?.strip_suffix("```")?;
    let (tag, body) = inner.split_once('\n')?;
    if !tag.trim().chars().all(|c| c.is_ascii_alphanumeric()) || body.contains("```") {
        return None;
    }
    Some(body)
}

/// Accepts exactly one JSON document surrounded by optional whitespace, or
/// the same wrapped in a single markdown fence (flagged).
pub fn parse_strict_json(raw: &str) -> Result<StrictJson, StrictJsonError> {
    let (text, fenced) = match strip_fence(raw) {
        Some(body) => (body, true),
        None => (raw, false),
    };
    let start = text.len() - text.trim_start().len();
    let first = text[start..].chars().next();
    let opens_value = matches!(first, Some('{' | '[' | '"' | '-' | '0'..='9' | 't' | 'f' | 'n'));
    if !opens_value {
        return Err(match first {
            None => StrictJsonError::InvalidJson(start, "empty input".into()),
            Some(_) => StrictJsonError::LeadingGarbage,
        });
    }
    let mut stream = serde_json::Deserializer::from_str(text).into_iter::<Value>();
    let document = match stream.next() {
        Some(Ok(v)) => v,
        Some(Err(e)) => return Err(StrictJsonError::InvalidJson(stream.byte_offset(), e.to_string())),
        None => return Err(StrictJsonError::InvalidJson(start, "empty input".into())),
    };
    let end = stream.byte_offset();
    if !text[end..].trim().is_empty() {
        return Err(StrictJsonError::TrailingGarbage(end));
    }
    Ok(StrictJson { document, fenced })
}
