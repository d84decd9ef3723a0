//! Parsing of free-form LLM answers.
//!
//! JSON answers are parsed strictly first; if that fails, exactly one salvage
//! step is tried (removing a Markdown code fence). Anything else is rejected.

use serde::de::DeserializeOwned;

/// The body of a Markdown code fence, if `s` is one.
pub fn strip_code_fence(s: &str) -> Option<&str> {
    let t = s.trim();
    let rest = t.strip_prefix("```")?;
    let body_start = rest.find('\n')?;
    let body = &rest[body_start + 1..];
    let body = body.trim_end();
    let body = body.strip_suffix("```")?;
    Some(body.trim())
}

/// Strict JSON parse, then one retry without a code fence.
pub fn parse_json_lenient<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    match serde_json::from_str::<T>(s.trim()) {
        Ok(v) => Ok(v),
        Err(strict) => match strip_code_fence(s) {
            Some(inner) => serde_json::from_str::<T>(inner).map_err(|e| e.to_string()),
            None => Err(strict.to_string()),
        },
    }
}

/// A comma-separated organ answer.
#[derive(Debug, Clone, PartialEq)]
pub enum OrganAnswer {
    None,
    Labels(Vec<String>),
}

/// Parse the organ-matching answer: `none`, or labels separated by commas or
/// newlines. A surrounding list literal and per-item quotes are tolerated
/// because the prompt itself shows the vocabulary as a list literal.
pub fn parse_organ_answer(s: &str) -> OrganAnswer {
    let body = strip_code_fence(s).unwrap_or(s).trim();
    let body = body.strip_suffix('.').unwrap_or(body).trim();
    if body.eq_ignore_ascii_case("none") || body.is_empty() {
        return OrganAnswer::None;
    }
    let body = body
        .strip_prefix('[')
        .and_then(|b| b.strip_suffix(']'))
        .unwrap_or(body);
    let labels: Vec<String> = body
        .split([',', '\n'])
        .map(|item| {
            let item = item.trim();
            let item = item.strip_prefix("- ").unwrap_or(item);
            item.trim_matches(|c| c == '\'' || c == '"' || c == '`')
                .trim()
                .to_string()
        })
        .filter(|item| !item.is_empty())
        .collect();
    if labels.is_empty() || (labels.len() == 1 && labels[0].eq_ignore_ascii_case("none")) {
        OrganAnswer::None
    } else {
        OrganAnswer::Labels(labels)
    }
}
