//! Strict parsing of structured model replies.

use serde_json::Value;

use super::{IssueSuggestion, SuggestError};

fn malformed(at: impl Into<Option<String>>, reason: impl Into<String>) -> SuggestError {
    SuggestError::MalformedModelOutput {
        at: at.into(),
        reason: reason.into(),
    }
}

/// Removes surrounding whitespace and a single enclosing markdown code fence
/// (optionally tagged `json`).
fn strip_fence(raw: &str) -> &str {
    let trimmed = raw.trim();
    let Some(inner) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let Some(inner) = inner.strip_suffix("```") else {
        return trimmed;
    };
    let inner = inner.strip_prefix("json").unwrap_or(inner);
    inner.trim()
}

fn parse_json(raw: &str) -> Result<Value, SuggestError> {
    let text = strip_fence(raw);
    if text.is_empty() {
        return Err(malformed(None, "empty reply"));
    }
    serde_json::from_str(text).map_err(|e| {
        malformed(
            Some(format!("line {}, column {}", e.line(), e.column())),
            format!("not valid JSON: {e}"),
        )
    })
}

fn required_str(obj: &serde_json::Map<String, Value>, field: &str, at: &str) -> Result<String, SuggestError> {
    match obj.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(malformed(
            Some(at.to_string()),
            format!("field {field:?} is not a string"),
        )),
        None => Err(malformed(
            Some(at.to_string()),
            format!("missing field {field:?}"),
        )),
    }
}

/// Parses a JSON array of `{summary, description, rationale}` objects.
/// Extra fields inside an element are ignored; any other top-level shape,
/// a missing or non-string field, or an empty summary is rejected.
pub fn parse_model_output(raw: &str) -> Result<Vec<IssueSuggestion>, SuggestError> {
    let value = parse_json(raw)?;
    let Value::Array(items) = value else {
        return Err(malformed(None, "expected a JSON array of suggestions"));
    };
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let at = format!("element {i}");
            let Value::Object(obj) = item else {
                return Err(malformed(Some(at), "element is not an object"));
            };
            let summary = required_str(obj, "summary", &at)?;
            if summary.trim().is_empty() {
                return Err(malformed(Some(at), "summary is empty"));
            }
            Ok(IssueSuggestion {
                summary,
                description: required_str(obj, "description", &at)?,
                rationale: required_str(obj, "rationale", &at)?,
                redundancy_score: None,
            })
        })
        .collect()
}

/// Parses a `{summary, description}` object for a merged issue.
pub fn parse_merge_output(raw: &str) -> Result<(String, String), SuggestError> {
    let value = parse_json(raw)?;
    let Value::Object(obj) = value else {
        return Err(malformed(
            None,
            "expected a JSON object with summary and description",
        ));
    };
    let summary = required_str(&obj, "summary", "object")?;
    if summary.trim().is_empty() {
        return Err(malformed(Some("object".to_string()), "summary is empty"));
    }
    Ok((summary, required_str(&obj, "description", "object")?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_inputs() {
        assert!(parse_model_output("[]").unwrap().is_empty());
        assert!(parse_model_output("  \n [ ]\n").unwrap().is_empty());
        let one = parse_model_output(r#"[{"summary":"S","description":"D","rationale":"R"}]"#).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(
            (
                one[0].summary.as_str(),
                one[0].description.as_str(),
                one[0].rationale.as_str()
            ),
            ("S", "D", "R")
        );
        assert_eq!(one[0].redundancy_score, None);
    }

    #[test]
    fn shape_errors() {
        for raw in [
            r#"{"summary":"S"}"#,
            "Sure! Here are some ideas: add tests.",
            "",
            "[1]",
            r#"[{"summary":"S","description":"D"}]"#,
            r#"[{"summary":"","description":"D","rationale":"R"}]"#,
            r#"[{"summary":3,"description":"D","rationale":"R"}]"#,
            r#"[{"summary":"S","description":"D","rationale":"R"}"#,
        ] {
            assert!(
                matches!(
                    parse_model_output(raw),
                    Err(SuggestError::MalformedModelOutput { .. })
                ),
                "{raw:?}"
            );
        }
    }

    #[test]
    fn errors_carry_position() {
        match parse_model_output(r#"[{"summary":"S","description":"D","rationale":"R"}, 7]"#) {
            Err(SuggestError::MalformedModelOutput { at, .. }) => {
                assert_eq!(at.as_deref(), Some("element 1"))
            }
            other => panic!("{other:?}"),
        }
        match parse_model_output("[\n  {oops}\n]") {
            Err(SuggestError::MalformedModelOutput { at, .. }) => assert!(at.unwrap().starts_with("line 2")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn code_fence_tolerated() {
        let raw = "```json\n[{\"summary\":\"S\",\"description\":\"D\",\"rationale\":\"R\"}]\n```";
        assert_eq!(parse_model_output(raw).unwrap().len(), 1);
    }

    #[test]
    fn merge_output() {
        assert_eq!(
            parse_merge_output(r#"{"summary":"S","description":"D"}"#).unwrap(),
            ("S".to_string(), "D".to_string())
        );
        assert!(parse_merge_output("[]").is_err());
        assert!(parse_merge_output(r#"{"summary":"S"}"#).is_err());
    }
}
