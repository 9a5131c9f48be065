//! Versioned prompt templates with `{name}` placeholders.

use std::collections::HashMap;
use std::path::Path;

const SUGGEST_ISSUES: &str = include_str!("../../prompts/suggest_issues.v1.txt");
const DRAFT_MERGE: &str = include_str!("../../prompts/draft_merge.v1.txt");
const REFORMAT: &str = include_str!("../../prompts/reformat.v1.txt");

pub const SUGGEST_ISSUES_FILE: &str = "suggest_issues.v1.txt";
pub const DRAFT_MERGE_FILE: &str = "draft_merge.v1.txt";
pub const REFORMAT_FILE: &str = "reformat.v1.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub suggest_issues: String,
    pub draft_merge: String,
    pub reformat: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            suggest_issues: SUGGEST_ISSUES.to_string(),
            draft_merge: DRAFT_MERGE.to_string(),
            reformat: REFORMAT.to_string(),
        }
    }
}

impl PromptTemplates {
    /// Loads templates from `dir`; any file that is absent keeps the
    /// bundled version.
    pub fn load_dir(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let dir = dir.as_ref();
        let mut templates = PromptTemplates::default();
        for (file, slot) in [
            (SUGGEST_ISSUES_FILE, &mut templates.suggest_issues),
            (DRAFT_MERGE_FILE, &mut templates.draft_merge),
            (REFORMAT_FILE, &mut templates.reformat),
        ] {
            let path = dir.join(file);
            if path.exists() {
                *slot = std::fs::read_to_string(path)?;
            }
        }
        Ok(templates)
    }
}

/// Substitutes `{name}` for every name in `vars`, in a single pass so that
/// substituted text is never rescanned. Unknown or malformed placeholders are
/// left as written.
pub fn render(template: &str, vars: &HashMap<&str, String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        let name = &after[..name_len];
        match (vars.get(name), after[name_len..].starts_with('}')) {
            (Some(value), true) if !name.is_empty() => {
                out.push_str(value);
                rest = &after[name_len + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}
