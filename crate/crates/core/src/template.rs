//! `{{placeholder}}` substitution for prompt templates.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("template resolved to an empty string")]
    EmptyOutput,
    #[error("unresolved placeholder {{{{{0}}}}}")]
    UnresolvedPlaceholder(String),
    #[error("unterminated placeholder starting at byte {0}")]
    Unterminated(usize),
}

/// Substitute every `{{key}}` from `values`. A placeholder without a
/// binding is an error, as is an empty result.
pub fn render(template: &str, values: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    loop {
        match rest.find("{{") {
            None => {
                out.push_str(rest);
                break;
            }
            Some(start) => {
                out.push_str(&rest[..start]);
                let after = &rest[start + 2..];
                let end = after.find("}}").ok_or_else(|| {
                    TemplateError::Unterminated(template.len() - rest.len() + start)
                })?;
                let key = after[..end].trim();
                match values.get(key) {
                    Some(v) => out.push_str(v),
                    None => {
                        return Err(TemplateError::UnresolvedPlaceholder(key.to_string()));
                    }
                }
                rest = &after[end + 2..];
            }
        }
    }
    if out.trim().is_empty() {
        return Err(TemplateError::EmptyOutput);
    }
    Ok(out)
}
