//! Custom layout templates: `{{placeholder}}` parsing and binding resolution.

use serde::{Deserialize, Serialize};

use crate::config::TaskConfig;
use crate::error::{Error, Result};

/// What a placeholder refers to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "target", content = "name", rename_all = "snake_case")]
pub enum BindingTarget {
    Id,
    TextField(String),
    Scheme(String),
    /// `{{meta.<field>}}`; checked against instances after ingestion.
    Meta(String),
    Instructions,
    Progress,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub placeholder: String,
    pub target: BindingTarget,
    /// Byte range of the whole `{{...}}` token in the template.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateReport {
    pub bindings: Vec<Binding>,
    /// Non-fatal findings, e.g. a scheme the template never places.
    pub warnings: Vec<String>,
}

/// Literal markup or a bound slot, in template order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "block", rename_all = "snake_case")]
pub enum LayoutBlock {
    Literal { html: String },
    Slot { binding: BindingTarget },
}

fn scan(text: &str) -> std::result::Result<Vec<(String, usize, usize)>, String> {
    let mut out = Vec::new();
    let mut rest = 0;
    while let Some(open) = text[rest..].find("{{") {
        let open = rest + open;
        let close = text[open + 2..]
            .find("}}")
            .map(|c| open + 2 + c)
            .ok_or_else(|| format!("unclosed placeholder at byte {open}"))?;
        let name = text[open + 2..close].trim().to_string();
        if name.is_empty() {
            return Err(format!("empty placeholder at byte {open}"));
        }
        out.push((name, open, close + 2));
        rest = close + 2;
    }
    Ok(out)
}

fn resolve(name: &str, config: &TaskConfig) -> Option<BindingTarget> {
    if let Some(field) = name.strip_prefix("meta.") {
        return (!field.is_empty()).then(|| BindingTarget::Meta(field.to_string()));
    }
    if config.text_field.names().contains(&name) {
        return Some(BindingTarget::TextField(name.to_string()));
    }
    if config.schemes.iter().any(|s| s.name == name) {
        return Some(BindingTarget::Scheme(name.to_string()));
    }
    if name == config.id_field {
        return Some(BindingTarget::Id);
    }
    match name {
        "instructions" => Some(BindingTarget::Instructions),
        "progress" => Some(BindingTarget::Progress),
        _ => None,
    }
}

/// Resolves every placeholder; unknown placeholders are errors, unplaced schemes warnings.
pub fn validate_template(template_text: &str, config: &TaskConfig) -> Result<TemplateReport> {
    let tokens = scan(template_text).map_err(|m| Error::invalid("template_override", m))?;
    let mut bindings = Vec::new();
    let mut unknown = Vec::new();
    for (name, start, end) in tokens {
        match resolve(&name, config) {
            Some(target) => bindings.push(Binding {
                placeholder: name,
                target,
                start,
                end,
            }),
            None => unknown.push(name),
        }
    }
    if !unknown.is_empty() {
        return Err(Error::Invalid(
            unknown
                .into_iter()
                .map(|n| crate::error::ConfigIssue::new("template_override", format!("unknown placeholder {{{{{n}}}}}")))
                .collect(),
        ));
    }
    let warnings = config
        .schemes
        .iter()
        .filter(|s| !bindings.iter().any(|b| b.target == BindingTarget::Scheme(s.name.clone())))
        .map(|s| format!("scheme {:?} is not placed by the template", s.name))
        .collect();
    Ok(TemplateReport { bindings, warnings })
}

/// Splits a validated template into literal and slot blocks.
pub fn layout_blocks(template_text: &str, bindings: &[Binding]) -> Vec<LayoutBlock> {
    let mut blocks = Vec::new();
    let mut pos = 0;
    for b in bindings {
        if b.start > pos {
            blocks.push(LayoutBlock::Literal {
                html: template_text[pos..b.start].to_string(),
            });
        }
        blocks.push(LayoutBlock::Slot {
            binding: b.target.clone(),
        });
        pos = b.end;
    }
    if pos < template_text.len() {
        blocks.push(LayoutBlock::Literal {
            html: template_text[pos..].to_string(),
        });
    }
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TextField;
    use crate::scheme::{AnnotationScheme, SchemeKind};

    fn cfg(text: TextField) -> TaskConfig {
        let mut c = TaskConfig::minimal("t", vec![], "id", text);
        c.schemes = vec![AnnotationScheme::new("sentiment", SchemeKind::Radio).with_options(["p", "n"])];
        c
    }

    #[test]
    fn single_text_placeholder() {
        let r = validate_template("{{text}}", &cfg(TextField::One("text".into()))).unwrap();
        assert_eq!(r.bindings.len(), 1);
        assert_eq!(r.bindings[0].target, BindingTarget::TextField("text".into()));
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn unknown_placeholder_is_named() {
        let err = validate_template("<p>{{bogus}}</p>", &cfg(TextField::One("text".into()))).unwrap_err();
        assert!(err.to_string().contains("{{bogus}}"), "{err}");
    }

    #[test]
    fn pairwise_two_bindings_in_order() {
        let c = cfg(TextField::Many(vec!["text_a".into(), "text_b".into()]));
        let r = validate_template("{{text_a}} vs {{ text_b }} {{sentiment}}", &c).unwrap();
        let names: Vec<_> = r.bindings.iter().map(|b| b.placeholder.as_str()).collect();
        assert_eq!(names, ["text_a", "text_b", "sentiment"]);
        assert!(r.warnings.is_empty());
        let blocks = layout_blocks("{{text_a}} vs {{ text_b }} {{sentiment}}", &r.bindings);
        assert_eq!(blocks.len(), 5);
        assert_eq!(blocks[1], LayoutBlock::Literal { html: " vs ".into() });
    }

    #[test]
    fn unclosed_is_error() {
        assert!(validate_template("{{text", &cfg(TextField::One("text".into()))).is_err());
    }
}
