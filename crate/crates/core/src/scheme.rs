//! The eight annotation scheme kinds and submission validation.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{DocumentKind, Instance};
use crate::error::SchemeError;
use crate::tokenize::char_len;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Multiselect,
    Radio,
    BestWorst,
    Likert,
    FreeText,
    Span,
    Number,
    Dropdown,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 8] = [
        SchemeKind::Multiselect,
        SchemeKind::Radio,
        SchemeKind::BestWorst,
        SchemeKind::Likert,
        SchemeKind::FreeText,
        SchemeKind::Span,
        SchemeKind::Number,
        SchemeKind::Dropdown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::Multiselect => "multiselect",
            SchemeKind::Radio => "radio",
            SchemeKind::BestWorst => "best_worst",
            SchemeKind::Likert => "likert",
            SchemeKind::FreeText => "free_text",
            SchemeKind::Span => "span",
            SchemeKind::Number => "number",
            SchemeKind::Dropdown => "dropdown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn is_categorical(self) -> bool {
        matches!(self, SchemeKind::Radio | SchemeKind::Multiselect)
    }

    /// Kinds that take an option list from the config.
    pub fn uses_options(self) -> bool {
        matches!(
            self,
            SchemeKind::Multiselect | SchemeKind::Radio | SchemeKind::Dropdown | SchemeKind::BestWorst | SchemeKind::Likert
        )
    }
}

/// What an option shows: text, or a media reference such as an animated GIF.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OptionDisplay {
    Text(String),
    Media { image: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "OptionRepr")]
pub struct LabelOption {
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display: Option<OptionDisplay>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tooltip: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OptionRepr {
    Plain(String),
    Full {
        value: String,
        #[serde(default)]
        display: Option<OptionDisplay>,
        #[serde(default)]
        key: Option<String>,
        #[serde(default)]
        tooltip: Option<String>,
    },
}

impl From<OptionRepr> for LabelOption {
    fn from(repr: OptionRepr) -> Self {
        match repr {
            OptionRepr::Plain(value) => LabelOption::new(value),
            OptionRepr::Full {
                value,
                display,
                key,
                tooltip,
            } => LabelOption {
                value,
                display,
                key,
                tooltip,
            },
        }
    }
}

impl LabelOption {
    pub fn new(value: impl Into<String>) -> Self {
        Self {
            value: value.into(),
            display: None,
            key: None,
            tooltip: None,
        }
    }

    /// The display, falling back to the value.
    pub fn shown(&self) -> OptionDisplay {
        self.display.clone().unwrap_or_else(|| OptionDisplay::Text(self.value.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationScheme {
    pub name: String,
    pub kind: SchemeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<LabelOption>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likert_size: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub span_labels: Vec<String>,
    #[serde(default)]
    pub required: bool,
}

impl AnnotationScheme {
    pub fn new(name: impl Into<String>, kind: SchemeKind) -> Self {
        Self {
            name: name.into(),
            kind,
            description: None,
            options: Vec::new(),
            likert_size: None,
            span_labels: Vec::new(),
            required: false,
        }
    }

    pub fn with_options<I, S>(mut self, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.options = values.into_iter().map(LabelOption::new).collect();
        self
    }

    pub fn option_values(&self) -> impl Iterator<Item = &str> {
        self.options.iter().map(|o| o.value.as_str())
    }

    /// Kind-specific structural checks. Returns `(field suffix, message)` pairs.
    pub fn structural_issues(&self) -> Vec<(String, String)> {
        let mut issues = Vec::new();
        let mut push = |field: &str, msg: String| issues.push((field.to_string(), msg));
        if self.name.trim().is_empty() {
            push("name", "scheme name must be non-empty".into());
        }
        match self.kind {
            SchemeKind::Multiselect | SchemeKind::Radio | SchemeKind::Dropdown => {
                if self.options.is_empty() {
                    push("options", format!("{} scheme needs at least one option", self.kind.as_str()));
                }
            }
            SchemeKind::BestWorst => {
                if self.options.len() == 1 {
                    push("options", "best_worst needs at least two options when options are given".into());
                }
            }
            SchemeKind::Likert => match self.likert_size {
                None => push("likert_size", "likert scheme needs likert_size".into()),
                Some(n) if n < 2 => push("likert_size", "likert_size must be at least 2".into()),
                Some(n) => {
                    if !self.options.is_empty() {
                        let expected: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
                        let got: Vec<&str> = self.option_values().collect();
                        if got != expected {
                            push("options", format!("likert options, when given, must be the values 1..={n} in order"));
                        }
                    }
                }
            },
            SchemeKind::FreeText | SchemeKind::Number => {
                if !self.options.is_empty() {
                    push("options", format!("{} scheme takes no options", self.kind.as_str()));
                }
            }
            SchemeKind::Span => {
                if self.span_labels.is_empty() {
                    push("span_labels", "span scheme needs at least one span label".into());
                }
                if !self.options.is_empty() {
                    push("options", "span scheme takes span_labels, not options".into());
                }
                let mut seen = HashSet::new();
                for l in &self.span_labels {
                    if l.is_empty() || !seen.insert(l) {
                        push("span_labels", format!("span label {l:?} is empty or duplicated"));
                    }
                }
            }
        }
        if self.likert_size.is_some() && self.kind != SchemeKind::Likert {
            push("likert_size", "likert_size only applies to likert schemes".into());
        }
        if !self.span_labels.is_empty() && self.kind != SchemeKind::Span {
            push("span_labels", "span_labels only apply to span schemes".into());
        }
        let mut values = HashSet::new();
        let mut displays = HashSet::new();
        for (i, o) in self.options.iter().enumerate() {
            if o.value.is_empty() {
                push(&format!("options[{i}].value"), "option value must be non-empty".into());
            }
            if !values.insert(o.value.clone()) {
                push(&format!("options[{i}].value"), format!("duplicate option value {:?}", o.value));
            }
            if !displays.insert(o.shown()) {
                push(&format!("options[{i}].display"), format!("duplicate option display for {:?}", o.value));
            }
            if let Some(k) = &o.key {
                if k.chars().count() != 1 {
                    push(&format!("options[{i}].key"), format!("keybinding {k:?} must be a single key"));
                }
            }
        }
        issues
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpanLabel {
    pub document_index: usize,
    pub start: usize,
    pub end: usize,
    pub label: String,
}

/// A validated answer for one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Answer {
    Choices(BTreeSet<String>),
    Choice(String),
    BestWorst { best: String, worst: String },
    Scale(u32),
    Text(String),
    Number(f64),
    Spans(Vec<SpanLabel>),
}

impl Answer {
    /// The wire form accepted by [`validate_submission`].
    pub fn to_raw(&self) -> Value {
        match self {
            Answer::Choices(set) => Value::Array(set.iter().cloned().map(Value::String).collect()),
            Answer::Choice(s) | Answer::Text(s) => Value::String(s.clone()),
            Answer::BestWorst { best, worst } => serde_json::json!({ "best": best, "worst": worst }),
            Answer::Scale(n) => Value::from(*n),
            Answer::Number(x) => serde_json::Number::from_f64(*x).map(Value::Number).unwrap_or(Value::Null),
            Answer::Spans(spans) => serde_json::to_value(spans).unwrap_or(Value::Null),
        }
    }

    /// Inverse of [`Answer::to_raw`] for a known kind, without option checks.
    pub fn from_raw(kind: SchemeKind, value: &Value) -> Option<Answer> {
        Some(match kind {
            SchemeKind::Multiselect => Answer::Choices(
                value
                    .as_array()?
                    .iter()
                    .map(|v| v.as_str().map(str::to_string))
                    .collect::<Option<_>>()?,
            ),
            SchemeKind::Radio | SchemeKind::Dropdown => Answer::Choice(value.as_str()?.to_string()),
            SchemeKind::BestWorst => Answer::BestWorst {
                best: value.get("best")?.as_str()?.to_string(),
                worst: value.get("worst")?.as_str()?.to_string(),
            },
            SchemeKind::Likert => Answer::Scale(u32::try_from(value.as_u64()?).ok()?),
            SchemeKind::FreeText => Answer::Text(value.as_str()?.to_string()),
            SchemeKind::Number => Answer::Number(value.as_f64()?),
            SchemeKind::Span => Answer::Spans(serde_json::from_value(value.clone()).ok()?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelValue {
    pub scheme: String,
    #[serde(flatten)]
    pub answer: Answer,
}

/// An unvalidated answer as it arrives from a client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawLabel {
    pub scheme: String,
    pub value: Value,
}

impl RawLabel {
    pub fn new(scheme: impl Into<String>, value: Value) -> Self {
        Self {
            scheme: scheme.into(),
            value,
        }
    }
}

impl From<&LabelValue> for RawLabel {
    fn from(v: &LabelValue) -> Self {
        RawLabel::new(v.scheme.clone(), v.answer.to_raw())
    }
}

/// Validated labels for one instance, in scheme config order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidatedLabels(pub Vec<LabelValue>);

impl ValidatedLabels {
    pub fn get(&self, scheme: &str) -> Option<&Answer> {
        self.0.iter().find(|v| v.scheme == scheme).map(|v| &v.answer)
    }

    pub fn to_raw(&self) -> Vec<RawLabel> {
        self.0.iter().map(RawLabel::from).collect()
    }
}

/// Choices offered by a best-worst scheme for this instance: the instance's
/// documents when it has several, otherwise the configured options.
pub fn best_worst_choices(scheme: &AnnotationScheme, instance: Option<&Instance>) -> Vec<String> {
    match instance {
        Some(inst) if inst.document_count() >= 2 => inst.slot_ids(),
        _ => scheme.option_values().map(str::to_string).collect(),
    }
}

fn as_string(value: &Value) -> Option<&str> {
    value.as_str()
}

fn as_integer(value: &Value) -> Option<i64> {
    match value {
        Value::Number(n) => n.as_i64().or_else(|| {
            n.as_f64()
                .filter(|f| f.fract() == 0.0 && f.abs() < 1e15)
                .map(|f| f as i64)
        }),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Validates one raw value against one scheme.
pub fn validate_answer(
    scheme: &AnnotationScheme,
    value: &Value,
    instance: Option<&Instance>,
) -> Result<Answer, String> {
    let known = |v: &str| scheme.options.iter().any(|o| o.value == v);
    match scheme.kind {
        SchemeKind::Multiselect => {
            let items = value.as_array().ok_or("expected a list of option values")?;
            let mut set = BTreeSet::new();
            for item in items {
                let v = as_string(item).ok_or("option values must be strings")?;
                if !known(v) {
                    return Err(format!("unknown option {v:?}"));
                }
                if !set.insert(v.to_string()) {
                    return Err(format!("option {v:?} selected twice"));
                }
            }
            Ok(Answer::Choices(set))
        }
        SchemeKind::Radio | SchemeKind::Dropdown => {
            let v = as_string(value).ok_or("expected a single option value")?;
            if !known(v) {
                return Err(format!("unknown option {v:?}"));
            }
            Ok(Answer::Choice(v.to_string()))
        }
        SchemeKind::BestWorst => {
            let obj = value.as_object().ok_or("expected an object with best and worst")?;
            let best = obj.get("best").and_then(as_string).ok_or("missing best")?;
            let worst = obj.get("worst").and_then(as_string).ok_or("missing worst")?;
            let choices = best_worst_choices(scheme, instance);
            for v in [best, worst] {
                if !choices.iter().any(|c| c == v) {
                    return Err(format!("unknown choice {v:?}"));
                }
            }
            if best == worst {
                return Err("best and worst must differ".into());
            }
            Ok(Answer::BestWorst {
                best: best.to_string(),
                worst: worst.to_string(),
            })
        }
        SchemeKind::Likert => {
            let size = scheme.likert_size.unwrap_or(0) as i64;
            let n = as_integer(value).ok_or("expected an integer rating")?;
            if n < 1 || n > size {
                return Err(format!("rating {n} outside 1..={size}"));
            }
            Ok(Answer::Scale(n as u32))
        }
        SchemeKind::FreeText => {
            let s = as_string(value).ok_or("expected text")?;
            Ok(Answer::Text(s.to_string()))
        }
        SchemeKind::Number => {
            let x = match value {
                Value::Number(n) => n.as_f64(),
                Value::String(s) => s.trim().parse::<f64>().ok(),
                _ => None,
            }
            .filter(|x| x.is_finite())
            .ok_or("value is not a number")?;
            Ok(Answer::Number(x))
        }
        SchemeKind::Span => {
            let spans: Vec<SpanLabel> =
                serde_json::from_value(value.clone()).map_err(|_| "expected a list of spans".to_string())?;
            let instance = instance.ok_or("span answers need an instance")?;
            let mut seen = HashSet::new();
            for s in &spans {
                let doc = instance
                    .document(s.document_index)
                    .ok_or_else(|| format!("document_index {} out of range", s.document_index))?;
                if doc.kind != DocumentKind::Text {
                    return Err("spans can only be placed on text documents".into());
                }
                if s.start >= s.end {
                    return Err(format!("start must precede end (start={}, end={})", s.start, s.end));
                }
                let len = char_len(&doc.payload);
                if s.end > len {
                    return Err(format!("span end {} beyond document length {len}", s.end));
                }
                if !scheme.span_labels.contains(&s.label) {
                    return Err(format!("unknown span label {:?}", s.label));
                }
                if !seen.insert(s.clone()) {
                    return Err(format!("duplicate span {}..{} {:?}", s.start, s.end, s.label));
                }
            }
            let mut spans = spans;
            spans.sort();
            Ok(Answer::Spans(spans))
        }
    }
}

/// Validates a full submission. Errors are collected per scheme in config order.
pub fn validate_submission(
    schemes: &[AnnotationScheme],
    submitted: &[RawLabel],
    instance: Option<&Instance>,
) -> Result<ValidatedLabels, Vec<SchemeError>> {
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for raw in submitted {
        if !schemes.iter().any(|s| s.name == raw.scheme) {
            errors.push(SchemeError::new(&raw.scheme, "unknown scheme"));
        } else if !seen.insert(raw.scheme.as_str()) {
            errors.push(SchemeError::new(&raw.scheme, "scheme submitted twice"));
        }
    }
    let mut out = Vec::new();
    for scheme in schemes {
        let raw = submitted
            .iter()
            .find(|r| r.scheme == scheme.name)
            .map(|r| &r.value)
            .filter(|v| !v.is_null());
        let raw = match raw {
            Some(Value::String(s)) if s.trim().is_empty() && scheme.kind != SchemeKind::FreeText => None,
            Some(Value::String(s)) if s.is_empty() => None,
            other => other,
        };
        match raw {
            None if scheme.required => errors.push(SchemeError::new(&scheme.name, "missing required value")),
            None => {}
            Some(v) => match validate_answer(scheme, v, instance) {
                Ok(answer) => out.push(LabelValue {
                    scheme: scheme.name.clone(),
                    answer,
                }),
                Err(msg) => errors.push(SchemeError::new(&scheme.name, msg)),
            },
        }
    }
    if errors.is_empty() {
        Ok(ValidatedLabels(out))
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Content, Document};
    use serde_json::json;

    fn inst(docs: &[&str]) -> Instance {
        Instance {
            id: "i".into(),
            content: if docs.len() == 1 {
                Content::Single(Document::text(docs[0]))
            } else {
                Content::List(docs.iter().map(|d| Document::text(*d)).collect())
            },
            display_meta: Default::default(),
        }
    }

    fn check(scheme: &AnnotationScheme, value: Value, instance: &Instance) -> Result<ValidatedLabels, Vec<SchemeError>> {
        validate_submission(std::slice::from_ref(scheme), &[RawLabel::new(&scheme.name, value)], Some(instance))
    }

    #[test]
    fn best_equal_worst_rejected() {
        let s = AnnotationScheme::new("bws", SchemeKind::BestWorst).with_options(["A", "B", "C"]);
        let err = check(&s, json!({"best": "A", "worst": "A"}), &inst(&["x"])).unwrap_err();
        assert_eq!(err[0].message, "best and worst must differ");
        assert!(check(&s, json!({"best": "A", "worst": "C"}), &inst(&["x"])).is_ok());
    }

    #[test]
    fn best_worst_over_list_documents() {
        let s = AnnotationScheme::new("bws", SchemeKind::BestWorst);
        let i = inst(&["a", "b", "c", "d"]);
        assert!(check(&s, json!({"best": "0", "worst": "3"}), &i).is_ok());
        assert!(check(&s, json!({"best": "0", "worst": "4"}), &i).is_err());
    }

    #[test]
    fn likert_boundary() {
        let mut s = AnnotationScheme::new("l", SchemeKind::Likert);
        s.likert_size = Some(5);
        assert!(check(&s, json!(5), &inst(&["x"])).is_ok());
        assert!(check(&s, json!(1), &inst(&["x"])).is_ok());
        let err = check(&s, json!(6), &inst(&["x"])).unwrap_err();
        assert!(err[0].message.contains("outside"));
        assert!(check(&s, json!(0), &inst(&["x"])).is_err());
        assert!(check(&s, json!(2.5), &inst(&["x"])).is_err());
    }

    #[test]
    fn span_order_and_bounds() {
        let mut s = AnnotationScheme::new("sp", SchemeKind::Span);
        s.span_labels = vec!["L".into()];
        let i = inst(&["héllo world"]);
        let err = check(&s, json!([{"document_index":0,"start":10,"end":4,"label":"L"}]), &i).unwrap_err();
        assert!(err[0].message.starts_with("start must precede end"));
        assert!(check(&s, json!([{"document_index":0,"start":6,"end":11,"label":"L"}]), &i).is_ok());
        assert!(check(&s, json!([{"document_index":0,"start":6,"end":12,"label":"L"}]), &i).is_err());
        assert!(check(&s, json!([{"document_index":1,"start":0,"end":1,"label":"L"}]), &i).is_err());
        assert!(check(&s, json!([{"document_index":0,"start":0,"end":1,"label":"M"}]), &i).is_err());
    }

    #[test]
    fn overlapping_spans_allowed_but_exact_duplicates_rejected() {
        let mut s = AnnotationScheme::new("sp", SchemeKind::Span);
        s.span_labels = vec!["A".into(), "B".into()];
        let i = inst(&["hello world"]);
        let overlap = json!([
            {"document_index":0,"start":0,"end":5,"label":"A"},
            {"document_index":0,"start":0,"end":5,"label":"B"},
            {"document_index":0,"start":2,"end":8,"label":"A"}
        ]);
        assert!(check(&s, overlap, &i).is_ok());
        let dup = json!([
            {"document_index":0,"start":0,"end":5,"label":"A"},
            {"document_index":0,"start":0,"end":5,"label":"A"}
        ]);
        assert!(check(&s, dup, &i).is_err());
    }

    #[test]
    fn number_rejects_non_numeric() {
        let s = AnnotationScheme::new("n", SchemeKind::Number);
        assert!(check(&s, json!("abc"), &inst(&["x"])).is_err());
        assert_eq!(
            check(&s, json!("2.5"), &inst(&["x"])).unwrap().get("n"),
            Some(&Answer::Number(2.5))
        );
    }

    #[test]
    fn missing_required_and_unknown_scheme() {
        let mut s = AnnotationScheme::new("r", SchemeKind::Radio).with_options(["a", "b"]);
        s.required = true;
        let err = validate_submission(std::slice::from_ref(&s), &[RawLabel::new("zzz", json!("a"))], None).unwrap_err();
        assert_eq!(err.len(), 2);
        assert_eq!(err[0].scheme, "zzz");
        assert_eq!(err[1].message, "missing required value");
    }

    #[test]
    fn raw_round_trip_revalidates() {
        let s = AnnotationScheme::new("m", SchemeKind::Multiselect).with_options(["a", "b", "c"]);
        let ok = check(&s, json!(["c", "a"]), &inst(&["x"])).unwrap();
        let again = validate_submission(std::slice::from_ref(&s), &ok.to_raw(), None).unwrap();
        assert_eq!(ok, again);
    }

    #[test]
    fn plain_string_options_deserialize() {
        let s: AnnotationScheme = serde_yaml::from_str("name: x\nkind: radio\noptions: [a, {value: b, key: '2'}]\n").unwrap();
        assert_eq!(s.options[0], LabelOption::new("a"));
        assert_eq!(s.options[1].key.as_deref(), Some("2"));
    }

    #[test]
    fn structural_rules() {
        assert!(!AnnotationScheme::new("r", SchemeKind::Radio).structural_issues().is_empty());
        let mut l = AnnotationScheme::new("l", SchemeKind::Likert);
        l.likert_size = Some(1);
        assert!(!l.structural_issues().is_empty());
        let dup = AnnotationScheme::new("r", SchemeKind::Radio).with_options(["a", "a"]);
        assert!(!dup.structural_issues().is_empty());
        let ft = AnnotationScheme::new("t", SchemeKind::FreeText).with_options(["a"]);
        assert!(!ft.structural_issues().is_empty());
    }
}
