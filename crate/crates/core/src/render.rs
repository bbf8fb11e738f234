//! The render-model: a structured, presentation-free description of one
//! annotation page. The frontend draws it; [`html`] is the no-script fallback.

use serde::{Deserialize, Serialize};

use crate::config::TaskConfig;
use crate::data::{DocumentKind, Instance, Record};
use crate::highlight::{display_group, HighlightSpan};
use crate::scheme::{best_worst_choices, AnnotationScheme, OptionDisplay, RawLabel, SchemeKind};
use crate::template::LayoutBlock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProgressInfo {
    pub completed: usize,
    pub total: usize,
    pub remaining: usize,
}

impl ProgressInfo {
    pub fn new(completed: usize, total: usize) -> Self {
        Self {
            completed,
            total,
            remaining: total.saturating_sub(completed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentView {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    pub kind: DocumentKind,
    pub payload: String,
}

/// A highlight as shown. Keyword and decoy highlights are indistinguishable here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighlightView {
    pub document_index: usize,
    pub start: usize,
    pub end: usize,
    pub group: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionView {
    pub value: String,
    pub display: OptionDisplay,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tooltip: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidgetDescriptor {
    pub scheme: String,
    pub kind: SchemeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub required: bool,
    pub options: Vec<OptionView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likert_size: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub span_labels: Vec<String>,
    /// Selectable slots for best-worst scaling.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<String>,
}

impl WidgetDescriptor {
    pub fn from_scheme(scheme: &AnnotationScheme, instance: Option<&Instance>) -> Self {
        let choices = if scheme.kind == SchemeKind::BestWorst {
            best_worst_choices(scheme, instance)
        } else {
            Vec::new()
        };
        Self {
            scheme: scheme.name.clone(),
            kind: scheme.kind,
            description: scheme.description.clone(),
            required: scheme.required,
            options: scheme
                .options
                .iter()
                .map(|o| OptionView {
                    value: o.value.clone(),
                    display: o.shown(),
                    key: o.key.clone(),
                    tooltip: o.tooltip.clone(),
                })
                .collect(),
            likert_size: scheme.likert_size,
            span_labels: scheme.span_labels.clone(),
            choices,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionsBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub html: Option<String>,
    pub collapsible: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressHeader {
    #[serde(flatten)]
    pub progress: ProgressInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebook_url: Option<String>,
}

/// Page layout: documents above widgets, or a deployer template.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
pub enum Layout {
    #[default]
    TextAboveLabels,
    Template { blocks: Vec<LayoutBlock> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderModel {
    pub task_name: String,
    pub instance_id: String,
    pub documents: Vec<DocumentView>,
    pub highlights: Vec<HighlightView>,
    pub widgets: Vec<WidgetDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instructions: Option<InstructionsBlock>,
    pub progress: ProgressHeader,
    pub layout: Layout,
    /// Previously submitted values, when revisiting an item.
    pub prefill: Vec<RawLabel>,
    pub display_meta: Record,
}

/// Builds the page model. Pure: equal inputs give equal models.
pub fn build_render_model(
    config: &TaskConfig,
    layout: &Layout,
    instance: &Instance,
    highlights: &[HighlightSpan],
    progress: ProgressInfo,
    highlight_seed: u64,
) -> RenderModel {
    let documents = instance
        .documents()
        .into_iter()
        .enumerate()
        .map(|(index, (key, d))| DocumentView {
            index,
            key: key.map(str::to_string),
            kind: d.kind,
            payload: d.payload.clone(),
        })
        .collect();
    let groups = config
        .highlight_config
        .as_ref()
        .map(|h| h.keyword_groups.clone())
        .unwrap_or_default();
    let highlights = highlights
        .iter()
        .map(|h| HighlightView {
            document_index: h.document_index,
            start: h.start,
            end: h.end,
            group: display_group(h, &groups, highlight_seed),
        })
        .collect();
    let instructions = config.instructions.as_ref().map(|i| InstructionsBlock {
        url: i.url.clone(),
        html: i.html.clone(),
        collapsible: true,
    });
    RenderModel {
        task_name: config.task_name.clone(),
        instance_id: instance.id.clone(),
        documents,
        highlights,
        widgets: config
            .schemes
            .iter()
            .map(|s| WidgetDescriptor::from_scheme(s, Some(instance)))
            .collect(),
        instructions,
        progress: ProgressHeader {
            progress,
            codebook_url: config.instructions.as_ref().and_then(|i| i.url.clone()),
        },
        layout: layout.clone(),
        prefill: Vec::new(),
        display_meta: instance.display_meta.clone(),
    }
}

/// Minimal HTML for no-script clients, generated from the same models.
pub mod html {
    use std::fmt::Write as _;

    use super::*;
    use crate::template::BindingTarget;
    use crate::tokenize::char_slice;

    pub fn escape(s: &str) -> String {
        let mut out = String::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '&' => out.push_str("&amp;"),
                '<' => out.push_str("&lt;"),
                '>' => out.push_str("&gt;"),
                '"' => out.push_str("&quot;"),
                '\'' => out.push_str("&#39;"),
                _ => out.push(c),
            }
        }
        out
    }

    pub fn page(title: &str, body: &str) -> String {
        format!(
            "<!doctype html>\n<html lang=\"en\"><head><meta charset=\"utf-8\"><title>{}</title>\
             <style>mark{{background:#ffe08a}}label{{display:block}}</style></head>\n<body>\n{}\n</body></html>\n",
            escape(title),
            body
        )
    }

    fn document_html(doc: &DocumentView, highlights: &[HighlightView]) -> String {
        if doc.kind == DocumentKind::ImageRef {
            return format!("<img src=\"{}\" alt=\"document {}\">", escape(&doc.payload), doc.index);
        }
        let spans: Vec<&HighlightView> = highlights.iter().filter(|h| h.document_index == doc.index).collect();
        let mut cuts: Vec<usize> = spans.iter().flat_map(|h| [h.start, h.end]).collect();
        cuts.push(0);
        cuts.push(doc.payload.chars().count());
        cuts.sort_unstable();
        cuts.dedup();
        let mut out = String::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let text = escape(char_slice(&doc.payload, a, b));
            let groups: Vec<&str> = spans
                .iter()
                .filter(|h| h.start <= a && b <= h.end)
                .map(|h| h.group.as_str())
                .collect();
            if groups.is_empty() {
                out.push_str(&text);
            } else {
                let _ = write!(out, "<mark data-groups=\"{}\">{}</mark>", escape(&groups.join(" ")), text);
            }
        }
        format!("<div class=\"document\">{}</div>", out.replace('\n', "<br>"))
    }

    fn option_label(o: &OptionView) -> String {
        match &o.display {
            OptionDisplay::Text(t) => escape(t),
            OptionDisplay::Media { image } => format!("<img src=\"{}\" alt=\"{}\">", escape(image), escape(&o.value)),
        }
    }

    fn prefilled<'a>(prefill: &'a [RawLabel], scheme: &str) -> Option<&'a serde_json::Value> {
        prefill.iter().find(|r| r.scheme == scheme).map(|r| &r.value)
    }

    pub fn widget_html(w: &WidgetDescriptor, prefill: &[RawLabel]) -> String {
        let name = escape(&w.scheme);
        let current = prefilled(prefill, &w.scheme);
        let mut out = format!("<fieldset class=\"scheme\"><legend>{}</legend>", escape(w.description.as_deref().unwrap_or(&w.scheme)));
        let attrs = |o: &OptionView| {
            let mut a = String::new();
            if let Some(k) = &o.key {
                let _ = write!(a, " accesskey=\"{}\"", escape(k));
            }
            if let Some(t) = &o.tooltip {
                let _ = write!(a, " title=\"{}\"", escape(t));
            }
            a
        };
        match w.kind {
            SchemeKind::Radio | SchemeKind::Multiselect => {
                let ty = if w.kind == SchemeKind::Radio { "radio" } else { "checkbox" };
                for o in &w.options {
                    let checked = match current {
                        Some(serde_json::Value::String(s)) => s == &o.value,
                        Some(serde_json::Value::Array(a)) => a.iter().any(|v| v.as_str() == Some(&o.value)),
                        _ => false,
                    };
                    let _ = write!(
                        out,
                        "<label{}><input type=\"{ty}\" name=\"{name}\" value=\"{}\"{}> {}</label>",
                        attrs(o),
                        escape(&o.value),
                        if checked { " checked" } else { "" },
                        option_label(o)
                    );
                }
            }
            SchemeKind::Dropdown => {
                let _ = write!(out, "<select name=\"{name}\"><option value=\"\"></option>");
                for o in &w.options {
                    let sel = current.and_then(|v| v.as_str()) == Some(o.value.as_str());
                    let _ = write!(
                        out,
                        "<option value=\"{}\"{}>{}</option>",
                        escape(&o.value),
                        if sel { " selected" } else { "" },
                        escape(match &o.display {
                            OptionDisplay::Text(t) => t,
                            OptionDisplay::Media { .. } => &o.value,
                        })
                    );
                }
                out.push_str("</select>");
            }
            SchemeKind::Likert => {
                let n = w.likert_size.unwrap_or(0);
                for i in 1..=n {
                    let checked = current.and_then(|v| v.as_u64()) == Some(i as u64);
                    let _ = write!(
                        out,
                        "<label><input type=\"radio\" name=\"{name}\" value=\"{i}\"{}> {i}</label>",
                        if checked { " checked" } else { "" }
                    );
                }
            }
            SchemeKind::BestWorst => {
                for role in ["best", "worst"] {
                    let _ = write!(out, "<div>{role}: ");
                    for c in &w.choices {
                        let checked = current.and_then(|v| v.get(role)).and_then(|v| v.as_str()) == Some(c.as_str());
                        let _ = write!(
                            out,
                            "<label><input type=\"radio\" name=\"{name}.{role}\" value=\"{c}\"{}> {c}</label>",
                            if checked { " checked" } else { "" },
                            c = escape(c)
                        );
                    }
                    out.push_str("</div>");
                }
            }
            SchemeKind::FreeText => {
                let v = current.and_then(|v| v.as_str()).unwrap_or("");
                let _ = write!(out, "<textarea name=\"{name}\">{}</textarea>", escape(v));
            }
            SchemeKind::Number => {
                let v = current.map(|v| v.to_string()).unwrap_or_default();
                let _ = write!(out, "<input type=\"number\" step=\"any\" name=\"{name}\" value=\"{}\">", escape(&v));
            }
            SchemeKind::Span => {
                let _ = write!(
                    out,
                    "<p>Spans as <code>document:start:end:label</code>, one per line. Labels: {}</p>\
                     <textarea name=\"{name}\"></textarea>",
                    escape(&w.span_labels.join(", "))
                );
            }
        }
        out.push_str("</fieldset>");
        out
    }

    fn hidden(name: &str, value: &str) -> String {
        format!("<input type=\"hidden\" name=\"{}\" value=\"{}\">", escape(name), escape(value))
    }

    /// The instance page with a form posting back to `/submit`.
    pub fn instance_page(model: &RenderModel, position: usize, revision: u32) -> String {
        let mut body = String::new();
        let p = &model.progress;
        let _ = write!(
            body,
            "<header><p>{} of {} done, {} remaining</p>{}</header>",
            p.progress.completed,
            p.progress.total,
            p.progress.remaining,
            p.codebook_url
                .as_ref()
                .map(|u| format!("<a href=\"{}\">codebook</a>", escape(u)))
                .unwrap_or_default()
        );
        if let Some(i) = &model.instructions {
            if let Some(h) = &i.html {
                let _ = write!(body, "<details open><summary>Instructions</summary>{h}</details>");
            }
        }
        body.push_str("<form method=\"post\" action=\"/submit\">");
        body.push_str(&hidden("item_id", &model.instance_id));
        body.push_str(&hidden("position", &position.to_string()));
        body.push_str(&hidden("revision", &revision.to_string()));
        match &model.layout {
            Layout::TextAboveLabels => {
                for d in &model.documents {
                    body.push_str(&document_html(d, &model.highlights));
                }
                for w in &model.widgets {
                    body.push_str(&widget_html(w, &model.prefill));
                }
            }
            Layout::Template { blocks } => {
                for b in blocks {
                    match b {
                        LayoutBlock::Literal { html } => body.push_str(html),
                        LayoutBlock::Slot { binding } => body.push_str(&slot_html(model, binding)),
                    }
                }
            }
        }
        body.push_str("<button type=\"submit\" accesskey=\"s\">Submit</button></form>");
        body.push_str("<form method=\"post\" action=\"/navigate\"><button name=\"direction\" value=\"back\">Back</button>\
                       <button name=\"direction\" value=\"forward\">Forward</button></form>");
        page(&model.task_name, &body)
    }

    fn slot_html(model: &RenderModel, binding: &BindingTarget) -> String {
        match binding {
            BindingTarget::Id => escape(&model.instance_id),
            BindingTarget::TextField(name) => model
                .documents
                .iter()
                .find(|d| d.key.as_deref() == Some(name.as_str()) || (d.key.is_none() && d.index == 0))
                .map(|d| document_html(d, &model.highlights))
                .unwrap_or_default(),
            BindingTarget::Scheme(name) => model
                .widgets
                .iter()
                .find(|w| &w.scheme == name)
                .map(|w| widget_html(w, &model.prefill))
                .unwrap_or_default(),
            BindingTarget::Meta(field) => model
                .display_meta
                .get(field)
                .map(|v| escape(&v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string())))
                .unwrap_or_default(),
            BindingTarget::Instructions => model
                .instructions
                .as_ref()
                .and_then(|i| i.html.clone())
                .unwrap_or_default(),
            BindingTarget::Progress => format!("{} remaining", model.progress.progress.remaining),
        }
    }

    pub fn survey_page(title: &str, item_id: &str, widgets: &[WidgetDescriptor]) -> String {
        let mut body = format!("<h1>{}</h1><form method=\"post\" action=\"/submit\">", escape(title));
        body.push_str(&hidden("item_id", item_id));
        for w in widgets {
            body.push_str(&widget_html(w, &[]));
        }
        body.push_str("<button type=\"submit\">Continue</button></form>");
        page(title, &body)
    }

    pub fn message_page(title: &str, message: &str) -> String {
        page(title, &format!("<h1>{}</h1><p>{}</p>", escape(title), escape(message)))
    }

    pub fn login_page(task_name: &str, email: bool) -> String {
        let mut body = format!("<h1>{}</h1>", escape(task_name));
        if email {
            body.push_str(
                "<form method=\"post\" action=\"/login\"><label>Email <input name=\"email\" type=\"email\" autocomplete=\"username\"></label>\
                 <label>Password <input name=\"password\" type=\"password\" autocomplete=\"current-password\"></label>\
                 <button type=\"submit\">Log in</button></form>\
                 <form method=\"post\" action=\"/signup\"><label>Email <input name=\"email\" type=\"email\"></label>\
                 <label>Password <input name=\"password\" type=\"password\" autocomplete=\"new-password\"></label>\
                 <button type=\"submit\">Sign up</button></form>",
            );
        } else {
            body.push_str("<p>Open the task link provided by your crowdsourcing platform.</p>");
        }
        page(task_name, &body)
    }
}
