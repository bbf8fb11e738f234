//! Question-by-question task setup for `annobench init`.
//!
//! Prompts come in a fixed order so an answers file (one answer per line) can
//! replay a session. Interactive input re-asks after an invalid answer;
//! scripted input fails instead.

use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use indexmap::IndexMap;

use crate::config::{ActiveLearningConfig, ConfidenceMeasure, HighlightConfig, Instructions, Ordering, TaskConfig, TextField};
use crate::error::{Error, Result};
use crate::highlight::KeywordPattern;
use crate::scheme::{AnnotationScheme, LabelOption, SchemeKind};

pub trait PromptIo {
    /// Shows `prompt` and returns one answer line, trimmed.
    fn ask(&mut self, prompt: &str) -> Result<String>;
    /// Reports a rejected answer. `Err` aborts the wizard.
    fn reject(&mut self, prompt: &str, message: &str) -> Result<()>;
}

/// Replays answers from a list, e.g. the lines of an answers file.
pub struct ScriptedIo {
    answers: VecDeque<String>,
    asked: usize,
}

impl ScriptedIo {
    pub fn new<I, S>(answers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            answers: answers.into_iter().map(Into::into).collect(),
            asked: 0,
        }
    }

    pub fn from_text(text: &str) -> Self {
        Self::new(text.lines())
    }

    pub fn remaining(&self) -> usize {
        self.answers.len()
    }
}

impl PromptIo for ScriptedIo {
    fn ask(&mut self, prompt: &str) -> Result<String> {
        self.asked += 1;
        self.answers
            .pop_front()
            .map(|a| a.trim().to_string())
            .ok_or_else(|| Error::Wizard(format!("answers ran out at prompt {} ({prompt})", self.asked)))
    }

    fn reject(&mut self, prompt: &str, message: &str) -> Result<()> {
        Err(Error::Wizard(format!("answer {} to {prompt:?} rejected: {message}", self.asked)))
    }
}

/// Reads from any `BufRead`, writes prompts to any `Write`.
pub struct InteractiveIo<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> InteractiveIo<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self { input, output }
    }
}

impl<R: BufRead, W: Write> PromptIo for InteractiveIo<R, W> {
    fn ask(&mut self, prompt: &str) -> Result<String> {
        write!(self.output, "{prompt}: ").map_err(|e| Error::io("<stdout>", e))?;
        self.output.flush().map_err(|e| Error::io("<stdout>", e))?;
        let mut line = String::new();
        let n = self
            .input
            .read_line(&mut line)
            .map_err(|e| Error::io("<stdin>", e))?;
        if n == 0 {
            return Err(Error::Wizard("input closed".into()));
        }
        Ok(line.trim().to_string())
    }

    fn reject(&mut self, _prompt: &str, message: &str) -> Result<()> {
        writeln!(self.output, "  {message}").map_err(|e| Error::io("<stdout>", e))
    }
}

fn ask_with<T>(
    io: &mut dyn PromptIo,
    prompt: &str,
    mut parse: impl FnMut(&str) -> std::result::Result<T, String>,
) -> Result<T> {
    loop {
        let answer = io.ask(prompt)?;
        match parse(&answer) {
            Ok(v) => return Ok(v),
            Err(m) => io.reject(prompt, &m)?,
        }
    }
}

fn non_empty(s: &str) -> std::result::Result<String, String> {
    if s.is_empty() {
        Err("an answer is required".into())
    } else {
        Ok(s.to_string())
    }
}

fn optional(s: &str) -> std::result::Result<Option<String>, String> {
    Ok((!s.is_empty()).then(|| s.to_string()))
}

fn yes_no(s: &str) -> std::result::Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "y" | "yes" => Ok(true),
        "n" | "no" => Ok(false),
        _ => Err("answer y or n".into()),
    }
}

fn list(s: &str) -> std::result::Result<Vec<String>, String> {
    let items: Vec<String> = s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect();
    if items.is_empty() {
        Err("give at least one comma-separated value".into())
    } else {
        Ok(items)
    }
}

fn number<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("{s:?} is not a valid number"))
}

fn kind(s: &str) -> std::result::Result<SchemeKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        "one of multiselect, radio, best_worst, likert, free_text, span, number, dropdown".to_string()
    })
}

fn ask_scheme(io: &mut dyn PromptIo, index: usize) -> Result<AnnotationScheme> {
    let n = index + 1;
    let name = ask_with(io, &format!("Scheme {n} name"), non_empty)?;
    let kind = ask_with(io, &format!("Scheme {name:?} kind"), kind)?;
    let mut scheme = AnnotationScheme::new(name.clone(), kind);
    scheme.description = ask_with(io, &format!("Scheme {name:?} question shown to annotators (blank for none)"), optional)?;
    match kind {
        SchemeKind::Multiselect | SchemeKind::Radio | SchemeKind::Dropdown => {
            let count: usize = ask_with(io, &format!("Number of options for {name:?}"), |s| {
                number::<usize>(s).and_then(|c| if c == 0 { Err("need at least one option".into()) } else { Ok(c) })
            })?;
            for i in 1..=count {
                let value = ask_with(io, &format!("Option {i} value"), non_empty)?;
                let key = ask_with(io, &format!("Option {value:?} key (blank for none)"), |s| {
                    if s.chars().count() > 1 {
                        Err("a key is a single character".into())
                    } else {
                        optional(s)
                    }
                })?;
                let tooltip = ask_with(io, &format!("Option {value:?} tooltip (blank for none)"), optional)?;
                scheme.options.push(LabelOption {
                    value,
                    display: None,
                    key,
                    tooltip,
                });
            }
        }
        SchemeKind::Likert => {
            scheme.likert_size = Some(ask_with(io, &format!("Scale size for {name:?}"), |s| {
                number::<u32>(s).and_then(|n| if n < 2 { Err("at least 2".into()) } else { Ok(n) })
            })?);
        }
        SchemeKind::Span => {
            scheme.span_labels = ask_with(io, &format!("Span labels for {name:?}, comma-separated"), list)?;
        }
        SchemeKind::BestWorst | SchemeKind::FreeText | SchemeKind::Number => {}
    }
    scheme.required = ask_with(io, &format!("Is {name:?} required? [y/n]"), yes_no)?;
    Ok(scheme)
}

/// Runs the full question sequence and returns a validated config.
pub fn run_wizard(io: &mut dyn PromptIo) -> Result<TaskConfig> {
    let task_name = ask_with(io, "Task name", non_empty)?;
    let data_files = ask_with(io, "Data files (.csv/.tsv/.jsonl), comma-separated", list)?;
    let id_field = ask_with(io, "Id field", non_empty)?;
    let text_fields = ask_with(io, "Text field(s), comma-separated", list)?;
    let text_field = if text_fields.len() == 1 {
        TextField::One(text_fields[0].clone())
    } else {
        TextField::Many(text_fields)
    };
    let mut config = TaskConfig::minimal(&task_name, data_files.into_iter().map(PathBuf::from).collect(), &id_field, text_field);

    let count: usize = ask_with(io, "Number of annotation schemes", |s| {
        number::<usize>(s).and_then(|c| if c == 0 { Err("need at least one scheme".into()) } else { Ok(c) })
    })?;
    for i in 0..count {
        config.schemes.push(ask_scheme(io, i)?);
    }

    if ask_with(io, "Add inline HTML instructions? [y/n]", yes_no)? {
        let html = ask_with(io, "Instructions HTML", non_empty)?;
        config.instructions = Some(Instructions { url: None, html: Some(html) });
    } else if ask_with(io, "Link an external codebook? [y/n]", yes_no)? {
        let url = ask_with(io, "Codebook URL", non_empty)?;
        config.instructions = Some(Instructions { url: Some(url), html: None });
    }

    let labels: Vec<String> = config
        .schemes
        .iter()
        .filter(|s| matches!(s.kind, SchemeKind::Multiselect | SchemeKind::Radio | SchemeKind::Dropdown))
        .flat_map(|s| s.options.iter().map(|o| o.value.clone()))
        .collect();
    if !labels.is_empty() && ask_with(io, "Highlight keywords? [y/n]", yes_no)? {
        let decoy_rate = ask_with(io, "Decoy rate in [0, 1)", |s| {
            number::<f64>(s).and_then(|r| if (0.0..1.0).contains(&r) { Ok(r) } else { Err("must be in [0, 1)".into()) })
        })?;
        let mut groups = IndexMap::new();
        for label in labels {
            let patterns = ask_with(io, &format!("Keywords for {label:?}, space-separated (blank to skip)"), |s| {
                let ps: Vec<String> = s.split_whitespace().map(str::to_string).collect();
                for p in &ps {
                    KeywordPattern::parse(p)?;
                }
                Ok(ps)
            })?;
            if !patterns.is_empty() {
                groups.insert(label, patterns);
            }
        }
        config.highlight_config = Some(HighlightConfig {
            keyword_groups: groups,
            decoy_rate,
        });
    }

    let categorical: Vec<String> = config
        .schemes
        .iter()
        .filter(|s| matches!(s.kind, SchemeKind::Multiselect | SchemeKind::Radio))
        .map(|s| s.name.clone())
        .collect();
    if !categorical.is_empty() && ask_with(io, "Enable active learning? [y/n]", yes_no)? {
        let target_scheme = ask_with(io, &format!("Target scheme ({})", categorical.join(", ")), |s| {
            if categorical.iter().any(|c| c == s) {
                Ok(s.to_string())
            } else {
                Err(format!("choose one of {}", categorical.join(", ")))
            }
        })?;
        let positive = |s: &str| number::<u32>(s).and_then(|n| if n == 0 { Err("must be positive".into()) } else { Ok(n) });
        let retrain_every = ask_with(io, "Retrain every N annotations", positive)?;
        let min_labels_to_start = ask_with(io, "Minimum labels before the first model", positive)?;
        let random_ratio = ask_with(io, "Share of randomly placed items in [0, 1]", |s| {
            number::<f64>(s).and_then(|r| if (0.0..=1.0).contains(&r) { Ok(r) } else { Err("must be in [0, 1]".into()) })
        })?;
        config.active_learning = Some(ActiveLearningConfig {
            retrain_every,
            random_ratio,
            target_scheme,
            min_labels_to_start,
            confidence: ConfidenceMeasure::default(),
            seed: 0,
        });
        config.assignment.ordering = Ordering::ActiveLearning;
    }

    config.server.output_dir = PathBuf::from(ask_with(io, "Output directory", non_empty)?);

    let issues = config.validate();
    if !issues.is_empty() {
        return Err(Error::Invalid(issues));
    }
    Ok(config)
}

pub fn to_yaml(config: &TaskConfig) -> String {
    serde_yaml::to_string(config).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;

    #[test]
    fn reproduces_short_doc_template() {
        let t = gallery::template("task2_short_doc").unwrap();
        let mut io = ScriptedIo::from_text(t.file("wizard_answers.txt").unwrap());
        let mut built = run_wizard(&mut io).unwrap();
        assert_eq!(io.remaining(), 0);
        let shipped = TaskConfig::from_yaml_str(t.config_yaml(), "config.yaml".as_ref()).unwrap();
        // base_dir is not part of the file.
        built.base_dir = shipped.base_dir.clone();
        assert_eq!(built, shipped);
        let reparsed = TaskConfig::from_yaml_str(&to_yaml(&built), "config.yaml".as_ref()).unwrap();
        assert_eq!(reparsed, shipped);
    }

    #[test]
    fn scripted_bad_answer_fails() {
        let mut io = ScriptedIo::new(["t", "d.jsonl", "id", "text", "zero"]);
        let err = run_wizard(&mut io).unwrap_err();
        assert!(matches!(err, Error::Wizard(ref m) if m.contains("zero")), "{err}");
    }

    #[test]
    fn interactive_reasks() {
        let input = "t\nd.csv\nid\ntext\n1\nlabel\nradio\n\n0\n2\nyes\n\n\nmaybe\n\n\nn\nn\nn\nn\nn\nout\n";
        let mut out = Vec::new();
        let mut io = InteractiveIo::new(input.as_bytes(), &mut out);
        let config = run_wizard(&mut io).unwrap();
        let shown = String::from_utf8(out).unwrap();
        assert!(shown.contains("need at least one option"));
        assert_eq!(config.schemes[0].options.len(), 2);
        assert_eq!(config.server.output_dir, PathBuf::from("out"));
    }
}
