//! Task configuration: the YAML file that drives a deployment.
//!
//! Every struct denies unknown keys so typos fail at load time. Relative paths
//! are resolved against the directory holding the config file.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::data;
use crate::error::{ConfigIssue, Error, Result};
use crate::highlight::KeywordPattern;
use crate::quality::{QualityControlConfig, SurveyPage};
use crate::scheme::{validate_answer, AnnotationScheme, SchemeKind};
use crate::template::{self, TemplateReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TextField {
    One(String),
    Many(Vec<String>),
}

impl TextField {
    pub fn names(&self) -> Vec<&str> {
        match self {
            TextField::One(s) => vec![s.as_str()],
            TextField::Many(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

/// Either an external codebook URL or inline HTML (exactly one).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instructions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub html: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    #[default]
    Original,
    Random,
    ActiveLearning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentConfig {
    /// 0 means every annotator labels every instance.
    #[serde(default)]
    pub annotations_per_instance: u32,
    #[serde(default)]
    pub max_instances_per_annotator: Option<u32>,
    #[serde(default)]
    pub ordering: Ordering,
    /// Seed for `random` ordering; combined with the user id.
    #[serde(default)]
    pub seed: u64,
}

impl Default for AssignmentConfig {
    fn default() -> Self {
        Self {
            annotations_per_instance: 0,
            max_instances_per_annotator: None,
            ordering: Ordering::Original,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceMeasure {
    /// Maximum class probability.
    #[default]
    LeastConfidence,
    /// Gap between the two most probable classes.
    Margin,
    /// One minus normalized entropy.
    Entropy,
}

fn default_retrain_every() -> u32 {
    20
}

fn default_min_labels() -> u32 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveLearningConfig {
    #[serde(default = "default_retrain_every")]
    pub retrain_every: u32,
    #[serde(default)]
    pub random_ratio: f64,
    pub target_scheme: String,
    #[serde(default = "default_min_labels")]
    pub min_labels_to_start: u32,
    #[serde(default)]
    pub confidence: ConfidenceMeasure,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HighlightConfig {
    /// Label name to keyword patterns (`word` or `prefix*`).
    pub keyword_groups: IndexMap<String, Vec<String>>,
    #[serde(default)]
    pub decoy_rate: f64,
}

impl HighlightConfig {
    pub fn pattern_count(&self) -> usize {
        self.keyword_groups.values().map(Vec::len).sum()
    }
}

fn default_host() -> String {
    "127.0.0.1".into()
}
fn default_port() -> u16 {
    8000
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("annotation_output")
}
fn default_admin_user() -> String {
    "admin".into()
}
fn default_ttl() -> u64 {
    7 * 24 * 3600
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_host")]
    pub host: String,
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_admin_user")]
    pub admin_user: String,
    /// Admin endpoints are disabled when unset.
    #[serde(default)]
    pub admin_password: Option<String>,
    #[serde(default = "default_ttl")]
    pub session_ttl_secs: u64,
    /// Shown on the completion page, for crowdsourcing platforms.
    #[serde(default)]
    pub completion_code: Option<String>,
    /// Directory of built frontend assets, served under `/static`.
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: default_host(),
            port: default_port(),
            output_dir: default_output_dir(),
            admin_user: default_admin_user(),
            admin_password: None,
            session_ttl_secs: default_ttl(),
            completion_code: None,
            static_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoginMode {
    EmailSignup,
    UrlArgument,
    #[default]
    Both,
}

impl LoginMode {
    pub fn allows_email(self) -> bool {
        matches!(self, LoginMode::EmailSignup | LoginMode::Both)
    }
    pub fn allows_url(self) -> bool {
        matches!(self, LoginMode::UrlArgument | LoginMode::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub task_name: String,
    pub data_files: Vec<PathBuf>,
    pub id_field: String,
    pub text_field: TextField,
    /// Text fields whose values are image URLs or paths rather than text.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub image_fields: Vec<String>,
    pub schemes: Vec<AnnotationScheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instructions: Option<Instructions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_override: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub highlight_config: Option<HighlightConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_learning: Option<ActiveLearningConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_control: Option<QualityControlConfig>,
    #[serde(default)]
    pub assignment: AssignmentConfig,
    #[serde(default)]
    pub server: ServerConfig,
    #[serde(default)]
    pub login_mode: LoginMode,
    /// Directory relative paths resolve against. Not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl TaskConfig {
    /// A bare config with defaults everywhere; callers fill in schemes.
    pub fn minimal(task_name: &str, data_files: Vec<PathBuf>, id_field: &str, text_field: TextField) -> Self {
        Self {
            task_name: task_name.into(),
            data_files,
            id_field: id_field.into(),
            text_field,
            image_fields: Vec::new(),
            schemes: Vec::new(),
            instructions: None,
            template_override: None,
            highlight_config: None,
            active_learning: None,
            quality_control: None,
            assignment: AssignmentConfig::default(),
            server: ServerConfig::default(),
            login_mode: LoginMode::default(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.server.output_dir)
    }

    pub fn scheme(&self, name: &str) -> Option<&AnnotationScheme> {
        self.schemes.iter().find(|s| s.name == name)
    }

    pub fn label_count(&self) -> usize {
        self.schemes.iter().map(|s| s.options.len()).sum()
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("task config serializes")
    }

    /// Parses YAML text without touching the filesystem.
    pub fn from_yaml_str(text: &str, path: &Path) -> Result<Self> {
        serde_yaml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.location().map(|l| l.line()),
            message: e.to_string(),
        })
    }

    /// Reads the custom layout template, if configured.
    pub fn template_text(&self) -> Result<Option<String>> {
        match &self.template_override {
            None => Ok(None),
            Some(p) => data::read_utf8(&self.resolve(p)).map(Some),
        }
    }

    /// Structural and cross-reference checks that need no filesystem access.
    /// Issues come back in a fixed order: top-level fields, schemes, then the
    /// optional blocks in declaration order.
    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let mut bad = |field: String, msg: String| issues.push(ConfigIssue::new(field, msg));

        if self.task_name.trim().is_empty() {
            bad("task_name".into(), "task_name must be non-empty".into());
        }
        if self.id_field.trim().is_empty() {
            bad("id_field".into(), "id_field must be non-empty".into());
        }
        if self.data_files.is_empty() {
            bad("data_files".into(), "data_files must be non-empty".into());
        }
        for (i, f) in self.data_files.iter().enumerate() {
            if !data::is_supported_data_file(f) {
                bad(format!("data_files[{i}]"), format!("{} has no .csv/.tsv/.jsonl extension", f.display()));
            }
        }
        let text_names = self.text_field.names();
        if text_names.is_empty() {
            bad("text_field".into(), "text_field must name at least one field".into());
        }
        let mut seen = HashSet::new();
        for name in &text_names {
            if name.trim().is_empty() {
                bad("text_field".into(), "text field names must be non-empty".into());
            } else if *name == self.id_field {
                bad("text_field".into(), format!("text field {name:?} is also the id field"));
            } else if !seen.insert(*name) {
                bad("text_field".into(), format!("text field {name:?} listed twice"));
            }
        }
        for f in &self.image_fields {
            if !text_names.contains(&f.as_str()) {
                bad("image_fields".into(), format!("image field {f:?} is not a text field"));
            }
        }
        if let Some(ins) = &self.instructions {
            if ins.url.is_some() == ins.html.is_some() {
                bad("instructions".into(), "give exactly one of url or html".into());
            }
        }

        if self.schemes.is_empty() {
            bad("schemes".into(), "schemes must be non-empty".into());
        }
        let mut names = HashSet::new();
        let mut keys: HashMap<String, String> = HashMap::new();
        for (i, s) in self.schemes.iter().enumerate() {
            let at = format!("schemes[{i}]");
            for (field, msg) in s.structural_issues() {
                bad(format!("{at}.{field}"), msg);
            }
            if !names.insert(s.name.as_str()) {
                bad(format!("{at}.name"), format!("duplicate scheme name {:?}", s.name));
            }
            if text_names.contains(&s.name.as_str()) || s.name == self.id_field {
                bad(format!("{at}.name"), format!("scheme name {:?} collides with a data field", s.name));
            }
            for (j, o) in s.options.iter().enumerate() {
                if let Some(k) = &o.key {
                    let norm = k.to_lowercase();
                    let here = format!("{}/{}", s.name, o.value);
                    if let Some(prev) = keys.get(&norm) {
                        bad(format!("{at}.options[{j}].key"), format!("keybinding {k:?} already used by {prev}"));
                    } else {
                        keys.insert(norm, here);
                    }
                }
            }
        }

        if let Some(h) = &self.highlight_config {
            if !(0.0..1.0).contains(&h.decoy_rate) {
                bad("highlight_config.decoy_rate".into(), "decoy_rate must be in [0, 1)".into());
            }
            for (group, patterns) in &h.keyword_groups {
                let at = format!("highlight_config.keyword_groups.{group}");
                if !self.schemes.iter().any(|s| s.option_values().any(|v| v == group)) {
                    bad(at.clone(), format!("group {group:?} does not name a label of any scheme"));
                }
                if patterns.is_empty() {
                    bad(at.clone(), "keyword list must be non-empty".into());
                }
                for p in patterns {
                    if let Err(e) = KeywordPattern::parse(p) {
                        bad(at.clone(), e);
                    }
                }
            }
        }

        if let Some(al) = &self.active_learning {
            match self.scheme(&al.target_scheme) {
                None => bad(
                    "active_learning.target_scheme".into(),
                    format!("unknown scheme {:?}", al.target_scheme),
                ),
                Some(s) if !s.kind.is_categorical() => bad(
                    "active_learning.target_scheme".into(),
                    "target scheme must be radio or multiselect".into(),
                ),
                _ => {}
            }
            if al.retrain_every == 0 {
                bad("active_learning.retrain_every".into(), "must be positive".into());
            }
            if al.min_labels_to_start == 0 {
                bad("active_learning.min_labels_to_start".into(), "must be positive".into());
            }
            if !(0.0..=1.0).contains(&al.random_ratio) {
                bad("active_learning.random_ratio".into(), "random_ratio must be in [0, 1]".into());
            }
        }
        if self.assignment.ordering == Ordering::ActiveLearning && self.active_learning.is_none() {
            bad(
                "assignment.ordering".into(),
                "ordering active_learning requires an active_learning block".into(),
            );
        }
        if self.assignment.max_instances_per_annotator == Some(0) {
            bad("assignment.max_instances_per_annotator".into(), "must be positive".into());
        }

        if let Some(qc) = &self.quality_control {
            issues.extend(qc.validate(self));
        }
        issues
    }
}

/// Validates survey pages on their own (question kinds, names).
pub(crate) fn survey_page_issues(at: &str, page: &SurveyPage) -> Vec<ConfigIssue> {
    let mut issues = Vec::new();
    let questions = page.effective_questions();
    if questions.is_empty() {
        issues.push(ConfigIssue::new(at, "survey page has no questions"));
    }
    let mut names = HashSet::new();
    for (i, q) in questions.iter().enumerate() {
        let qa = format!("{at}.questions[{i}]");
        if !matches!(
            q.kind,
            SchemeKind::Radio | SchemeKind::Likert | SchemeKind::FreeText | SchemeKind::Number | SchemeKind::Dropdown
        ) {
            issues.push(ConfigIssue::new(&qa, format!("{} is not allowed in surveys", q.kind.as_str())));
        }
        for (field, msg) in q.structural_issues() {
            issues.push(ConfigIssue::new(format!("{qa}.{field}"), msg));
        }
        if !names.insert(q.name.as_str()) {
            issues.push(ConfigIssue::new(&qa, format!("duplicate question name {:?}", q.name)));
        }
    }
    issues
}

/// Checks that a gold answer map validates against the task's schemes.
pub(crate) fn gold_answer_issues(
    at: &str,
    config: &TaskConfig,
    record: &data::Record,
    answers: &IndexMap<String, serde_json::Value>,
) -> Vec<ConfigIssue> {
    let mut issues = Vec::new();
    let instance = match data::record_to_instance(config, record) {
        Ok(i) => Some(i),
        Err(m) => {
            issues.push(ConfigIssue::new(format!("{at}.instance"), m));
            None
        }
    };
    if answers.is_empty() {
        issues.push(ConfigIssue::new(format!("{at}.answers"), "gold item needs at least one answer"));
    }
    for (scheme, value) in answers {
        match config.scheme(scheme) {
            None => issues.push(ConfigIssue::new(format!("{at}.answers"), format!("unknown scheme {scheme:?}"))),
            Some(s) => {
                if let Err(m) = validate_answer(s, value, instance.as_ref()) {
                    issues.push(ConfigIssue::new(format!("{at}.answers.{scheme}"), m));
                }
            }
        }
    }
    issues
}

/// Loads, validates and cross-checks a task config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<TaskConfig> {
    let path = path.as_ref();
    let text = data::read_utf8(path)?;
    let mut config = TaskConfig::from_yaml_str(&text, path)?;
    config.base_dir = path
        .parent()
        .map(|p| if p.as_os_str().is_empty() { Path::new(".") } else { p })
        .unwrap_or(Path::new("."))
        .to_path_buf();
    check_loaded(&config)?;
    Ok(config)
}

/// The filesystem-dependent half of loading: referenced files and the template.
pub fn check_loaded(config: &TaskConfig) -> Result<Option<TemplateReport>> {
    let issues = config.validate();
    if !issues.is_empty() {
        return Err(Error::Invalid(issues));
    }
    for f in &config.data_files {
        let p = config.resolve(f);
        if !p.is_file() {
            return Err(Error::MissingFile(p));
        }
    }
    match config.template_text()? {
        None => Ok(None),
        Some(text) => {
            let report = template::validate_template(&text, config)?;
            // A custom layout has to place every scheme or annotators never see it.
            if !report.warnings.is_empty() {
                return Err(Error::Invalid(
                    report
                        .warnings
                        .iter()
                        .map(|w| ConfigIssue::new("template_override", w.clone()))
                        .collect(),
                ));
            }
            Ok(Some(report))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
task_name: demo
data_files: [data.jsonl]
id_field: id
text_field: text
schemes:
  - name: sentiment
    kind: radio
    options:
      - {value: pos, key: "1", tooltip: "positive"}
      - {value: neg, key: "2"}
"#;

    fn write(dir: &Path, yaml: &str) -> PathBuf {
        std::fs::write(dir.join("data.jsonl"), "{\"id\":\"1\",\"text\":\"hi\"}\n").unwrap();
        let p = dir.join("task.yaml");
        std::fs::write(&p, yaml).unwrap();
        p
    }

    #[test]
    fn loads_minimal_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = load_config(write(dir.path(), BASE)).unwrap();
        assert_eq!(cfg.schemes.len(), 1);
        assert_eq!(cfg.schemes[0].options.len(), 2);
        assert_eq!(cfg.login_mode, LoginMode::Both);
    }

    #[test]
    fn empty_schemes_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let yaml = "task_name: x\ndata_files: [data.jsonl]\nid_field: id\ntext_field: text\nschemes: []\n";
        let err = load_config(write(dir.path(), yaml)).unwrap_err();
        let Error::Invalid(issues) = err else { panic!("{err}") };
        assert_eq!(issues[0].message, "schemes must be non-empty");
    }

    #[test]
    fn active_learning_ordering_needs_block() {
        let dir = tempfile::tempdir().unwrap();
        let yaml = format!("{BASE}assignment:\n  ordering: active_learning\n");
        let err = load_config(write(dir.path(), &yaml)).unwrap_err();
        assert!(err.to_string().contains("assignment.ordering"), "{err}");
    }

    #[test]
    fn unknown_top_level_key_is_parse_error_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let yaml = format!("{BASE}colour: red\n");
        let err = load_config(write(dir.path(), &yaml)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: Some(_), .. }), "{err}");
    }

    #[test]
    fn missing_data_file_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), BASE);
        std::fs::remove_file(dir.path().join("data.jsonl")).unwrap();
        let err = load_config(p).unwrap_err();
        assert!(matches!(err, Error::MissingFile(ref f) if f.ends_with("data.jsonl")), "{err}");
    }

    #[test]
    fn duplicate_keybinding_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let yaml = BASE.replace("key: \"2\"", "key: \"1\"");
        let err = load_config(write(dir.path(), &yaml)).unwrap_err();
        assert!(err.to_string().contains("already used"), "{err}");
    }

    #[test]
    fn regex_keywords_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let yaml = format!("{BASE}highlight_config:\n  keyword_groups:\n    pos: [\"go+d\"]\n");
        assert!(load_config(write(dir.path(), &yaml)).is_err());
        let yaml = format!("{BASE}highlight_config:\n  keyword_groups:\n    pos: [\"good*\"]\n  decoy_rate: 0.1\n");
        assert!(load_config(write(dir.path(), &yaml)).is_ok());
    }

    #[test]
    fn validation_is_deterministic() {
        let mut cfg = TaskConfig::minimal("", vec![], "", TextField::One("".into()));
        cfg.assignment.ordering = Ordering::ActiveLearning;
        let a = cfg.validate();
        assert!(a.len() >= 4);
        assert_eq!(a, cfg.validate());
    }

    #[test]
    fn template_must_place_every_scheme() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("layout.html"), "<div>{{text}}</div>").unwrap();
        let yaml = format!("{BASE}template_override: layout.html\n");
        let err = load_config(write(dir.path(), &yaml)).unwrap_err();
        assert!(err.to_string().contains("sentiment"), "{err}");
        std::fs::write(dir.path().join("layout.html"), "<div>{{text}}</div>{{sentiment}}").unwrap();
        assert!(load_config(dir.path().join("task.yaml")).is_ok());
    }

    #[test]
    fn yaml_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = load_config(write(dir.path(), BASE)).unwrap();
        let again = TaskConfig::from_yaml_str(&cfg.to_yaml(), Path::new("x")).unwrap();
        assert_eq!(TaskConfig { base_dir: cfg.base_dir.clone(), ..again }, cfg);
    }
}
