//! Prestudy qualification, attention tests, survey pages and annotator status.

use std::collections::HashSet;

use indexmap::IndexMap;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{gold_answer_issues, survey_page_issues, TaskConfig};
use crate::data::{record_to_instance, Instance, Record};
use crate::error::ConfigIssue;
use crate::scheme::{validate_answer, AnnotationScheme, Answer, LabelOption, SchemeKind, ValidatedLabels};

/// A gold-labelled item: raw instance fields plus the expected answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldItem {
    pub instance: Record,
    pub answers: IndexMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrestudyConfig {
    pub test_items: Vec<GoldItem>,
    pub pass_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnFail {
    #[default]
    Flag,
    Block,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionConfig {
    pub test_items: Vec<GoldItem>,
    pub insertion_rate: f64,
    pub fail_threshold: u32,
    #[serde(default)]
    pub on_fail: OnFail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurveyTemplate {
    Consent,
    Demographics,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyPage {
    pub title: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub questions: Vec<AnnotationScheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<SurveyTemplate>,
}

/// Name of the consent question in the built-in consent page.
pub const CONSENT_QUESTION: &str = "consent";
pub const CONSENT_DECLINE: &str = "decline";

fn radio(name: &str, desc: &str, options: &[&str], required: bool) -> AnnotationScheme {
    let mut s = AnnotationScheme::new(name, SchemeKind::Radio);
    s.description = Some(desc.into());
    s.options = options.iter().map(|o| LabelOption::new(*o)).collect();
    s.required = required;
    s
}

impl SurveyTemplate {
    pub fn questions(self) -> Vec<AnnotationScheme> {
        match self {
            SurveyTemplate::Consent => vec![radio(
                CONSENT_QUESTION,
                "I have read the study information and agree to take part.",
                &["agree", CONSENT_DECLINE],
                true,
            )],
            SurveyTemplate::Demographics => {
                let mut age = AnnotationScheme::new("age", SchemeKind::Number);
                age.description = Some("Age in years".into());
                let mut gender = AnnotationScheme::new("gender", SchemeKind::Dropdown);
                gender.description = Some("Gender".into());
                gender.options = ["woman", "man", "non-binary", "self-describe", "prefer not to say"]
                    .into_iter()
                    .map(LabelOption::new)
                    .collect();
                let mut education = AnnotationScheme::new("education", SchemeKind::Dropdown);
                education.description = Some("Highest completed education".into());
                education.options = [
                    "less than high school",
                    "high school",
                    "some college",
                    "bachelor's degree",
                    "graduate degree",
                    "prefer not to say",
                ]
                .into_iter()
                .map(LabelOption::new)
                .collect();
                let mut language = AnnotationScheme::new("native_language", SchemeKind::FreeText);
                language.description = Some("Native language(s)".into());
                vec![age, gender, education, language]
            }
        }
    }
}

impl SurveyPage {
    /// Template questions first, then any custom questions.
    pub fn effective_questions(&self) -> Vec<AnnotationScheme> {
        let mut qs = self.template.map(SurveyTemplate::questions).unwrap_or_default();
        qs.extend(self.questions.iter().cloned());
        qs
    }

    /// True when this page's answers refuse consent.
    pub fn declines_consent(&self, answers: &ValidatedLabels) -> bool {
        self.template == Some(SurveyTemplate::Consent)
            && matches!(answers.get(CONSENT_QUESTION), Some(Answer::Choice(c)) if c == CONSENT_DECLINE)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityControlConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prestudy: Option<PrestudyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<AttentionConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pre_surveys: Vec<SurveyPage>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub post_surveys: Vec<SurveyPage>,
}

impl QualityControlConfig {
    pub(crate) fn validate(&self, config: &TaskConfig) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let mut gold_ids = HashSet::new();
        let mut check_items = |at: &str, items: &[GoldItem], issues: &mut Vec<ConfigIssue>| {
            if items.is_empty() {
                issues.push(ConfigIssue::new(at, "test_items must be non-empty"));
            }
            for (i, item) in items.iter().enumerate() {
                let here = format!("{at}[{i}]");
                issues.extend(gold_answer_issues(&here, config, &item.instance, &item.answers));
                if let Ok(inst) = record_to_instance(config, &item.instance) {
                    if !gold_ids.insert(inst.id.clone()) {
                        issues.push(ConfigIssue::new(&here, format!("duplicate gold id {:?}", inst.id)));
                    }
                }
            }
        };
        if let Some(p) = &self.prestudy {
            if !(p.pass_threshold > 0.0 && p.pass_threshold <= 1.0) {
                issues.push(ConfigIssue::new(
                    "quality_control.prestudy.pass_threshold",
                    "pass_threshold must be in (0, 1]",
                ));
            }
            check_items("quality_control.prestudy.test_items", &p.test_items, &mut issues);
        }
        if let Some(a) = &self.attention {
            if !(0.0..1.0).contains(&a.insertion_rate) {
                issues.push(ConfigIssue::new(
                    "quality_control.attention.insertion_rate",
                    "insertion_rate must be in [0, 1)",
                ));
            }
            if a.fail_threshold == 0 {
                issues.push(ConfigIssue::new(
                    "quality_control.attention.fail_threshold",
                    "fail_threshold must be at least 1",
                ));
            }
            check_items("quality_control.attention.test_items", &a.test_items, &mut issues);
        }
        for (i, page) in self.pre_surveys.iter().enumerate() {
            issues.extend(survey_page_issues(&format!("quality_control.pre_surveys[{i}]"), page));
        }
        for (i, page) in self.post_surveys.iter().enumerate() {
            issues.extend(survey_page_issues(&format!("quality_control.post_surveys[{i}]"), page));
        }
        issues
    }
}

/// A gold item resolved against the task: instance plus validated answers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gold {
    pub instance: Instance,
    pub answers: ValidatedLabels,
}

/// Resolves gold items. Config validation has already checked them.
pub fn resolve_gold(config: &TaskConfig, items: &[GoldItem]) -> Vec<Gold> {
    items
        .iter()
        .filter_map(|item| {
            let instance = record_to_instance(config, &item.instance).ok()?;
            let answers = config
                .schemes
                .iter()
                .filter_map(|s| {
                    let v = item.answers.get(&s.name)?;
                    let answer = validate_answer(s, v, Some(&instance)).ok()?;
                    Some(crate::scheme::LabelValue {
                        scheme: s.name.clone(),
                        answer,
                    })
                })
                .collect();
            Some(Gold {
                instance,
                answers: ValidatedLabels(answers),
            })
        })
        .collect()
}

/// Exact match on every gold-answered scheme. Multiselect compares as sets.
pub fn gold_matches(gold: &ValidatedLabels, submitted: &ValidatedLabels) -> bool {
    gold.0.iter().all(|g| submitted.get(&g.scheme) == Some(&g.answer))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrestudyState {
    #[default]
    NotRequired,
    Pending,
    Passed,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotatorState {
    #[default]
    Active,
    Flagged,
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QualityStatus {
    pub prestudy_passed: PrestudyState,
    pub attention_failures: u32,
    pub state: AnnotatorState,
    /// Set when consent was declined on a consent page.
    #[serde(default)]
    pub consent_declined: bool,
}

impl QualityStatus {
    pub fn is_blocked(&self) -> bool {
        self.state == AnnotatorState::Blocked
    }
}

/// Fraction of exactly-correct answers and the pass decision.
pub fn prestudy_outcome(correct: usize, total: usize, pass_threshold: f64) -> (f64, bool) {
    if total == 0 {
        return (1.0, true);
    }
    let score = correct as f64 / total as f64;
    (score, score >= pass_threshold)
}

/// Records the prestudy result; failure blocks the annotator.
pub fn run_prestudy(status: &mut QualityStatus, correct: usize, total: usize, pass_threshold: f64) -> f64 {
    let (score, passed) = prestudy_outcome(correct, total, pass_threshold);
    if passed {
        status.prestudy_passed = PrestudyState::Passed;
    } else {
        status.prestudy_passed = PrestudyState::Failed;
        status.state = AnnotatorState::Blocked;
    }
    score
}

/// Applies one attention-test outcome.
pub fn score_attention(status: &mut QualityStatus, config: &AttentionConfig, correct: bool) {
    if correct {
        return;
    }
    status.attention_failures += 1;
    if status.attention_failures >= config.fail_threshold && status.state != AnnotatorState::Blocked {
        status.state = match config.on_fail {
            OnFail::Flag => AnnotatorState::Flagged,
            OnFail::Block => AnnotatorState::Blocked,
        };
    }
}

/// A queue slot: a real instance or the k-th attention gold item.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "ref", rename_all = "snake_case")]
pub enum QueueItem {
    Instance(String),
    Attention(usize),
}

impl QueueItem {
    pub fn instance_id(&self) -> Option<&str> {
        match self {
            QueueItem::Instance(id) => Some(id),
            QueueItem::Attention(_) => None,
        }
    }
}

pub fn attention_count(rate: f64, queue_len: usize) -> usize {
    (rate * queue_len as f64).round() as usize
}

/// Interleaves `round(rate * |queue|)` gold items (cycled) at seeded uniform
/// positions of the final queue; real items keep their relative order.
pub fn insert_attention_tests(queue: &[QueueItem], config: &AttentionConfig, seed: u64) -> Vec<QueueItem> {
    let k = attention_count(config.insertion_rate, queue.len());
    if k == 0 || config.test_items.is_empty() {
        return queue.to_vec();
    }
    let total = queue.len() + k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slots = sample(&mut rng, total, k).into_vec();
    slots.sort_unstable();
    let mut out = Vec::with_capacity(total);
    let mut real = queue.iter();
    let mut next_slot = slots.iter().peekable();
    let mut gold = 0usize;
    for pos in 0..total {
        if next_slot.peek() == Some(&&pos) {
            next_slot.next();
            out.push(QueueItem::Attention(gold % config.test_items.len()));
            gold += 1;
        } else if let Some(item) = real.next() {
            out.push(item.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attention(rate: f64, threshold: u32, on_fail: OnFail) -> AttentionConfig {
        AttentionConfig {
            test_items: vec![GoldItem {
                instance: Record::new(),
                answers: IndexMap::new(),
            }],
            insertion_rate: rate,
            fail_threshold: threshold,
            on_fail,
        }
    }

    fn queue(n: usize) -> Vec<QueueItem> {
        (0..n).map(|i| QueueItem::Instance(i.to_string())).collect()
    }

    #[test]
    fn prestudy_threshold_inclusive() {
        let mut s = QualityStatus::default();
        run_prestudy(&mut s, 3, 4, 0.75);
        assert_eq!(s.prestudy_passed, PrestudyState::Passed);
        assert_eq!(s.state, AnnotatorState::Active);
        let mut s = QualityStatus::default();
        run_prestudy(&mut s, 2, 4, 0.75);
        assert_eq!(s.prestudy_passed, PrestudyState::Failed);
        assert!(s.is_blocked());
    }

    #[test]
    fn attention_insertion_count() {
        let out = insert_attention_tests(&queue(50), &attention(0.1, 1, OnFail::Flag), 1);
        assert_eq!(out.len(), 55);
        assert_eq!(out.iter().filter(|q| matches!(q, QueueItem::Attention(_))).count(), 5);
        let real: Vec<_> = out.iter().filter(|q| q.instance_id().is_some()).cloned().collect();
        assert_eq!(real, queue(50));
    }

    #[test]
    fn zero_rate_leaves_queue() {
        assert_eq!(insert_attention_tests(&queue(50), &attention(0.0, 1, OnFail::Flag), 1), queue(50));
    }

    #[test]
    fn flag_then_continue() {
        let cfg = attention(0.1, 2, OnFail::Flag);
        let mut s = QualityStatus::default();
        score_attention(&mut s, &cfg, false);
        assert_eq!(s.state, AnnotatorState::Active);
        score_attention(&mut s, &cfg, true);
        assert_eq!(s.attention_failures, 1);
        score_attention(&mut s, &cfg, false);
        assert_eq!(s.state, AnnotatorState::Flagged);
    }

    #[test]
    fn block_on_threshold() {
        let cfg = attention(0.1, 1, OnFail::Block);
        let mut s = QualityStatus::default();
        score_attention(&mut s, &cfg, false);
        assert!(s.is_blocked());
    }

    #[test]
    fn gold_multiselect_compares_as_sets() {
        use crate::scheme::LabelValue;
        let set = |xs: &[&str]| Answer::Choices(xs.iter().map(|s| s.to_string()).collect());
        let gold = ValidatedLabels(vec![LabelValue { scheme: "m".into(), answer: set(&["a", "b"]) }]);
        let sub = ValidatedLabels(vec![LabelValue { scheme: "m".into(), answer: set(&["b", "a"]) }]);
        assert!(gold_matches(&gold, &sub));
        let wrong = ValidatedLabels(vec![LabelValue { scheme: "m".into(), answer: set(&["a"]) }]);
        assert!(!gold_matches(&gold, &wrong));
    }

    #[test]
    fn template_pages_have_questions() {
        let page = SurveyPage { title: "c".into(), questions: vec![], template: Some(SurveyTemplate::Consent) };
        assert_eq!(page.effective_questions().len(), 1);
        let page = SurveyPage { title: "d".into(), questions: vec![], template: Some(SurveyTemplate::Demographics) };
        assert_eq!(page.effective_questions().len(), 4);
    }
}
