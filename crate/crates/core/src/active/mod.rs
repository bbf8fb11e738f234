//! Uncertainty-based queue ordering.
//!
//! A classifier is periodically fit on the labels collected so far for one
//! target scheme, and unlabeled instances are ordered so the least confident
//! come first, mixed with a seeded random sample.

mod features;
mod logreg;
mod plan;

use std::fmt::Write as _;

pub use features::{featurize, FeatureVector, SparseRow, Vocabulary};
pub use logreg::{minimize, train, Classifier, Objective, TrainOptions, TrainSkip};
pub use plan::{random_slot_count, reorder, reorder_scored, PlanSlot, Provenance, QueuePlan};

use crate::config::{ActiveLearningConfig, ConfidenceMeasure};
use crate::error::{Error, Result};
use crate::scheme::{Answer, SchemeKind};

/// Anything that can score how sure it is about a document. Lower is less sure.
pub trait ConfidenceModel: Send + Sync {
    fn confidence(&self, features: &FeatureVector) -> f64;
}

pub fn confidence_from_probs(p: &[f64], measure: ConfidenceMeasure) -> f64 {
    match measure {
        ConfidenceMeasure::LeastConfidence => p.iter().cloned().fold(0.0, f64::max),
        ConfidenceMeasure::Margin => {
            let mut sorted = p.to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            sorted[0] - sorted.get(1).copied().unwrap_or(0.0)
        }
        ConfidenceMeasure::Entropy => {
            if p.len() < 2 {
                return 1.0;
            }
            let h: f64 = p.iter().filter(|v| **v > 0.0).map(|v| -v * v.ln()).sum();
            1.0 - h / (p.len() as f64).ln()
        }
    }
}

/// The fitted model for the target scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetModel {
    /// Radio target: one multinomial model.
    Multinomial {
        classifier: Classifier,
        measure: ConfidenceMeasure,
    },
    /// Multiselect target: one binary model per label (classes `no`, `yes`).
    /// Labels seen with only one outcome are left out.
    OneVsRest { models: Vec<(String, Classifier)> },
}

impl ConfidenceModel for TargetModel {
    fn confidence(&self, features: &FeatureVector) -> f64 {
        match self {
            TargetModel::Multinomial { classifier, measure } => {
                confidence_from_probs(&classifier.predict_proba(features), *measure)
            }
            TargetModel::OneVsRest { models } => models
                .iter()
                .map(|(_, clf)| {
                    let p = clf.predict_proba(features);
                    p.iter().cloned().fold(0.0, f64::max)
                })
                .fold(1.0, f64::min),
        }
    }
}

impl TargetModel {
    pub fn trained_on(&self) -> usize {
        match self {
            TargetModel::Multinomial { classifier, .. } => classifier.trained_on,
            TargetModel::OneVsRest { models } => models.iter().map(|(_, c)| c.trained_on).max().unwrap_or(0),
        }
    }
}

/// Retraining is due after every `retrain_every`-th annotation once enough exist.
pub fn retrain_due(total_annotations: usize, config: &ActiveLearningConfig) -> bool {
    total_annotations > 0
        && total_annotations.is_multiple_of(config.retrain_every as usize)
        && total_annotations >= config.min_labels_to_start as usize
}

/// Fits the model for the target scheme from pooled `(text, answer)` pairs.
pub fn fit_target(
    kind: SchemeKind,
    option_values: &[String],
    examples: &[(String, Answer)],
    config: &ActiveLearningConfig,
    options: &TrainOptions,
) -> std::result::Result<TargetModel, TrainSkip> {
    let needed = config.min_labels_to_start as usize;
    if examples.len() < needed {
        return Err(TrainSkip::TooFew {
            needed,
            have: examples.len(),
        });
    }
    let features: Vec<FeatureVector> = examples.iter().map(|(t, _)| featurize(t)).collect();
    match kind {
        SchemeKind::Multiselect => {
            let mut models = Vec::new();
            for label in option_values {
                let data: Vec<(FeatureVector, String)> = features
                    .iter()
                    .zip(examples)
                    .filter_map(|(f, (_, a))| match a {
                        Answer::Choices(set) => {
                            Some((f.clone(), if set.contains(label) { "yes" } else { "no" }.to_string()))
                        }
                        _ => None,
                    })
                    .collect();
                if let Ok(clf) = train(&data, options) {
                    models.push((label.clone(), clf));
                }
            }
            if models.is_empty() {
                Err(TrainSkip::SingleClass)
            } else {
                Ok(TargetModel::OneVsRest { models })
            }
        }
        _ => {
            let data: Vec<(FeatureVector, String)> = features
                .into_iter()
                .zip(examples)
                .filter_map(|(f, (_, a))| match a {
                    Answer::Choice(c) => Some((f, c.clone())),
                    _ => None,
                })
                .collect();
            Ok(TargetModel::Multinomial {
                classifier: train(&data, options)?,
                measure: config.confidence,
            })
        }
    }
}

const SNAPSHOT_HEADER: &str = "# annotation queue model";
const SNAPSHOT_VERSION: u32 = 1;

fn write_classifier(out: &mut String, name: &str, clf: &Classifier) {
    let _ = writeln!(out, "model\t{name}");
    let _ = writeln!(out, "trained_on\t{}", clf.trained_on);
    let _ = writeln!(out, "classes\t{}", clf.class_labels.join("\t"));
    let _ = writeln!(out, "vocabulary\t{}", clf.vocabulary.len());
    let d = clf.vocabulary.len();
    for (j, term) in clf.vocabulary.terms().iter().enumerate() {
        let ws: Vec<String> = (0..clf.classes())
            .map(|k| format!("{:e}", clf.weights[k * (d + 1) + j]))
            .collect();
        let _ = writeln!(out, "w\t{term}\t{}", ws.join("\t"));
    }
    let bs: Vec<String> = (0..clf.classes()).map(|k| format!("{:e}", clf.bias(k))).collect();
    let _ = writeln!(out, "bias\t{}", bs.join("\t"));
    let _ = writeln!(out, "end");
}

/// Versioned tab-separated dump of the model, for deployer inspection.
///
/// ```text
/// # annotation queue model
/// version  1
/// kind     multinomial | one_vs_rest
/// measure  least_confidence | margin | entropy
/// model    <name>            (one block per classifier)
/// trained_on <n>
/// classes  <c1> <c2> ...
/// vocabulary <D>
/// w        <term> <w_c1> <w_c2> ...   (D lines)
/// bias     <b_c1> <b_c2> ...
/// end
/// ```
pub fn snapshot_text(model: &TargetModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{SNAPSHOT_HEADER}");
    let _ = writeln!(out, "version\t{SNAPSHOT_VERSION}");
    match model {
        TargetModel::Multinomial { classifier, measure } => {
            let _ = writeln!(out, "kind\tmultinomial");
            let m = serde_json::to_value(measure).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            let _ = writeln!(out, "measure\t{m}");
            write_classifier(&mut out, "target", classifier);
        }
        TargetModel::OneVsRest { models } => {
            let _ = writeln!(out, "kind\tone_vs_rest");
            let _ = writeln!(out, "measure\tleast_confidence");
            for (label, clf) in models {
                write_classifier(&mut out, label, clf);
            }
        }
    }
    out
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse {
        path: "model snapshot".into(),
        line: None,
        message: msg.into(),
    }
}

/// Reads a snapshot written by [`snapshot_text`].
pub fn parse_snapshot(text: &str) -> Result<TargetModel> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).peekable();
    let mut field = |name: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| parse_err(format!("missing {name}")))?;
        line.strip_prefix(&format!("{name}\t"))
            .map(str::to_string)
            .ok_or_else(|| parse_err(format!("expected {name}, got {line:?}")))
    };
    let version: u32 = field("version")?.parse().map_err(|_| parse_err("bad version"))?;
    if version != SNAPSHOT_VERSION {
        return Err(parse_err(format!("unsupported version {version}")));
    }
    let kind = field("kind")?;
    let measure: ConfidenceMeasure =
        serde_json::from_value(serde_json::Value::String(field("measure")?)).map_err(|_| parse_err("bad measure"))?;
    let mut models = Vec::new();
    let rest: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .skip(3)
        .collect();
    let mut it = rest.into_iter();
    while let Some(line) = it.next() {
        let name = line.strip_prefix("model\t").ok_or_else(|| parse_err("expected model"))?;
        let mut next = |p: &str| -> Result<String> {
            it.next()
                .and_then(|l| l.strip_prefix(&format!("{p}\t")).map(str::to_string))
                .ok_or_else(|| parse_err(format!("expected {p}")))
        };
        let trained_on: usize = next("trained_on")?.parse().map_err(|_| parse_err("bad trained_on"))?;
        let classes: Vec<String> = next("classes")?.split('\t').map(str::to_string).collect();
        let d: usize = next("vocabulary")?.parse().map_err(|_| parse_err("bad vocabulary size"))?;
        let k = classes.len();
        let mut terms = Vec::with_capacity(d);
        let mut weights = vec![0.0; k * (d + 1)];
        let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(format!("bad number {s:?}")));
        for j in 0..d {
            let row = next("w")?;
            let mut parts = row.split('\t');
            terms.push(parts.next().unwrap_or_default().to_string());
            for c in 0..k {
                weights[c * (d + 1) + j] = num(parts.next().ok_or_else(|| parse_err("short weight row"))?)?;
            }
        }
        let bias = next("bias")?;
        for (c, b) in bias.split('\t').enumerate().take(k) {
            weights[c * (d + 1) + d] = num(b)?;
        }
        if it.next() != Some("end") {
            return Err(parse_err("missing end"));
        }
        models.push((
            name.to_string(),
            Classifier {
                class_labels: classes,
                vocabulary: Vocabulary::from_terms(terms),
                weights,
                trained_on,
            },
        ));
    }
    match kind.as_str() {
        "multinomial" => {
            let (_, classifier) = models.pop().ok_or_else(|| parse_err("no model"))?;
            Ok(TargetModel::Multinomial { classifier, measure })
        }
        "one_vs_rest" => Ok(TargetModel::OneVsRest { models }),
        other => Err(parse_err(format!("unknown kind {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn al(retrain: u32, min: u32) -> ActiveLearningConfig {
        ActiveLearningConfig {
            retrain_every: retrain,
            random_ratio: 0.0,
            target_scheme: "t".into(),
            min_labels_to_start: min,
            confidence: ConfidenceMeasure::LeastConfidence,
            seed: 0,
        }
    }

    #[test]
    fn retrain_schedule() {
        let cfg = al(10, 5);
        assert!(retrain_due(10, &cfg));
        assert!(!retrain_due(9, &cfg));
        assert!(retrain_due(20, &cfg));
        assert!(!retrain_due(10, &al(10, 11)));
    }

    #[test]
    fn measures() {
        assert_eq!(confidence_from_probs(&[0.2, 0.8], ConfidenceMeasure::LeastConfidence), 0.8);
        assert!((confidence_from_probs(&[0.2, 0.8], ConfidenceMeasure::Margin) - 0.6).abs() < 1e-12);
        assert!(confidence_from_probs(&[0.5, 0.5], ConfidenceMeasure::Entropy).abs() < 1e-12);
    }

    #[test]
    fn multiselect_is_one_vs_rest() {
        let set = |xs: &[&str]| Answer::Choices(xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>());
        let ex = vec![
            ("job lost".to_string(), set(&["work"])),
            ("moved house".to_string(), set(&["housing"])),
            ("job and house".to_string(), set(&["work", "housing"])),
            ("nothing here".to_string(), set(&[])),
        ];
        let opts = vec!["work".to_string(), "housing".to_string(), "never".to_string()];
        let model = fit_target(SchemeKind::Multiselect, &opts, &ex, &al(1, 1), &TrainOptions::default()).unwrap();
        let TargetModel::OneVsRest { models } = &model else { panic!() };
        assert_eq!(models.len(), 2);
        let c = model.confidence(&featurize("job"));
        assert!((0.5..=1.0).contains(&c));
    }

    #[test]
    fn snapshot_round_trip() {
        let ex = vec![
            ("good fun".to_string(), Answer::Choice("pos".into())),
            ("bad dull".to_string(), Answer::Choice("neg".into())),
        ];
        let model = fit_target(SchemeKind::Radio, &[], &ex, &al(1, 1), &TrainOptions::default()).unwrap();
        let parsed = parse_snapshot(&snapshot_text(&model)).unwrap();
        let f = featurize("good dull");
        assert!((parsed.confidence(&f) - model.confidence(&f)).abs() < 1e-12);
    }
}
