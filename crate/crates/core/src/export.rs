//! Annotation export.
//!
//! Main records go to `annotations.jsonl` or `annotations.csv`, one per
//! (annotator, instance), ordered by annotator id then queue position.
//! Attention and prestudy answers are written to `attention.jsonl` and
//! `prestudy.jsonl`, survey answers to `surveys.jsonl`; none of them appear
//! among the main records.
//!
//! CSV columns: the fixed fields of [`ExportRecord`], then one column per
//! scheme holding the answer's wire JSON (empty when unanswered), then
//! `display_meta` and `highlights` as JSON.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::TaskConfig;
use crate::data::Record;
use crate::error::{Error, Result};
use crate::highlight::HighlightSpan;
use crate::quality::{AnnotatorState, QueueItem};
use crate::scheme::{Answer, LabelValue, ValidatedLabels};
use crate::session::{SurveyPhase, Workbench};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Jsonl,
    Csv,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Jsonl => "jsonl",
            ExportFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub annotator: String,
    pub instance_id: String,
    pub position: usize,
    pub revision: u32,
    pub elapsed_ms: u64,
    pub first_submitted_at: u64,
    pub last_submitted_at: u64,
    pub annotator_state: AnnotatorState,
    pub labels: ValidatedLabels,
    pub display_meta: Record,
    /// Highlights shown, keyword or decoy.
    pub highlights: Vec<HighlightSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub annotator: String,
    pub position: usize,
    pub gold_instance_id: String,
    pub labels: ValidatedLabels,
    pub correct: bool,
    pub elapsed_ms: u64,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrestudyRecord {
    pub annotator: String,
    pub gold_instance_id: String,
    pub labels: ValidatedLabels,
    pub correct: bool,
    pub elapsed_ms: u64,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub annotator: String,
    pub phase: SurveyPhase,
    pub page: usize,
    pub title: String,
    pub answers: ValidatedLabels,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportSummary {
    pub annotations: PathBuf,
    pub records: usize,
    pub attention_records: usize,
    pub prestudy_records: usize,
    pub survey_records: usize,
}

/// Main records from the live store, in export order.
pub fn collect_records(wb: &Workbench) -> Vec<ExportRecord> {
    let mut out = Vec::new();
    for s in wb.user_states() {
        for (position, r) in s.records.iter().enumerate() {
            let Some(r) = r else { continue };
            let QueueItem::Instance(id) = &r.item else { continue };
            let instance = wb.instance(id).expect("queued instances exist");
            out.push(ExportRecord {
                annotator: s.user_id.clone(),
                instance_id: id.clone(),
                position,
                revision: r.revision,
                elapsed_ms: r.elapsed_ms,
                first_submitted_at: r.first_submitted_at,
                last_submitted_at: r.last_submitted_at,
                annotator_state: s.qc_status.state,
                labels: r.labels.clone(),
                display_meta: instance.display_meta.clone(),
                highlights: wb.highlights_for(&s.user_id, instance),
            });
        }
    }
    out
}

pub fn collect_attention(wb: &Workbench) -> Vec<AttentionRecord> {
    let mut out = Vec::new();
    for s in wb.user_states() {
        for (position, r) in s.records.iter().enumerate() {
            let Some(r) = r else { continue };
            if let QueueItem::Attention(_) = r.item {
                out.push(AttentionRecord {
                    annotator: s.user_id.clone(),
                    position,
                    gold_instance_id: r.instance_id.clone(),
                    labels: r.labels.clone(),
                    correct: r.attention_correct.unwrap_or(false),
                    elapsed_ms: r.elapsed_ms,
                    at: r.first_submitted_at,
                });
            }
        }
    }
    out
}

fn collect_prestudy(wb: &Workbench) -> Vec<PrestudyRecord> {
    wb.user_states()
        .into_iter()
        .flat_map(|s| {
            s.prestudy
                .iter()
                .map(|p| PrestudyRecord {
                    annotator: s.user_id.clone(),
                    gold_instance_id: p.instance_id.clone(),
                    labels: p.answers.clone(),
                    correct: p.correct,
                    elapsed_ms: p.elapsed_ms,
                    at: p.at,
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn collect_surveys(wb: &Workbench) -> Vec<SurveyRecord> {
    let qc = wb.config().quality_control.clone().unwrap_or_default();
    let mut out = Vec::new();
    for s in wb.user_states() {
        for (phase, responses, pages) in [
            (SurveyPhase::Pre, &s.pre_surveys, &qc.pre_surveys),
            (SurveyPhase::Post, &s.post_surveys, &qc.post_surveys),
        ] {
            for r in responses {
                out.push(SurveyRecord {
                    annotator: s.user_id.clone(),
                    phase,
                    page: r.page,
                    title: pages.get(r.page).map(|p| p.title.clone()).unwrap_or_default(),
                    answers: r.answers.clone(),
                    at: r.at,
                });
            }
        }
    }
    out
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item).expect("record serializes");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const CSV_FIXED: [&str; 8] = [
    "annotator",
    "instance_id",
    "position",
    "revision",
    "elapsed_ms",
    "first_submitted_at",
    "last_submitted_at",
    "annotator_state",
];

fn write_csv(path: &Path, config: &TaskConfig, records: &[ExportRecord]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Parse {
        path: path.to_path_buf(),
        line: None,
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = CSV_FIXED.iter().map(|s| s.to_string()).collect();
    header.extend(config.schemes.iter().map(|s| s.name.clone()));
    header.push("display_meta".into());
    header.push("highlights".into());
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        let state = serde_json::to_value(r.annotator_state).expect("state serializes");
        let mut row = vec![
            r.annotator.clone(),
            r.instance_id.clone(),
            r.position.to_string(),
            r.revision.to_string(),
            r.elapsed_ms.to_string(),
            r.first_submitted_at.to_string(),
            r.last_submitted_at.to_string(),
            state.as_str().unwrap_or_default().to_string(),
        ];
        for s in &config.schemes {
            row.push(r.labels.get(&s.name).map(|a| a.to_raw().to_string()).unwrap_or_default());
        }
        row.push(serde_json::to_string(&r.display_meta).expect("meta serializes"));
        row.push(serde_json::to_string(&r.highlights).expect("highlights serialize"));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes all export files into `dir`.
pub fn export(wb: &Workbench, format: ExportFormat, dir: &Path) -> Result<ExportSummary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let records = collect_records(wb);
    let annotations = dir.join(format!("annotations.{}", format.extension()));
    match format {
        ExportFormat::Jsonl => write_jsonl(&annotations, &records)?,
        ExportFormat::Csv => write_csv(&annotations, wb.config(), &records)?,
    }
    let attention = collect_attention(wb);
    write_jsonl(&dir.join("attention.jsonl"), &attention)?;
    let prestudy = collect_prestudy(wb);
    write_jsonl(&dir.join("prestudy.jsonl"), &prestudy)?;
    let surveys = collect_surveys(wb);
    write_jsonl(&dir.join("surveys.jsonl"), &surveys)?;
    Ok(ExportSummary {
        annotations,
        records: records.len(),
        attention_records: attention.len(),
        prestudy_records: prestudy.len(),
        survey_records: surveys.len(),
    })
}

/// Default export directory for a task.
pub fn default_dir(config: &TaskConfig) -> PathBuf {
    config.output_dir().join("export")
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: Some(i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Reads `annotations.csv` back into records.
pub fn read_csv(path: &Path, config: &TaskConfig) -> Result<Vec<ExportRecord>> {
    let err = |line: Option<usize>, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| err(None, e.to_string()))?;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = Some(i + 2);
        let row = row.map_err(|e| err(line, e.to_string()))?;
        let field = |k: usize| row.get(k).unwrap_or_default();
        let num = |k: usize| field(k).parse::<u64>().map_err(|e| err(line, format!("column {}: {e}", k + 1)));
        let json = |k: usize| serde_json::from_str::<serde_json::Value>(field(k)).map_err(|e| err(line, e.to_string()));
        let n = CSV_FIXED.len();
        let mut labels = Vec::new();
        for (j, s) in config.schemes.iter().enumerate() {
            if field(n + j).is_empty() {
                continue;
            }
            let answer = Answer::from_raw(s.kind, &json(n + j)?)
                .ok_or_else(|| err(line, format!("bad value for scheme {}", s.name)))?;
            labels.push(LabelValue {
                scheme: s.name.clone(),
                answer,
            });
        }
        let m = n + config.schemes.len();
        out.push(ExportRecord {
            annotator: field(0).to_string(),
            instance_id: field(1).to_string(),
            position: num(2)? as usize,
            revision: num(3)? as u32,
            elapsed_ms: num(4)?,
            first_submitted_at: num(5)?,
            last_submitted_at: num(6)?,
            annotator_state: serde_json::from_value(serde_json::Value::String(field(7).into()))
                .map_err(|e| err(line, e.to_string()))?,
            labels: ValidatedLabels(labels),
            display_meta: serde_json::from_value(json(m)?).map_err(|e| err(line, e.to_string()))?,
            highlights: serde_json::from_value(json(m + 1)?).map_err(|e| err(line, e.to_string()))?,
        });
    }
    Ok(out)
}

/// Reads the main annotation file of either format.
pub fn read_annotations(path: &Path, config: &TaskConfig) -> Result<Vec<ExportRecord>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_csv(path, config),
        _ => read_jsonl(path),
    }
}
