//! Instance ingestion from `.csv`, `.tsv` and `.jsonl` data files.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::TaskConfig;
use crate::error::{Error, Result};

pub type Record = IndexMap<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentKind {
    Text,
    ImageRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub kind: DocumentKind,
    pub payload: String,
}

impl Document {
    pub fn text(payload: impl Into<String>) -> Self {
        Self {
            kind: DocumentKind::Text,
            payload: payload.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "shape", content = "documents", rename_all = "snake_case")]
pub enum Content {
    Single(Document),
    List(Vec<Document>),
    Map(IndexMap<String, Document>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub content: Content,
    /// Every input field other than the id and text fields, in input order.
    pub display_meta: Record,
}

impl Instance {
    /// Documents in display order, with their map key when the content is named.
    pub fn documents(&self) -> Vec<(Option<&str>, &Document)> {
        match &self.content {
            Content::Single(d) => vec![(None, d)],
            Content::List(ds) => ds.iter().map(|d| (None, d)).collect(),
            Content::Map(m) => m.iter().map(|(k, d)| (Some(k.as_str()), d)).collect(),
        }
    }

    pub fn document(&self, index: usize) -> Option<&Document> {
        match &self.content {
            Content::Single(d) => (index == 0).then_some(d),
            Content::List(ds) => ds.get(index),
            Content::Map(m) => m.get_index(index).map(|(_, d)| d),
        }
    }

    pub fn document_count(&self) -> usize {
        match &self.content {
            Content::Single(_) => 1,
            Content::List(ds) => ds.len(),
            Content::Map(m) => m.len(),
        }
    }

    /// Identifiers of the selectable document slots: list indices or map keys.
    pub fn slot_ids(&self) -> Vec<String> {
        match &self.content {
            Content::Single(_) => vec!["0".to_string()],
            Content::List(ds) => (0..ds.len()).map(|i| i.to_string()).collect(),
            Content::Map(m) => m.keys().cloned().collect(),
        }
    }

    /// All text documents joined by a blank line. Used as classifier input.
    pub fn joined_text(&self) -> String {
        self.documents()
            .into_iter()
            .filter(|(_, d)| d.kind == DocumentKind::Text)
            .map(|(_, d)| d.payload.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Tsv,
    Jsonl,
}

fn format_of(path: &Path) -> Option<Format> {
    match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
        "csv" => Some(Format::Csv),
        "tsv" => Some(Format::Tsv),
        "jsonl" | "ndjson" => Some(Format::Jsonl),
        _ => None,
    }
}

pub fn is_supported_data_file(path: &Path) -> bool {
    format_of(path).is_some()
}

/// Reads a file as UTF-8, reporting the line of the first invalid byte.
pub(crate) fn read_utf8(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    String::from_utf8(bytes).map_err(|e| {
        let valid = e.utf8_error().valid_up_to();
        let line = e.as_bytes()[..valid].iter().filter(|b| **b == b'\n').count() + 1;
        Error::Parse {
            path: path.to_path_buf(),
            line: Some(line),
            message: "invalid UTF-8".into(),
        }
    })
}

/// A record together with where it came from (`file:line`).
pub(crate) struct Located {
    pub location: String,
    pub record: Record,
}

fn read_records(path: &Path) -> Result<Vec<Located>> {
    let format = format_of(path).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: None,
        message: "unsupported data file extension (expected .csv, .tsv or .jsonl)".into(),
    })?;
    let text = read_utf8(path)?;
    let name = path.display().to_string();
    match format {
        Format::Jsonl => {
            let mut out = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: Some(i + 1),
                    message: e.to_string(),
                })?;
                let Value::Object(map) = value else {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: Some(i + 1),
                        message: "record is not a JSON object".into(),
                    });
                };
                out.push(Located {
                    location: format!("{name}:{}", i + 1),
                    record: map.into_iter().collect(),
                });
            }
            Ok(out)
        }
        Format::Csv | Format::Tsv => {
            let delimiter = if format == Format::Csv { b',' } else { b'\t' };
            let mut reader = csv::ReaderBuilder::new()
                .delimiter(delimiter)
                .has_headers(true)
                .from_reader(text.as_bytes());
            let headers = reader
                .headers()
                .map_err(|e| csv_error(path, e))?
                .iter()
                .map(str::to_string)
                .collect::<Vec<_>>();
            let mut out = Vec::new();
            for row in reader.records() {
                let row = row.map_err(|e| csv_error(path, e))?;
                let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
                let record = headers
                    .iter()
                    .zip(row.iter())
                    .map(|(h, v)| (h.clone(), Value::String(v.to_string())))
                    .collect();
                out.push(Located {
                    location: format!("{name}:{line}"),
                    record,
                });
            }
            Ok(out)
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.position().map(|p| p.line() as usize),
        message: e.to_string(),
    }
}

fn scalar_to_string(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Checks that an image reference is a URL or an existing file.
pub(crate) fn check_media_ref(payload: &str, base_dir: &Path) -> std::result::Result<(), String> {
    if let Ok(url) = url::Url::parse(payload) {
        if matches!(url.scheme(), "http" | "https" | "data" | "file") {
            return Ok(());
        }
    }
    let path = base_dir.join(payload);
    if path.exists() {
        Ok(())
    } else {
        Err(format!("image reference {payload:?} is neither a URL nor an existing path"))
    }
}

/// Converts one raw record into an [`Instance`] under the task's field mapping.
pub fn record_to_instance(config: &TaskConfig, record: &Record) -> std::result::Result<Instance, String> {
    let id_value = record
        .get(&config.id_field)
        .ok_or_else(|| format!("missing id field {:?}", config.id_field))?;
    let id = scalar_to_string(id_value)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| format!("id field {:?} must be a non-empty string or number", config.id_field))?;

    let text_fields = config.text_field.names();
    let make_doc = |field: &str, value: &Value| -> std::result::Result<Document, String> {
        let payload = match value {
            Value::String(s) if !s.trim().is_empty() => s.clone(),
            Value::String(_) => return Err(format!("field {field:?} is empty")),
            _ => return Err(format!("field {field:?} must contain strings")),
        };
        if config.image_fields.iter().any(|f| f == field) {
            check_media_ref(&payload, &config.base_dir)?;
            Ok(Document {
                kind: DocumentKind::ImageRef,
                payload,
            })
        } else {
            Ok(Document::text(payload))
        }
    };

    let content = if text_fields.len() == 1 {
        let field = text_fields[0];
        let value = record
            .get(field)
            .ok_or_else(|| format!("missing text field {field:?}"))?;
        match value {
            Value::Array(items) => {
                if items.is_empty() {
                    return Err(format!("field {field:?} is an empty list"));
                }
                Content::List(items.iter().map(|v| make_doc(field, v)).collect::<std::result::Result<_, _>>()?)
            }
            Value::Object(map) => {
                if map.is_empty() {
                    return Err(format!("field {field:?} is an empty map"));
                }
                Content::Map(
                    map.iter()
                        .map(|(k, v)| Ok((k.clone(), make_doc(field, v)?)))
                        .collect::<std::result::Result<_, String>>()?,
                )
            }
            other => Content::Single(make_doc(field, other)?),
        }
    } else {
        let mut map = IndexMap::new();
        for field in &text_fields {
            let value = record
                .get(*field)
                .ok_or_else(|| format!("missing text field {field:?}"))?;
            map.insert(field.to_string(), make_doc(field, value)?);
        }
        Content::Map(map)
    };

    let display_meta = record
        .iter()
        .filter(|(k, _)| **k != config.id_field && !text_fields.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();

    Ok(Instance {
        id,
        content,
        display_meta,
    })
}

/// Loads every configured data file, concatenated in config order.
pub fn load_instances(config: &TaskConfig) -> Result<Vec<Instance>> {
    let mut instances = Vec::new();
    let mut seen: HashMap<String, String> = HashMap::new();
    for file in &config.data_files {
        let path: PathBuf = config.resolve(file);
        for located in read_records(&path)? {
            let instance = record_to_instance(config, &located.record).map_err(|message| Error::Ingest {
                location: located.location.clone(),
                message,
            })?;
            if let Some(first) = seen.get(&instance.id) {
                return Err(Error::Ingest {
                    location: located.location,
                    message: format!("duplicate id {:?} (first seen at {first})", instance.id),
                });
            }
            seen.insert(instance.id.clone(), located.location);
            instances.push(instance);
        }
    }
    Ok(instances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TextField;

    fn config(dir: &Path, files: &[&str], text: TextField) -> TaskConfig {
        let mut cfg = TaskConfig::minimal("t", files.iter().map(PathBuf::from).collect(), "id", text);
        cfg.base_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn three_line_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("d.jsonl"),
            "{\"id\":\"1\",\"text\":\"a\"}\n{\"id\":\"2\",\"text\":\"b\",\"src\":\"x\"}\n{\"id\":3,\"text\":\"c\"}\n",
        )
        .unwrap();
        let got = load_instances(&config(dir.path(), &["d.jsonl"], TextField::One("text".into()))).unwrap();
        assert_eq!(got.len(), 3);
        assert_eq!(got[2].id, "3");
        assert_eq!(got[1].display_meta.get("src"), Some(&Value::String("x".into())));
        assert!(matches!(got[0].content, Content::Single(_)));
    }

    #[test]
    fn two_text_fields_make_named_map() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.csv"), "id,text_a,text_b\np1,left,right\n").unwrap();
        let got = load_instances(&config(
            dir.path(),
            &["d.csv"],
            TextField::Many(vec!["text_a".into(), "text_b".into()]),
        ))
        .unwrap();
        let Content::Map(m) = &got[0].content else { panic!() };
        assert_eq!(m.keys().collect::<Vec<_>>(), ["text_a", "text_b"]);
        assert_eq!(m["text_b"].payload, "right");
    }

    #[test]
    fn list_content_from_json_array() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.jsonl"), "{\"id\":\"q\",\"text\":[\"a\",\"b\",\"c\",\"d\"]}\n").unwrap();
        let got = load_instances(&config(dir.path(), &["d.jsonl"], TextField::One("text".into()))).unwrap();
        assert_eq!(got[0].document_count(), 4);
        assert_eq!(got[0].slot_ids(), ["0", "1", "2", "3"]);
    }

    #[test]
    fn missing_id_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.jsonl"), "{\"id\":\"1\",\"text\":\"a\"}\n{\"text\":\"b\"}\n").unwrap();
        let err = load_instances(&config(dir.path(), &["d.jsonl"], TextField::One("text".into()))).unwrap_err();
        let Error::Ingest { location, message } = err else { panic!("{err}") };
        assert!(location.ends_with("d.jsonl:2"), "{location}");
        assert!(message.contains("missing id"));
    }

    #[test]
    fn duplicate_id_across_files_names_both() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.jsonl"), "{\"id\":\"1\",\"text\":\"a\"}\n").unwrap();
        std::fs::write(dir.path().join("b.tsv"), "id\ttext\n1\tb\n").unwrap();
        let err = load_instances(&config(dir.path(), &["a.jsonl", "b.tsv"], TextField::One("text".into())))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("b.tsv:2") && msg.contains("a.jsonl:1"), "{msg}");
    }

    #[test]
    fn invalid_utf8_is_a_hard_error_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = b"{\"id\":\"1\",\"text\":\"a\"}\n{\"id\":\"2\",\"text\":\"".to_vec();
        bytes.extend_from_slice(&[0xff, 0xfe]);
        bytes.extend_from_slice(b"\"}\n");
        std::fs::write(dir.path().join("d.jsonl"), bytes).unwrap();
        let err = load_instances(&config(dir.path(), &["d.jsonl"], TextField::One("text".into()))).unwrap_err();
        assert!(matches!(err, Error::Parse { line: Some(2), .. }), "{err}");
    }

    #[test]
    fn undecodable_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.jsonl"), "{\"id\":\"1\",\"text\":\"a\"}\n{oops\n").unwrap();
        let err = load_instances(&config(dir.path(), &["d.jsonl"], TextField::One("text".into()))).unwrap_err();
        assert!(matches!(err, Error::Parse { line: Some(2), .. }), "{err}");
    }

    #[test]
    fn empty_text_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.csv"), "id,text\n1,\n").unwrap();
        assert!(load_instances(&config(dir.path(), &["d.csv"], TextField::One("text".into()))).is_err());
    }

    #[test]
    fn image_refs_checked() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("pic.png"), b"x").unwrap();
        std::fs::write(
            dir.path().join("d.csv"),
            "id,image\n1,https://example.org/a.gif\n2,pic.png\n",
        )
        .unwrap();
        let mut cfg = config(dir.path(), &["d.csv"], TextField::One("image".into()));
        cfg.image_fields = vec!["image".into()];
        let got = load_instances(&cfg).unwrap();
        assert_eq!(got[1].document(0).unwrap().kind, DocumentKind::ImageRef);

        std::fs::write(dir.path().join("d.csv"), "id,image\n1,nope.png\n").unwrap();
        assert!(load_instances(&cfg).is_err());
    }
}
