//! Built-in starter templates, embedded in the binary.
//!
//! Each template is a directory of files (a `config.yaml` plus data and an
//! optional layout) that [`scaffold`] copies into a fresh project directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

pub const CONFIG_FILE: &str = "config.yaml";

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TemplateInfo {
    pub id: &'static str,
    pub title: &'static str,
    pub description: &'static str,
    #[serde(skip)]
    files: &'static [(&'static str, &'static str)],
}

impl TemplateInfo {
    /// `(relative path, contents)` pairs.
    pub fn files(&self) -> &'static [(&'static str, &'static str)] {
        self.files
    }

    pub fn config_yaml(&self) -> &'static str {
        self.file(CONFIG_FILE).expect("every template has a config")
    }

    pub fn file(&self, name: &str) -> Option<&'static str> {
        self.files.iter().find(|(n, _)| *n == name).map(|(_, c)| *c)
    }
}

macro_rules! files {
    ($dir:literal: $($name:literal),+) => {
        &[$(($name, include_str!(concat!("../templates/", $dir, "/", $name)))),+]
    };
}

static TEMPLATES: &[TemplateInfo] = &[
    TemplateInfo {
        id: "likert",
        title: "Likert ratings",
        description: "Five-point rating of short texts, with consent, demographics and feedback surveys",
        files: files!("likert": "config.yaml", "data.csv"),
    },
    TemplateInfo {
        id: "free_text",
        title: "Text box",
        description: "Open-ended written responses",
        files: files!("free_text": "config.yaml", "data.tsv"),
    },
    TemplateInfo {
        id: "best_worst",
        title: "Best-worst scaling",
        description: "Pick the best and worst item of each tuple",
        files: files!("best_worst": "config.yaml", "data.jsonl"),
    },
    TemplateInfo {
        id: "multiselect_multitask",
        title: "Text categorization",
        description: "Multiselect, radio and dropdown schemes on one page, ordered by active learning",
        files: files!("multiselect_multitask": "config.yaml", "data.jsonl"),
    },
    TemplateInfo {
        id: "image_rating",
        title: "Image rating",
        description: "Rate images shown from URLs, paths or data URIs",
        files: files!("image_rating": "config.yaml", "data.jsonl"),
    },
    TemplateInfo {
        id: "pairwise",
        title: "Pairwise comparison",
        description: "Two texts side by side in a custom layout",
        files: files!("pairwise": "config.yaml", "data.csv", "layout.html"),
    },
    TemplateInfo {
        id: "span_dialogue",
        title: "Span labelling in dialogue",
        description: "Label character spans inside dialogue turns",
        files: files!("span_dialogue": "config.yaml", "data.jsonl"),
    },
    TemplateInfo {
        id: "task1_long_doc",
        title: "Life transitions, long documents",
        description: "22 work and housing labels over long narratives with keyword highlighting",
        files: files!("task1_long_doc": "config.yaml", "data.jsonl"),
    },
    TemplateInfo {
        id: "task2_short_doc",
        title: "Life transitions, single sentences",
        description: "The same 22 labels over single sentences; includes scripted wizard answers",
        files: files!("task2_short_doc": "config.yaml", "data.jsonl", "wizard_answers.txt"),
    },
];

pub fn list_templates() -> &'static [TemplateInfo] {
    TEMPLATES
}

pub fn template(id: &str) -> Result<&'static TemplateInfo> {
    TEMPLATES
        .iter()
        .find(|t| t.id == id)
        .ok_or_else(|| Error::UnknownTemplate(id.to_string()))
}

/// Writes a template's files into `out_dir` and returns the config path.
/// Refuses to overwrite existing files.
pub fn scaffold(id: &str, out_dir: &Path) -> Result<PathBuf> {
    let t = template(id)?;
    for (name, _) in t.files() {
        let p = out_dir.join(name);
        if p.exists() {
            return Err(Error::Conflict(format!("{} already exists", p.display())));
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (name, contents) in t.files() {
        let p = out_dir.join(name);
        fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
    }
    Ok(out_dir.join(CONFIG_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::load_config;
    use crate::scheme::SchemeKind;

    #[test]
    fn ids_unique_and_known() {
        let mut ids: Vec<_> = list_templates().iter().map(|t| t.id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 9);
        assert!(matches!(template("nope"), Err(Error::UnknownTemplate(_))));
    }

    #[test]
    fn every_template_loads() {
        for t in list_templates() {
            let dir = tempfile::tempdir().unwrap();
            let cfg = scaffold(t.id, dir.path()).unwrap();
            let config = load_config(&cfg).unwrap_or_else(|e| panic!("{}: {e}", t.id));
            let instances = crate::data::load_instances(&config).unwrap_or_else(|e| panic!("{}: {e}", t.id));
            assert!(instances.len() >= 3, "{}", t.id);
        }
    }

    #[test]
    fn likert_has_one_likert_scheme() {
        let dir = tempfile::tempdir().unwrap();
        let config = load_config(scaffold("likert", dir.path()).unwrap()).unwrap();
        assert_eq!(config.schemes.len(), 1);
        assert_eq!(config.schemes[0].kind, SchemeKind::Likert);
    }

    #[test]
    fn scaffold_refuses_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        scaffold("free_text", dir.path()).unwrap();
        assert!(matches!(scaffold("free_text", dir.path()), Err(Error::Conflict(_))));
    }

    #[test]
    fn life_transition_tasks_shape() {
        for id in ["task1_long_doc", "task2_short_doc"] {
            let dir = tempfile::tempdir().unwrap();
            let config = load_config(scaffold(id, dir.path()).unwrap()).unwrap();
            let labels: usize = config.schemes.iter().map(|s| s.options.len()).sum();
            assert_eq!(labels, 22);
            let keys: std::collections::HashSet<_> =
                config.schemes.iter().flat_map(|s| &s.options).filter_map(|o| o.key.clone()).collect();
            assert_eq!(keys.len(), 22);
            assert!(config.schemes.iter().flat_map(|s| &s.options).all(|o| o.tooltip.is_some()));
            let h = config.highlight_config.as_ref().unwrap();
            assert_eq!(h.pattern_count(), 118);
            let all: Vec<_> = h.keyword_groups.values().flatten().collect();
            for p in ["retir*", "layoff", "work*"] {
                assert!(all.iter().any(|q| q.as_str() == p), "{p}");
            }
        }
    }
}
