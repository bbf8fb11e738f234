//! Keyword-triggered highlights plus seeded decoys.

use indexmap::IndexMap;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::HighlightConfig;
use crate::data::{DocumentKind, Instance};
use crate::tokenize::{tokenize, Token};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeywordPattern {
    Literal(String),
    Prefix(String),
}

impl KeywordPattern {
    /// Accepts a single token, optionally ending in `*`. Anything else
    /// (whitespace, regex syntax, inner `*`) is rejected.
    pub fn parse(pattern: &str) -> Result<Self, String> {
        let (body, prefix) = match pattern.strip_suffix('*') {
            Some(b) => (b, true),
            None => (pattern, false),
        };
        if body.is_empty() {
            return Err(format!("keyword pattern {pattern:?} is empty"));
        }
        if !body.chars().all(char::is_alphanumeric) {
            return Err(format!(
                "keyword pattern {pattern:?} must be a single word with an optional trailing *"
            ));
        }
        let body = body.to_lowercase();
        Ok(if prefix {
            KeywordPattern::Prefix(body)
        } else {
            KeywordPattern::Literal(body)
        })
    }

    pub fn matches(&self, token: &str) -> bool {
        match self {
            KeywordPattern::Literal(w) => token == w,
            KeywordPattern::Prefix(p) => token.starts_with(p.as_str()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HighlightSource {
    Keyword,
    Decoy,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HighlightSpan {
    pub document_index: usize,
    pub start: usize,
    pub end: usize,
    pub source: HighlightSource,
    /// Matching keyword group; `None` for decoys.
    pub group: Option<String>,
}

fn compile(groups: &IndexMap<String, Vec<String>>) -> Vec<(&str, Vec<KeywordPattern>)> {
    groups
        .iter()
        .map(|(g, ps)| {
            (
                g.as_str(),
                ps.iter().filter_map(|p| KeywordPattern::parse(p).ok()).collect(),
            )
        })
        .collect()
}

fn keyword_spans(tokens: &[Token], groups: &IndexMap<String, Vec<String>>, document_index: usize) -> Vec<HighlightSpan> {
    let compiled = compile(groups);
    let mut out = Vec::new();
    for tok in tokens {
        for (group, patterns) in &compiled {
            if patterns.iter().any(|p| p.matches(&tok.text)) {
                out.push(HighlightSpan {
                    document_index,
                    start: tok.start,
                    end: tok.end,
                    source: HighlightSource::Keyword,
                    group: Some(group.to_string()),
                });
            }
        }
    }
    out
}

/// Case-insensitive whole-token matching. A token matched by several patterns
/// of one group yields one span for that group; each matching group gets its own.
pub fn match_keywords(text: &str, keyword_groups: &IndexMap<String, Vec<String>>) -> Vec<HighlightSpan> {
    keyword_spans(&tokenize(text), keyword_groups, 0)
}

/// Adds `round(decoy_rate * candidates)` decoys drawn uniformly from tokens not
/// covered by a keyword span. Returns the keyword spans followed by decoys, sorted.
pub fn add_decoys(text: &str, keyword_spans: &[HighlightSpan], decoy_rate: f64, seed: u64) -> Vec<HighlightSpan> {
    let document_index = keyword_spans.first().map(|s| s.document_index).unwrap_or(0);
    decoys_for_tokens(&tokenize(text), keyword_spans, decoy_rate, seed, document_index)
}

fn decoys_for_tokens(
    tokens: &[Token],
    keyword_spans: &[HighlightSpan],
    decoy_rate: f64,
    seed: u64,
    document_index: usize,
) -> Vec<HighlightSpan> {
    let mut out = keyword_spans.to_vec();
    let candidates: Vec<&Token> = tokens
        .iter()
        .filter(|t| {
            !keyword_spans
                .iter()
                .any(|s| s.document_index == document_index && s.start < t.end && t.start < s.end)
        })
        .collect();
    let count = decoy_count(decoy_rate, candidates.len());
    if count > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in sample(&mut rng, candidates.len(), count) {
            let t = candidates[i];
            out.push(HighlightSpan {
                document_index,
                start: t.start,
                end: t.end,
                source: HighlightSource::Decoy,
                group: None,
            });
        }
    }
    out.sort();
    out
}

pub fn decoy_count(rate: f64, candidates: usize) -> usize {
    ((rate * candidates as f64).round() as usize).min(candidates)
}

/// Stable per-(user, instance) seed so re-renders do not reshuffle decoys.
pub fn decoy_seed(user_id: &str, instance_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(user_id.as_bytes());
    h.update([0u8]);
    h.update(instance_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Highlights for every text document of an instance.
pub fn highlight_instance(config: &HighlightConfig, instance: &Instance, seed: u64) -> Vec<HighlightSpan> {
    let mut out = Vec::new();
    for (i, (_, doc)) in instance.documents().into_iter().enumerate() {
        if doc.kind != DocumentKind::Text {
            continue;
        }
        let tokens = tokenize(&doc.payload);
        let kw = keyword_spans(&tokens, &config.keyword_groups, i);
        let doc_seed = seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        out.extend(decoys_for_tokens(&tokens, &kw, config.decoy_rate, doc_seed, i));
    }
    out
}

/// The group a span is painted with. Decoys borrow a group chosen from the
/// span position so they look exactly like keyword highlights.
pub fn display_group(span: &HighlightSpan, groups: &IndexMap<String, Vec<String>>, seed: u64) -> String {
    if let Some(g) = &span.group {
        return g.clone();
    }
    if groups.is_empty() {
        return String::new();
    }
    let mix = seed
        ^ (span.document_index as u64).rotate_left(32)
        ^ (span.start as u64).wrapping_mul(0x2545_F491_4F6C_DD1D);
    let idx = (mix % groups.len() as u64) as usize;
    groups.get_index(idx).map(|(g, _)| g.clone()).unwrap_or_default()
}
