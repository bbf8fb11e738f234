use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::tokenize::tokenize;

/// Unigram and adjacent-bigram counts. Bigrams are joined with `_`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureVector(pub BTreeMap<String, u32>);

impl FeatureVector {
    pub fn get(&self, feature: &str) -> u32 {
        self.0.get(feature).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }
}

pub fn featurize(text: &str) -> FeatureVector {
    let tokens: Vec<String> = tokenize(text).into_iter().map(|t| t.text).collect();
    let mut counts = BTreeMap::new();
    for t in &tokens {
        *counts.entry(t.clone()).or_insert(0) += 1;
    }
    for pair in tokens.windows(2) {
        *counts.entry(format!("{}_{}", pair[0], pair[1])).or_insert(0) += 1;
    }
    FeatureVector(counts)
}

/// Sparse encoded example: `(column, value)` sorted by column.
pub type SparseRow = Vec<(usize, f64)>;

/// Feature-string to column mapping, fixed for one training round.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Columns are assigned in sorted term order, so the mapping does not
    /// depend on example order.
    pub fn fit<'a>(vectors: impl IntoIterator<Item = &'a FeatureVector>) -> Self {
        let mut terms: Vec<String> = vectors
            .into_iter()
            .flat_map(|v| v.0.keys().cloned())
            .collect();
        terms.sort();
        terms.dedup();
        Self::from_terms(terms)
    }

    pub fn from_terms(terms: Vec<String>) -> Self {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { terms, index }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn column(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Unknown features are dropped.
    pub fn encode(&self, v: &FeatureVector) -> SparseRow {
        let mut row: SparseRow = v
            .0
            .iter()
            .filter_map(|(t, c)| self.column(t).map(|i| (i, *c as f64)))
            .collect();
        row.sort_unstable_by_key(|(i, _)| *i);
        row
    }
}
