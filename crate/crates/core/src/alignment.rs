//! Technical-alignment scoring between family members.
//!
//! The default backend is a character 3-gram Jaccard proxy over
//! claims + description. Other backends (precomputed tables, scoring
//! services) plug in through [`AlignmentScorer`].

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PatentDocument;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("alignment score undefined: both {0} and {1} have empty claims and description")]
    Undefined(String, String),
    #[error("no alignment score for pair ({0}, {1})")]
    MissingPair(String, String),
    #[error("alignment score {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("scoring backend failed: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentScore {
    value: f64,
    scorer_id: String,
}

impl AlignmentScore {
    pub fn new(value: f64, scorer_id: impl Into<String>) -> Result<Self, ScoreError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(ScoreError::OutOfRange(value));
        }
        Ok(AlignmentScore {
            value,
            scorer_id: scorer_id.into(),
        })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn scorer_id(&self) -> &str {
        &self.scorer_id
    }
}

pub trait AlignmentScorer: Send + Sync {
    fn scorer_id(&self) -> &str;

    fn score(&self, a: &PatentDocument, b: &PatentDocument) -> Result<AlignmentScore, ScoreError>;
}

/// Multiset Jaccard over character 3-grams of lowercased,
/// whitespace-normalized `claims + " " + description`.
#[derive(Debug, Clone, Default)]
pub struct TrigramJaccard;

pub const TRIGRAM_JACCARD_ID: &str = "trigram-jaccard-v1";

fn alignment_text(doc: &PatentDocument) -> String {
    let joined = format!("{} {}", doc.claims, doc.description);
    joined
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Character 3-gram counts. Texts shorter than three characters count as a
/// single gram.
pub fn trigram_counts(text: &str) -> HashMap<String, usize> {
    let chars: Vec<char> = text.chars().collect();
    let mut counts = HashMap::new();
    if chars.is_empty() {
        return counts;
    }
    if chars.len() < 3 {
        counts.insert(text.to_string(), 1);
        return counts;
    }
    for w in chars.windows(3) {
        *counts.entry(w.iter().collect::<String>()).or_insert(0) += 1;
    }
    counts
}

pub fn multiset_jaccard(a: &HashMap<String, usize>, b: &HashMap<String, usize>) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for (gram, &ca) in a {
        let cb = b.get(gram).copied().unwrap_or(0);
        inter += ca.min(cb);
        union += ca.max(cb);
    }
    for (gram, &cb) in b {
        if !a.contains_key(gram) {
            union += cb;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

impl AlignmentScorer for TrigramJaccard {
    fn scorer_id(&self) -> &str {
        TRIGRAM_JACCARD_ID
    }

    fn score(&self, a: &PatentDocument, b: &PatentDocument) -> Result<AlignmentScore, ScoreError> {
        let (ta, tb) = (alignment_text(a), alignment_text(b));
        if ta.is_empty() && tb.is_empty() {
            return Err(ScoreError::Undefined(a.doc_id.clone(), b.doc_id.clone()));
        }
        let value = multiset_jaccard(&trigram_counts(&ta), &trigram_counts(&tb));
        AlignmentScore::new(value, TRIGRAM_JACCARD_ID)
    }
}

/// Scores looked up from a table of unordered doc-id pairs, e.g. the output
/// of an external alignment model.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedScorer {
    id: String,
    scores: BTreeMap<(String, String), f64>,
}

impl PrecomputedScorer {
    pub fn new(id: impl Into<String>) -> Self {
        PrecomputedScorer {
            id: id.into(),
            scores: BTreeMap::new(),
        }
    }

    fn key(a: &str, b: &str) -> (String, String) {
        if a <= b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        }
    }

    pub fn insert(&mut self, a: &str, b: &str, value: f64) -> Result<(), ScoreError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(ScoreError::OutOfRange(value));
        }
        self.scores.insert(Self::key(a, b), value);
        Ok(())
    }

    pub fn with(mut self, a: &str, b: &str, value: f64) -> Self {
        self.insert(a, b, value).expect("score in range");
        self
    }
}

impl AlignmentScorer for PrecomputedScorer {
    fn scorer_id(&self) -> &str {
        &self.id
    }

    fn score(&self, a: &PatentDocument, b: &PatentDocument) -> Result<AlignmentScore, ScoreError> {
        let value = self
            .scores
            .get(&Self::key(&a.doc_id, &b.doc_id))
            .ok_or_else(|| ScoreError::MissingPair(a.doc_id.clone(), b.doc_id.clone()))?;
        AlignmentScore::new(*value, self.id.clone())
    }
}
