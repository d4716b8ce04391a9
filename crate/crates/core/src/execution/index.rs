//! Built-in lexical reference retriever.
//!
//! Scoring, for query q and document d:
//!
//! ```text
//! idf(t)     = ln(1 + N / df(t))
//! score(q,d) = Σ_{t ∈ q ∩ d} (1 + ln qtf(t)) · (1 + ln tf(t,d)) · idf(t)² / sqrt(|d|)
//! ```
//!
//! where N is the number of indexed documents and |d| the token count of d.
//! Terms are summed in lexicographic order so scores are bit-reproducible.
//! Ranking is by descending score, ties by ascending doc id; documents with
//! score 0 are not returned.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::corpus::{Corpus, PatentDocument};
use crate::query::{Query, QueryError};

use super::{
    standardize_results, AdapterError, RankedList, RawHit, RawOutput, RunControls, SystemAdapter,
    REFERENCE_ADAPTER_ID,
};

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2A6DF | 0x2A700..=0x2EBEF)
}

/// Lowercased alphanumeric words; every CJK ideograph is its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if is_cjk(c) {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            tokens.push(c.to_string());
        } else if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
        } else if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

fn index_text(doc: &PatentDocument) -> String {
    format!(
        "{} {} {} {}",
        doc.title, doc.abstract_text, doc.claims, doc.description
    )
}

fn term_counts(tokens: Vec<String>) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t).or_insert(0) += 1;
    }
    counts
}

/// Inverted term → postings index over title, abstract, claims and
/// description.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferenceIndex {
    doc_ids: Vec<String>,
    doc_lens: Vec<u32>,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

impl ReferenceIndex {
    pub fn build(corpus: &Corpus) -> ReferenceIndex {
        let mut index = ReferenceIndex::default();
        for (i, doc) in corpus.documents().enumerate() {
            let tokens = tokenize(&index_text(doc));
            index.doc_ids.push(doc.doc_id.clone());
            index.doc_lens.push(tokens.len() as u32);
            for (term, tf) in term_counts(tokens) {
                index.postings.entry(term).or_default().push((i as u32, tf));
            }
        }
        index
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    /// Total number of (term, document) postings.
    pub fn total_postings(&self) -> usize {
        self.postings.values().map(Vec::len).sum()
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn postings(&self, term: &str) -> Option<impl Iterator<Item = (&str, u32)>> {
        self.postings
            .get(term)
            .map(|p| p.iter().map(|(d, tf)| (self.doc_ids[*d as usize].as_str(), *tf)))
    }

    /// Scores every document sharing a term with `text`, best first.
    pub fn search(&self, text: &str) -> Vec<(&str, f64)> {
        let n = self.doc_ids.len() as f64;
        let mut acc = vec![0.0f64; self.doc_ids.len()];
        let mut touched = BTreeSet::new();
        for (term, qtf) in term_counts(tokenize(text)) {
            let Some(list) = self.postings.get(&term) else { continue };
            let idf = (1.0 + n / list.len() as f64).ln();
            let wq = 1.0 + (qtf as f64).ln();
            for &(d, tf) in list {
                acc[d as usize] += wq * (1.0 + (tf as f64).ln()) * idf * idf;
                touched.insert(d);
            }
        }
        let mut scored: Vec<(&str, f64)> = touched
            .into_iter()
            .map(|d| {
                let len = self.doc_lens[d as usize].max(1) as f64;
                (self.doc_ids[d as usize].as_str(), acc[d as usize] / len.sqrt())
            })
            .filter(|(_, s)| *s > 0.0)
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        scored
    }
}

fn excluded_ids(corpus: &Corpus, query_id: &str, exclude_family: bool) -> BTreeSet<String> {
    let mut out = BTreeSet::from([query_id.to_string()]);
    if exclude_family {
        if let Some(doc) = corpus.get(query_id) {
            out.extend(corpus.families().get(&doc.family_id).into_iter().flatten().cloned());
        }
    }
    out
}

fn retrieve_raw(
    index: &ReferenceIndex,
    corpus: &Corpus,
    query: &Query,
    max_depth: usize,
    exclude_family: bool,
) -> Result<RawOutput, QueryError> {
    if query.text.trim().is_empty() {
        return Err(QueryError::EmptyInput(format!("query {}", query.query_id)));
    }
    let excluded = excluded_ids(corpus, &query.query_id, exclude_family);
    let hits = index
        .search(&query.text)
        .into_iter()
        .filter(|(id, _)| !excluded.contains(*id))
        .take(max_depth)
        .enumerate()
        .map(|(i, (id, score))| RawHit {
            id: id.to_string(),
            score: Some(score),
            rank: Some(i + 1),
        })
        .collect();
    Ok(RawOutput { hits })
}

/// Ranks corpus documents for `query`, excluding the query document itself
/// and, when `exclude_family` is set, its family members.
pub fn reference_retrieve(
    query: &Query,
    corpus: &Corpus,
    index: &ReferenceIndex,
    max_depth: usize,
    exclude_family: bool,
) -> Result<RankedList, QueryError> {
    let raw = retrieve_raw(index, corpus, query, max_depth, exclude_family)?;
    Ok(standardize_results(&query.query_id, &raw, max_depth))
}

/// [`SystemAdapter`] over the in-process reference retriever.
#[derive(Debug, Clone)]
pub struct ReferenceAdapter {
    corpus: Arc<Corpus>,
    index: Arc<ReferenceIndex>,
    exclude_family: bool,
}

impl ReferenceAdapter {
    pub fn new(corpus: Arc<Corpus>, exclude_family: bool) -> Self {
        let index = Arc::new(ReferenceIndex::build(&corpus));
        ReferenceAdapter {
            corpus,
            index,
            exclude_family,
        }
    }

    pub fn index(&self) -> &ReferenceIndex {
        &self.index
    }
}

impl SystemAdapter for ReferenceAdapter {
    fn adapter_id(&self) -> &str {
        REFERENCE_ADAPTER_ID
    }

    fn search(&self, query: &Query, controls: &RunControls) -> Result<RawOutput, AdapterError> {
        retrieve_raw(
            &self.index,
            &self.corpus,
            query,
            controls.max_depth,
            self.exclude_family,
        )
        .map_err(|e| AdapterError::Failed(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::doc;
    use chrono::NaiveDate;

    fn text_doc(id: &str, family: &str, text: &str) -> PatentDocument {
        let mut d = doc(id, family);
        d.title = String::new();
        d.abstract_text = String::new();
        d.claims = String::new();
        d.description = text.into();
        d
    }

    fn corpus(docs: Vec<PatentDocument>) -> Corpus {
        Corpus::new(docs, vec![], NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()).unwrap()
    }

    fn query(id: &str, text: &str) -> Query {
        Query {
            query_id: id.into(),
            text: text.into(),
            language: "en".into(),
            char_length: text.chars().count(),
            truncated: false,
        }
    }

    #[test]
    fn tokenizer_splits_words_and_ideographs() {
        assert_eq!(tokenize("A rotor-pump, 2 stages!"), ["a", "rotor", "pump", "2", "stages"]);
        assert_eq!(tokenize("泵的转子rotor"), ["泵", "的", "转", "子", "rotor"]);
        assert!(tokenize(" .,; ").is_empty());
    }

    #[test]
    fn empty_corpus_gives_empty_index() {
        let idx = ReferenceIndex::build(&corpus(vec![]));
        assert_eq!(idx.num_docs(), 0);
        assert_eq!(idx.total_postings(), 0);
    }

    #[test]
    fn two_doc_postings() {
        let c = corpus(vec![text_doc("A", "a", "pump rotor pump"), text_doc("B", "b", "rotor valve")]);
        let idx = ReferenceIndex::build(&c);
        assert_eq!(idx.num_terms(), 3);
        assert_eq!(idx.total_postings(), 4);
        assert_eq!(idx.document_frequency("rotor"), 2);
        let pump: Vec<_> = idx.postings("pump").unwrap().collect();
        assert_eq!(pump, [("A", 2)]);
    }

    #[test]
    fn single_matching_document_ranks_first() {
        let c = corpus(vec![
            text_doc("Q", "q", "zebra quokka"),
            text_doc("A", "a", "unrelated words here"),
            text_doc("B", "b", "the quokka lives"),
            text_doc("C", "c", "more filler"),
        ]);
        let idx = ReferenceIndex::build(&c);
        let list = reference_retrieve(&query("Q", "quokka"), &c, &idx, 10, false).unwrap();
        let ids: Vec<_> = list.hits.iter().map(|h| h.doc_id.as_str()).collect();
        assert_eq!(ids, ["B"]);
    }

    #[test]
    fn ties_break_by_doc_id() {
        let c = corpus(vec![
            text_doc("D2", "a", "gear shaft"),
            text_doc("D1", "b", "gear shaft"),
            text_doc("D3", "c", "other"),
        ]);
        let idx = ReferenceIndex::build(&c);
        let list = reference_retrieve(&query("X", "gear"), &c, &idx, 10, false).unwrap();
        let ids: Vec<_> = list.hits.iter().map(|h| h.doc_id.as_str()).collect();
        assert_eq!(ids, ["D1", "D2"]);
        assert_eq!(list.hits[0].score, list.hits[1].score);
    }

    #[test]
    fn self_and_family_exclusion() {
        let c = corpus(vec![
            text_doc("CNQ", "f", "gear shaft"),
            text_doc("USQ", "f", "gear shaft"),
            text_doc("P1", "p", "gear"),
        ]);
        let idx = ReferenceIndex::build(&c);
        let q = query("CNQ", "gear shaft");
        let with_family = reference_retrieve(&q, &c, &idx, 10, false).unwrap();
        let ids: Vec<_> = with_family.hits.iter().map(|h| h.doc_id.as_str()).collect();
        assert_eq!(ids, ["USQ", "P1"]);
        let without = reference_retrieve(&q, &c, &idx, 10, true).unwrap();
        let ids: Vec<_> = without.hits.iter().map(|h| h.doc_id.as_str()).collect();
        assert_eq!(ids, ["P1"]);
        assert!(reference_retrieve(&query("CNQ", " "), &c, &idx, 10, true).is_err());
    }

    #[test]
    fn hand_computed_score() {
        // N = 2; "pump" df 1 -> idf ln 3; doc A tokens [pump, rotor, pump]
        // tf 2, len 3. Query "pump" qtf 1.
        let c = corpus(vec![text_doc("A", "a", "pump rotor pump"), text_doc("B", "b", "rotor valve")]);
        let idx = ReferenceIndex::build(&c);
        let hits = idx.search("pump");
        let idf = 3.0f64.ln();
        let expected = (1.0 + 2.0f64.ln()) * idf * idf / 3.0f64.sqrt();
        assert_eq!(hits, vec![("A", expected)]);
    }
}
