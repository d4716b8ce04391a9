//! Patent data model and the line-delimited corpus format.
//!
//! A corpus file holds one JSON object per line, each tagged with a `kind`
//! of either `"patent"` or `"citation"`. A sidecar manifest next to the file
//! (`<stem>.manifest.json`) carries the reference date and record counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lang;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("duplicate doc_id {0}")]
    DuplicateDocId(String),
    #[error("citation citing_id {0} does not resolve to a document in the corpus")]
    UnresolvedCiting(String),
    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("unknown doc_id {0}")]
    NotFound(String),
}

/// One patent publication.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatentDocument {
    pub doc_id: String,
    pub jurisdiction: String,
    pub language: String,
    pub ipc_codes: Vec<String>,
    pub filing_date: NaiveDate,
    pub family_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub claims: String,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CitationCategory {
    X,
    Y,
    A,
    Other,
}

impl fmt::Display for CitationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CitationCategory::X => "X",
            CitationCategory::Y => "Y",
            CitationCategory::A => "A",
            CitationCategory::Other => "OTHER",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CitationSource {
    Examiner,
    FamilyDerived,
}

impl fmt::Display for CitationSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CitationSource::Examiner => "EXAMINER",
            CitationSource::FamilyDerived => "FAMILY_DERIVED",
        })
    }
}

/// A citation edge from `citing_id` to `cited_id`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CitationRecord {
    pub citing_id: String,
    pub cited_id: String,
    pub category: CitationCategory,
    pub source: CitationSource,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Patent(PatentDocument),
    Citation(CitationRecord),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub reference_date: NaiveDate,
    pub doc_count: usize,
    pub citation_count: usize,
}

/// Primary IPC section (the leading letter of the first-listed code).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IpcSection {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    Unclassified,
}

impl IpcSection {
    pub fn from_letter(c: char) -> IpcSection {
        match c {
            'A' => IpcSection::A,
            'B' => IpcSection::B,
            'C' => IpcSection::C,
            'D' => IpcSection::D,
            'E' => IpcSection::E,
            'F' => IpcSection::F,
            'G' => IpcSection::G,
            'H' => IpcSection::H,
            _ => IpcSection::Unclassified,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            IpcSection::A => "A",
            IpcSection::B => "B",
            IpcSection::C => "C",
            IpcSection::D => "D",
            IpcSection::E => "E",
            IpcSection::F => "F",
            IpcSection::G => "G",
            IpcSection::H => "H",
            IpcSection::Unclassified => "unclassified",
        }
    }
}

impl fmt::Display for IpcSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Returns the section of the first-listed IPC code, or `Unclassified` when
/// there is none (or it does not start with a section letter).
pub fn ipc_section_of(doc: &PatentDocument) -> IpcSection {
    doc.ipc_codes
        .first()
        .and_then(|code| code.trim().chars().next())
        .map(IpcSection::from_letter)
        .unwrap_or(IpcSection::Unclassified)
}

/// IPC class (section + two digits, e.g. `G06`) of the first-listed code.
pub fn ipc_class_of(doc: &PatentDocument) -> String {
    let Some(code) = doc.ipc_codes.first() else {
        return IpcSection::Unclassified.to_string();
    };
    let code = code.trim();
    let head: Vec<char> = code.chars().take(3).collect();
    match head.as_slice() {
        [s, d1, d2] if ('A'..='H').contains(s) && d1.is_ascii_digit() && d2.is_ascii_digit() => {
            head.iter().collect()
        }
        _ => IpcSection::Unclassified.to_string(),
    }
}

/// Well-formed IPC symbol: section letter, optionally followed by class,
/// subclass and group (`G06F 16/35`).
pub fn is_well_formed_ipc(code: &str) -> bool {
    let code = code.trim();
    let mut chars = code.chars();
    match chars.next() {
        Some('A'..='H') => {}
        _ => return false,
    }
    let rest: String = chars.collect();
    if rest.is_empty() {
        return true;
    }
    let rest = rest.as_bytes();
    if rest.len() < 2 || !rest[0].is_ascii_digit() || !rest[1].is_ascii_digit() {
        return false;
    }
    let rest = &rest[2..];
    if rest.is_empty() {
        return true;
    }
    if !rest[0].is_ascii_uppercase() {
        return false;
    }
    let group = std::str::from_utf8(&rest[1..]).unwrap_or("").trim();
    if group.is_empty() {
        return true;
    }
    let mut parts = group.splitn(2, '/');
    let main = parts.next().unwrap_or("");
    let sub = parts.next();
    let digits = |s: &str| !s.is_empty() && s.len() <= 6 && s.bytes().all(|b| b.is_ascii_digit());
    digits(main) && sub.is_none_or(digits)
}

/// An immutable patent corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    documents: BTreeMap<String, PatentDocument>,
    citations: Vec<CitationRecord>,
    reference_date: NaiveDate,
    families: BTreeMap<String, Vec<String>>,
}

impl Corpus {
    /// Builds a corpus, enforcing unique doc ids and resolvable citing ends.
    /// Citations are stored in canonical (sorted) order.
    pub fn new(
        documents: Vec<PatentDocument>,
        mut citations: Vec<CitationRecord>,
        reference_date: NaiveDate,
    ) -> Result<Corpus, CorpusError> {
        let mut by_id = BTreeMap::new();
        for doc in documents {
            if by_id.contains_key(&doc.doc_id) {
                return Err(CorpusError::DuplicateDocId(doc.doc_id));
            }
            by_id.insert(doc.doc_id.clone(), doc);
        }
        if let Some(bad) = citations.iter().find(|c| !by_id.contains_key(&c.citing_id)) {
            return Err(CorpusError::UnresolvedCiting(bad.citing_id.clone()));
        }
        citations.sort();
        let mut families: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for doc in by_id.values() {
            families
                .entry(doc.family_id.clone())
                .or_default()
                .push(doc.doc_id.clone());
        }
        Ok(Corpus {
            documents: by_id,
            citations,
            reference_date,
            families,
        })
    }

    pub fn documents(&self) -> impl Iterator<Item = &PatentDocument> {
        self.documents.values()
    }

    pub fn get(&self, doc_id: &str) -> Option<&PatentDocument> {
        self.documents.get(doc_id)
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.documents.contains_key(doc_id)
    }

    pub fn citations(&self) -> &[CitationRecord] {
        &self.citations
    }

    pub fn reference_date(&self) -> NaiveDate {
        self.reference_date
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Family groups keyed by family id; members sorted by doc id.
    pub fn families(&self) -> &BTreeMap<String, Vec<String>> {
        &self.families
    }

    /// doc_id → family_id for every document.
    pub fn family_map(&self) -> BTreeMap<String, String> {
        self.documents
            .values()
            .map(|d| (d.doc_id.clone(), d.family_id.clone()))
            .collect()
    }

    pub fn manifest(&self) -> CorpusManifest {
        CorpusManifest {
            reference_date: self.reference_date,
            doc_count: self.documents.len(),
            citation_count: self.citations.len(),
        }
    }

    /// Hex SHA-256 over the canonical serialization (reference date, then
    /// the exact bytes `write_corpus` produces).
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.reference_date.to_string().as_bytes());
        hasher.update(b"\n");
        hasher.update(self.to_jsonl().as_bytes());
        hex::encode(hasher.finalize())
    }

    fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for doc in self.documents.values() {
            let line = serde_json::to_string(&Record::Patent(doc.clone()))
                .expect("patent records always serialize");
            out.push_str(&line);
            out.push('\n');
        }
        for c in &self.citations {
            let line = serde_json::to_string(&Record::Citation(c.clone()))
                .expect("citation records always serialize");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// Returns the family members of `doc_id` (excluding itself), ordered by doc id.
pub fn family_members<'a>(
    corpus: &'a Corpus,
    doc_id: &str,
) -> Result<Vec<&'a PatentDocument>, CorpusError> {
    let doc = corpus
        .get(doc_id)
        .ok_or_else(|| CorpusError::NotFound(doc_id.to_string()))?;
    Ok(corpus
        .families
        .get(&doc.family_id)
        .into_iter()
        .flatten()
        .filter(|id| id.as_str() != doc_id)
        .filter_map(|id| corpus.get(id))
        .collect())
}

/// Sidecar manifest path: `corpus.jsonl` → `corpus.manifest.json`.
pub fn manifest_path_for(path: &Path) -> PathBuf {
    path.with_extension("manifest.json")
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Skip malformed lines (recording them) instead of failing.
    pub lenient: bool,
    /// Overrides the sidecar manifest's reference date; also allows loading
    /// a corpus without a manifest.
    pub reference_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    /// (1-based line number, reason) for every skipped line.
    pub skipped: Vec<(usize, String)>,
    pub manifest_mismatch: Option<String>,
}

pub fn load_corpus(path: &Path, opts: &LoadOptions) -> Result<(Corpus, LoadReport), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let manifest_path = manifest_path_for(path);
    let manifest: Option<CorpusManifest> = match fs::read_to_string(&manifest_path) {
        Ok(text) => Some(serde_json::from_str(&text).map_err(|e| CorpusError::Manifest {
            path: manifest_path.clone(),
            reason: e.to_string(),
        })?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(source) => {
            return Err(CorpusError::Io {
                path: manifest_path,
                source,
            })
        }
    };
    let reference_date = opts
        .reference_date
        .or(manifest.as_ref().map(|m| m.reference_date))
        .ok_or_else(|| CorpusError::Manifest {
            path: manifest_path.clone(),
            reason: "missing manifest and no reference date given".into(),
        })?;

    let file = fs::File::open(path).map_err(io_err)?;
    let mut report = LoadReport::default();
    let mut docs = Vec::new();
    let mut citations = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Record>(&line)
            .map_err(|e| e.to_string())
            .and_then(check_record);
        match parsed {
            Ok(Record::Patent(doc)) => {
                if !seen.insert(doc.doc_id.clone()) {
                    return Err(CorpusError::DuplicateDocId(doc.doc_id));
                }
                docs.push(doc);
            }
            Ok(Record::Citation(c)) => citations.push((line_no, c)),
            Err(reason) if opts.lenient => report.skipped.push((line_no, reason)),
            Err(reason) => return Err(CorpusError::Malformed { line: line_no, reason }),
        }
    }

    let mut resolved = Vec::with_capacity(citations.len());
    for (line_no, c) in citations {
        if seen.contains(&c.citing_id) {
            resolved.push(c);
        } else if opts.lenient {
            report
                .skipped
                .push((line_no, format!("citing_id {} not in corpus", c.citing_id)));
        } else {
            return Err(CorpusError::UnresolvedCiting(c.citing_id));
        }
    }

    let corpus = Corpus::new(docs, resolved, reference_date)?;
    if let Some(m) = manifest {
        let actual = corpus.manifest();
        if m.doc_count != actual.doc_count || m.citation_count != actual.citation_count {
            let msg = format!(
                "manifest counts (docs {}, citations {}) differ from loaded (docs {}, citations {})",
                m.doc_count, m.citation_count, actual.doc_count, actual.citation_count
            );
            if !opts.lenient {
                return Err(CorpusError::Manifest {
                    path: manifest_path,
                    reason: msg,
                });
            }
            report.manifest_mismatch = Some(msg);
        }
    }
    Ok((corpus, report))
}

fn check_record(record: Record) -> Result<Record, String> {
    match &record {
        Record::Patent(doc) if doc.doc_id.trim().is_empty() => Err("empty doc_id".into()),
        Record::Citation(c) if c.citing_id == c.cited_id => {
            Err(format!("citation of {} to itself", c.citing_id))
        }
        Record::Citation(c) if c.citing_id.is_empty() || c.cited_id.is_empty() => {
            Err("citation with empty id".into())
        }
        _ => Ok(record),
    }
}

/// Writes the corpus file and its sidecar manifest.
pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Io { path, source }
    };
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(corpus.to_jsonl().as_bytes())
        .map_err(io_err(path))?;
    let manifest_path = manifest_path_for(path);
    let mut text = serde_json::to_string_pretty(&corpus.manifest()).expect("manifest serializes");
    text.push('\n');
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub doc_count: usize,
    pub citation_count: usize,
    pub dangling_citations: Vec<CitationRecord>,
    pub malformed_docs: Vec<(String, String)>,
    pub empty_sections: Vec<(String, String)>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.dangling_citations.is_empty()
            && self.malformed_docs.is_empty()
            && self.empty_sections.is_empty()
    }

    pub fn defect_count(&self) -> usize {
        self.dangling_citations.len() + self.malformed_docs.len() + self.empty_sections.len()
    }
}

/// Inspects the corpus for dangling citations, documents violating the
/// document invariants, and empty required sections.
pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut report = ValidationReport {
        doc_count: corpus.len(),
        citation_count: corpus.citations().len(),
        ..Default::default()
    };
    for c in corpus.citations() {
        if !corpus.contains(&c.cited_id) {
            report.dangling_citations.push(c.clone());
        }
    }
    for doc in corpus.documents() {
        for code in &doc.ipc_codes {
            if !is_well_formed_ipc(code) {
                report
                    .malformed_docs
                    .push((doc.doc_id.clone(), format!("malformed IPC code {code:?}")));
            }
        }
        if !lang::is_iso639_1(&doc.language) {
            report.malformed_docs.push((
                doc.doc_id.clone(),
                format!("unrecognized language code {:?}", doc.language),
            ));
        }
        if doc.filing_date > corpus.reference_date() {
            report.malformed_docs.push((
                doc.doc_id.clone(),
                format!(
                    "filing date {} after reference date {}",
                    doc.filing_date,
                    corpus.reference_date()
                ),
            ));
        }
        if doc.description.trim().is_empty() {
            report
                .empty_sections
                .push((doc.doc_id.clone(), "description".into()));
        }
        if doc.claims.trim().is_empty() {
            report
                .empty_sections
                .push((doc.doc_id.clone(), "claims".into()));
        }
    }
    report
}
