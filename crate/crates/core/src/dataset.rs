//! Relevance-labeled dataset construction from examiner and family-derived
//! X citations.
//!
//! Pipeline: [`extract_x_citations`] → [`augment_with_family_citations`] →
//! [`apply_quality_filters`] → [`assemble_dataset`]. [`build_dataset`] runs
//! all four steps and records a manifest sufficient to rebuild the output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Months, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::alignment::AlignmentScorer;
use crate::corpus::{
    ipc_class_of, ipc_section_of, CitationCategory, CitationSource, Corpus, PatentDocument,
};
use crate::sampling::{capped_allocation, AllocationError};

pub const DEFAULT_THRESHOLD: f64 = 0.90;
pub const DEFAULT_RECENCY_YEARS: u32 = 10;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error("sample size {requested} exceeds the {available} available cases")]
    SampleTooLarge { requested: usize, available: usize },
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset file line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("query {0} violates a dataset invariant: {1}")]
    Invariant(String, String),
}

/// A stratification dimension of the query set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Language,
    IpcSection,
    IpcClass,
    Jurisdiction,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Language,
        Dimension::IpcSection,
        Dimension::IpcClass,
        Dimension::Jurisdiction,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Dimension::Language => "language",
            Dimension::IpcSection => "ipc_section",
            Dimension::IpcClass => "ipc_class",
            Dimension::Jurisdiction => "jurisdiction",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "language" | "lang" => Ok(Dimension::Language),
            "ipc" | "ipc_section" | "section" => Ok(Dimension::IpcSection),
            "ipc_class" | "class" => Ok(Dimension::IpcClass),
            "jurisdiction" | "country" | "authority" => Ok(Dimension::Jurisdiction),
            other => Err(format!("unknown dimension {other:?}")),
        }
    }
}

/// Stratum labels of one query (taken from its main patent).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StratumLabels {
    pub language: String,
    pub ipc_section: String,
    pub ipc_class: String,
    pub jurisdiction: String,
}

impl StratumLabels {
    pub fn of(doc: &PatentDocument) -> Self {
        StratumLabels {
            language: doc.language.clone(),
            ipc_section: ipc_section_of(doc).to_string(),
            ipc_class: ipc_class_of(doc),
            jurisdiction: doc.jurisdiction.clone(),
        }
    }

    pub fn get(&self, dim: Dimension) -> &str {
        match dim {
            Dimension::Language => &self.language,
            Dimension::IpcSection => &self.ipc_section,
            Dimension::IpcClass => &self.ipc_class,
            Dimension::Jurisdiction => &self.jurisdiction,
        }
    }
}

/// For every patent with at least one in-corpus examiner X citation, the set
/// of cited ids.
pub fn extract_x_citations(corpus: &Corpus) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for c in corpus.citations() {
        if c.category == CitationCategory::X
            && c.source == CitationSource::Examiner
            && c.citing_id != c.cited_id
            && corpus.contains(&c.cited_id)
        {
            out.entry(c.citing_id.clone())
                .or_default()
                .insert(c.cited_id.clone());
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistributionProfile {
    pub citation_type_proportions: BTreeMap<String, f64>,
    pub language_counts_primary: BTreeMap<String, usize>,
    pub language_counts_cited: BTreeMap<String, usize>,
    pub jurisdiction_counts: BTreeMap<String, usize>,
    pub ipc_section_counts: BTreeMap<String, usize>,
    /// Fraction of citing patents with at least one X citation.
    pub x_patent_fraction: f64,
}

/// Profiles citation categories over all citation records, and languages /
/// jurisdictions / IPC sections over citing patents ("primary") and over the
/// distinct in-corpus X-cited documents.
pub fn profile_distributions(corpus: &Corpus) -> DistributionProfile {
    let mut profile = DistributionProfile::default();
    let mut category_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut citing: BTreeSet<&str> = BTreeSet::new();
    let mut x_citing: BTreeSet<&str> = BTreeSet::new();
    let mut x_cited: BTreeSet<&str> = BTreeSet::new();
    for c in corpus.citations() {
        *category_counts.entry(c.category.to_string()).or_default() += 1;
        citing.insert(&c.citing_id);
        if c.category == CitationCategory::X {
            x_citing.insert(&c.citing_id);
            if corpus.contains(&c.cited_id) {
                x_cited.insert(&c.cited_id);
            }
        }
    }
    let total: usize = category_counts.values().sum();
    profile.citation_type_proportions = category_counts
        .into_iter()
        .map(|(k, n)| (k, n as f64 / total as f64))
        .collect();
    for id in &citing {
        let doc = corpus.get(id).expect("citing ids resolve");
        *profile
            .language_counts_primary
            .entry(doc.language.clone())
            .or_default() += 1;
        *profile
            .jurisdiction_counts
            .entry(doc.jurisdiction.clone())
            .or_default() += 1;
        *profile
            .ipc_section_counts
            .entry(ipc_section_of(doc).to_string())
            .or_default() += 1;
    }
    for id in &x_cited {
        let doc = corpus.get(id).expect("checked above");
        *profile
            .language_counts_cited
            .entry(doc.language.clone())
            .or_default() += 1;
    }
    if !citing.is_empty() {
        profile.x_patent_fraction = x_citing.len() as f64 / citing.len() as f64;
    }
    profile
}

/// One query: a main patent and its relevant set with provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCase {
    pub query_doc_id: String,
    pub relevant_ids: BTreeSet<String>,
    pub relevant_provenance: BTreeMap<String, CitationSource>,
}

impl QueryCase {
    pub fn new(query_doc_id: impl Into<String>) -> Self {
        QueryCase {
            query_doc_id: query_doc_id.into(),
            relevant_ids: BTreeSet::new(),
            relevant_provenance: BTreeMap::new(),
        }
    }

    /// Adds a relevant id; an existing EXAMINER tag is never downgraded.
    pub fn add(&mut self, doc_id: &str, source: CitationSource) {
        if doc_id == self.query_doc_id {
            return;
        }
        self.relevant_ids.insert(doc_id.to_string());
        let tag = self
            .relevant_provenance
            .entry(doc_id.to_string())
            .or_insert(source);
        if source == CitationSource::Examiner {
            *tag = CitationSource::Examiner;
        }
    }

    pub fn has_family_derived(&self) -> bool {
        self.relevant_provenance
            .values()
            .any(|s| *s == CitationSource::FamilyDerived)
    }

    fn check(&self) -> Result<(), String> {
        if self.relevant_ids.is_empty() {
            return Err("empty relevant set".into());
        }
        if self.relevant_ids.contains(&self.query_doc_id) {
            return Err("query appears in its own relevant set".into());
        }
        if !self.relevant_ids.iter().eq(self.relevant_provenance.keys()) {
            return Err("provenance keys differ from relevant ids".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentStats {
    pub pairs_scored: usize,
    pub pairs_retained: usize,
    pub scorer_failures: usize,
}

/// Builds query cases from the examiner X map, adding the in-corpus X
/// citations of every family member whose alignment score with the main
/// patent is at least `threshold`. Citations back to the main patent's own
/// family are discarded; scorer failures skip the member.
pub fn augment_with_family_citations(
    corpus: &Corpus,
    base: &BTreeMap<String, BTreeSet<String>>,
    scorer: &dyn AlignmentScorer,
    threshold: f64,
) -> Result<(BTreeMap<String, QueryCase>, AugmentStats), DatasetError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(DatasetError::Threshold(threshold));
    }
    let mut pairs: Vec<(&str, &str)> = Vec::new();
    for main in base.keys() {
        let Some(doc) = corpus.get(main) else { continue };
        for member in corpus.families().get(&doc.family_id).into_iter().flatten() {
            if member != main && base.contains_key(member) {
                pairs.push((main, member));
            }
        }
    }
    let scores: Vec<Option<f64>> = pairs
        .par_iter()
        .map(|(a, b)| {
            let (da, db) = (corpus.get(a).expect("main"), corpus.get(b).expect("member"));
            match scorer.score(da, db) {
                Ok(s) => Some(s.value()),
                Err(e) => {
                    log::warn!("alignment scoring failed for ({a}, {b}): {e}; member skipped");
                    None
                }
            }
        })
        .collect();

    let mut stats = AugmentStats {
        pairs_scored: pairs.len(),
        ..Default::default()
    };
    let mut cases: BTreeMap<String, QueryCase> = BTreeMap::new();
    for (main, cited) in base {
        let case = cases
            .entry(main.clone())
            .or_insert_with(|| QueryCase::new(main.clone()));
        for id in cited {
            case.add(id, CitationSource::Examiner);
        }
    }
    for ((main, member), score) in pairs.iter().zip(scores) {
        let Some(score) = score else {
            stats.scorer_failures += 1;
            continue;
        };
        if score < threshold {
            continue;
        }
        stats.pairs_retained += 1;
        let family = &corpus.get(main).expect("main").family_id;
        let case = cases.get_mut(*main).expect("case exists for every base key");
        for id in &base[*member] {
            let same_family = corpus.get(id).is_some_and(|d| &d.family_id == family);
            if !same_family {
                case.add(id, CitationSource::FamilyDerived);
            }
        }
    }
    Ok((cases, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    Stale,
    EmptyDescription,
    EmptyRelevantSet,
    UnknownDocument,
}

/// Earliest filing date that still counts as recent.
pub fn recency_cutoff(reference_date: NaiveDate, recency_years: u32) -> NaiveDate {
    reference_date
        .checked_sub_months(Months::new(12 * recency_years))
        .unwrap_or(NaiveDate::MIN)
}

/// Removes stale cases (filed more than `recency_years` before the reference
/// date; the boundary day is kept), cases whose main patent has an empty
/// description, and cases with an empty relevant set.
pub fn apply_quality_filters(
    cases: BTreeMap<String, QueryCase>,
    corpus: &Corpus,
    recency_years: u32,
) -> (BTreeMap<String, QueryCase>, Vec<(String, FilterReason)>) {
    let cutoff = recency_cutoff(corpus.reference_date(), recency_years);
    let mut kept = BTreeMap::new();
    let mut removed = Vec::new();
    for (id, mut case) in cases {
        let reason = match corpus.get(&id) {
            None => Some(FilterReason::UnknownDocument),
            Some(doc) if doc.filing_date < cutoff => Some(FilterReason::Stale),
            Some(doc) if doc.description.trim().is_empty() => Some(FilterReason::EmptyDescription),
            Some(_) => {
                let dangling: Vec<String> = case
                    .relevant_ids
                    .iter()
                    .filter(|r| !corpus.contains(r))
                    .cloned()
                    .collect();
                for r in dangling {
                    case.relevant_ids.remove(&r);
                    case.relevant_provenance.remove(&r);
                }
                case.relevant_ids
                    .is_empty()
                    .then_some(FilterReason::EmptyRelevantSet)
            }
        };
        match reason {
            Some(r) => removed.push((id, r)),
            None => {
                kept.insert(id, case);
            }
        }
    }
    (kept, removed)
}

/// Desired stratum proportions along one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumTargets {
    pub dimension: Dimension,
    pub proportions: BTreeMap<String, f64>,
}

impl StratumTargets {
    /// The empirical proportions of `labels` along `dimension`.
    pub fn empirical<'a>(
        dimension: Dimension,
        labels: impl IntoIterator<Item = &'a StratumLabels>,
    ) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for l in labels {
            *counts.entry(l.get(dimension).to_string()).or_default() += 1;
        }
        let total: usize = counts.values().sum();
        StratumTargets {
            dimension,
            proportions: counts
                .into_iter()
                .map(|(k, n)| (k, n as f64 / total.max(1) as f64))
                .collect(),
        }
    }
}

fn stratum_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Draws a stratified sample of `sample_size` cases whose per-stratum counts
/// are the capped largest-remainder allocation of `targets`. Without targets
/// the empirical distribution of `cases` is used. Output is ordered by
/// query id and fully determined by `seed`.
pub fn assemble_dataset(
    cases: &BTreeMap<String, QueryCase>,
    corpus: &Corpus,
    targets: Option<&StratumTargets>,
    sample_size: usize,
    seed: u64,
) -> Result<Vec<(QueryCase, StratumLabels)>, DatasetError> {
    if sample_size > cases.len() {
        return Err(DatasetError::SampleTooLarge {
            requested: sample_size,
            available: cases.len(),
        });
    }
    let labeled: Vec<(&QueryCase, StratumLabels)> = cases
        .values()
        .map(|c| {
            let doc = corpus.get(&c.query_doc_id).ok_or_else(|| {
                DatasetError::Invariant(c.query_doc_id.clone(), "main patent not in corpus".into())
            })?;
            Ok((c, StratumLabels::of(doc)))
        })
        .collect::<Result<_, DatasetError>>()?;

    let targets = match targets {
        Some(t) => t.clone(),
        None => StratumTargets::empirical(Dimension::Language, labeled.iter().map(|(_, l)| l)),
    };
    let mut by_stratum: BTreeMap<String, Vec<(&QueryCase, StratumLabels)>> = BTreeMap::new();
    for (case, labels) in labeled {
        by_stratum
            .entry(labels.get(targets.dimension).to_string())
            .or_default()
            .push((case, labels));
    }
    let available: BTreeMap<String, usize> =
        by_stratum.iter().map(|(k, v)| (k.clone(), v.len())).collect();
    let quotas = capped_allocation(sample_size, &targets.proportions, &available)?;

    let mut out = Vec::with_capacity(sample_size);
    for (label, mut members) in by_stratum {
        let quota = quotas.get(&label).copied().unwrap_or(0);
        if quota < members.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(stratum_seed(seed, &label));
            members.shuffle(&mut rng);
        }
        out.extend(
            members
                .into_iter()
                .take(quota)
                .map(|(c, l)| (c.clone(), l)),
        );
    }
    out.sort_by(|a, b| a.0.query_doc_id.cmp(&b.0.query_doc_id));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub seed: u64,
    pub threshold: f64,
    pub recency_years: u32,
    pub targets: Option<StratumTargets>,
    /// `None` keeps every surviving case.
    pub sample_size: Option<usize>,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            seed: 0,
            threshold: DEFAULT_THRESHOLD,
            recency_years: DEFAULT_RECENCY_YEARS,
            targets: None,
            sample_size: None,
        }
    }
}

/// Everything needed to rebuild a dataset, plus observed statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildManifest {
    pub seed: u64,
    pub threshold: f64,
    pub scorer_id: String,
    pub recency_years: u32,
    pub reference_date: NaiveDate,
    pub targets: Option<StratumTargets>,
    pub sample_size: usize,
    pub corpus_hash: String,
    pub filters: Vec<String>,
    pub candidates: usize,
    pub removed: BTreeMap<String, usize>,
    /// Fraction of sampled queries holding at least one family-derived id.
    pub family_coverage: f64,
    pub profile: DistributionProfile,
}

impl BuildManifest {
    /// Manifest for a query set assembled outside the builder, such as a
    /// hand-made fixture.
    pub fn external(reference_date: NaiveDate, sample_size: usize) -> Self {
        BuildManifest {
            seed: 0,
            threshold: DEFAULT_THRESHOLD,
            scorer_id: "external".into(),
            recency_years: DEFAULT_RECENCY_YEARS,
            reference_date,
            targets: None,
            sample_size,
            corpus_hash: String::new(),
            filters: Vec::new(),
            candidates: sample_size,
            removed: BTreeMap::new(),
            family_coverage: 0.0,
            profile: DistributionProfile::default(),
        }
    }
}

/// The query set Q with relevant sets and stratum labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationDataset {
    pub manifest: BuildManifest,
    pub queries: Vec<QueryCase>,
    pub strata: Vec<StratumLabels>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum DatasetRecord {
    Manifest(BuildManifest),
    Query {
        #[serde(flatten)]
        case: QueryCase,
        strata: StratumLabels,
    },
}

impl EvaluationDataset {
    pub fn new(
        manifest: BuildManifest,
        queries: Vec<QueryCase>,
        strata: Vec<StratumLabels>,
    ) -> Result<Self, DatasetError> {
        if queries.len() != strata.len() {
            return Err(DatasetError::Invariant(
                String::new(),
                "strata count differs from query count".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for q in &queries {
            q.check()
                .map_err(|e| DatasetError::Invariant(q.query_doc_id.clone(), e))?;
            if !seen.insert(q.query_doc_id.as_str()) {
                return Err(DatasetError::Invariant(
                    q.query_doc_id.clone(),
                    "duplicate query".into(),
                ));
            }
        }
        Ok(EvaluationDataset {
            manifest,
            queries,
            strata,
        })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Query cases paired with their labels.
    pub fn iter(&self) -> impl Iterator<Item = (&QueryCase, &StratumLabels)> {
        self.queries.iter().zip(self.strata.iter())
    }

    /// Checks that every relevant id resolves in `corpus`.
    pub fn check_against(&self, corpus: &Corpus) -> Result<(), DatasetError> {
        for q in &self.queries {
            if let Some(r) = q.relevant_ids.iter().find(|r| !corpus.contains(r)) {
                return Err(DatasetError::Invariant(
                    q.query_doc_id.clone(),
                    format!("relevant id {r} not in corpus"),
                ));
            }
        }
        Ok(())
    }

    /// Line-delimited serialization: manifest header then one query per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&DatasetRecord::Manifest(self.manifest.clone()))
            .expect("manifest serializes");
        out.push('\n');
        for (case, strata) in self.iter() {
            let rec = DatasetRecord::Query {
                case: case.clone(),
                strata: strata.clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("query serializes"));
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the serialized dataset; embedded in run logs.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }

    pub fn write(&self, path: &Path) -> Result<(), DatasetError> {
        fs::write(path, self.to_jsonl()).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, DatasetError> {
        let io = |source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = fs::File::open(path).map_err(io)?;
        let mut manifest = None;
        let mut queries = Vec::new();
        let mut strata = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DatasetRecord =
                serde_json::from_str(&line).map_err(|e| DatasetError::Format {
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            match rec {
                DatasetRecord::Manifest(m) if manifest.is_none() && idx == 0 => manifest = Some(m),
                DatasetRecord::Manifest(_) => {
                    return Err(DatasetError::Format {
                        line: idx + 1,
                        reason: "manifest must be the first and only header record".into(),
                    })
                }
                DatasetRecord::Query { case, strata: s } => {
                    queries.push(case);
                    strata.push(s);
                }
            }
        }
        let manifest = manifest.ok_or(DatasetError::Format {
            line: 1,
            reason: "missing manifest header".into(),
        })?;
        EvaluationDataset::new(manifest, queries, strata)
    }
}

/// Runs the full construction pipeline.
pub fn build_dataset(
    corpus: &Corpus,
    scorer: &dyn AlignmentScorer,
    config: &BuildConfig,
) -> Result<EvaluationDataset, DatasetError> {
    let base = extract_x_citations(corpus);
    let (cases, _stats) =
        augment_with_family_citations(corpus, &base, scorer, config.threshold)?;
    let candidates = cases.len();
    let (cases, removed) = apply_quality_filters(cases, corpus, config.recency_years);
    let mut removed_counts: BTreeMap<String, usize> = BTreeMap::new();
    for (_, reason) in &removed {
        let key = serde_json::to_value(reason)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        *removed_counts.entry(key).or_default() += 1;
    }
    let sample_size = config.sample_size.unwrap_or(cases.len());
    let sampled = assemble_dataset(
        &cases,
        corpus,
        config.targets.as_ref(),
        sample_size,
        config.seed,
    )?;
    let family_coverage = if sampled.is_empty() {
        0.0
    } else {
        sampled.iter().filter(|(c, _)| c.has_family_derived()).count() as f64
            / sampled.len() as f64
    };
    let manifest = BuildManifest {
        seed: config.seed,
        threshold: config.threshold,
        scorer_id: scorer.scorer_id().to_string(),
        recency_years: config.recency_years,
        reference_date: corpus.reference_date(),
        targets: config.targets.clone(),
        sample_size,
        corpus_hash: corpus.content_hash(),
        filters: vec![
            format!("recency>={}", recency_cutoff(corpus.reference_date(), config.recency_years)),
            "description_non_empty".into(),
            "relevant_set_non_empty".into(),
        ],
        candidates,
        removed: removed_counts,
        family_coverage,
        profile: profile_distributions(corpus),
    };
    let (queries, strata) = sampled.into_iter().unzip();
    EvaluationDataset::new(manifest, queries, strata)
}
