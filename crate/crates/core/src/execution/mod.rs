//! Drives systems under test through a uniform adapter contract.
//!
//! Every system is wrapped in a [`SystemAdapter`]. [`run_evaluation`]
//! submits one query per dataset case on a bounded worker pool, enforces
//! the per-query timeout, standardizes whatever the adapter returned into a
//! [`RankedList`], and records everything in a [`RunRecord`].

mod index;
mod remote;

pub use index::{reference_retrieve, tokenize, ReferenceAdapter, ReferenceIndex};
pub use remote::{remote_adapter_query, RemoteAdapter, RemoteConfig, RequestMapping, ResponseMapping};

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::dataset::EvaluationDataset;
use crate::query::{build_query, Query, QueryError};

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;
pub const DEFAULT_MAX_DEPTH: usize = 100;
pub const REFERENCE_ADAPTER_ID: &str = "reference";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run controls: {0}")]
    Controls(String),
    #[error("{failed} of {total} queries failed; run aborted")]
    TooManyFailures {
        failed: usize,
        total: usize,
        record: Box<RunRecord>,
    },
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run log line {line}: {reason}")]
    Format { line: usize, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdapterError {
    #[error("timed out")]
    Timeout,
    #[error("{0}")]
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunControls {
    pub seed: u64,
    pub timeout_ms: u64,
    pub max_depth: usize,
    pub adapter_id: String,
    pub parallelism: usize,
}

impl Default for RunControls {
    fn default() -> Self {
        RunControls {
            seed: 0,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_depth: DEFAULT_MAX_DEPTH,
            adapter_id: REFERENCE_ADAPTER_ID.into(),
            parallelism: 1,
        }
    }
}

impl RunControls {
    pub fn validate(&self) -> Result<(), RunError> {
        if self.timeout_ms == 0 {
            return Err(RunError::Controls("timeout_ms must be positive".into()));
        }
        if self.parallelism == 0 {
            return Err(RunError::Controls("parallelism must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(RunError::Controls("max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// One hit as reported by a system, before standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawHit {
    pub id: String,
    pub score: Option<f64>,
    pub rank: Option<usize>,
}

impl RawHit {
    pub fn new(id: impl Into<String>) -> Self {
        RawHit {
            id: id.into(),
            score: None,
            rank: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawOutput {
    pub hits: Vec<RawHit>,
}

pub trait SystemAdapter: Send + Sync {
    fn adapter_id(&self) -> &str;

    fn search(&self, query: &Query, controls: &RunControls) -> Result<RawOutput, AdapterError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum QueryStatus {
    Ok,
    Timeout,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub doc_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Standardized result list for one query (Top_k(q) for every k ≤ depth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub hits: Vec<Hit>,
    pub status: QueryStatus,
    pub latency_ms: u64,
    /// Raw hits dropped because their identifier could not be mapped.
    #[serde(default)]
    pub anomalies: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RankedList {
    pub fn failed(query_id: &str, status: QueryStatus, error: Option<String>) -> Self {
        RankedList {
            query_id: query_id.to_string(),
            hits: Vec::new(),
            status,
            latency_ms: 0,
            anomalies: 0,
            error,
        }
    }

    /// Hits counted by the metrics: none unless the query succeeded.
    pub fn effective_hits(&self) -> &[Hit] {
        match self.status {
            QueryStatus::Ok => &self.hits,
            _ => &[],
        }
    }

    /// Contiguous 1-based ranks, unique ids and non-increasing scores.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = HashSet::new();
        for (i, h) in self.hits.iter().enumerate() {
            if h.rank != i + 1 {
                return Err(format!("rank {} at position {}", h.rank, i + 1));
            }
            if !seen.insert(h.doc_id.as_str()) {
                return Err(format!("duplicate doc {}", h.doc_id));
            }
            if i > 0 && h.score > self.hits[i - 1].score {
                return Err(format!("score increases at rank {}", h.rank));
            }
        }
        Ok(())
    }
}

/// Canonical publication id: whitespace removed, uppercased. `None` when the
/// result is empty or contains characters outside `[A-Z0-9-_./]`.
pub fn normalize_doc_id(raw: &str) -> Option<String> {
    let id: String = raw
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect::<String>()
        .to_ascii_uppercase();
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | '/'));
    ok.then_some(id)
}

/// Converts raw adapter output into a [`RankedList`]: ids normalized,
/// unmappable ids dropped (and counted), duplicates collapsed onto their
/// best rank, ranks reassigned 1..n, scores made non-increasing and the list
/// cut to `max_depth`.
pub fn standardize_results(query_id: &str, raw: &RawOutput, max_depth: usize) -> RankedList {
    let mut ordered: Vec<(usize, usize, &RawHit)> = raw
        .hits
        .iter()
        .enumerate()
        .map(|(pos, h)| (h.rank.unwrap_or(pos + 1), pos, h))
        .collect();
    ordered.sort_by_key(|(rank, pos, _)| (*rank, *pos));

    let max_present = raw
        .hits
        .iter()
        .filter_map(|h| h.score.filter(|s| s.is_finite()))
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))));

    let mut anomalies = 0;
    let mut seen = HashSet::new();
    let mut hits: Vec<Hit> = Vec::new();
    for (_, _, h) in ordered {
        let Some(doc_id) = normalize_doc_id(&h.id) else {
            anomalies += 1;
            continue;
        };
        if !seen.insert(doc_id.clone()) {
            continue;
        }
        if hits.len() == max_depth {
            break;
        }
        let rank = hits.len() + 1;
        let prev = hits.last().map(|p| p.score);
        let score = match (max_present, h.score.filter(|s| s.is_finite())) {
            (None, _) => 1.0 / rank as f64,
            (Some(_), Some(s)) => s,
            (Some(m), None) => prev.unwrap_or(m),
        };
        let score = prev.map_or(score, |p| score.min(p));
        hits.push(Hit {
            doc_id,
            score,
            rank,
        });
    }
    RankedList {
        query_id: query_id.to_string(),
        hits,
        status: QueryStatus::Ok,
        latency_ms: 0,
        anomalies,
        error: None,
    }
}

/// One evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub controls: RunControls,
    pub dataset_manifest_hash: String,
    pub results: BTreeMap<String, RankedList>,
    pub started: Option<String>,
    pub finished: Option<String>,
}

impl RunRecord {
    pub fn anomalies(&self) -> usize {
        self.results.values().map(|r| r.anomalies).sum()
    }

    pub fn status_counts(&self) -> BTreeMap<&'static str, usize> {
        let mut out = BTreeMap::new();
        for r in self.results.values() {
            let key = match r.status {
                QueryStatus::Ok => "OK",
                QueryStatus::Timeout => "TIMEOUT",
                QueryStatus::Error => "ERROR",
            };
            *out.entry(key).or_default() += 1;
        }
        out
    }

    /// Copy with timestamps and latencies cleared, for byte comparisons.
    pub fn sanitized(&self) -> RunRecord {
        let mut out = self.clone();
        out.started = None;
        out.finished = None;
        for r in out.results.values_mut() {
            r.latency_ms = 0;
        }
        out
    }

    /// Checks that results cover exactly the dataset's queries.
    pub fn covers(&self, dataset: &EvaluationDataset) -> bool {
        self.results.len() == dataset.len()
            && dataset
                .queries
                .iter()
                .all(|q| self.results.contains_key(&q.query_doc_id))
    }

    pub fn to_jsonl(&self) -> String {
        let header = LogRecord::Header {
            controls: self.controls.clone(),
            dataset_manifest_hash: self.dataset_manifest_hash.clone(),
            started: self.started.clone(),
            finished: self.finished.clone(),
            anomalies: self.anomalies(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in self.results.values() {
            out.push_str(&serde_json::to_string(&LogRecord::Result(r.clone())).expect("result serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), RunError> {
        fs::write(path, self.to_jsonl()).map_err(|source| RunError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<RunRecord, RunError> {
        let io = |source| RunError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = fs::File::open(path).map_err(io)?;
        let mut record: Option<RunRecord> = None;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let fmt_err = |reason: String| RunError::Format {
                line: idx + 1,
                reason,
            };
            let rec: LogRecord = serde_json::from_str(&line).map_err(|e| fmt_err(e.to_string()))?;
            match (rec, record.as_mut()) {
                (
                    LogRecord::Header {
                        controls,
                        dataset_manifest_hash,
                        started,
                        finished,
                        ..
                    },
                    None,
                ) => {
                    record = Some(RunRecord {
                        controls,
                        dataset_manifest_hash,
                        results: BTreeMap::new(),
                        started,
                        finished,
                    })
                }
                (LogRecord::Result(r), Some(rec)) => {
                    if rec.results.insert(r.query_id.clone(), r).is_some() {
                        return Err(fmt_err("duplicate query id".into()));
                    }
                }
                (LogRecord::Header { .. }, Some(_)) => return Err(fmt_err("second header".into())),
                (LogRecord::Result(_), None) => return Err(fmt_err("result before header".into())),
            }
        }
        record.ok_or(RunError::Format {
            line: 1,
            reason: "missing header".into(),
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LogRecord {
    Header {
        controls: RunControls,
        dataset_manifest_hash: String,
        started: Option<String>,
        finished: Option<String>,
        anomalies: usize,
    },
    Result(RankedList),
}

/// Options for turning dataset cases into queries.
#[derive(Debug, Clone)]
pub struct QueryOptions {
    pub max_chars: usize,
}

impl Default for QueryOptions {
    fn default() -> Self {
        QueryOptions {
            max_chars: crate::query::DEFAULT_MAX_CHARS,
        }
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn execute_one(
    adapter: &Arc<dyn SystemAdapter>,
    query: Query,
    controls: &RunControls,
) -> RankedList {
    let (tx, rx) = mpsc::channel();
    let worker_adapter = Arc::clone(adapter);
    let worker_controls = controls.clone();
    let query_id = query.query_id.clone();
    let start = Instant::now();
    // Detached so a hung adapter cannot hold the run past its timeout.
    std::thread::spawn(move || {
        let _ = tx.send(worker_adapter.search(&query, &worker_controls));
    });
    let outcome = rx.recv_timeout(Duration::from_millis(controls.timeout_ms));
    let latency_ms = start.elapsed().as_millis() as u64;
    let mut list = match outcome {
        Ok(Ok(raw)) => standardize_results(&query_id, &raw, controls.max_depth),
        Ok(Err(AdapterError::Timeout)) | Err(mpsc::RecvTimeoutError::Timeout) => {
            RankedList::failed(&query_id, QueryStatus::Timeout, None)
        }
        Ok(Err(AdapterError::Failed(msg))) => {
            RankedList::failed(&query_id, QueryStatus::Error, Some(msg))
        }
        Err(mpsc::RecvTimeoutError::Disconnected) => RankedList::failed(
            &query_id,
            QueryStatus::Error,
            Some("adapter panicked".into()),
        ),
    };
    list.latency_ms = latency_ms;
    list
}

/// Runs every dataset query once through `adapter`.
///
/// Adapter failures become per-query ERROR entries and timeouts TIMEOUT
/// entries; the run always covers every query. If more than half of the
/// queries end in ERROR the complete record is returned inside
/// [`RunError::TooManyFailures`].
pub fn run_evaluation(
    dataset: &EvaluationDataset,
    corpus: &Corpus,
    adapter: Arc<dyn SystemAdapter>,
    controls: &RunControls,
    query_opts: &QueryOptions,
) -> Result<RunRecord, RunError> {
    controls.validate()?;
    let started = now();
    let ids: Vec<&str> = dataset
        .queries
        .iter()
        .map(|q| q.query_doc_id.as_str())
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<BTreeMap<String, RankedList>> = Mutex::new(BTreeMap::new());
    let workers = controls.parallelism.min(ids.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(id) = ids.get(i) else { break };
                let list = match corpus.get(id) {
                    None => RankedList::failed(
                        id,
                        QueryStatus::Error,
                        Some(format!("query document {id} not in corpus")),
                    ),
                    Some(doc) => match build_query(doc, query_opts.max_chars) {
                        Ok(q) => execute_one(&adapter, q, controls),
                        Err(e) => RankedList::failed(id, QueryStatus::Error, Some(e.to_string())),
                    },
                };
                results
                    .lock()
                    .expect("results lock")
                    .insert(id.to_string(), list);
            });
        }
    });
    let record = RunRecord {
        controls: controls.clone(),
        dataset_manifest_hash: dataset.content_hash(),
        results: results.into_inner().expect("results lock"),
        started: Some(started),
        finished: Some(now()),
    };
    let failed = record
        .results
        .values()
        .filter(|r| r.status == QueryStatus::Error)
        .count();
    if failed * 2 > record.results.len() {
        return Err(RunError::TooManyFailures {
            failed,
            total: record.results.len(),
            record: Box::new(record),
        });
    }
    Ok(record)
}
