use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use noveval::alignment::TrigramJaccard;
use noveval::corpus::{self, LoadOptions};
use noveval::dataset::{self, BuildConfig, Dimension, StratumTargets};
use noveval::execution::{self, QueryOptions, ReferenceAdapter, RunControls};
use noveval::metrics::{
    self, Averaging, BootstrapConfig, BootstrapMode, MatchRule, Matcher, MetricSpec, DEFAULT_K_GRID,
};
use noveval::report::{self, MetricOptions, MetricsReport, ReportFormat};

create_exception!(noveval_py, NovevalError, PyException);

fn err(e: impl ToString) -> PyErr {
    NovevalError::new_err(e.to_string())
}

fn dimensions(names: Option<Vec<String>>, default: &[Dimension]) -> PyResult<Vec<Dimension>> {
    match names {
        None => Ok(default.to_vec()),
        Some(v) => v.iter().map(|d| d.parse().map_err(err)).collect(),
    }
}

fn matcher(rule: &str, corpus: Option<&Corpus>) -> PyResult<(MatchRule, Matcher)> {
    let rule: MatchRule = rule.parse().map_err(err)?;
    let m = match (rule, corpus) {
        (MatchRule::Exact, _) => Matcher::exact(),
        (MatchRule::Family, Some(c)) => Matcher::family(&c.inner),
        (MatchRule::Family, None) => return Err(err("family matching needs a corpus")),
    };
    Ok((rule, m))
}

#[pyclass(frozen, module = "noveval_py")]
struct Corpus {
    inner: Arc<corpus::Corpus>,
}

#[pymethods]
impl Corpus {
    #[staticmethod]
    #[pyo3(signature = (path, lenient = false))]
    fn load(path: PathBuf, lenient: bool) -> PyResult<Self> {
        let opts = LoadOptions { lenient, ..Default::default() };
        let (c, _) = corpus::load_corpus(&path, &opts).map_err(err)?;
        Ok(Corpus { inner: Arc::new(c) })
    }

    #[staticmethod]
    #[pyo3(signature = (seed = 0, n_docs = 200))]
    fn synthetic(seed: u64, n_docs: usize) -> Self {
        let cfg = noveval::synth::SynthConfig { seed, n_docs, ..Default::default() };
        Corpus { inner: Arc::new(noveval::synth::generate_corpus(&cfg).corpus) }
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        corpus::write_corpus(&self.inner, &path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn doc_ids(&self) -> Vec<String> {
        self.inner.documents().map(|d| d.doc_id.clone()).collect()
    }

    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    /// Number of defects found by validation, keyed by kind.
    fn validate(&self) -> BTreeMap<&'static str, usize> {
        let r = corpus::validate_corpus(&self.inner);
        BTreeMap::from([
            ("dangling_citations", r.dangling_citations.len()),
            ("malformed_docs", r.malformed_docs.len()),
            ("empty_sections", r.empty_sections.len()),
        ])
    }
}

#[pyclass(frozen, module = "noveval_py")]
struct Dataset {
    inner: dataset::EvaluationDataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Dataset { inner: dataset::EvaluationDataset::read(&path).map_err(err)? })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write(&path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    fn query_ids(&self) -> Vec<String> {
        self.inner.queries.iter().map(|q| q.query_doc_id.clone()).collect()
    }

    fn relevant(&self, query_id: &str) -> PyResult<BTreeSet<String>> {
        self.inner
            .queries
            .iter()
            .find(|q| q.query_doc_id == query_id)
            .map(|q| q.relevant_ids.clone())
            .ok_or_else(|| err(format!("unknown query {query_id}")))
    }

    fn strata(&self, dimension: &str) -> PyResult<Vec<String>> {
        let dim: Dimension = dimension.parse().map_err(err)?;
        Ok(self.inner.strata.iter().map(|s| s.get(dim).to_string()).collect())
    }
}

#[pyclass(frozen, module = "noveval_py")]
struct Run {
    inner: execution::RunRecord,
}

#[pymethods]
impl Run {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Run { inner: execution::RunRecord::read(&path).map_err(err)? })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write(&path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.results.len()
    }

    fn status_counts(&self) -> BTreeMap<&'static str, usize> {
        self.inner.status_counts()
    }

    fn hits(&self, query_id: &str) -> PyResult<Vec<String>> {
        self.inner
            .results
            .get(query_id)
            .map(|r| r.effective_hits().iter().map(|h| h.doc_id.clone()).collect())
            .ok_or_else(|| err(format!("unknown query {query_id}")))
    }

    fn sanitized_jsonl(&self) -> String {
        self.inner.sanitized().to_jsonl()
    }
}

/// Builds an evaluation dataset with the lexical alignment scorer.
/// `targets` maps stratum labels of `target_dimension` to proportions.
#[pyfunction]
#[pyo3(signature = (corpus, seed = 0, threshold = dataset::DEFAULT_THRESHOLD, recency_years = dataset::DEFAULT_RECENCY_YEARS, sample_size = None, targets = None, target_dimension = "language"))]
#[allow(clippy::too_many_arguments)]
fn build_dataset(
    py: Python<'_>,
    corpus: &Corpus,
    seed: u64,
    threshold: f64,
    recency_years: u32,
    sample_size: Option<usize>,
    targets: Option<BTreeMap<String, f64>>,
    target_dimension: &str,
) -> PyResult<Dataset> {
    let targets = match targets {
        Some(proportions) => Some(StratumTargets {
            dimension: target_dimension.parse().map_err(err)?,
            proportions,
        }),
        None => None,
    };
    let config = BuildConfig { seed, threshold, recency_years, targets, sample_size };
    let c = Arc::clone(&corpus.inner);
    let inner = py
        .detach(move || dataset::build_dataset(&c, &TrigramJaccard, &config))
        .map_err(err)?;
    Ok(Dataset { inner })
}

/// Runs the in-process reference retriever over every query.
#[pyfunction]
#[pyo3(signature = (dataset, corpus, seed = 0, max_depth = execution::DEFAULT_MAX_DEPTH, parallelism = 4, include_family = false))]
fn run_reference(
    py: Python<'_>,
    dataset: &Dataset,
    corpus: &Corpus,
    seed: u64,
    max_depth: usize,
    parallelism: usize,
    include_family: bool,
) -> PyResult<Run> {
    let c = Arc::clone(&corpus.inner);
    let adapter = Arc::new(ReferenceAdapter::new(Arc::clone(&c), !include_family));
    let controls = RunControls { seed, max_depth, parallelism, ..Default::default() };
    let inner = py
        .detach(|| execution::run_evaluation(&dataset.inner, &c, adapter, &controls, &QueryOptions::default()))
        .map_err(err)?;
    Ok(Run { inner })
}

#[pyfunction]
#[pyo3(signature = (run, dataset, ks = None, match_rule = "exact", corpus = None))]
fn detection_curve(
    run: &Run,
    dataset: &Dataset,
    ks: Option<Vec<usize>>,
    match_rule: &str,
    corpus: Option<&Corpus>,
) -> PyResult<Vec<(usize, f64)>> {
    let (_, m) = matcher(match_rule, corpus)?;
    let ks = ks.unwrap_or_else(|| DEFAULT_K_GRID.to_vec());
    let curve = metrics::detection_curve(&run.inner, &dataset.inner, &ks, &m).map_err(err)?;
    Ok(curve.points.iter().map(|p| (p.k, p.rate)).collect())
}

#[pyfunction]
#[pyo3(signature = (run, dataset, k, match_rule = "exact", corpus = None))]
fn topk_detection_rate(run: &Run, dataset: &Dataset, k: usize, match_rule: &str, corpus: Option<&Corpus>) -> PyResult<f64> {
    let (_, m) = matcher(match_rule, corpus)?;
    metrics::topk_detection_rate(&run.inner, &dataset.inner, k, &m).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (run, dataset, r#macro = false, match_rule = "exact", corpus = None))]
fn recall(run: &Run, dataset: &Dataset, r#macro: bool, match_rule: &str, corpus: Option<&Corpus>) -> PyResult<f64> {
    let (_, m) = matcher(match_rule, corpus)?;
    let avg = if r#macro { Averaging::Macro } else { Averaging::Micro };
    Ok(metrics::recall(&run.inner, &dataset.inner, &m, avg).map_err(err)?.value)
}

/// Paired bootstrap of `run_b` minus `run_a` on Top-k detection, or on
/// recall when `k` is None.
#[pyfunction]
#[pyo3(signature = (run_a, run_b, dataset, k = Some(10), resamples = 10_000, seed = 0, strata = None))]
#[allow(clippy::too_many_arguments)]
fn paired_bootstrap(
    py: Python<'_>,
    run_a: &Run,
    run_b: &Run,
    dataset: &Dataset,
    k: Option<usize>,
    resamples: usize,
    seed: u64,
    strata: Option<Vec<String>>,
) -> PyResult<BTreeMap<&'static str, f64>> {
    let config = BootstrapConfig {
        n_resamples: resamples,
        seed,
        strata: dimensions(strata, &BootstrapConfig::default().strata)?,
        mode: BootstrapMode::Auto,
    };
    let spec = match k {
        Some(k) => MetricSpec::Detection { k },
        None => MetricSpec::Recall { averaging: Averaging::Micro },
    };
    let r = py
        .detach(|| metrics::paired_bootstrap(&run_b.inner, &run_a.inner, &dataset.inner, spec, &Matcher::exact(), &config))
        .map_err(err)?;
    Ok(BTreeMap::from([
        ("observed_diff", r.observed_diff),
        ("p_value", r.p_value),
        ("ci_low", r.ci_low),
        ("ci_high", r.ci_high),
        ("n_resamples", r.n_resamples as f64),
    ]))
}

/// Evaluates one run, writes its report files and returns their paths.
#[pyfunction]
#[pyo3(signature = (run, dataset, out_dir, name = None, corpus = None, dimensions = None, formats = None, match_rule = "exact"))]
#[allow(clippy::too_many_arguments)]
fn evaluate(
    run: &Run,
    dataset: &Dataset,
    out_dir: PathBuf,
    name: Option<String>,
    corpus: Option<&Corpus>,
    dimensions: Option<Vec<String>>,
    formats: Option<Vec<String>>,
    match_rule: &str,
) -> PyResult<Vec<PathBuf>> {
    let dims = self::dimensions(dimensions, &[Dimension::Language, Dimension::IpcSection, Dimension::Jurisdiction])?;
    let formats: BTreeSet<ReportFormat> = formats
        .unwrap_or_else(|| vec!["text".into(), "csv".into(), "svg".into()])
        .iter()
        .map(|f| f.parse().map_err(err))
        .collect::<PyResult<_>>()?;
    let (rule, m) = matcher(match_rule, corpus)?;
    let opts = MetricOptions::default();
    let name = name.unwrap_or_else(|| run.inner.controls.adapter_id.clone());
    let system = report::evaluate_system(
        &name,
        &run.inner,
        &dataset.inner,
        corpus.map(|c| c.inner.as_ref()),
        &dims,
        &m,
        &opts,
    )
    .map_err(err)?;
    let rep = MetricsReport {
        dataset_hash: dataset.inner.content_hash(),
        seed: 0,
        match_rule: rule,
        options: opts,
        dimensions: dims,
        systems: vec![system],
        comparison: None,
    };
    report::emit_report(&rep, &out_dir, &formats).map_err(err)
}

#[pymodule]
fn noveval_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NovevalError", m.py().get_type::<NovevalError>())?;
    m.add_class::<Corpus>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Run>()?;
    m.add_function(wrap_pyfunction!(build_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(run_reference, m)?)?;
    m.add_function(wrap_pyfunction!(detection_curve, m)?)?;
    m.add_function(wrap_pyfunction!(topk_detection_rate, m)?)?;
    m.add_function(wrap_pyfunction!(recall, m)?)?;
    m.add_function(wrap_pyfunction!(paired_bootstrap, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
