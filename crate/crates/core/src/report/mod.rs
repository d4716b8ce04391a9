//! Per-stratum breakdowns, cross-language recall, system comparison and
//! report files (text table, CSV, SVG).

mod svg;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::dataset::{Dimension, EvaluationDataset};
use crate::execution::RunRecord;
use crate::metrics::{
    curve_from_outcomes, paired_bootstrap, query_outcomes, recall_from_outcomes, Averaging,
    BootstrapConfig, DetectionCurve, MatchRule, Matcher, MetricError, MetricSpec, QueryOutcome,
    RecallValue, SignificanceResult, DEFAULT_K_GRID,
};

pub const TOTAL_LABEL: &str = "(total)";
pub const UNKNOWN_LANGUAGE: &str = "unknown";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("run was produced against dataset {run} but the dataset hash is {dataset}")]
    HashMismatch { run: String, dataset: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown report format {0:?} (expected text, csv or svg)")]
    Format(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Rejects a run whose embedded dataset hash differs from `dataset`.
pub fn check_run_hash(run: &RunRecord, dataset: &EvaluationDataset) -> Result<(), ReportError> {
    let expected = dataset.content_hash();
    if run.dataset_manifest_hash != expected {
        return Err(ReportError::HashMismatch {
            run: run.dataset_manifest_hash.clone(),
            dataset: expected,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub ks: Vec<usize>,
    pub averaging: Averaging,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            ks: DEFAULT_K_GRID.to_vec(),
            averaging: Averaging::Micro,
        }
    }
}

/// Metrics over one slice of the query set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceMetrics {
    pub stratum: String,
    pub n_queries: usize,
    pub curve: DetectionCurve,
    pub recall: RecallValue,
}

impl SliceMetrics {
    fn compute(
        stratum: &str,
        outcomes: &[QueryOutcome],
        depth: usize,
        opts: &MetricOptions,
    ) -> Result<Self, MetricError> {
        Ok(SliceMetrics {
            stratum: stratum.to_string(),
            n_queries: outcomes.len(),
            curve: curve_from_outcomes(outcomes, &opts.ks)?,
            recall: recall_from_outcomes(outcomes, depth, opts.averaging)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownTable {
    pub dimension: Dimension,
    /// Ordered by descending n_queries, then label.
    pub rows: Vec<SliceMetrics>,
    pub totals: SliceMetrics,
    /// Target strata with no queries.
    pub omitted: Vec<String>,
}

impl BreakdownTable {
    /// True when per-stratum hit counts and query counts sum to the totals.
    pub fn is_consistent(&self) -> bool {
        let n: usize = self.rows.iter().map(|r| r.n_queries).sum();
        n == self.totals.n_queries
            && self.totals.curve.points.iter().enumerate().all(|(i, p)| {
                self.rows.iter().map(|r| r.curve.points[i].hits).sum::<usize>() == p.hits
            })
            && self.rows.iter().map(|r| r.recall.retrieved).sum::<usize>() == self.totals.recall.retrieved
    }
}

fn breakdown_from_outcomes(
    outcomes: &[QueryOutcome],
    dataset: &EvaluationDataset,
    dimension: Dimension,
    depth: usize,
    opts: &MetricOptions,
) -> Result<BreakdownTable, MetricError> {
    let mut groups: BTreeMap<&str, Vec<QueryOutcome>> = BTreeMap::new();
    for (o, labels) in outcomes.iter().zip(&dataset.strata) {
        groups.entry(labels.get(dimension)).or_default().push(*o);
    }
    let mut rows = groups
        .iter()
        .map(|(label, outs)| SliceMetrics::compute(label, outs, depth, opts))
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| b.n_queries.cmp(&a.n_queries).then_with(|| a.stratum.cmp(&b.stratum)));
    let omitted = match &dataset.manifest.targets {
        Some(t) if t.dimension == dimension => t
            .proportions
            .keys()
            .filter(|l| !groups.contains_key(l.as_str()))
            .cloned()
            .collect(),
        _ => Vec::new(),
    };
    for label in &omitted {
        log::info!("{dimension} stratum {label} has no queries; omitted from breakdown");
    }
    Ok(BreakdownTable {
        dimension,
        rows,
        totals: SliceMetrics::compute(TOTAL_LABEL, outcomes, depth, opts)?,
        omitted,
    })
}

pub fn breakdown_by(
    run: &RunRecord,
    dataset: &EvaluationDataset,
    dimension: Dimension,
    matcher: &Matcher,
    opts: &MetricOptions,
) -> Result<BreakdownTable, ReportError> {
    let outcomes = query_outcomes(run, dataset, matcher)?;
    Ok(breakdown_from_outcomes(
        &outcomes,
        dataset,
        dimension,
        run.controls.max_depth,
        opts,
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossLanguageCell {
    pub query_language: String,
    pub relevant_language: String,
    pub n_pairs: usize,
    pub retrieved: usize,
    pub recall: f64,
}

/// Every (query language, relevant language) combination over the
/// languages observed, including empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossLanguageMatrix {
    pub languages: Vec<String>,
    pub cells: Vec<CrossLanguageCell>,
}

impl CrossLanguageMatrix {
    pub fn cell(&self, query_language: &str, relevant_language: &str) -> Option<&CrossLanguageCell> {
        self.cells
            .iter()
            .find(|c| c.query_language == query_language && c.relevant_language == relevant_language)
    }

    pub fn off_diagonal_pairs(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| c.query_language != c.relevant_language)
            .map(|c| c.n_pairs)
            .sum()
    }

    pub fn row_pairs(&self, query_language: &str) -> usize {
        self.cells
            .iter()
            .filter(|c| c.query_language == query_language)
            .map(|c| c.n_pairs)
            .sum()
    }
}

pub fn cross_language_recall(
    run: &RunRecord,
    dataset: &EvaluationDataset,
    corpus: &Corpus,
    matcher: &Matcher,
) -> Result<CrossLanguageMatrix, ReportError> {
    let mut counts: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    let mut languages = BTreeSet::new();
    for (case, labels) in dataset.iter() {
        let ranked = run
            .results
            .get(&case.query_doc_id)
            .ok_or_else(|| MetricError::Coverage(case.query_doc_id.clone()))?;
        let q_lang = corpus
            .get(&case.query_doc_id)
            .map(|d| d.language.clone())
            .unwrap_or_else(|| labels.language.clone());
        let got: HashSet<String> = ranked.effective_hits().iter().map(|h| matcher.key(&h.doc_id)).collect();
        languages.insert(q_lang.clone());
        for r in &case.relevant_ids {
            let r_lang = corpus
                .get(r)
                .map(|d| d.language.clone())
                .unwrap_or_else(|| UNKNOWN_LANGUAGE.to_string());
            languages.insert(r_lang.clone());
            let e = counts.entry((q_lang.clone(), r_lang)).or_default();
            e.0 += 1;
            if got.contains(&matcher.key(r)) {
                e.1 += 1;
            }
        }
    }
    let languages: Vec<String> = languages.into_iter().collect();
    let mut cells = Vec::new();
    for q in &languages {
        for r in &languages {
            let (n, got) = counts.get(&(q.clone(), r.clone())).copied().unwrap_or((0, 0));
            cells.push(CrossLanguageCell {
                query_language: q.clone(),
                relevant_language: r.clone(),
                n_pairs: n,
                retrieved: got,
                recall: if n == 0 { 0.0 } else { got as f64 / n as f64 },
            });
        }
    }
    Ok(CrossLanguageMatrix { languages, cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub name: String,
    pub overall: SliceMetrics,
    pub breakdowns: Vec<BreakdownTable>,
    pub cross_language: Option<CrossLanguageMatrix>,
}

/// All metrics of one run: overall, per dimension and cross-language.
pub fn evaluate_system(
    name: &str,
    run: &RunRecord,
    dataset: &EvaluationDataset,
    corpus: Option<&Corpus>,
    dimensions: &[Dimension],
    matcher: &Matcher,
    opts: &MetricOptions,
) -> Result<SystemReport, ReportError> {
    check_run_hash(run, dataset)?;
    let outcomes = query_outcomes(run, dataset, matcher)?;
    let depth = run.controls.max_depth;
    let breakdowns = dimensions
        .iter()
        .map(|d| breakdown_from_outcomes(&outcomes, dataset, *d, depth, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let cross_language = corpus
        .map(|c| cross_language_recall(run, dataset, c, matcher))
        .transpose()?;
    Ok(SystemReport {
        name: name.to_string(),
        overall: SliceMetrics::compute(TOTAL_LABEL, &outcomes, depth, opts)?,
        breakdowns,
        cross_language,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// Dimension name, or "overall".
    pub dimension: String,
    pub stratum: String,
    pub n_queries: usize,
    pub metric: String,
    pub k: Option<usize>,
    pub value_a: f64,
    pub value_b: f64,
    /// value_b - value_a.
    pub delta: f64,
    pub significance: Option<SignificanceResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub system_a: String,
    pub system_b: String,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn overall(&self, metric: &str) -> Option<&ComparisonRow> {
        self.rows
            .iter()
            .find(|r| r.dimension == "overall" && r.metric == metric)
    }
}

/// Exact difference from integer counts where the metric allows it.
fn delta_of(spec: MetricSpec, a: &SliceMetrics, b: &SliceMetrics) -> (f64, f64, f64) {
    match spec {
        MetricSpec::Detection { k } => {
            let pa = a.curve.points.iter().find(|p| p.k == k).unwrap();
            let pb = b.curve.points.iter().find(|p| p.k == k).unwrap();
            let n = a.n_queries as f64;
            (pa.rate, pb.rate, (pb.hits as f64 - pa.hits as f64) / n)
        }
        MetricSpec::Recall { averaging: Averaging::Micro } if a.recall.relevant > 0 => (
            a.recall.value,
            b.recall.value,
            (b.recall.retrieved as f64 - a.recall.retrieved as f64) / a.recall.relevant as f64,
        ),
        MetricSpec::Recall { .. } => (a.recall.value, b.recall.value, b.recall.value - a.recall.value),
    }
}

/// Side-by-side comparison of system B against baseline A. Headline metrics
/// carry paired-bootstrap significance; deltas are B minus A.
#[allow(clippy::too_many_arguments)]
pub fn compare_systems(
    (name_a, run_a): (&str, &RunRecord),
    (name_b, run_b): (&str, &RunRecord),
    dataset: &EvaluationDataset,
    dimensions: &[Dimension],
    matcher: &Matcher,
    opts: &MetricOptions,
    bootstrap: &BootstrapConfig,
) -> Result<Comparison, ReportError> {
    check_run_hash(run_a, dataset)?;
    check_run_hash(run_b, dataset)?;
    let a = evaluate_system(name_a, run_a, dataset, None, dimensions, matcher, opts)?;
    let b = evaluate_system(name_b, run_b, dataset, None, dimensions, matcher, opts)?;
    let specs: Vec<MetricSpec> = opts
        .ks
        .iter()
        .map(|&k| MetricSpec::Detection { k })
        .chain([MetricSpec::Recall { averaging: opts.averaging }])
        .collect();

    let mut rows = Vec::new();
    for spec in &specs {
        let (va, vb, delta) = delta_of(*spec, &a.overall, &b.overall);
        let sig = paired_bootstrap(run_b, run_a, dataset, *spec, matcher, bootstrap)?;
        rows.push(ComparisonRow {
            dimension: "overall".into(),
            stratum: TOTAL_LABEL.into(),
            n_queries: a.overall.n_queries,
            metric: spec.name(),
            k: match spec {
                MetricSpec::Detection { k } => Some(*k),
                MetricSpec::Recall { .. } => None,
            },
            value_a: va,
            value_b: vb,
            delta,
            significance: Some(SignificanceResult {
                observed_diff: delta,
                ..sig
            }),
        });
    }
    for (ta, tb) in a.breakdowns.iter().zip(&b.breakdowns) {
        for ra in &ta.rows {
            let rb = tb.rows.iter().find(|r| r.stratum == ra.stratum).expect("same strata");
            for spec in &specs {
                let (va, vb, delta) = delta_of(*spec, ra, rb);
                rows.push(ComparisonRow {
                    dimension: ta.dimension.to_string(),
                    stratum: ra.stratum.clone(),
                    n_queries: ra.n_queries,
                    metric: spec.name(),
                    k: match spec {
                        MetricSpec::Detection { k } => Some(*k),
                        MetricSpec::Recall { .. } => None,
                    },
                    value_a: va,
                    value_b: vb,
                    delta,
                    significance: None,
                });
            }
        }
    }
    Ok(Comparison {
        system_a: name_a.to_string(),
        system_b: name_b.to_string(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ReportFormat {
    Text,
    Csv,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "text" | "table-text" | "txt" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "svg" | "svg-plot-data" => Ok(ReportFormat::Svg),
            other => Err(ReportError::Format(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset_hash: String,
    pub seed: u64,
    pub match_rule: MatchRule,
    pub options: MetricOptions,
    pub dimensions: Vec<Dimension>,
    pub systems: Vec<SystemReport>,
    pub comparison: Option<Comparison>,
}

pub const BREAKDOWN_HEADER: [&str; 5] = ["dimension", "stratum", "n_queries", "k", "detection_rate"];
pub const RECALL_HEADER: [&str; 5] = ["dimension", "stratum", "n_queries", "recall", "recall_depth"];
pub const CROSS_LANGUAGE_HEADER: [&str; 5] =
    ["query_language", "relevant_language", "n_pairs", "retrieved", "recall"];
pub const COMPARISON_HEADER: [&str; 11] = [
    "dimension", "stratum", "n_queries", "metric", "k", "system", "value", "delta", "p_value", "ci_low",
    "ci_high",
];

fn pct(rate: f64) -> String {
    format!("{:.0}%", rate * 100.0)
}

fn signed(v: f64, decimals: usize) -> String {
    let s = format!("{:+.*}", decimals, v);
    if s == format!("-{:.*}", decimals, 0.0) {
        format!("+{:.*}", decimals, 0.0)
    } else {
        s
    }
}

/// Fixed-width table: one row per system, Top-k columns then recall.
pub fn render_table(report: &MetricsReport) -> String {
    let name_w = report
        .systems
        .iter()
        .map(|s| s.name.chars().count())
        .chain(["System".len()])
        .max()
        .unwrap();
    let depths: BTreeSet<usize> = report.systems.iter().map(|s| s.overall.recall.depth).collect();
    let recall_head = match depths.iter().next() {
        Some(d) if depths.len() == 1 => format!("Recall@{d}"),
        _ => "Recall".to_string(),
    };
    let mut cols: Vec<String> = report.options.ks.iter().map(|k| format!("Top{k}")).collect();
    cols.push(recall_head);
    let widths: Vec<usize> = cols.iter().map(|c| c.len().max(5)).collect();

    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}", "System");
    for (c, w) in cols.iter().zip(&widths) {
        let _ = write!(out, " | {c:>w$}");
    }
    out.push('\n');
    let rule_len = name_w + widths.iter().map(|w| w + 3).sum::<usize>();
    out.push_str(&"-".repeat(rule_len));
    out.push('\n');
    for s in &report.systems {
        let _ = write!(out, "{:<name_w$}", s.name);
        for (p, w) in s.overall.curve.points.iter().zip(&widths) {
            let _ = write!(out, " | {:>w$}", pct(p.rate));
        }
        let w = widths[widths.len() - 1];
        let r = if depths.len() == 1 {
            format!("{:.2}", s.overall.recall.value)
        } else {
            format!("{:.2}@{}", s.overall.recall.value, s.overall.recall.depth)
        };
        let _ = writeln!(out, " | {r:>w$}");
    }
    out
}

fn render_summary(report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "dataset: {}", report.dataset_hash);
    let _ = writeln!(out, "seed: {}", report.seed);
    let _ = writeln!(out, "match rule: {}", report.match_rule);
    let _ = writeln!(out, "recall averaging: {}", report.options.averaging);
    out.push('\n');
    out.push_str(&render_table(report));

    if let Some(cmp) = &report.comparison {
        let _ = writeln!(out, "\n{} vs {} (delta = {} minus {})", cmp.system_b, cmp.system_a, cmp.system_b, cmp.system_a);
        for row in cmp.rows.iter().filter(|r| r.dimension == "overall") {
            let delta = match row.k {
                Some(_) => format!("{} pp", signed(row.delta * 100.0, 0)),
                None => signed(row.delta, 2),
            };
            let _ = write!(out, "  {:<14} {:>8}", row.metric, delta);
            if let Some(sig) = &row.significance {
                let _ = write!(
                    out,
                    "  p={:.4}  95% CI [{:.4}, {:.4}]",
                    sig.p_value, sig.ci_low, sig.ci_high
                );
            }
            out.push('\n');
        }
        if let Some(sig) = cmp.rows.iter().find_map(|r| r.significance.as_ref()) {
            let _ = writeln!(
                out,
                "  paired bootstrap: {} resamples{}, strata {}, seed {}",
                sig.n_resamples,
                if sig.exhaustive { " (exhaustive)" } else { "" },
                sig.strata_spec,
                sig.seed
            );
        }
    }

    for s in &report.systems {
        for t in &s.breakdowns {
            let _ = writeln!(out, "\n{} by {} (recall@{})", s.name, t.dimension, t.totals.recall.depth);
            let label_w = t
                .rows
                .iter()
                .map(|r| r.stratum.chars().count())
                .chain([TOTAL_LABEL.len()])
                .max()
                .unwrap();
            let _ = write!(out, "{:<label_w$} | {:>5}", "stratum", "n");
            for k in &report.options.ks {
                let _ = write!(out, " | {:>6}", format!("Top{k}"));
            }
            let _ = writeln!(out, " | {:>6}", "Recall");
            for r in t.rows.iter().chain([&t.totals]) {
                let _ = write!(out, "{:<label_w$} | {:>5}", r.stratum, r.n_queries);
                for p in &r.curve.points {
                    let _ = write!(out, " | {:>6}", pct(p.rate));
                }
                let _ = writeln!(out, " | {:>6.2}", r.recall.value);
            }
            for o in &t.omitted {
                let _ = writeln!(out, "note: stratum {o} has no queries");
            }
        }
        if let Some(m) = &s.cross_language {
            let _ = writeln!(out, "\n{} cross-language recall (rows: query language)", s.name);
            for c in m.cells.iter().filter(|c| c.n_pairs > 0) {
                let _ = writeln!(
                    out,
                    "  {} -> {}: {}/{} = {:.2}",
                    c.query_language, c.relevant_language, c.retrieved, c.n_pairs, c.recall
                );
            }
        }
    }
    out
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders every requested file in memory, keyed by file name.
pub fn render_report(report: &MetricsReport, formats: &BTreeSet<ReportFormat>) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let multi = report.systems.len() > 1;
    let suffix = |s: &SystemReport| if multi { format!(".{}", slug(&s.name)) } else { String::new() };

    if formats.contains(&ReportFormat::Text) {
        files.insert("summary.txt".to_string(), render_summary(report).into_bytes());
    }
    if formats.contains(&ReportFormat::Csv) {
        let systems: Vec<Option<&SystemReport>> = if report.systems.is_empty() {
            vec![None]
        } else {
            report.systems.iter().map(Some).collect()
        };
        for s in systems {
            let sfx = s.map(suffix).unwrap_or_default();
            for dim in &report.dimensions {
                let table = s.and_then(|s| s.breakdowns.iter().find(|t| t.dimension == *dim));
                let mut det = Vec::new();
                let mut rec = Vec::new();
                if let Some(t) = table {
                    for r in t.rows.iter().chain([&t.totals]) {
                        for p in &r.curve.points {
                            det.push(vec![
                                dim.to_string(),
                                r.stratum.clone(),
                                r.n_queries.to_string(),
                                p.k.to_string(),
                                p.rate.to_string(),
                            ]);
                        }
                        rec.push(vec![
                            dim.to_string(),
                            r.stratum.clone(),
                            r.n_queries.to_string(),
                            r.recall.value.to_string(),
                            r.recall.depth.to_string(),
                        ]);
                    }
                }
                files.insert(format!("breakdown_{dim}{sfx}.csv"), csv_bytes(&BREAKDOWN_HEADER, &det));
                files.insert(format!("recall_{dim}{sfx}.csv"), csv_bytes(&RECALL_HEADER, &rec));
            }
            let cells: Vec<Vec<String>> = s
                .and_then(|s| s.cross_language.as_ref())
                .map(|m| {
                    m.cells
                        .iter()
                        .map(|c| {
                            vec![
                                c.query_language.clone(),
                                c.relevant_language.clone(),
                                c.n_pairs.to_string(),
                                c.retrieved.to_string(),
                                c.recall.to_string(),
                            ]
                        })
                        .collect()
                })
                .unwrap_or_default();
            files.insert(format!("cross_language{sfx}.csv"), csv_bytes(&CROSS_LANGUAGE_HEADER, &cells));
        }
        if let Some(cmp) = &report.comparison {
            let mut rows = Vec::new();
            for r in &cmp.rows {
                let k = r.k.map(|k| k.to_string()).unwrap_or_default();
                let base = |system: &str, value: f64| {
                    vec![
                        r.dimension.clone(),
                        r.stratum.clone(),
                        r.n_queries.to_string(),
                        r.metric.clone(),
                        k.clone(),
                        system.to_string(),
                        value.to_string(),
                    ]
                };
                let mut a = base(&cmp.system_a, r.value_a);
                a.extend([String::new(), String::new(), String::new(), String::new()]);
                let mut b = base(&cmp.system_b, r.value_b);
                let sig = r.significance.as_ref();
                b.extend([
                    r.delta.to_string(),
                    opt(sig.map(|s| s.p_value)),
                    opt(sig.map(|s| s.ci_low)),
                    opt(sig.map(|s| s.ci_high)),
                ]);
                rows.push(a);
                rows.push(b);
            }
            files.insert("comparison.csv".to_string(), csv_bytes(&COMPARISON_HEADER, &rows));
        }
    }
    if formats.contains(&ReportFormat::Svg) && !report.systems.is_empty() {
        let xs: Vec<String> = report.options.ks.iter().map(|k| k.to_string()).collect();
        let overall: Vec<(String, Vec<f64>)> = report
            .systems
            .iter()
            .map(|s| (s.name.clone(), s.overall.curve.points.iter().map(|p| p.rate).collect()))
            .collect();
        files.insert(
            "plot_overall_detection.svg".to_string(),
            svg::line_chart("Top-k detection rate", "k", "detection rate", &xs, &overall).into_bytes(),
        );
        for s in &report.systems {
            let sfx = suffix(s);
            for t in s.breakdowns.iter().filter(|t| !t.rows.is_empty()) {
                let series: Vec<(String, Vec<f64>)> = t
                    .rows
                    .iter()
                    .map(|r| {
                        (
                            format!("{} (n={})", r.stratum, r.n_queries),
                            r.curve.points.iter().map(|p| p.rate).collect(),
                        )
                    })
                    .collect();
                let title = format!("{}: detection rate by {}", s.name, t.dimension);
                files.insert(
                    format!("plot_{}_detection{sfx}.svg", t.dimension),
                    svg::line_chart(&title, "k", "detection rate", &xs, &series).into_bytes(),
                );
                let bars: Vec<(String, f64)> = t.rows.iter().map(|r| (r.stratum.clone(), r.recall.value)).collect();
                let title = format!("{}: recall@{} by {}", s.name, t.totals.recall.depth, t.dimension);
                files.insert(
                    format!("plot_{}_recall{sfx}.svg", t.dimension),
                    svg::bar_chart(&title, "recall", &bars).into_bytes(),
                );
            }
        }
    }
    files
}

/// Writes the report into `out_dir`. Writability is probed before any
/// report file is created.
pub fn emit_report(
    report: &MetricsReport,
    out_dir: &Path,
    formats: &BTreeSet<ReportFormat>,
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let probe = out_dir.join(".write-probe");
    fs::write(&probe, b"").map_err(io_err(&probe))?;
    fs::remove_file(&probe).map_err(io_err(&probe))?;

    let files = render_report(report, formats);
    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = out_dir.join(name);
        fs::write(&path, bytes).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests;
