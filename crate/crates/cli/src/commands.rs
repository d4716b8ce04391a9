use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use chrono::NaiveDate;
use noveval::alignment::TrigramJaccard;
use noveval::corpus::{load_corpus, validate_corpus, write_corpus, Corpus, LoadOptions};
use noveval::dataset::{self, BuildConfig, DatasetError, Dimension, EvaluationDataset, StratumTargets};
use noveval::execution::{
    run_evaluation, QueryOptions, ReferenceAdapter, RemoteAdapter, RemoteConfig, RunControls, RunError, RunRecord,
    SystemAdapter,
};
use noveval::metrics::{Averaging, BootstrapConfig, BootstrapMode, MatchRule, Matcher};
use noveval::report::{
    check_run_hash, compare_systems, emit_report, evaluate_system, render_table, MetricOptions, MetricsReport,
    ReportError,
};
use noveval::synth::{generate_corpus, planted_corpus, SynthConfig};

use crate::{
    parse_formats, require_file, BuildArgs, CmdResult, CompareArgs, EvaluateArgs, Failure, MetricArgs, RunArgs,
    SynthArgs, ValidateArgs, EXIT_RUN_FAILURES,
};

fn load(path: &Path, lenient: bool) -> Result<Corpus, Failure> {
    require_file(path, "corpus")?;
    let opts = LoadOptions { lenient, ..Default::default() };
    let (corpus, report) = load_corpus(path, &opts).with_context(|| format!("loading corpus {}", path.display()))?;
    if !report.skipped.is_empty() {
        log::warn!("skipped {} malformed corpus lines", report.skipped.len());
    }
    Ok(corpus)
}

fn load_dataset(path: &Path) -> Result<EvaluationDataset, Failure> {
    require_file(path, "dataset")?;
    Ok(EvaluationDataset::read(path).with_context(|| format!("loading dataset {}", path.display()))?)
}

fn load_run(path: &Path) -> Result<RunRecord, Failure> {
    require_file(path, "run log")?;
    Ok(RunRecord::read(path).with_context(|| format!("loading run log {}", path.display()))?)
}

fn report_failure(e: ReportError) -> Failure {
    match e {
        ReportError::HashMismatch { .. } => Failure::integrity(e),
        ReportError::Format(_) => Failure::usage(e),
        other => other.into(),
    }
}

pub fn build_dataset(args: BuildArgs) -> CmdResult {
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(Failure::usage(anyhow!("--threshold {} must lie in [0, 1]", args.threshold)));
    }
    let targets = match &args.targets {
        Some(p) => {
            require_file(p, "targets file")?;
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let t: StratumTargets = serde_json::from_str(&text)
                .map_err(|e| Failure::usage(anyhow!("invalid targets file {}: {e}", p.display())))?;
            Some(t)
        }
        None => None,
    };
    let corpus = load(&args.corpus, args.lenient)?;
    let config = BuildConfig {
        seed: args.seed,
        threshold: args.threshold,
        recency_years: args.recency_years,
        targets,
        sample_size: args.sample_size,
    };
    let dataset = dataset::build_dataset(&corpus, &TrigramJaccard, &config).map_err(|e| match e {
        DatasetError::Threshold(_) | DatasetError::SampleTooLarge { .. } | DatasetError::Allocation(_) => {
            Failure::usage(e)
        }
        other => other.into(),
    })?;
    dataset.write(&args.out)?;

    let m = &dataset.manifest;
    println!("wrote {} queries to {}", dataset.len(), args.out.display());
    println!("seed {}  threshold {}  recency {} years  reference date {}", m.seed, m.threshold, m.recency_years, m.reference_date);
    println!("candidates {}  removed {:?}  family coverage {:.3}", m.candidates, m.removed, m.family_coverage);
    for dim in [Dimension::Language, Dimension::IpcSection, Dimension::Jurisdiction] {
        let mut counts = std::collections::BTreeMap::<&str, usize>::new();
        for s in &dataset.strata {
            *counts.entry(s.get(dim)).or_default() += 1;
        }
        let parts: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{dim}: {}", parts.join(" "));
    }
    println!("dataset hash {}", dataset.content_hash());
    Ok(())
}

pub fn run(args: RunArgs) -> CmdResult {
    let dataset = load_dataset(&args.dataset)?;
    let corpus = Arc::new(load(&args.corpus, false)?);
    let adapter: Arc<dyn SystemAdapter> = match args.adapter.as_str() {
        "reference" => Arc::new(ReferenceAdapter::new(corpus.clone(), !args.include_family)),
        "remote" => {
            let path = args
                .adapter_config
                .as_ref()
                .ok_or_else(|| Failure::usage(anyhow!("--adapter remote requires --adapter-config")))?;
            require_file(path, "adapter config")?;
            let config = RemoteConfig::from_file(path).map_err(|e| Failure::usage(anyhow!(e)))?;
            Arc::new(RemoteAdapter::new(args.adapter_id.clone().unwrap_or_else(|| "remote".into()), config))
        }
        other => return Err(Failure::usage(anyhow!("unknown adapter {other:?} (expected reference or remote)"))),
    };
    let controls = RunControls {
        seed: args.seed,
        timeout_ms: args.timeout_ms,
        max_depth: args.max_depth,
        adapter_id: adapter.adapter_id().to_string(),
        parallelism: args.parallelism,
    };
    if let Err(e) = controls.validate() {
        return Err(Failure::usage(e));
    }
    let record = match run_evaluation(&dataset, &corpus, adapter, &controls, &QueryOptions::default()) {
        Ok(r) => r,
        Err(RunError::TooManyFailures { failed, total, record }) => {
            record.write(&args.out)?;
            print_tally(&record);
            return Err(Failure {
                code: EXIT_RUN_FAILURES,
                error: anyhow!("{failed} of {total} queries failed; partial log written to {}", args.out.display()),
            });
        }
        Err(e @ RunError::Controls(_)) => return Err(Failure::usage(e)),
        Err(e) => return Err(e.into()),
    };
    record.write(&args.out)?;
    println!("wrote run log {} ({} queries, adapter {}, seed {})", args.out.display(), record.results.len(), record.controls.adapter_id, record.controls.seed);
    print_tally(&record);
    Ok(())
}

fn print_tally(record: &RunRecord) {
    let parts: Vec<String> = record.status_counts().iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("status: {}  anomalies: {}", parts.join(" "), record.anomalies());
}

struct MetricSetup {
    dataset: EvaluationDataset,
    corpus: Option<Corpus>,
    matcher: Matcher,
    rule: MatchRule,
    opts: MetricOptions,
    dimensions: Vec<Dimension>,
    formats: std::collections::BTreeSet<noveval::report::ReportFormat>,
}

fn metric_setup(args: &MetricArgs) -> Result<MetricSetup, Failure> {
    let rule: MatchRule = args.match_rule.parse().map_err(|e: String| Failure::usage(anyhow!(e)))?;
    let dimensions = args
        .dimensions
        .iter()
        .filter(|d| !d.is_empty())
        .map(|d| d.parse::<Dimension>().map_err(|e| Failure::usage(anyhow!(e))))
        .collect::<Result<Vec<_>, _>>()?;
    let formats = parse_formats(&args.formats)?;
    noveval::metrics::check_k_grid(&args.k_grid).map_err(Failure::usage)?;
    if rule == MatchRule::Family && args.corpus.is_none() {
        return Err(Failure::usage(anyhow!("--match-rule family requires --corpus")));
    }
    let dataset = load_dataset(&args.dataset)?;
    let corpus = args.corpus.as_deref().map(|p| load(p, false)).transpose()?;
    let matcher = match &corpus {
        Some(c) => Matcher::for_rule(rule, c),
        None => Matcher::exact(),
    };
    Ok(MetricSetup {
        dataset,
        corpus,
        matcher,
        rule,
        opts: MetricOptions {
            ks: args.k_grid.clone(),
            averaging: if args.macro_recall { Averaging::Macro } else { Averaging::Micro },
        },
        dimensions,
        formats,
    })
}

pub fn evaluate(args: EvaluateArgs) -> CmdResult {
    let run = load_run(&args.run)?;
    let s = metric_setup(&args.metrics)?;
    check_run_hash(&run, &s.dataset).map_err(report_failure)?;
    let name = args.name.clone().unwrap_or_else(|| run.controls.adapter_id.clone());
    let system = evaluate_system(&name, &run, &s.dataset, s.corpus.as_ref(), &s.dimensions, &s.matcher, &s.opts)
        .map_err(report_failure)?;
    let report = MetricsReport {
        dataset_hash: s.dataset.content_hash(),
        seed: args.metrics.seed,
        match_rule: s.rule,
        options: s.opts,
        dimensions: s.dimensions,
        systems: vec![system],
        comparison: None,
    };
    let written = emit_report(&report, &args.metrics.out, &s.formats).map_err(report_failure)?;
    print!("{}", render_table(&report));
    println!("wrote {} files to {}", written.len(), args.metrics.out.display());
    Ok(())
}

pub fn compare(args: CompareArgs) -> CmdResult {
    let run_a = load_run(&args.run_a)?;
    let run_b = load_run(&args.run_b)?;
    let s = metric_setup(&args.metrics)?;
    check_run_hash(&run_a, &s.dataset).map_err(report_failure)?;
    check_run_hash(&run_b, &s.dataset).map_err(report_failure)?;
    let strata = args
        .strata
        .iter()
        .filter(|d| !d.is_empty())
        .map(|d| d.parse::<Dimension>().map_err(|e| Failure::usage(anyhow!(e))))
        .collect::<Result<Vec<_>, _>>()?;
    if args.resamples < 1000 {
        return Err(Failure::usage(anyhow!("--resamples must be at least 1000")));
    }
    let bootstrap = BootstrapConfig {
        n_resamples: args.resamples,
        seed: args.metrics.seed,
        strata,
        mode: BootstrapMode::Auto,
    };
    let name_a = args.name_a.clone().unwrap_or_else(|| run_a.controls.adapter_id.clone());
    let mut name_b = args.name_b.clone().unwrap_or_else(|| run_b.controls.adapter_id.clone());
    if name_b == name_a {
        name_b.push_str(" (b)");
    }
    let comparison = compare_systems(
        (&name_a, &run_a),
        (&name_b, &run_b),
        &s.dataset,
        &s.dimensions,
        &s.matcher,
        &s.opts,
        &bootstrap,
    )
    .map_err(report_failure)?;
    let systems = [(&name_a, &run_a), (&name_b, &run_b)]
        .into_iter()
        .map(|(n, r)| evaluate_system(n, r, &s.dataset, s.corpus.as_ref(), &s.dimensions, &s.matcher, &s.opts))
        .collect::<Result<Vec<_>, _>>()
        .map_err(report_failure)?;
    let report = MetricsReport {
        dataset_hash: s.dataset.content_hash(),
        seed: args.metrics.seed,
        match_rule: s.rule,
        options: s.opts,
        dimensions: s.dimensions,
        systems,
        comparison: Some(comparison),
    };
    let written = emit_report(&report, &args.metrics.out, &s.formats).map_err(report_failure)?;
    print!("{}", render_table(&report));
    let cmp = report.comparison.as_ref().unwrap();
    for row in cmp.rows.iter().filter(|r| r.dimension == "overall") {
        let sig = row.significance.as_ref().unwrap();
        let delta = match row.k {
            Some(_) => format!("{:+.0} pp", row.delta * 100.0),
            None => format!("{:+.2}", row.delta),
        };
        println!("{:<14} delta {:>8}  p={:.4}  95% CI [{:.4}, {:.4}]", row.metric, delta, sig.p_value, sig.ci_low, sig.ci_high);
    }
    println!("wrote {} files to {}", written.len(), args.metrics.out.display());
    Ok(())
}

pub fn validate(args: ValidateArgs) -> CmdResult {
    let corpus = load(&args.corpus, false)?;
    let report = validate_corpus(&corpus);
    println!("documents: {}  citations: {}", report.doc_count, report.citation_count);
    for c in &report.dangling_citations {
        println!("dangling citation: {} -> {}", c.citing_id, c.cited_id);
    }
    for (id, why) in &report.malformed_docs {
        println!("malformed: {id}: {why}");
    }
    for (id, why) in &report.empty_sections {
        println!("empty section: {id}: {why}");
    }
    println!("defects: {}", report.defect_count());
    if args.strict && !report.is_clean() {
        return Err(Failure::usage(anyhow!("corpus has {} defects", report.defect_count())));
    }
    Ok(())
}

pub fn synth(args: SynthArgs) -> CmdResult {
    let reference_date = NaiveDate::parse_from_str(&args.reference_date, "%Y-%m-%d")
        .map_err(|e| Failure::usage(anyhow!("--reference-date {:?}: {e}", args.reference_date)))?;
    let generated = match args.planted {
        Some(n) => planted_corpus(args.seed, n, args.language.as_deref().unwrap_or("en"), reference_date),
        None => generate_corpus(&SynthConfig {
            seed: args.seed,
            n_docs: args.n_docs,
            reference_date,
            language: args.language.clone(),
            defects: args.defects,
        }),
    };
    write_corpus(&generated.corpus, &args.out)?;
    println!(
        "wrote {} documents and {} citations to {}",
        generated.corpus.len(),
        generated.corpus.citations().len(),
        args.out.display()
    );
    Ok(())
}
