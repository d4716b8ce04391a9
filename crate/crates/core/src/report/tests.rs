use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;

use super::*;
use crate::corpus::tests::doc;
use crate::corpus::{CitationSource, Corpus};
use crate::dataset::{QueryCase, StratumLabels};
use crate::metrics::{detection_curve, recall, BootstrapMode};
use crate::synth::{dataset_from_cases, run_from_lists, table_fixture, RowSpec};

fn date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2025, 1, 1).unwrap()
}

fn labels(lang: &str, section: &str) -> StratumLabels {
    StratumLabels {
        language: lang.into(),
        ipc_section: section.into(),
        ipc_class: format!("{section}01"),
        jurisdiction: if lang == "zh" { "CN".into() } else { "US".into() },
    }
}

fn case(q: &str, rel: &[&str]) -> QueryCase {
    let mut c = QueryCase::new(q);
    for r in rel {
        c.add(r, CitationSource::Examiner);
    }
    c
}

fn lists(entries: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
    entries
        .iter()
        .map(|(q, ids)| (q.to_string(), ids.iter().map(|s| s.to_string()).collect()))
        .collect()
}

fn bootstrap_cfg() -> BootstrapConfig {
    BootstrapConfig {
        n_resamples: 1000,
        seed: 5,
        strata: vec![Dimension::Language],
        mode: BootstrapMode::MonteCarlo,
    }
}

/// zh queries hit at rank 1, en queries at rank 8 or not at all.
fn planted_difficulty() -> (EvaluationDataset, RunRecord) {
    let mut cases = Vec::new();
    let mut l = BTreeMap::new();
    for i in 0..12 {
        let (lang, q) = if i < 6 { ("zh", format!("CN{i}")) } else { ("en", format!("US{i}")) };
        let r = format!("{q}R");
        cases.push((case(&q, &[&r]), labels(lang, if i % 2 == 0 { "G" } else { "H" })));
        let list: Vec<String> = match (lang, i % 3) {
            ("zh", _) => vec![r, "X1".into()],
            (_, 0) => vec![],
            _ => (1..8).map(|n| format!("N{n}")).chain([r]).collect(),
        };
        l.insert(q, list);
    }
    let ds = dataset_from_cases(cases, date()).unwrap();
    let run = run_from_lists(&ds, &l, "sys", 100);
    (ds, run)
}

#[test]
fn single_language_breakdown_equals_totals() {
    let ds = dataset_from_cases(
        vec![(case("A1", &["R1"]), labels("en", "G")), (case("A2", &["R2"]), labels("en", "G"))],
        date(),
    )
    .unwrap();
    let run = run_from_lists(&ds, &lists(&[("A1", &["R1"]), ("A2", &["X"])]), "s", 10);
    let t = breakdown_by(&run, &ds, Dimension::Language, &Matcher::exact(), &MetricOptions::default()).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.rows[0].curve, t.totals.curve);
    assert_eq!(t.rows[0].recall, t.totals.recall);
    assert!(t.is_consistent());
}

#[test]
fn planted_easier_stratum_dominates() {
    let (ds, run) = planted_difficulty();
    let opts = MetricOptions::default();
    let t = breakdown_by(&run, &ds, Dimension::Language, &Matcher::exact(), &opts).unwrap();
    let zh = t.rows.iter().find(|r| r.stratum == "zh").unwrap();
    let en = t.rows.iter().find(|r| r.stratum == "en").unwrap();
    for (a, b) in zh.curve.points.iter().zip(&en.curve.points) {
        assert!(a.rate > b.rate, "k={}", a.k);
    }
    assert!(t.is_consistent());
    // totals agree with the metrics module on the full dataset
    let full = detection_curve(&run, &ds, &opts.ks, &Matcher::exact()).unwrap();
    assert_eq!(t.totals.curve, full);
    assert_eq!(t.totals.recall, recall(&run, &ds, &Matcher::exact(), Averaging::Micro).unwrap());
}

#[test]
fn rows_sorted_by_size_then_label() {
    let cases = vec![
        (case("Q1", &["R"]), labels("en", "G")),
        (case("Q2", &["R"]), labels("zh", "G")),
        (case("Q3", &["R"]), labels("zh", "G")),
        (case("Q4", &["R"]), labels("de", "G")),
    ];
    let ds = dataset_from_cases(cases, date()).unwrap();
    let run = run_from_lists(&ds, &BTreeMap::new(), "s", 10);
    let t = breakdown_by(&run, &ds, Dimension::Language, &Matcher::exact(), &MetricOptions::default()).unwrap();
    let order: Vec<&str> = t.rows.iter().map(|r| r.stratum.as_str()).collect();
    assert_eq!(order, ["zh", "de", "en"]);
}

fn bilingual_corpus() -> Corpus {
    let mut docs = Vec::new();
    let mut q = doc("CNQ", "fq");
    q.language = "zh".into();
    docs.push(q);
    for i in 0..10 {
        docs.push(doc(&format!("USR{i}"), &format!("f{i}")));
    }
    let mut z = doc("CNZ", "fz");
    z.language = "zh".into();
    docs.push(z);
    Corpus::new(docs, vec![], date()).unwrap()
}

#[test]
fn cross_language_cell_arithmetic() {
    let corpus = bilingual_corpus();
    let rel: Vec<String> = (0..10).map(|i| format!("USR{i}")).collect();
    let mut rel_refs: Vec<&str> = rel.iter().map(|s| s.as_str()).collect();
    rel_refs.push("CNZ");
    rel_refs.push("GHOST1");
    let ds = dataset_from_cases(vec![(case("CNQ", &rel_refs), labels("zh", "G"))], date()).unwrap();
    let run = run_from_lists(
        &ds,
        &lists(&[("CNQ", &["USR0", "X", "USR3", "USR5", "USR9", "CNZ"])]),
        "s",
        100,
    );
    let m = cross_language_recall(&run, &ds, &corpus, &Matcher::exact()).unwrap();
    let zh_en = m.cell("zh", "en").unwrap();
    assert_eq!((zh_en.n_pairs, zh_en.retrieved, zh_en.recall), (10, 4, 0.4));
    assert_eq!(m.cell("zh", "zh").unwrap().recall, 1.0);
    assert_eq!(m.cell("zh", UNKNOWN_LANGUAGE).unwrap().n_pairs, 1);
    assert_eq!(m.row_pairs("zh"), 12);
    assert_eq!(m.cell("en", "zh").unwrap().n_pairs, 0);
}

#[test]
fn monolingual_matrix_has_empty_off_diagonal() {
    let corpus = Corpus::new(vec![doc("A", "f1"), doc("B", "f2")], vec![], date()).unwrap();
    let ds = dataset_from_cases(vec![(case("A", &["B"]), labels("en", "G"))], date()).unwrap();
    let run = run_from_lists(&ds, &lists(&[("A", &["B"])]), "s", 10);
    let m = cross_language_recall(&run, &ds, &corpus, &Matcher::exact()).unwrap();
    assert_eq!(m.languages, ["en"]);
    assert_eq!(m.off_diagonal_pairs(), 0);
}

#[test]
fn self_comparison_has_zero_deltas() {
    let (ds, run) = planted_difficulty();
    let cmp = compare_systems(
        ("a", &run),
        ("b", &run),
        &ds,
        &[Dimension::Language],
        &Matcher::exact(),
        &MetricOptions::default(),
        &bootstrap_cfg(),
    )
    .unwrap();
    assert!(cmp.rows.iter().all(|r| r.delta == 0.0));
    for r in cmp.rows.iter().filter_map(|r| r.significance.as_ref()) {
        assert!(r.p_value >= 0.99);
    }
}

#[test]
fn better_system_has_positive_deltas() {
    let rows = [
        RowSpec { name: "weak".into(), cumulative_hits: vec![5, 10, 20], retrieved: 25 },
        RowSpec { name: "strong".into(), cumulative_hits: vec![30, 40, 45], retrieved: 70 },
    ];
    let (ds, runs) = table_fixture(&[1, 10, 100], 60, 2, &rows).unwrap();
    let opts = MetricOptions { ks: vec![1, 10, 100], averaging: Averaging::Micro };
    let cmp = compare_systems(
        ("weak", &runs[0]),
        ("strong", &runs[1]),
        &ds,
        &[],
        &Matcher::exact(),
        &opts,
        &bootstrap_cfg(),
    )
    .unwrap();
    for r in &cmp.rows {
        assert!(r.delta > 0.0, "{}", r.metric);
        assert!(r.significance.as_ref().unwrap().p_value < 0.01);
    }
    assert_eq!(cmp.overall("top1").unwrap().delta, 25.0 / 60.0);
    assert_eq!(cmp.overall("recall_micro").unwrap().delta, 45.0 / 120.0);
}

#[test]
fn hash_mismatch_is_rejected() {
    let (ds, mut run) = planted_difficulty();
    run.dataset_manifest_hash = "0".repeat(64);
    let err = compare_systems(
        ("a", &run),
        ("b", &run),
        &ds,
        &[],
        &Matcher::exact(),
        &MetricOptions::default(),
        &bootstrap_cfg(),
    )
    .unwrap_err();
    assert!(matches!(err, ReportError::HashMismatch { .. }));
    let err = evaluate_system("a", &run, &ds, None, &[], &Matcher::exact(), &MetricOptions::default()).unwrap_err();
    assert!(matches!(err, ReportError::HashMismatch { .. }));
}

fn sample_report() -> MetricsReport {
    let (ds, run) = planted_difficulty();
    let dims = vec![Dimension::Language, Dimension::IpcSection];
    let sys = evaluate_system("Reference", &run, &ds, None, &dims, &Matcher::exact(), &MetricOptions::default())
        .unwrap();
    MetricsReport {
        dataset_hash: ds.content_hash(),
        seed: 7,
        match_rule: MatchRule::Exact,
        options: MetricOptions::default(),
        dimensions: dims,
        systems: vec![sys],
        comparison: None,
    }
}

fn all_formats() -> BTreeSet<ReportFormat> {
    [ReportFormat::Text, ReportFormat::Csv, ReportFormat::Svg].into_iter().collect()
}

#[test]
fn empty_results_give_header_only_csv_and_no_plots() {
    let report = MetricsReport {
        systems: vec![],
        ..sample_report()
    };
    let files = render_report(&report, &all_formats());
    assert_eq!(
        String::from_utf8(files["breakdown_language.csv"].clone()).unwrap(),
        "dimension,stratum,n_queries,k,detection_rate\n"
    );
    assert_eq!(
        String::from_utf8(files["recall_ipc_section.csv"].clone()).unwrap(),
        "dimension,stratum,n_queries,recall,recall_depth\n"
    );
    assert!(!files.keys().any(|k| k.ends_with(".svg")));
}

#[test]
fn csv_round_trips_in_memory_tables() {
    let report = sample_report();
    let files = render_report(&report, &all_formats());
    let table = &report.systems[0].breakdowns[0];
    let mut rdr = csv::Reader::from_reader(files["breakdown_language.csv"].as_slice());
    let parsed: Vec<(String, usize, usize, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[1].to_string(), r[2].parse().unwrap(), r[3].parse().unwrap(), r[4].parse().unwrap())
        })
        .collect();
    let expected: Vec<(String, usize, usize, f64)> = table
        .rows
        .iter()
        .chain([&table.totals])
        .flat_map(|r| r.curve.points.iter().map(move |p| (r.stratum.clone(), r.n_queries, p.k, p.rate)))
        .collect();
    assert_eq!(parsed, expected);

    let mut rdr = csv::Reader::from_reader(files["recall_language.csv"].as_slice());
    let recalls: Vec<f64> = rdr.records().map(|r| r.unwrap()[3].parse().unwrap()).collect();
    let expected: Vec<f64> = table.rows.iter().chain([&table.totals]).map(|r| r.recall.value).collect();
    assert_eq!(recalls, expected);
    assert!(files.contains_key("plot_language_detection.svg"));
    assert!(files.contains_key("plot_ipc_section_recall.svg"));
}

#[test]
fn emit_is_deterministic_and_probes_first() {
    let report = sample_report();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let wa = emit_report(&report, a.path(), &all_formats()).unwrap();
    emit_report(&report, b.path(), &all_formats()).unwrap();
    for p in &wa {
        let name = p.file_name().unwrap();
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(b.path().join(name)).unwrap());
    }
    assert!(!a.path().join(".write-probe").exists());

    let blocker = a.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = emit_report(&report, &blocker.join("out"), &all_formats()).unwrap_err();
    assert!(matches!(err, ReportError::Io { .. }));
}

#[test]
fn table_layout() {
    let rows = [
        RowSpec { name: "Semantic".into(), cumulative_hits: vec![1, 2], retrieved: 3 },
        RowSpec { name: "Novelty".into(), cumulative_hits: vec![2, 3], retrieved: 4 },
    ];
    let (ds, runs) = table_fixture(&[1, 3], 4, 2, &rows).unwrap();
    let opts = MetricOptions { ks: vec![1, 3], averaging: Averaging::Micro };
    let systems = runs
        .iter()
        .zip(&rows)
        .map(|(r, s)| evaluate_system(&s.name, r, &ds, None, &[], &Matcher::exact(), &opts).unwrap())
        .collect();
    let report = MetricsReport {
        dataset_hash: ds.content_hash(),
        seed: 0,
        match_rule: MatchRule::Exact,
        options: opts,
        dimensions: vec![],
        systems,
        comparison: None,
    };
    let expected = "\
System   |  Top1 |  Top3 | Recall@3
-----------------------------------
Semantic |   25% |   50% |     0.38
Novelty  |   50% |   75% |     0.50
";
    assert_eq!(render_table(&report), expected);
}

#[test]
fn format_names() {
    assert_eq!("table-text".parse::<ReportFormat>().unwrap(), ReportFormat::Text);
    assert_eq!("svg-plot-data".parse::<ReportFormat>().unwrap(), ReportFormat::Svg);
    assert!("pdf".parse::<ReportFormat>().is_err());
}
