use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use noveval::execution::RunRecord;
use noveval::synth::{table_fixture, RowSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_noveval"))
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/synthetic_200.jsonl")
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn run_code(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn build(dir: &Path, name: &str, seed: u64, sample: Option<usize>) -> PathBuf {
    let out = dir.join(name);
    let seed = seed.to_string();
    let corpus = fixture();
    let mut args = vec!["build-dataset", "--corpus", p(&corpus), "--seed", &seed, "--out", p(&out)];
    let sample = sample.map(|s| s.to_string());
    if let Some(s) = &sample {
        args.extend(["--sample-size", s]);
    }
    run_ok(&args);
    out
}

fn reference_run(dir: &Path, dataset: &Path, name: &str) -> PathBuf {
    let out = dir.join(name);
    run_ok(&["run", "--dataset", p(dataset), "--corpus", p(&fixture()), "--out", p(&out)]);
    out
}

/// Writes table-fixture dataset and runs for rows given as (name, cumulative hits, retrieved).
fn table_files(dir: &Path, ks: &[usize], n: usize, rel: usize, rows: &[(&str, Vec<usize>, usize)]) -> (PathBuf, Vec<PathBuf>) {
    let specs: Vec<RowSpec> = rows
        .iter()
        .map(|(name, hits, retrieved)| RowSpec {
            name: name.to_string(),
            cumulative_hits: hits.clone(),
            retrieved: *retrieved,
        })
        .collect();
    let (ds, runs) = table_fixture(ks, n, rel, &specs).unwrap();
    let ds_path = dir.join("table.dataset.jsonl");
    ds.write(&ds_path).unwrap();
    let paths = runs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let path = dir.join(format!("table.run{i}.jsonl"));
            r.write(&path).unwrap();
            path
        })
        .collect();
    (ds_path, paths)
}

fn delta_line<'a>(stdout: &'a str, metric: &str) -> &'a str {
    stdout
        .lines()
        .find(|l| l.split_whitespace().next() == Some(metric) && l.contains("delta"))
        .unwrap_or_else(|| panic!("no {metric} delta line in:\n{stdout}"))
}

fn p_value(line: &str) -> f64 {
    let rest = line.split("p=").nth(1).unwrap();
    rest.split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn threshold_out_of_range_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_code(&[
        "build-dataset", "--corpus", p(&fixture()), "--threshold", "1.01", "--out", p(&dir.path().join("d.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold"));
}

#[test]
fn infeasible_targets_name_the_stratum() {
    let dir = tempfile::tempdir().unwrap();
    let targets = dir.path().join("t.json");
    std::fs::write(&targets, r#"{"dimension":"language","proportions":{"zh":1.0}}"#).unwrap();
    let out = run_code(&[
        "build-dataset", "--corpus", p(&fixture()), "--targets", p(&targets), "--sample-size", "70",
        "--out", p(&dir.path().join("d.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stratum zh"), "{err}");
}

#[test]
fn missing_input_is_usage_error() {
    let out = run_code(&["validate", "--corpus", "/nonexistent/corpus.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn hash_mismatch_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let a = build(dir.path(), "a.jsonl", 1, Some(30));
    let b = build(dir.path(), "b.jsonl", 2, Some(30));
    let run = reference_run(dir.path(), &a, "run.jsonl");
    let out = run_code(&["evaluate", "--run", p(&run), "--dataset", p(&b), "--out", p(&dir.path().join("rep"))]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

fn error_stub() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut buf = vec![0; len];
            let _ = reader.read_exact(&mut buf);
            let body = "unavailable";
            let _ = write!(
                stream,
                "HTTP/1.1 503 X\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    format!("http://{addr}/search")
}

#[test]
fn failing_remote_system_exits_three_with_partial_log() {
    let dir = tempfile::tempdir().unwrap();
    let ds = build(dir.path(), "d.jsonl", 0, Some(10));
    let cfg = dir.path().join("adapter.json");
    std::fs::write(&cfg, format!(r#"{{"url":"{}"}}"#, error_stub())).unwrap();
    let out_path = dir.path().join("run.jsonl");
    let out = run_code(&[
        "run", "--dataset", p(&ds), "--corpus", p(&fixture()), "--adapter", "remote", "--adapter-config", p(&cfg),
        "--adapter-id", "stub", "--out", p(&out_path),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let record = RunRecord::read(&out_path).unwrap();
    assert_eq!(record.results.len(), 10);
    assert_eq!(record.status_counts().get("ERROR"), Some(&10));
}

#[test]
fn build_and_run_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = build(dir.path(), "a.jsonl", 7, None);
    let b = build(dir.path(), "b.jsonl", 7, None);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let ra = RunRecord::read(&reference_run(dir.path(), &a, "ra.jsonl")).unwrap();
    let rb = RunRecord::read(&reference_run(dir.path(), &a, "rb.jsonl")).unwrap();
    assert_eq!(ra.sanitized().to_jsonl(), rb.sanitized().to_jsonl());
}

#[test]
fn three_dimensions_give_three_breakdowns() {
    let dir = tempfile::tempdir().unwrap();
    let ds = build(dir.path(), "d.jsonl", 0, None);
    let run = reference_run(dir.path(), &ds, "r.jsonl");
    let rep = dir.path().join("rep");
    run_ok(&[
        "evaluate", "--run", p(&run), "--dataset", p(&ds), "--dimensions", "language,ipc,jurisdiction",
        "--formats", "csv", "--out", p(&rep),
    ]);
    for dim in ["language", "ipc_section", "jurisdiction"] {
        assert!(rep.join(format!("breakdown_{dim}.csv")).is_file(), "{dim}");
    }
    assert!(!rep.join("summary.txt").exists());
}

#[test]
fn table_rows_compare_with_significance() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, runs) = table_files(
        dir.path(),
        &[1, 3, 5, 10, 20, 30, 50, 100],
        100,
        2,
        &[
            ("Semantic Search", vec![11, 16, 20, 24, 29, 33, 38, 44], 64),
            ("Novelty Search", vec![17, 26, 31, 39, 46, 53, 59, 67], 86),
        ],
    );
    let stdout = run_ok(&[
        "compare", "--run-a", p(&runs[0]), "--run-b", p(&runs[1]), "--name-a", "Semantic Search",
        "--name-b", "Novelty Search", "--dataset", p(&ds), "--resamples", "2000", "--out", p(&dir.path().join("rep")),
    ]);
    let top10 = delta_line(&stdout, "top10");
    assert!(top10.contains("+15 pp"), "{top10}");
    assert!((0.0..=1.0).contains(&p_value(top10)));
    assert!(delta_line(&stdout, "recall_micro").contains("+0.11"));
    let row: Vec<&str> = stdout
        .lines()
        .find(|l| l.starts_with("Novelty Search"))
        .unwrap()
        .split('|')
        .map(str::trim)
        .collect();
    assert_eq!(row, ["Novelty Search", "17%", "26%", "31%", "39%", "46%", "53%", "59%", "67%", "0.43"]);
}

#[test]
fn self_comparison_has_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let ds = build(dir.path(), "d.jsonl", 0, None);
    let run = reference_run(dir.path(), &ds, "r.jsonl");
    let stdout = run_ok(&[
        "compare", "--run-a", p(&run), "--run-b", p(&run), "--dataset", p(&ds), "--resamples", "1000",
        "--out", p(&dir.path().join("rep")),
    ]);
    for k in [1, 3, 5, 10, 20, 30, 50, 100] {
        let line = delta_line(&stdout, &format!("top{k}"));
        assert!(line.contains("+0 pp"), "{line}");
        assert!(p_value(line) >= 0.99);
    }
}

#[test]
fn planted_difference_is_significant() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, runs) = table_files(
        dir.path(),
        &[1, 10],
        500,
        1,
        &[("worse", vec![100, 200], 200), ("better", vec![150, 300], 300)],
    );
    let stdout = run_ok(&[
        "compare", "--run-a", p(&runs[0]), "--run-b", p(&runs[1]), "--dataset", p(&ds), "--k-grid", "1,10",
        "--resamples", "2000", "--out", p(&dir.path().join("rep")),
    ]);
    let line = delta_line(&stdout, "top10");
    assert!(line.contains("+20 pp"), "{line}");
    assert!(p_value(line) < 0.01, "{line}");
}

#[test]
fn validate_strict_flags_defects() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("bad.jsonl");
    run_ok(&["synth", "--n-docs", "30", "--defects", "--out", p(&corpus)]);
    let out = run_code(&["validate", "--corpus", p(&corpus), "--strict"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("dangling citation"));
    run_ok(&["validate", "--corpus", p(&fixture()), "--strict"]);
}
