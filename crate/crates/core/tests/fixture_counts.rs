//! The bundled corpus against counts frozen by fixtures/count_fixture.py.

use std::collections::BTreeMap;
use std::path::PathBuf;

use noveval::corpus::{ipc_section_of, load_corpus, write_corpus, LoadOptions};
use noveval::dataset::{extract_x_citations, profile_distributions};
use noveval::synth::{generate_corpus, SynthConfig};
use serde_json::{json, Value};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn tally<'a>(items: impl Iterator<Item = &'a str>) -> Value {
    let mut m: BTreeMap<&str, usize> = BTreeMap::new();
    for i in items {
        *m.entry(i).or_default() += 1;
    }
    json!(m)
}

#[test]
fn counts_match_frozen_oracle() {
    let (corpus, report) = load_corpus(&fixture("synthetic_200.jsonl"), &LoadOptions::default()).unwrap();
    assert!(report.skipped.is_empty());
    let frozen: Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("synthetic_200.counts.json")).unwrap()).unwrap();

    let docs: Vec<_> = corpus.documents().collect();
    let sections: Vec<String> = docs.iter().map(|d| ipc_section_of(d).to_string()).collect();
    let categories: Vec<String> = corpus.citations().iter().map(|c| c.category.to_string()).collect();
    let x = extract_x_citations(&corpus);
    let actual = json!({
        "doc_count": corpus.len(),
        "citation_count": corpus.citations().len(),
        "family_count": corpus.families().len(),
        "jurisdiction": tally(docs.iter().map(|d| d.jurisdiction.as_str())),
        "language": tally(docs.iter().map(|d| d.language.as_str())),
        "ipc_section": tally(sections.iter().map(String::as_str)),
        "category": tally(categories.iter().map(String::as_str)),
        "x_citing_patents": x.len(),
        "x_citing_language": tally(x.keys().map(|id| corpus.get(id).unwrap().language.as_str())),
    });
    assert_eq!(actual, frozen);

    let profile = profile_distributions(&corpus);
    let x_total = frozen["category"]["X"].as_u64().unwrap() as f64;
    assert_eq!(profile.citation_type_proportions["X"], x_total / corpus.citations().len() as f64);
}

#[test]
fn generator_reproduces_bundled_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.jsonl");
    write_corpus(&generate_corpus(&SynthConfig::default()).corpus, &out).unwrap();
    assert_eq!(
        std::fs::read(&out).unwrap(),
        std::fs::read(fixture("synthetic_200.jsonl")).unwrap()
    );
    assert_eq!(
        std::fs::read(dir.path().join("c.manifest.json")).unwrap(),
        std::fs::read(fixture("synthetic_200.manifest.json")).unwrap()
    );
}
