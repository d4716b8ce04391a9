//! Deterministic synthetic corpora and ranked-list fixtures.
//!
//! Text is drawn from a parallel English/Chinese vocabulary so that
//! documents of one invention rendered in two languages are translations
//! of each other. An X citation's cited document is a perturbed copy of the
//! citing invention's source, which gives lexical retrievers a real signal.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Days, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CitationCategory, CitationRecord, CitationSource, Corpus, PatentDocument};
use crate::dataset::{BuildManifest, EvaluationDataset, QueryCase, StratumLabels};
use crate::execution::{standardize_results, RawHit, RawOutput, RunControls, RunRecord};
use crate::sampling::largest_remainder;

const EN_PREFIX: [&str; 16] = [
    "hydro", "thermo", "electro", "micro", "nano", "opto", "bio", "photo", "magneto", "piezo", "aero",
    "cryo", "servo", "turbo", "poly", "mono",
];
const EN_ROOT: [&str; 20] = [
    "valve", "sensor", "module", "circuit", "membrane", "actuator", "polymer", "catalyst", "antenna",
    "rotor", "lens", "filter", "gear", "coil", "electrode", "substrate", "channel", "pump", "fiber",
    "chamber",
];
const ZH_PREFIX: [&str; 16] = [
    "液", "热", "电", "微", "纳", "光", "生", "影", "磁", "压", "气", "冷", "伺", "涡", "聚", "单",
];
const ZH_ROOT: [&str; 20] = [
    "阀", "感", "模", "路", "膜", "驱", "胶", "催", "线", "转", "镜", "滤", "齿", "圈", "极", "基",
    "道", "泵", "纤", "腔",
];
const EN_GENERAL: [&str; 40] = [
    "device", "method", "system", "comprising", "wherein", "first", "second", "configured", "connected",
    "layer", "unit", "control", "signal", "data", "output", "input", "surface", "portion", "plurality",
    "housing", "frame", "member", "assembly", "process", "temperature", "pressure", "flow", "energy",
    "position", "region", "element", "structure", "material", "mounted", "coupled", "adjacent",
    "rotating", "measuring", "supplying", "receiving",
];
const ZH_GENERAL: [&str; 40] = [
    "装置", "方法", "系统", "包括", "其中", "第一", "第二", "配置", "连接", "层", "单元", "控制",
    "信号", "数据", "输出", "输入", "表面", "部分", "多个", "壳体", "框架", "构件", "组件", "工艺",
    "温度", "压力", "流量", "能量", "位置", "区域", "元件", "结构", "材料", "安装", "耦合", "相邻",
    "旋转", "测量", "供应", "接收",
];
const N_TERMS: usize = 320;
const KEY_TERMS: usize = 12;
const KEY_TERM_PROB: f64 = 0.35;
const SECTIONS: [char; 8] = ['A', 'B', 'C', 'D', 'E', 'F', 'G', 'H'];
const SECTION_WEIGHTS: [u32; 8] = [2, 2, 2, 1, 1, 1, 3, 3];
const PART_LENGTHS: [usize; 6] = [4, 25, 30, 30, 20, 80];
const SENTENCE_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_docs: usize,
    pub reference_date: NaiveDate,
    /// Renders every document in this language ("en" or "zh").
    pub language: Option<String>,
    /// Injects one of each validation defect.
    pub defects: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_docs: 200,
            reference_date: NaiveDate::from_ymd_opt(2025, 1, 1).unwrap(),
            language: None,
            defects: false,
        }
    }
}

/// Ground truth of a generated corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthPlan {
    pub families: BTreeMap<String, Vec<String>>,
    /// Examiner X edges as (citing, cited).
    pub x_edges: Vec<(String, String)>,
    pub defects: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    pub plan: SynthPlan,
}

/// Token sequences of one invention: title, abstract, claims, background,
/// summary, detailed description. Values below `N_TERMS` are technical
/// terms, the rest general words.
#[derive(Debug, Clone)]
struct Concept {
    section: usize,
    ipc: String,
    key_terms: Vec<usize>,
    parts: Vec<Vec<usize>>,
}

fn draw_token(rng: &mut ChaCha8Rng, key_terms: &[usize]) -> usize {
    if rng.random_bool(KEY_TERM_PROB) {
        *key_terms.choose(rng).unwrap()
    } else {
        N_TERMS + rng.random_range(0..EN_GENERAL.len())
    }
}

fn section_terms(section: usize) -> Vec<usize> {
    (0..N_TERMS).filter(|i| i % SECTIONS.len() == section).collect()
}

fn fresh_concept(rng: &mut ChaCha8Rng, section: usize) -> Concept {
    let mut terms = section_terms(section);
    terms.shuffle(rng);
    terms.truncate(KEY_TERMS);
    let parts = PART_LENGTHS
        .iter()
        .map(|&n| (0..n).map(|_| draw_token(rng, &terms)).collect())
        .collect();
    let class = rng.random_range(1..=99);
    let sub = (b'A' + rng.random_range(0..26u8)) as char;
    let ipc = format!(
        "{}{class:02}{sub} {}/{}",
        SECTIONS[section],
        rng.random_range(1..100),
        rng.random_range(0..100)
    );
    Concept {
        section,
        ipc,
        key_terms: terms,
        parts,
    }
}

/// Copy of `src` with a few key terms swapped and each token redrawn with
/// probability `p`.
fn mutate(rng: &mut ChaCha8Rng, src: &Concept, p: f64, swap_terms: usize) -> Concept {
    let mut key_terms = src.key_terms.clone();
    if swap_terms > 0 {
        let mut pool: Vec<usize> = section_terms(src.section)
            .into_iter()
            .filter(|t| !key_terms.contains(t))
            .collect();
        pool.shuffle(rng);
        for (slot, t) in pool.into_iter().take(swap_terms).enumerate() {
            key_terms[slot] = t;
        }
    }
    let parts = src
        .parts
        .iter()
        .map(|part| {
            part.iter()
                .map(|&t| if rng.random_bool(p) { draw_token(rng, &key_terms) } else { t })
                .collect()
        })
        .collect();
    Concept {
        section: src.section,
        ipc: src.ipc.clone(),
        key_terms,
        parts,
    }
}

fn word(token: usize, zh: bool) -> String {
    match (token < N_TERMS, zh) {
        (true, false) => format!("{}{}", EN_PREFIX[token / 20], EN_ROOT[token % 20]),
        (true, true) => format!("{}{}", ZH_PREFIX[token / 20], ZH_ROOT[token % 20]),
        (false, false) => EN_GENERAL[token - N_TERMS].to_string(),
        (false, true) => ZH_GENERAL[token - N_TERMS].to_string(),
    }
}

fn render(tokens: &[usize], zh: bool) -> String {
    tokens
        .chunks(SENTENCE_LEN)
        .map(|chunk| {
            let words: Vec<String> = chunk.iter().map(|&t| word(t, zh)).collect();
            if zh {
                format!("{}。", words.concat())
            } else {
                format!("{}.", words.join(" "))
            }
        })
        .collect::<Vec<_>>()
        .join(if zh { "" } else { " " })
}

fn make_doc(
    concept: &Concept,
    doc_id: String,
    jurisdiction: &str,
    language: &str,
    family_id: String,
    filing_date: NaiveDate,
) -> PatentDocument {
    let zh = language == "zh";
    let p = &concept.parts;
    let title = if zh {
        p[0].iter().map(|&t| word(t, true)).collect::<String>()
    } else {
        p[0].iter().map(|&t| word(t, false)).collect::<Vec<_>>().join(" ")
    };
    let headings = if zh {
        ["技术领域", "背景技术", "发明内容", "具体实施方式"]
    } else {
        ["TECHNICAL FIELD", "BACKGROUND", "SUMMARY", "DETAILED DESCRIPTION"]
    };
    let description = format!(
        "{}\n{}\n\n{}\n{}\n\n{}\n{}\n\n{}\n{}",
        headings[0],
        render(&p[0], zh),
        headings[1],
        render(&p[3], zh),
        headings[2],
        render(&p[4], zh),
        headings[3],
        render(&p[5], zh)
    );
    PatentDocument {
        doc_id,
        jurisdiction: jurisdiction.to_string(),
        language: language.to_string(),
        ipc_codes: vec![concept.ipc.clone()],
        filing_date,
        family_id,
        title,
        abstract_text: render(&p[1], zh),
        claims: format!("1. {}", render(&p[2], zh)),
        description,
    }
}

fn language_for(jurisdiction: &str, forced: Option<&str>) -> String {
    match forced {
        Some(l) => l.to_string(),
        None if jurisdiction == "CN" => "zh".into(),
        None => "en".into(),
    }
}

fn doc_id_for(jurisdiction: &str, serial: usize) -> String {
    match jurisdiction {
        "CN" => format!("CN{}A", 110_000_000 + serial * 37),
        "US" => format!("US{}B2", 10_000_000 + serial * 41),
        "EP" => format!("EP{}A1", 3_000_000 + serial * 43),
        "WO" => format!("WO2019{:06}A1", 100_000 + serial * 47),
        other => format!("{other}{}", 500_000 + serial),
    }
}

fn days_before(date: NaiveDate, days: u64) -> NaiveDate {
    date.checked_sub_days(Days::new(days)).expect("date in range")
}

struct Invention {
    concept: Concept,
    base_date: NaiveDate,
    members: Vec<(String, String, NaiveDate)>, // (doc_id, language, filing date)
}

/// Generates a corpus of about `n_docs` documents with a 50/20/20/10
/// CN/US/EP/WO mix, patent families and examiner citations.
pub fn generate_corpus(cfg: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mix: BTreeMap<String, f64> = [("CN", 0.5), ("US", 0.2), ("EP", 0.2), ("WO", 0.1)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let counts = largest_remainder(cfg.n_docs, &mix);
    let mut pool: Vec<String> = counts
        .iter()
        .flat_map(|(j, &n)| std::iter::repeat_n(j.clone(), n))
        .collect();
    pool.shuffle(&mut rng);

    let section_total: u32 = SECTION_WEIGHTS.iter().sum();
    let mut inventions: Vec<Invention> = Vec::new();
    let mut docs = Vec::new();
    let mut serial = 0;
    let span_days = 14 * 365;
    while !pool.is_empty() {
        let size = match rng.random_range(0..100) {
            0..55 => 1,
            55..85 => 2,
            _ => 3,
        }
        .min(pool.len());
        let mut pick = rng.random_range(0..section_total);
        let section = SECTION_WEIGHTS
            .iter()
            .position(|&w| {
                if pick < w {
                    true
                } else {
                    pick -= w;
                    false
                }
            })
            .unwrap();
        let base_date = days_before(cfg.reference_date, rng.random_range(60..span_days));
        inventions.push(Invention {
            concept: fresh_concept(&mut rng, section),
            base_date,
            members: pool.drain(..size).map(|j| (j, String::new(), base_date)).collect(),
        });
    }
    inventions.sort_by_key(|inv| inv.base_date);

    let mut plan = SynthPlan::default();
    let mut citations = Vec::new();
    for i in 0..inventions.len() {
        // Derive from an earlier invention, preferring the same section.
        let earlier: Vec<usize> = (0..i).collect();
        let same: Vec<usize> = earlier
            .iter()
            .copied()
            .filter(|&j| inventions[j].concept.section == inventions[i].concept.section)
            .collect();
        let source = if !earlier.is_empty() && rng.random_bool(0.7) {
            Some(*same.choose(&mut rng).or_else(|| earlier.choose(&mut rng)).unwrap())
        } else {
            None
        };
        if let Some(j) = source {
            let section = inventions[i].concept.section;
            let mut c = mutate(&mut rng, &inventions[j].concept, 0.3, 4);
            c.section = section;
            inventions[i].concept = c;
        }
        let family_id = format!("F{:05}", i);
        let mut member_ids = Vec::new();
        for m in 0..inventions[i].members.len() {
            let jurisdiction = inventions[i].members[m].0.clone();
            let language = language_for(&jurisdiction, cfg.language.as_deref());
            let doc_id = doc_id_for(&jurisdiction, serial);
            serial += 1;
            let lag = rng.random_range(0..365);
            let date = inventions[i]
                .base_date
                .checked_add_days(Days::new(lag))
                .unwrap()
                .min(days_before(cfg.reference_date, 1));
            let concept = if m == 0 {
                inventions[i].concept.clone()
            } else {
                mutate(&mut rng, &inventions[i].concept, 0.02, 0)
            };
            docs.push(make_doc(&concept, doc_id.clone(), &jurisdiction, &language, family_id.clone(), date));
            inventions[i].members[m] = (doc_id.clone(), language, date);
            member_ids.push(doc_id);
        }
        plan.families.insert(family_id, member_ids);

        for m in 0..inventions[i].members.len() {
            let (citing, lang, citing_date) = inventions[i].members[m].clone();
            let mut cited_here = BTreeSet::new();
            if let Some(j) = source {
                let older: Vec<&(String, String, NaiveDate)> = inventions[j]
                    .members
                    .iter()
                    .filter(|(_, _, d)| *d <= citing_date)
                    .collect();
                if rng.random_bool(0.8) && !older.is_empty() {
                    let same_lang = older.iter().find(|(_, l, _)| *l == lang);
                    let cited = match same_lang {
                        Some(m) if rng.random_bool(0.6) => m.0.clone(),
                        _ => older.choose(&mut rng).unwrap().0.clone(),
                    };
                    cited_here.insert(cited.clone());
                    plan.x_edges.push((citing.clone(), cited.clone()));
                    citations.push(CitationRecord {
                        citing_id: citing.clone(),
                        cited_id: cited,
                        category: CitationCategory::X,
                        source: CitationSource::Examiner,
                    });
                }
            }
            if i > 0 {
                for _ in 0..rng.random_range(0..3) {
                    let j = rng.random_range(0..i);
                    let (cited, _, cited_date) = inventions[j].members.choose(&mut rng).unwrap().clone();
                    if cited_date > citing_date || !cited_here.insert(cited.clone()) {
                        continue;
                    }
                    let category = if rng.random_bool(0.6) {
                        CitationCategory::Y
                    } else {
                        CitationCategory::A
                    };
                    citations.push(CitationRecord {
                        citing_id: citing.clone(),
                        cited_id: cited,
                        category,
                        source: CitationSource::Examiner,
                    });
                }
            }
        }
    }

    if cfg.defects && docs.len() >= 5 {
        docs[0].ipc_codes = vec!["G6F".into()];
        docs[1].language = "xx".into();
        docs[2].filing_date = cfg.reference_date.checked_add_days(Days::new(30)).unwrap();
        docs[3].description = String::new();
        citations.push(CitationRecord {
            citing_id: docs[4].doc_id.clone(),
            cited_id: "ZZ9999999A".into(),
            category: CitationCategory::X,
            source: CitationSource::Examiner,
        });
        plan.defects = vec![
            format!("{}: malformed ipc", docs[0].doc_id),
            format!("{}: non-ISO language", docs[1].doc_id),
            format!("{}: future filing date", docs[2].doc_id),
            format!("{}: empty description", docs[3].doc_id),
            format!("{}: dangling citation", docs[4].doc_id),
        ];
    }

    plan.x_edges.sort();
    let corpus = Corpus::new(docs, citations, cfg.reference_date).expect("generated corpus is consistent");
    SynthCorpus { corpus, plan }
}

/// Corpus of `n_queries` recent query patents, each with one examiner X
/// citation to a near copy of itself, plus two unrelated distractors per
/// query. Every document is in `language` and forms its own family.
pub fn planted_corpus(seed: u64, n_queries: usize, language: &str, reference_date: NaiveDate) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jurisdiction = if language == "zh" { "CN" } else { "US" };
    let mut docs = Vec::new();
    let mut citations = Vec::new();
    let mut plan = SynthPlan::default();
    let mut serial = 0;
    let mut add = |concept: &Concept, date: NaiveDate, docs: &mut Vec<PatentDocument>, plan: &mut SynthPlan| {
        let id = doc_id_for(jurisdiction, serial);
        let fam = format!("P{serial:05}");
        serial += 1;
        docs.push(make_doc(concept, id.clone(), jurisdiction, language, fam.clone(), date));
        plan.families.insert(fam, vec![id.clone()]);
        id
    };
    for _ in 0..n_queries {
        let section = rng.random_range(0..SECTIONS.len());
        let concept = fresh_concept(&mut rng, section);
        let copy = mutate(&mut rng, &concept, 0.2, 2);
        let q_date = days_before(reference_date, rng.random_range(30..3 * 365));
        let r_date = days_before(q_date, rng.random_range(30..2 * 365));
        let q = add(&concept, q_date, &mut docs, &mut plan);
        let r = add(&copy, r_date, &mut docs, &mut plan);
        for _ in 0..2 {
            let section = rng.random_range(0..SECTIONS.len());
            let other = fresh_concept(&mut rng, section);
            let d = days_before(reference_date, rng.random_range(30..8 * 365));
            add(&other, d, &mut docs, &mut plan);
        }
        plan.x_edges.push((q.clone(), r.clone()));
        citations.push(CitationRecord {
            citing_id: q,
            cited_id: r,
            category: CitationCategory::X,
            source: CitationSource::Examiner,
        });
    }
    let corpus = Corpus::new(docs, citations, reference_date).expect("planted corpus is consistent");
    SynthCorpus { corpus, plan }
}

/// Dataset over externally supplied cases.
pub fn dataset_from_cases(
    cases: Vec<(QueryCase, StratumLabels)>,
    reference_date: NaiveDate,
) -> Result<EvaluationDataset, crate::dataset::DatasetError> {
    let n = cases.len();
    let (queries, strata) = cases.into_iter().unzip();
    EvaluationDataset::new(BuildManifest::external(reference_date, n), queries, strata)
}

/// Run record holding the given ranked id lists, in rank order.
pub fn run_from_lists(
    dataset: &EvaluationDataset,
    lists: &BTreeMap<String, Vec<String>>,
    adapter_id: &str,
    max_depth: usize,
) -> RunRecord {
    let results = dataset
        .queries
        .iter()
        .map(|q| {
            let ids = lists.get(&q.query_doc_id).cloned().unwrap_or_default();
            let raw = RawOutput {
                hits: ids.into_iter().map(RawHit::new).collect(),
            };
            (q.query_doc_id.clone(), standardize_results(&q.query_doc_id, &raw, max_depth))
        })
        .collect();
    RunRecord {
        controls: RunControls {
            adapter_id: adapter_id.to_string(),
            max_depth,
            ..Default::default()
        },
        dataset_manifest_hash: dataset.content_hash(),
        results,
        started: None,
        finished: None,
    }
}

/// Target shape of one system's results for [`table_fixture`].
#[derive(Debug, Clone, PartialEq)]
pub struct RowSpec {
    pub name: String,
    /// Queries with a relevant document within the top k, per k.
    pub cumulative_hits: Vec<usize>,
    /// Relevant documents retrieved anywhere, summed over queries.
    pub retrieved: usize,
}

/// Builds a dataset of `n_queries` queries, each with `relevant_per_query`
/// relevant ids, and one run per row whose detection counts at `ks` and
/// retrieved total match the row exactly. Result depth is the last k.
pub fn table_fixture(
    ks: &[usize],
    n_queries: usize,
    relevant_per_query: usize,
    rows: &[RowSpec],
) -> Result<(EvaluationDataset, Vec<RunRecord>), String> {
    if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) || ks[0] == 0 {
        return Err("k values must be positive and strictly increasing".into());
    }
    if relevant_per_query == 0 {
        return Err("each query needs a relevant document".into());
    }
    let depth = *ks.last().unwrap();
    let qid = |q: usize| format!("Q{q:04}");
    let rel = |q: usize, r: usize| format!("Q{q:04}R{r}");
    let cases = (0..n_queries)
        .map(|q| {
            let mut case = QueryCase::new(qid(q));
            for r in 0..relevant_per_query {
                case.add(&rel(q, r), CitationSource::Examiner);
            }
            let labels = StratumLabels {
                language: "en".into(),
                ipc_section: "G".into(),
                ipc_class: "G06".into(),
                jurisdiction: "US".into(),
            };
            (case, labels)
        })
        .collect();
    let dataset = dataset_from_cases(cases, NaiveDate::from_ymd_opt(2025, 1, 1).unwrap())
        .map_err(|e| e.to_string())?;

    let mut runs = Vec::new();
    for row in rows {
        if row.cumulative_hits.len() != ks.len() {
            return Err(format!("{}: one count per k required", row.name));
        }
        if row.cumulative_hits.windows(2).any(|w| w[0] > w[1]) || row.cumulative_hits[ks.len() - 1] > n_queries {
            return Err(format!("{}: counts must be non-decreasing and at most {n_queries}", row.name));
        }
        let mut first_ranks = Vec::new();
        let mut prev = 0;
        for (k, &c) in ks.iter().zip(&row.cumulative_hits) {
            first_ranks.extend(std::iter::repeat_n(*k, c - prev));
            prev = c;
        }
        let hit_queries = first_ranks.len();
        if row.retrieved < hit_queries {
            return Err(format!("{}: retrieved below hit count", row.name));
        }
        let mut extra = row.retrieved - hit_queries;
        let mut lists = BTreeMap::new();
        for (q, &first) in first_ranks.iter().enumerate() {
            let room = (relevant_per_query - 1).min(depth - first);
            let add = room.min(extra);
            extra -= add;
            let mut list: Vec<String> = (1..first).map(|r| format!("{}N{r}", qid(q))).collect();
            list.push(rel(q, 0));
            list.extend((1..=add).map(|r| rel(q, r)));
            lists.insert(qid(q), list);
        }
        if extra > 0 {
            return Err(format!("{}: retrieved total not reachable within depth {depth}", row.name));
        }
        runs.push(run_from_lists(&dataset, &lists, &row.name, depth));
    }
    Ok((dataset, runs))
}
