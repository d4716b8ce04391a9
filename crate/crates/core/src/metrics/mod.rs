//! Top-k detection rate and recall over binary relevance.
//!
//! Top-k detection rate is the fraction of queries with at least one
//! relevant document among their first k results; recall is the fraction of
//! relevant documents retrieved anywhere in the returned list. Both share a
//! [`Matcher`] deciding when a retrieved document counts as a relevant one.
//! Queries whose run status is not OK contribute no hits.

mod bootstrap;

pub use bootstrap::{
    exhaustive_distribution, paired_bootstrap, paired_bootstrap_values, BootstrapConfig,
    BootstrapMode, MetricSpec, PairedValues, SignificanceResult, MERGED_STRATUM,
};

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::dataset::EvaluationDataset;
use crate::execution::{normalize_doc_id, RankedList, RunRecord};

pub const DEFAULT_K_GRID: [usize; 8] = [1, 3, 5, 10, 20, 30, 50, 100];

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("metric undefined on an empty dataset")]
    EmptyDataset,
    #[error("invalid k grid: {0}")]
    BadK(String),
    #[error("run has no result for query {0}")]
    Coverage(String),
    #[error("bootstrap: {0}")]
    Bootstrap(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchRule {
    Exact,
    Family,
}

impl fmt::Display for MatchRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchRule::Exact => "exact",
            MatchRule::Family => "family",
        })
    }
}

impl FromStr for MatchRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(MatchRule::Exact),
            "family" => Ok(MatchRule::Family),
            other => Err(format!("unknown match rule {other:?} (expected exact or family)")),
        }
    }
}

/// Decides whether a retrieved id matches a relevant id. Ids are compared in
/// normalized form; under the family rule any two documents sharing a
/// family id match.
#[derive(Debug, Clone)]
pub struct Matcher {
    rule: MatchRule,
    family_of: HashMap<String, String>,
}

impl Matcher {
    pub fn exact() -> Self {
        Matcher {
            rule: MatchRule::Exact,
            family_of: HashMap::new(),
        }
    }

    pub fn family(corpus: &Corpus) -> Self {
        Matcher::family_from(corpus.family_map())
    }

    pub fn family_from(map: impl IntoIterator<Item = (String, String)>) -> Self {
        Matcher {
            rule: MatchRule::Family,
            family_of: map
                .into_iter()
                .filter_map(|(doc, fam)| normalize_doc_id(&doc).map(|d| (d, fam)))
                .collect(),
        }
    }

    pub fn for_rule(rule: MatchRule, corpus: &Corpus) -> Self {
        match rule {
            MatchRule::Exact => Matcher::exact(),
            MatchRule::Family => Matcher::family(corpus),
        }
    }

    pub fn rule(&self) -> MatchRule {
        self.rule
    }

    /// Equivalence-class key of a document id.
    pub fn key(&self, doc_id: &str) -> String {
        let id = normalize_doc_id(doc_id).unwrap_or_else(|| doc_id.to_string());
        match self.rule {
            MatchRule::Exact => format!("doc:{id}"),
            MatchRule::Family => match self.family_of.get(&id) {
                Some(fam) => format!("family:{fam}"),
                None => format!("doc:{id}"),
            },
        }
    }
}

/// Smallest rank whose document matches a relevant id, if any.
pub fn first_relevant_rank(
    ranked: &RankedList,
    relevant: &BTreeSet<String>,
    matcher: &Matcher,
) -> Option<usize> {
    let keys: HashSet<String> = relevant.iter().map(|r| matcher.key(r)).collect();
    ranked
        .effective_hits()
        .iter()
        .find(|h| keys.contains(&matcher.key(&h.doc_id)))
        .map(|h| h.rank)
}

/// Number of relevant ids matched by some retrieved document.
pub fn retrieved_relevant(ranked: &RankedList, relevant: &BTreeSet<String>, matcher: &Matcher) -> usize {
    let got: HashSet<String> = ranked
        .effective_hits()
        .iter()
        .map(|h| matcher.key(&h.doc_id))
        .collect();
    relevant.iter().filter(|r| got.contains(&matcher.key(r))).count()
}

/// Per-query sufficient statistics for every metric here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryOutcome {
    pub first_rank: Option<usize>,
    pub retrieved_relevant: usize,
    pub relevant: usize,
}

impl QueryOutcome {
    pub fn hit_at(&self, k: usize) -> bool {
        self.first_rank.is_some_and(|r| r <= k)
    }
}

/// Outcomes in dataset query order.
pub fn query_outcomes(
    run: &RunRecord,
    dataset: &EvaluationDataset,
    matcher: &Matcher,
) -> Result<Vec<QueryOutcome>, MetricError> {
    dataset
        .queries
        .iter()
        .map(|q| {
            let ranked = run
                .results
                .get(&q.query_doc_id)
                .ok_or_else(|| MetricError::Coverage(q.query_doc_id.clone()))?;
            Ok(QueryOutcome {
                first_rank: first_relevant_rank(ranked, &q.relevant_ids, matcher),
                retrieved_relevant: retrieved_relevant(ranked, &q.relevant_ids, matcher),
                relevant: q.relevant_ids.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    /// Queries with a relevant document in the top k.
    pub hits: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionCurve {
    pub points: Vec<CurvePoint>,
    pub n_queries: usize,
}

impl DetectionCurve {
    pub fn rate_at(&self, k: usize) -> Option<f64> {
        self.points.iter().find(|p| p.k == k).map(|p| p.rate)
    }

    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[0].rate <= w[1].rate && w[0].k < w[1].k)
    }
}

pub fn check_k_grid(ks: &[usize]) -> Result<(), MetricError> {
    if ks.is_empty() {
        return Err(MetricError::BadK("empty".into()));
    }
    if ks[0] == 0 {
        return Err(MetricError::BadK("k must be at least 1".into()));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricError::BadK("k values must be strictly increasing".into()));
    }
    Ok(())
}

/// Detection curve over precomputed outcomes.
pub fn curve_from_outcomes(outcomes: &[QueryOutcome], ks: &[usize]) -> Result<DetectionCurve, MetricError> {
    check_k_grid(ks)?;
    if outcomes.is_empty() {
        return Err(MetricError::EmptyDataset);
    }
    let n = outcomes.len();
    let points = ks
        .iter()
        .map(|&k| {
            let hits = outcomes.iter().filter(|o| o.hit_at(k)).count();
            CurvePoint {
                k,
                hits,
                rate: hits as f64 / n as f64,
            }
        })
        .collect();
    Ok(DetectionCurve { points, n_queries: n })
}

pub fn topk_detection_rate(
    run: &RunRecord,
    dataset: &EvaluationDataset,
    k: usize,
    matcher: &Matcher,
) -> Result<f64, MetricError> {
    let outcomes = query_outcomes(run, dataset, matcher)?;
    Ok(curve_from_outcomes(&outcomes, &[k])?.points[0].rate)
}

pub fn detection_curve(
    run: &RunRecord,
    dataset: &EvaluationDataset,
    ks: &[usize],
    matcher: &Matcher,
) -> Result<DetectionCurve, MetricError> {
    check_k_grid(ks)?;
    let outcomes = query_outcomes(run, dataset, matcher)?;
    curve_from_outcomes(&outcomes, ks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Micro,
    Macro,
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Averaging::Micro => "micro",
            Averaging::Macro => "macro",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallValue {
    pub value: f64,
    /// Σ retrieved relevant (micro numerator).
    pub retrieved: usize,
    /// Σ relevant (micro denominator).
    pub relevant: usize,
    /// Result depth the recall was computed over.
    pub depth: usize,
    pub averaging: Averaging,
}

pub fn recall_from_outcomes(
    outcomes: &[QueryOutcome],
    depth: usize,
    averaging: Averaging,
) -> Result<RecallValue, MetricError> {
    if outcomes.is_empty() {
        return Err(MetricError::EmptyDataset);
    }
    let retrieved: usize = outcomes.iter().map(|o| o.retrieved_relevant).sum();
    let relevant: usize = outcomes.iter().map(|o| o.relevant).sum();
    let value = match averaging {
        Averaging::Micro if relevant == 0 => 0.0,
        Averaging::Micro => retrieved as f64 / relevant as f64,
        Averaging::Macro => {
            outcomes
                .iter()
                .map(|o| {
                    if o.relevant == 0 {
                        0.0
                    } else {
                        o.retrieved_relevant as f64 / o.relevant as f64
                    }
                })
                .sum::<f64>()
                / outcomes.len() as f64
        }
    };
    Ok(RecallValue {
        value,
        retrieved,
        relevant,
        depth,
        averaging,
    })
}

/// Recall over the full returned lists (depth = the run's max_depth).
pub fn recall(
    run: &RunRecord,
    dataset: &EvaluationDataset,
    matcher: &Matcher,
    averaging: Averaging,
) -> Result<RecallValue, MetricError> {
    let outcomes = query_outcomes(run, dataset, matcher)?;
    recall_from_outcomes(&outcomes, run.controls.max_depth, averaging)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::execution::{standardize_results, QueryStatus, RawHit, RawOutput};

    fn list(ids: &[&str]) -> RankedList {
        standardize_results(
            "q",
            &RawOutput {
                hits: ids.iter().map(|i| RawHit::new(*i)).collect(),
            },
            1000,
        )
    }

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn first_rank_basic() {
        let l = list(&["A", "B", "C", "R1", "D", "E", "F", "G", "R2"]);
        assert_eq!(first_relevant_rank(&l, &set(&["R1", "R2"]), &Matcher::exact()), Some(4));
        assert_eq!(first_relevant_rank(&l, &set(&["Z"]), &Matcher::exact()), None);
    }

    #[test]
    fn family_rule_matches_members() {
        let l = list(&["A", "USR", "C"]);
        let matcher = Matcher::family_from([
            ("CNR".to_string(), "fam-r".to_string()),
            ("USR".to_string(), "fam-r".to_string()),
            ("A".to_string(), "fam-a".to_string()),
        ]);
        assert_eq!(first_relevant_rank(&l, &set(&["CNR"]), &matcher), Some(2));
        assert_eq!(first_relevant_rank(&l, &set(&["CNR"]), &Matcher::exact()), None);
        assert_eq!(retrieved_relevant(&l, &set(&["CNR", "Q"]), &matcher), 1);
    }

    #[test]
    fn failed_status_counts_as_miss() {
        let mut l = list(&["R"]);
        l.status = QueryStatus::Timeout;
        assert_eq!(first_relevant_rank(&l, &set(&["R"]), &Matcher::exact()), None);
        assert_eq!(retrieved_relevant(&l, &set(&["R"]), &Matcher::exact()), 0);
    }

    fn outcome(first: Option<usize>, got: usize, rel: usize) -> QueryOutcome {
        QueryOutcome {
            first_rank: first,
            retrieved_relevant: got,
            relevant: rel,
        }
    }

    #[test]
    fn four_query_curve_matches_enumeration() {
        // Oracle: for each k count queries whose first relevant rank is <= k.
        let ranks = [Some(1), Some(3), Some(7), None];
        let outcomes: Vec<_> = ranks.iter().map(|r| outcome(*r, 1, 1)).collect();
        let curve = curve_from_outcomes(&outcomes, &[1, 3, 5, 10]).unwrap();
        let rates: Vec<f64> = curve.points.iter().map(|p| p.rate).collect();
        assert_eq!(rates, [0.25, 0.5, 0.5, 0.75]);
        assert!(curve.is_monotone());
    }

    #[test]
    fn k_grid_validation_and_empty() {
        assert!(check_k_grid(&[1, 1]).is_err());
        assert!(check_k_grid(&[0, 1]).is_err());
        assert!(check_k_grid(&[]).is_err());
        assert_eq!(curve_from_outcomes(&[], &[1]), Err(MetricError::EmptyDataset));
        assert_eq!(
            recall_from_outcomes(&[], 100, Averaging::Micro),
            Err(MetricError::EmptyDataset)
        );
    }

    #[test]
    fn recall_micro_and_macro() {
        let o = [outcome(Some(1), 1, 3)];
        assert_eq!(recall_from_outcomes(&o, 100, Averaging::Micro).unwrap().value, 1.0 / 3.0);
        let o = [outcome(Some(1), 2, 2), outcome(None, 0, 2), outcome(Some(4), 1, 4)];
        let micro = recall_from_outcomes(&o, 100, Averaging::Micro).unwrap();
        assert_eq!(micro.value, 3.0 / 8.0);
        assert_eq!((micro.retrieved, micro.relevant, micro.depth), (3, 8, 100));
        let macro_ = recall_from_outcomes(&o, 100, Averaging::Macro).unwrap();
        assert_eq!(macro_.value, (1.0 + 0.0 + 0.25) / 3.0);
    }
}
