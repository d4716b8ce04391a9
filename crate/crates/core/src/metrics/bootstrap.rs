//! Stratified paired bootstrap for system comparisons.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{query_outcomes, Averaging, Matcher, MetricError, QueryOutcome};
use crate::dataset::{Dimension, EvaluationDataset};
use crate::execution::RunRecord;

pub const MERGED_STRATUM: &str = "(merged)";
const MIN_RESAMPLES: usize = 1000;
const MIN_STRATUM_SIZE: usize = 2;
const EXHAUSTIVE_MAX_QUERIES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "lowercase")]
pub enum MetricSpec {
    Detection { k: usize },
    Recall { averaging: Averaging },
}

impl MetricSpec {
    pub fn name(&self) -> String {
        match self {
            MetricSpec::Detection { k } => format!("top{k}"),
            MetricSpec::Recall { averaging } => format!("recall_{averaging}"),
        }
    }

    /// Per-query (numerator, denominator) contributions of one system.
    fn contribution(&self, o: &QueryOutcome) -> (f64, f64) {
        match self {
            MetricSpec::Detection { k } => (o.hit_at(*k) as u8 as f64, 1.0),
            MetricSpec::Recall { averaging: Averaging::Micro } => {
                (o.retrieved_relevant as f64, o.relevant as f64)
            }
            MetricSpec::Recall { averaging: Averaging::Macro } => {
                let r = if o.relevant == 0 {
                    0.0
                } else {
                    o.retrieved_relevant as f64 / o.relevant as f64
                };
                (r, 1.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMode {
    /// Exhaustive for at most ten queries, Monte Carlo otherwise.
    #[default]
    Auto,
    MonteCarlo,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub seed: u64,
    pub strata: Vec<Dimension>,
    pub mode: BootstrapMode,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n_resamples: 10_000,
            seed: 0,
            strata: vec![Dimension::Language, Dimension::IpcSection],
            mode: BootstrapMode::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub metric_name: String,
    /// Metric of system A minus metric of system B.
    pub observed_diff: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Resamples drawn, or distinct ordered resamples when exhaustive.
    pub n_resamples: u64,
    pub strata_spec: String,
    pub seed: u64,
    pub exhaustive: bool,
    /// Strata folded into the catch-all because they were too small.
    pub merged_strata: Vec<String>,
}

/// Paired per-query contributions. The difference statistic of a sample S
/// is Σ_S num / Σ_S den.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedValues {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    pub strata: Vec<String>,
}

impl PairedValues {
    pub fn from_outcomes(
        metric: MetricSpec,
        a: &[QueryOutcome],
        b: &[QueryOutcome],
        strata: Vec<String>,
    ) -> Self {
        let (num, den) = a
            .iter()
            .zip(b)
            .map(|(oa, ob)| {
                let (na, da) = metric.contribution(oa);
                let (nb, _) = metric.contribution(ob);
                (na - nb, da)
            })
            .unzip();
        PairedValues { num, den, strata }
    }

    pub fn len(&self) -> usize {
        self.num.len()
    }

    pub fn is_empty(&self) -> bool {
        self.num.is_empty()
    }

    fn diff_of(&self, idx: impl Iterator<Item = usize>) -> f64 {
        let (n, d) = idx.fold((0.0, 0.0), |(n, d), i| (n + self.num[i], d + self.den[i]));
        ratio(n, d)
    }

    pub fn observed(&self) -> f64 {
        self.diff_of(0..self.len())
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Groups query indices by stratum, folding strata below the minimum size
/// into a catch-all.
fn group_strata(strata: &[String]) -> (Vec<Vec<usize>>, Vec<String>) {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in strata.iter().enumerate() {
        groups.entry(s.as_str()).or_default().push(i);
    }
    let mut merged_names = Vec::new();
    let mut merged = Vec::new();
    let mut kept = Vec::new();
    for (name, idx) in groups {
        if idx.len() < MIN_STRATUM_SIZE {
            merged_names.push(name.to_string());
            merged.extend(idx);
        } else {
            kept.push(idx);
        }
    }
    if !merged.is_empty() {
        log::warn!(
            "bootstrap: {} strata with fewer than {MIN_STRATUM_SIZE} queries merged into {MERGED_STRATUM}",
            merged_names.len()
        );
        if merged.len() < MIN_STRATUM_SIZE && !kept.is_empty() {
            let largest = (0..kept.len()).max_by_key(|&i| (kept[i].len(), usize::MAX - i)).unwrap();
            kept[largest].extend(merged);
            kept[largest].sort_unstable();
        } else {
            merged.sort_unstable();
            kept.push(merged);
        }
    }
    (kept, merged_names)
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn two_sided_p(observed: f64, against: usize, total: usize) -> f64 {
    if observed == 0.0 {
        return 1.0;
    }
    (2.0 * (against as f64 + 1.0) / (total as f64 + 1.0)).min(1.0)
}

fn is_against(observed: f64, d: f64) -> bool {
    if observed > 0.0 {
        d <= 0.0
    } else {
        d >= 0.0
    }
}

/// Bootstrap over paired values. Resample `b` draws from a ChaCha8 stream
/// `b` of `seed`, so results do not depend on thread scheduling.
pub fn paired_bootstrap_values(
    values: &PairedValues,
    metric_name: &str,
    strata_spec: &str,
    config: &BootstrapConfig,
) -> Result<SignificanceResult, MetricError> {
    if values.is_empty() {
        return Err(MetricError::EmptyDataset);
    }
    let exhaustive = match config.mode {
        BootstrapMode::Auto => values.len() <= EXHAUSTIVE_MAX_QUERIES,
        BootstrapMode::MonteCarlo => false,
        BootstrapMode::Exhaustive => {
            if values.len() > EXHAUSTIVE_MAX_QUERIES {
                return Err(MetricError::Bootstrap(format!(
                    "exhaustive mode supports at most {EXHAUSTIVE_MAX_QUERIES} queries, got {}",
                    values.len()
                )));
            }
            true
        }
    };
    if !exhaustive && config.n_resamples < MIN_RESAMPLES {
        return Err(MetricError::Bootstrap(format!(
            "n_resamples must be at least {MIN_RESAMPLES}, got {}",
            config.n_resamples
        )));
    }
    let observed = values.observed();
    let (groups, merged_strata) = group_strata(&values.strata);

    let (p_value, ci_low, ci_high, n_resamples) = if exhaustive {
        let dist = exhaustive_distribution(values, &groups);
        let against: f64 = dist
            .iter()
            .filter(|(d, _)| is_against(observed, *d))
            .map(|(_, w)| w)
            .sum();
        let p = if observed == 0.0 { 1.0 } else { (2.0 * against).min(1.0) };
        let count: u64 = groups.iter().map(|g| (g.len() as u64).pow(g.len() as u32)).product();
        (p, weighted_quantile(&dist, 0.025), weighted_quantile(&dist, 0.975), count)
    } else {
        let mut diffs: Vec<f64> = (0..config.n_resamples)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(b as u64);
                let (mut n, mut d) = (0.0, 0.0);
                for g in &groups {
                    for _ in 0..g.len() {
                        let i = g[rng.random_range(0..g.len())];
                        n += values.num[i];
                        d += values.den[i];
                    }
                }
                ratio(n, d)
            })
            .collect();
        let against = diffs.iter().filter(|&&d| is_against(observed, d)).count();
        diffs.sort_by(f64::total_cmp);
        (
            two_sided_p(observed, against, diffs.len()),
            quantile(&diffs, 0.025),
            quantile(&diffs, 0.975),
            config.n_resamples as u64,
        )
    };

    Ok(SignificanceResult {
        metric_name: metric_name.to_string(),
        observed_diff: observed,
        p_value,
        ci_low,
        ci_high,
        n_resamples,
        strata_spec: strata_spec.to_string(),
        seed: config.seed,
        exhaustive,
        merged_strata,
    })
}

fn weighted_quantile(dist: &[(f64, f64)], q: f64) -> f64 {
    let mut cum = 0.0;
    for &(d, w) in dist {
        cum += w;
        if cum >= q - 1e-12 {
            return d;
        }
    }
    dist.last().map(|x| x.0).unwrap_or(0.0)
}

/// All compositions of `n` into `parts` non-negative counts.
fn compositions(n: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() + 1 == parts {
        prefix.push(n);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for c in 0..=n {
        prefix.push(c);
        compositions(n - c, parts, prefix, out);
        prefix.pop();
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

/// Exact bootstrap distribution of the difference statistic as sorted
/// (value, probability) pairs, enumerating resample multisets per stratum
/// with multinomial weights.
pub fn exhaustive_distribution(values: &PairedValues, groups: &[Vec<usize>]) -> Vec<(f64, f64)> {
    // (Σnum, Σden, probability) over strata processed so far
    let mut acc: Vec<(f64, f64, f64)> = vec![(0.0, 0.0, 1.0)];
    for g in groups {
        let n = g.len();
        let mut comps = Vec::new();
        compositions(n, n, &mut Vec::with_capacity(n), &mut comps);
        let total = (n as f64).powi(n as i32);
        let per_stratum: Vec<(f64, f64, f64)> = comps
            .iter()
            .map(|c| {
                let w = factorial(n) / c.iter().map(|&x| factorial(x)).product::<f64>() / total;
                let num = c.iter().zip(g).map(|(&k, &i)| k as f64 * values.num[i]).sum();
                let den = c.iter().zip(g).map(|(&k, &i)| k as f64 * values.den[i]).sum();
                (num, den, w)
            })
            .collect();
        acc = acc
            .iter()
            .flat_map(|&(n0, d0, p0)| per_stratum.iter().map(move |&(n1, d1, p1)| (n0 + n1, d0 + d1, p0 * p1)))
            .collect();
    }
    let mut dist: Vec<(f64, f64)> = acc.into_iter().map(|(n, d, p)| (ratio(n, d), p)).collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (d, p) in dist {
        match merged.last_mut() {
            Some(last) if (last.0 - d).abs() <= 1e-12 => last.1 += p,
            _ => merged.push((d, p)),
        }
    }
    merged
}

/// Compares run A against run B on `metric`, resampling queries with
/// replacement within strata defined by `config.strata`.
pub fn paired_bootstrap(
    run_a: &RunRecord,
    run_b: &RunRecord,
    dataset: &EvaluationDataset,
    metric: MetricSpec,
    matcher: &Matcher,
    config: &BootstrapConfig,
) -> Result<SignificanceResult, MetricError> {
    if run_a.dataset_manifest_hash != run_b.dataset_manifest_hash {
        return Err(MetricError::Bootstrap(
            "runs were produced against different datasets".into(),
        ));
    }
    let a = query_outcomes(run_a, dataset, matcher)?;
    let b = query_outcomes(run_b, dataset, matcher)?;
    let strata = dataset
        .strata
        .iter()
        .map(|s| {
            config
                .strata
                .iter()
                .map(|d| s.get(*d))
                .collect::<Vec<_>>()
                .join("|")
        })
        .collect();
    let values = PairedValues::from_outcomes(metric, &a, &b, strata);
    let spec = if config.strata.is_empty() {
        "none".to_string()
    } else {
        config.strata.iter().map(|d| d.as_str()).collect::<Vec<_>>().join(",")
    };
    paired_bootstrap_values(&values, &metric.name(), &spec, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(num: &[f64], strata: &[&str]) -> PairedValues {
        PairedValues {
            num: num.to_vec(),
            den: vec![1.0; num.len()],
            strata: strata.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn mc(seed: u64) -> BootstrapConfig {
        BootstrapConfig {
            n_resamples: 2000,
            seed,
            strata: vec![],
            mode: BootstrapMode::MonteCarlo,
        }
    }

    #[test]
    fn identical_systems_give_zero_diff_and_p_one() {
        let v = values(&[0.0; 30], &["en"; 30]);
        let r = paired_bootstrap_values(&v, "top10", "none", &mc(1)).unwrap();
        assert_eq!(r.observed_diff, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!((r.ci_low, r.ci_high), (0.0, 0.0));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let num: Vec<f64> = (0..40).map(|i| [1.0, 0.0, -1.0, 1.0][i % 4]).collect();
        let strata: Vec<&str> = (0..40).map(|i| if i % 3 == 0 { "zh" } else { "en" }).collect();
        let v = values(&num, &strata);
        let a = paired_bootstrap_values(&v, "m", "language", &mc(9)).unwrap();
        let b = paired_bootstrap_values(&v, "m", "language", &mc(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.observed_diff, 10.0 / 40.0);
        assert!(a.ci_low <= a.observed_diff && a.observed_diff <= a.ci_high);
    }

    #[test]
    fn strong_effect_is_significant() {
        let v = values(&[1.0; 50], &["en"; 50]);
        let r = paired_bootstrap_values(&v, "m", "none", &mc(3)).unwrap();
        // every resample is +1, so nothing lands at or below zero
        assert_eq!(r.p_value, 2.0 / 2001.0);
    }

    #[test]
    fn too_few_resamples_rejected() {
        let v = values(&[1.0; 20], &["en"; 20]);
        let cfg = BootstrapConfig { n_resamples: 999, ..mc(0) };
        assert!(paired_bootstrap_values(&v, "m", "none", &cfg).is_err());
    }

    #[test]
    fn singleton_strata_are_merged() {
        let (groups, merged) = group_strata(&["en", "en", "zh", "de", "fr", "fr"].map(String::from));
        assert_eq!(merged, ["de", "zh"]);
        assert_eq!(groups, vec![vec![0, 1], vec![4, 5], vec![2, 3]]);
        // a lone small stratum joins the largest group
        let (groups, _) = group_strata(&["en", "en", "en", "zh"].map(String::from));
        assert_eq!(groups, vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn exhaustive_two_queries_hand_enumerated() {
        // num = [1, 0]: resamples {11}:1/4 -> 1, {10}:2/4 -> 0.5, {00}:1/4 -> 0
        let v = values(&[1.0, 0.0], &["en", "en"]);
        let dist = exhaustive_distribution(&v, &[vec![0, 1]]);
        assert_eq!(dist, vec![(0.0, 0.25), (0.5, 0.5), (1.0, 0.25)]);
        let cfg = BootstrapConfig { mode: BootstrapMode::Auto, ..mc(0) };
        let r = paired_bootstrap_values(&v, "m", "none", &cfg).unwrap();
        assert!(r.exhaustive);
        assert_eq!(r.observed_diff, 0.5);
        assert_eq!(r.p_value, 0.5);
        assert_eq!(r.n_resamples, 4);
        assert_eq!((r.ci_low, r.ci_high), (0.0, 1.0));
    }

    #[test]
    fn exhaustive_weights_sum_to_one() {
        let num = [1.0, -1.0, 0.0, 1.0, 0.0, 1.0, -1.0, 1.0, 0.0, 1.0];
        let v = values(&num, &["a"; 10]);
        let dist = exhaustive_distribution(&v, &[(0..10).collect()]);
        let total: f64 = dist.iter().map(|x| x.1).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let mean: f64 = dist.iter().map(|(d, p)| d * p).sum();
        assert!((mean - 0.3).abs() < 1e-9);
    }

    #[test]
    fn micro_recall_contribution_uses_counts() {
        let a = [QueryOutcome { first_rank: Some(1), retrieved_relevant: 2, relevant: 4 }];
        let b = [QueryOutcome { first_rank: None, retrieved_relevant: 1, relevant: 4 }];
        let v = PairedValues::from_outcomes(
            MetricSpec::Recall { averaging: Averaging::Micro },
            &a,
            &b,
            vec!["x".into()],
        );
        assert_eq!(v.observed(), 0.25);
        let v = PairedValues::from_outcomes(MetricSpec::Detection { k: 1 }, &a, &b, vec!["x".into()]);
        assert_eq!(v.observed(), 1.0);
    }
}
