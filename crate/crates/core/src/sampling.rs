//! Largest-remainder (Hamilton) allocation of a sample across strata.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AllocationError {
    #[error("stratum {stratum} is short by {needed} cases (only {available} available) even after redistribution")]
    Infeasible {
        stratum: String,
        needed: usize,
        available: usize,
    },
    #[error("target proportions must be non-negative and sum to 1 (got {0})")]
    BadProportions(f64),
}

/// Splits `total` across strata proportionally to `weights` (which need not
/// be normalized) using largest remainders. Ties on the remainder go to the
/// earlier label in key order.
pub fn largest_remainder(total: usize, weights: &BTreeMap<String, f64>) -> BTreeMap<String, usize> {
    let sum: f64 = weights.values().sum();
    let mut out: BTreeMap<String, usize> = weights.keys().map(|k| (k.clone(), 0)).collect();
    if total == 0 || sum <= 0.0 {
        return out;
    }
    let mut remainders = Vec::with_capacity(weights.len());
    let mut assigned = 0usize;
    for (label, w) in weights {
        let exact = total as f64 * w / sum;
        let base = exact.floor() as usize;
        assigned += base;
        out.insert(label.clone(), base);
        remainders.push((exact - base as f64, label.clone()));
    }
    // Descending remainder, ascending label.
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let mut left = total.saturating_sub(assigned);
    for (_, label) in remainders.into_iter().filter(|(_, l)| weights[l] > 0.0) {
        if left == 0 {
            break;
        }
        *out.get_mut(&label).expect("label present") += 1;
        left -= 1;
    }
    out
}

/// Largest-remainder allocation capped by per-stratum availability. Strata
/// whose quota exceeds availability are fixed at availability and the
/// shortfall is reallocated over the remaining positive-target strata by
/// the same rule, until every quota fits.
pub fn capped_allocation(
    total: usize,
    targets: &BTreeMap<String, f64>,
    available: &BTreeMap<String, usize>,
) -> Result<BTreeMap<String, usize>, AllocationError> {
    let sum: f64 = targets.values().sum();
    if targets.values().any(|p| *p < 0.0 || !p.is_finite()) || (sum - 1.0).abs() > 1e-9 {
        return Err(AllocationError::BadProportions(sum));
    }
    let avail = |label: &str| available.get(label).copied().unwrap_or(0);
    let mut fixed: BTreeMap<String, usize> = BTreeMap::new();
    let mut first_capped: Option<(String, usize)> = None;
    loop {
        let remaining = total - fixed.values().sum::<usize>();
        let open: BTreeMap<String, f64> = targets
            .iter()
            .filter(|(l, p)| **p > 0.0 && !fixed.contains_key(*l))
            .map(|(l, p)| (l.clone(), *p))
            .collect();
        if open.is_empty() {
            if remaining == 0 {
                break;
            }
            // Positive targets exist, so something was capped to get here.
            let (stratum, demand) = first_capped.expect("a capped stratum");
            return Err(AllocationError::Infeasible {
                available: avail(&stratum),
                needed: demand - avail(&stratum),
                stratum,
            });
        }
        let alloc = largest_remainder(remaining, &open);
        let over: Vec<(String, usize)> = alloc
            .iter()
            .filter(|(l, q)| **q > avail(l))
            .map(|(l, q)| (l.clone(), *q))
            .collect();
        if over.is_empty() {
            fixed.extend(alloc);
            break;
        }
        if first_capped.is_none() {
            first_capped = over
                .iter()
                .max_by(|a, b| (a.1 - avail(&a.0)).cmp(&(b.1 - avail(&b.0))).then(b.0.cmp(&a.0)))
                .cloned();
        }
        for (label, _) in over {
            let a = avail(&label);
            fixed.insert(label, a);
        }
    }
    let mut out: BTreeMap<String, usize> = targets.keys().map(|k| (k.clone(), 0)).collect();
    out.extend(fixed);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map<V: Clone>(items: &[(&str, V)]) -> BTreeMap<String, V> {
        items.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn hand_computed_jurisdiction_split() {
        // 0.5/0.2/0.2/0.1 of 37: exact 18.5, 7.4, 7.4, 3.7 -> floors 18,7,7,3 = 35;
        // remainders .7 (WO), .5 (CN), .4, .4 -> WO and CN get the two extra.
        let t = map(&[("CN", 0.5), ("US", 0.2), ("EP", 0.2), ("WO", 0.1)]);
        let a = largest_remainder(37, &t);
        assert_eq!(a, map(&[("CN", 19), ("US", 7), ("EP", 7), ("WO", 4)]));
    }

    #[test]
    fn tie_goes_to_earlier_label() {
        let t = map(&[("b", 0.5), ("a", 0.5)]);
        assert_eq!(largest_remainder(3, &t), map(&[("a", 2), ("b", 1)]));
    }

    #[test]
    fn capped_redistributes_shortfall() {
        let t = map(&[("CN", 0.5), ("US", 0.2), ("EP", 0.2), ("WO", 0.1)]);
        let avail = map(&[("CN", 3), ("US", 50), ("EP", 50), ("WO", 50)]);
        // CN quota 10 of 20 capped at 3; 17 over US/EP/WO at 2:2:1 ->
        // exact 6.8, 6.8, 3.4 -> 6,6,3 + remainders .8,.8 -> EP, US.
        let a = capped_allocation(20, &t, &avail).unwrap();
        assert_eq!(a, map(&[("CN", 3), ("US", 7), ("EP", 7), ("WO", 3)]));
    }

    #[test]
    fn infeasible_names_stratum() {
        let t = map(&[("zh", 0.5), ("en", 0.5)]);
        let avail = map(&[("zh", 1), ("en", 2)]);
        let err = capped_allocation(10, &t, &avail).unwrap_err();
        match err {
            AllocationError::Infeasible { stratum, .. } => assert_eq!(stratum, "zh"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn proportions_must_sum_to_one() {
        let t = map(&[("zh", 0.5), ("en", 0.6)]);
        assert!(matches!(
            capped_allocation(10, &t, &map(&[("zh", 10), ("en", 10)])),
            Err(AllocationError::BadProportions(_))
        ));
    }

    proptest! {
        #[test]
        fn allocation_sums_and_stays_within_one(total in 0usize..500, raw in proptest::collection::vec(0.0f64..1.0, 1..8)) {
            let sum: f64 = raw.iter().sum();
            prop_assume!(sum > 0.0);
            let t: BTreeMap<String, f64> = raw.iter().enumerate().map(|(i, w)| (format!("s{i}"), w / sum)).collect();
            let a = largest_remainder(total, &t);
            prop_assert_eq!(a.values().sum::<usize>(), total);
            for (l, q) in &a {
                prop_assert!((*q as f64 - total as f64 * t[l]).abs() < 1.0);
            }
        }
    }
}
