//! Ranking metrics: HitRate@k, nDCG with linear gain, and ordered-pair ratio.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{GprError, Result};

/// Items ordered by descending score; ties go to the smaller id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    items: Vec<(String, f64)>,
}

impl RankedList {
    pub fn new(mut items: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (id, s) in &items {
            if !s.is_finite() {
                return Err(GprError::invalid(format!("item {id} has non-finite score {s}")));
            }
            if !seen.insert(id.as_str()) {
                return Err(GprError::invalid(format!("item {id} ranked twice")));
            }
        }
        items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(RankedList { items })
    }

    /// Keeps the given order; scores descend with position.
    pub fn from_order(ids: Vec<String>) -> Result<Self> {
        let n = ids.len() as f64;
        RankedList::new(ids.into_iter().enumerate().map(|(i, id)| (id, n - i as f64)).collect())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|(id, _)| id.as_str())
    }
}

pub fn hitrate_at_k(ranked: &RankedList, truth: &str, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(GprError::invalid("k must be at least 1"));
    }
    Ok(if ranked.ids().take(k).any(|id| id == truth) { 1.0 } else { 0.0 })
}

/// DCG of the list over the ideal DCG of the same length, drawing the ideal
/// from all graded items. Items without a grade count as zero.
pub fn ndcg(ranked: &RankedList, relevance: &BTreeMap<String, f64>) -> Result<f64> {
    if ranked.is_empty() {
        return Err(GprError::invalid("nDCG of an empty list"));
    }
    if relevance.values().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(GprError::invalid("relevance grades must be finite and non-negative"));
    }
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = ranked
        .ids()
        .enumerate()
        .map(|(i, id)| relevance.get(id).copied().unwrap_or(0.0) * discount(i))
        .sum();
    let mut ideal: Vec<f64> = relevance.values().copied().collect();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg: f64 = ideal.iter().take(ranked.len()).enumerate().map(|(i, r)| r * discount(i)).sum();
    if !(idcg > 0.0) {
        return Err(GprError::invalid("nDCG needs at least one positive relevance"));
    }
    Ok(dcg / idcg)
}

/// Share of listed pairs whose list order agrees with the target values.
/// Pairs tied in the target, or with an unlisted target, are not counted.
pub fn opr(ranked: &RankedList, target: &BTreeMap<String, f64>) -> Result<f64> {
    if ranked.len() < 2 {
        return Err(GprError::invalid("OPR needs at least two items"));
    }
    let vals: Vec<Option<f64>> = ranked.ids().map(|id| target.get(id).copied()).collect();
    let (mut good, mut total) = (0usize, 0usize);
    for i in 0..vals.len() {
        for j in i + 1..vals.len() {
            if let (Some(a), Some(b)) = (vals[i], vals[j]) {
                if a != b {
                    total += 1;
                    good += usize::from(a > b);
                }
            }
        }
    }
    if total == 0 {
        return Err(GprError::invalid("OPR has no comparable pairs"));
    }
    Ok(good as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(ids: &[&str]) -> RankedList {
        RankedList::from_order(ids.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn rel(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn hitrate_cutoff() {
        let ids: Vec<String> = (0..101).map(|i| format!("i{i:03}")).collect();
        let l = RankedList::from_order(ids).unwrap();
        assert_eq!(hitrate_at_k(&l, "i000", 100).unwrap(), 1.0);
        assert_eq!(hitrate_at_k(&l, "i100", 100).unwrap(), 0.0);
        assert_eq!(hitrate_at_k(&list(&[]), "x", 5).unwrap(), 0.0);
        assert!(hitrate_at_k(&l, "i000", 0).is_err());
    }

    #[test]
    fn ndcg_examples() {
        let r = rel(&[("a", 0.0), ("b", 1.0)]);
        assert!((ndcg(&list(&["a", "b"]), &r).unwrap() - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert_eq!(ndcg(&list(&["b", "a"]), &r).unwrap(), 1.0);
        assert!(ndcg(&list(&["a"]), &rel(&[("a", 0.0)])).is_err());
    }

    #[test]
    fn opr_examples() {
        let t = rel(&[("a", 3.0), ("b", 2.0), ("c", 1.0)]);
        assert_eq!(opr(&list(&["a", "b", "c"]), &t).unwrap(), 1.0);
        assert_eq!(opr(&list(&["c", "b", "a"]), &t).unwrap(), 0.0);
        assert!((opr(&list(&["b", "a", "c"]), &t).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let tied = rel(&[("a", 1.0), ("b", 1.0), ("c", 0.0)]);
        assert_eq!(opr(&list(&["c", "a", "b"]), &tied).unwrap(), 0.0);
        assert!(opr(&list(&["a"]), &t).is_err());
    }

    #[test]
    fn score_ties_break_by_id() {
        let l = RankedList::new(vec![("b".into(), 1.0), ("a".into(), 1.0), ("c".into(), 2.0)]).unwrap();
        assert_eq!(l.ids().collect::<Vec<_>>(), vec!["c", "a", "b"]);
        assert!(RankedList::new(vec![("a".into(), 1.0), ("a".into(), 2.0)]).is_err());
    }
}
