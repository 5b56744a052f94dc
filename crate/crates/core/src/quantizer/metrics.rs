//! Code-quality metrics over item → semantic ID assignments.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::ArrayView1;

use super::{CodePath, EmbeddingCorpus};
use crate::error::{GprError, Result};

pub type Assignments = BTreeMap<String, CodePath>;

fn groups(assignments: &Assignments) -> BTreeMap<&CodePath, Vec<&str>> {
    let mut out: BTreeMap<&CodePath, Vec<&str>> = BTreeMap::new();
    for (id, path) in assignments {
        out.entry(path).or_default().push(id.as_str());
    }
    out
}

/// Fraction of items whose full path is shared with at least one other item.
pub fn metric_collision(assignments: &Assignments) -> Result<f64> {
    if assignments.is_empty() {
        return Err(GprError::invalid("collision rate of an empty assignment set"));
    }
    let collided: usize = groups(assignments).values().filter(|g| g.len() > 1).map(Vec::len).sum();
    Ok(collided as f64 / assignments.len() as f64)
}

/// Fraction of items that own their path alone.
pub fn singleton_fraction(assignments: &Assignments) -> Result<f64> {
    if assignments.is_empty() {
        return Err(GprError::invalid("singleton fraction of an empty assignment set"));
    }
    let single = groups(assignments).values().filter(|g| g.len() == 1).count();
    Ok(single as f64 / assignments.len() as f64)
}

/// Share of the `k1` level-1 codes used by at least one item.
pub fn metric_cur_l1(assignments: &Assignments, k1: usize) -> Result<f64> {
    if k1 == 0 {
        return Err(GprError::invalid("level-1 codebook size must be positive"));
    }
    let mut used = BTreeSet::new();
    for (id, path) in assignments {
        let Some(c) = path.level1() else {
            return Err(GprError::invalid(format!("item {id} has an empty path")));
        };
        if c as usize >= k1 {
            return Err(GprError::invalid(format!("item {id} uses level-1 code {c} >= {k1}")));
        }
        used.insert(c);
    }
    Ok(used.len() as f64 / k1 as f64)
}

fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
}

/// Mean pairwise cosine similarity inside each shared path, averaged over
/// such paths. Returns 1.0 when no path holds two or more items.
pub fn metric_pas(assignments: &Assignments, corpus: &EmbeddingCorpus) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (path, ids) in groups(assignments) {
        if ids.len() < 2 {
            continue;
        }
        let vecs = ids
            .iter()
            .map(|id| {
                let v = corpus
                    .vector(id)
                    .ok_or_else(|| GprError::invalid(format!("item {id} missing from corpus")))?;
                if v.iter().all(|&x| x == 0.0) {
                    return Err(GprError::invalid(format!("zero vector for item {id} in group {path}")));
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..vecs.len() {
            for j in i + 1..vecs.len() {
                sum += cosine(vecs[i], vecs[j]);
                pairs += 1;
            }
        }
        total += sum / pairs as f64;
        count += 1;
    }
    Ok(if count == 0 { 1.0 } else { total / count as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn assign(paths: &[&[u32]]) -> Assignments {
        paths
            .iter()
            .enumerate()
            .map(|(i, p)| (format!("i{i}"), CodePath::new(p.to_vec())))
            .collect()
    }

    #[test]
    fn collision_by_hand() {
        let a = assign(&[&[0, 0], &[0, 0], &[1, 0], &[2, 1]]);
        assert_eq!(metric_collision(&a).unwrap(), 0.5);
        assert_eq!(singleton_fraction(&a).unwrap(), 0.5);
        assert_eq!(metric_collision(&assign(&[&[0], &[1]])).unwrap(), 0.0);
        assert!(metric_collision(&Assignments::new()).is_err());
    }

    #[test]
    fn cur_by_hand() {
        let a = assign(&[&[0, 1], &[2, 0], &[0, 0]]);
        assert_eq!(metric_cur_l1(&a, 4).unwrap(), 0.5);
        assert_eq!(metric_cur_l1(&a, 3).unwrap(), 2.0 / 3.0);
        assert!(metric_cur_l1(&a, 2).is_err());
    }

    #[test]
    fn pas_cases() {
        let ids = vec!["i0".to_string(), "i1".to_string(), "i2".to_string()];
        let c = EmbeddingCorpus::new(ids, array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!((metric_pas(&assign(&[&[0], &[0], &[1]]), &c).unwrap() - 1.0).abs() < 1e-12);
        assert!(metric_pas(&assign(&[&[1], &[0], &[0]]), &c).unwrap().abs() < 1e-12);
        assert_eq!(metric_pas(&assign(&[&[0], &[1], &[2]]), &c).unwrap(), 1.0);
    }

    #[test]
    fn pas_rejects_zero_vector_in_group() {
        let ids = vec!["i0".to_string(), "i1".to_string()];
        let c = EmbeddingCorpus::new(ids, array![[0.0, 0.0], [1.0, 0.0]]).unwrap();
        assert!(metric_pas(&assign(&[&[0], &[0]]), &c).is_err());
        assert_eq!(metric_pas(&assign(&[&[0], &[1]]), &c).unwrap(), 1.0);
    }
}
