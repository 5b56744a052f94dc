use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{GprError, Result};
use crate::quantizer::CodePath;

/// Per-level code frequencies among items that led to positive outcomes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PopularityTable {
    positives: u64,
    counts: Vec<BTreeMap<u32, u64>>,
}

impl PopularityTable {
    pub fn new(levels: usize) -> Self {
        PopularityTable {
            positives: 0,
            counts: vec![BTreeMap::new(); levels],
        }
    }

    pub fn levels(&self) -> usize {
        self.counts.len()
    }

    pub fn positives(&self) -> u64 {
        self.positives
    }

    /// `P_l(code)`: share of positive items whose level-`l` code is `code`.
    pub fn score(&self, level: usize, code: u32) -> f64 {
        if self.positives == 0 {
            return 0.0;
        }
        let c = self.counts.get(level).and_then(|m| m.get(&code)).copied().unwrap_or(0);
        c as f64 / self.positives as f64
    }

    fn record(&mut self, path: &CodePath) -> Result<()> {
        if path.len() != self.counts.len() {
            return Err(GprError::invalid(format!(
                "path {path} does not have {} levels",
                self.counts.len()
            )));
        }
        self.positives += 1;
        for (m, &code) in self.counts.iter_mut().zip(path.codes()) {
            *m.entry(code).or_insert(0) += 1;
        }
        Ok(())
    }
}

/// Folds outcome-labelled interactions into a copy of `table`. Only positive
/// outcomes count.
pub fn popularity_update(table: &PopularityTable, history: &[(CodePath, bool)]) -> Result<PopularityTable> {
    let mut next = table.clone();
    for (path, positive) in history {
        if *positive {
            next.record(path)?;
        }
    }
    Ok(next)
}

/// Per-user tables with a per-bucket fallback for users whose own history
/// has fewer than `min_user_positives` positives.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PopularityStore {
    pub levels: usize,
    pub min_user_positives: u64,
    pub per_bucket: BTreeMap<u32, PopularityTable>,
    pub per_user: BTreeMap<String, PopularityTable>,
}

impl PopularityStore {
    pub fn new(levels: usize, min_user_positives: u64) -> Self {
        PopularityStore {
            levels,
            min_user_positives,
            ..Default::default()
        }
    }

    pub fn table_for(&self, user: &str, bucket: u32) -> Option<&PopularityTable> {
        match self.per_user.get(user) {
            Some(t) if t.positives() >= self.min_user_positives => Some(t),
            _ => self.per_bucket.get(&bucket),
        }
    }

    pub fn record(&mut self, user: &str, bucket: u32, path: &CodePath, positive: bool) -> Result<()> {
        if !positive {
            return Ok(());
        }
        let levels = self.levels;
        let hist = [(path.clone(), true)];
        for t in [
            self.per_bucket.entry(bucket).or_insert_with(|| PopularityTable::new(levels)),
            self.per_user.entry(user.to_string()).or_insert_with(|| PopularityTable::new(levels)),
        ] {
            *t = popularity_update(t, &hist)?;
        }
        Ok(())
    }
}

/// Process reward at 0-indexed `level` of an `num_levels`-deep path. Coarse
/// levels earn `alpha * max(0, P(chosen) - mean_{legal} P)`; the last level
/// earns the terminal value.
pub fn process_reward(
    table: Option<&PopularityTable>,
    chosen: u32,
    legal: &[u32],
    level: usize,
    num_levels: usize,
    terminal: f64,
    alpha: f64,
) -> Result<f64> {
    if level >= num_levels {
        return Err(GprError::invalid(format!("level {level} outside a {num_levels}-level path")));
    }
    if !legal.contains(&chosen) {
        return Err(GprError::invalid(format!("code {chosen} is not legal at level {level}")));
    }
    if level + 1 == num_levels {
        return Ok(terminal);
    }
    let Some(t) = table else {
        return Ok(0.0);
    };
    let mean = legal.iter().map(|&c| t.score(level, c)).sum::<f64>() / legal.len() as f64;
    Ok(alpha * (t.score(level, chosen) - mean).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[u32]) -> CodePath {
        CodePath::new(c.to_vec())
    }

    #[test]
    fn counts_positive_outcomes() {
        let t = PopularityTable::new(2);
        assert_eq!(t.score(0, 0), 0.0);
        let t = popularity_update(
            &t,
            &[(p(&[0, 1]), true), (p(&[0, 2]), true), (p(&[1, 1]), true), (p(&[1, 0]), false)],
        )
        .unwrap();
        assert!((t.score(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((t.score(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((t.score(1, 1) - 2.0 / 3.0).abs() < 1e-15);
        assert!(popularity_update(&t, &[(p(&[0]), true)]).is_err());
    }

    #[test]
    fn reward_hand_example() {
        // P = {a: 0.8, b: 0.2}
        let mut hist: Vec<(CodePath, bool)> = (0..4).map(|_| (p(&[0, 0]), true)).collect();
        hist.push((p(&[1, 0]), true));
        let t = popularity_update(&PopularityTable::new(2), &hist).unwrap();
        let r = process_reward(Some(&t), 0, &[0, 1], 0, 2, 9.0, 0.1).unwrap();
        assert!((r - 0.03).abs() < 1e-15);
        assert_eq!(process_reward(Some(&t), 1, &[0, 1], 0, 2, 9.0, 0.1).unwrap(), 0.0);
        assert_eq!(process_reward(Some(&t), 0, &[0, 1], 1, 2, -2.5, 0.1).unwrap(), -2.5);
        assert!(process_reward(Some(&t), 3, &[0, 1], 0, 2, 0.0, 0.1).is_err());
        assert_eq!(process_reward(None, 0, &[0, 1], 0, 2, 0.0, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn equal_popularity_gives_zero() {
        let t = popularity_update(&PopularityTable::new(2), &[(p(&[0, 0]), true), (p(&[1, 0]), true)]).unwrap();
        assert_eq!(process_reward(Some(&t), 0, &[0, 1], 0, 2, 0.0, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn store_falls_back_to_bucket() {
        let mut s = PopularityStore::new(2, 2);
        s.record("u", 7, &p(&[1, 1]), true).unwrap();
        s.record("v", 7, &p(&[0, 1]), true).unwrap();
        assert_eq!(s.table_for("u", 7).unwrap().positives(), 2);
        s.record("u", 7, &p(&[1, 0]), true).unwrap();
        assert_eq!(s.table_for("u", 7).unwrap().positives(), 2);
        assert_eq!(s.table_for("u", 7).unwrap().score(0, 1), 1.0);
        assert!(s.table_for("w", 8).is_none());
    }
}
