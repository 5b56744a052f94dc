use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::IntentState;
use crate::error::{GprError, Result};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ValueKey {
    pub level: u8,
    pub bucket: u32,
    pub prefix: Vec<u32>,
}

impl ValueKey {
    /// The level of a prefix value is its length.
    pub fn new(bucket: u32, prefix: &[u32]) -> Self {
        ValueKey {
            level: prefix.len() as u8,
            bucket,
            prefix: prefix.to_vec(),
        }
    }
}

pub type ValueGrad = BTreeMap<ValueKey, f64>;

/// Tabular critic `V(s, z_{1:l})`; unseen keys read as 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValueParams {
    values: BTreeMap<ValueKey, f64>,
}

impl ValueParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &ValueKey) -> f64 {
        self.values.get(key).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, key: ValueKey, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(GprError::invalid(format!("value at {key:?} must be finite")));
        }
        self.values.insert(key, value);
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ValueKey, &f64)> {
        self.values.iter()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `values -= lr * grad`; zero learning rate leaves the table untouched.
    pub fn apply(&mut self, grad: &ValueGrad, lr: f64) -> Result<()> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(GprError::invalid(format!("learning rate {lr} must be non-negative")));
        }
        if lr == 0.0 {
            return Ok(());
        }
        for (key, &g) in grad {
            if g == 0.0 {
                continue;
            }
            let v = self.values.entry(key.clone()).or_insert(0.0);
            *v -= lr * g;
            if !v.is_finite() {
                return Err(GprError::numerical("value table", format!("non-finite value at {key:?}")));
            }
        }
        Ok(())
    }
}

/// Reads the critic for the state's bucket. The state is only read, so value
/// training never moves the featurizer.
pub fn value_estimate(vparams: &ValueParams, state: &IntentState, prefix: &[u32]) -> f64 {
    vparams.get(&ValueKey::new(state.bucket, prefix))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_lookup() {
        let mut v = ValueParams::new();
        let s = IntentState::from_bucket(1);
        assert_eq!(value_estimate(&v, &s, &[0, 2]), 0.0);
        v.set(ValueKey::new(1, &[0, 2]), 2.5).unwrap();
        assert_eq!(value_estimate(&v, &s, &[0, 2]), 2.5);
        assert_eq!(value_estimate(&v, &s, &[0, 1]), 0.0);
        assert_eq!(value_estimate(&v, &IntentState::from_bucket(2), &[0, 2]), 0.0);
    }
}
