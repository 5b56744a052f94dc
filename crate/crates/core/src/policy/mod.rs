//! Context-bucketed tabular hierarchical softmax with parallel heads, and the
//! tabular value function used as critic.
//!
//! Every decision is keyed by (head, level, bucket, prefix) and owns a logit
//! row over the level's codes. Keys that were never written read as zero
//! logits, so the untrained policy is uniform over any legal set.

mod checkpoint;
mod featurizer;
mod legal;
mod params;
mod value;

pub use checkpoint::{read_policy, read_value, write_policy, write_value};
pub use featurizer::{intent_encode, FeaturizerConfig, IntentState};
pub use legal::{FullSpace, LegalSets, LegalSpace, LevelSets, PathSet};
pub use params::{
    decision_grad, decision_logprobs, head_logprobs, path_logprob, path_logprob_sel, sample_path, sample_path_sel,
    DecisionKey, HeadSelection, PolicyGrad, PolicyParams,
};
pub use value::{value_estimate, ValueGrad, ValueKey, ValueParams};

/// Log-softmax over `logits`, returned in the same order.
pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - lse).collect()
}
