use super::{TrainingExample, ValueWeightConfig, ValueWeighter};
use crate::error::{GprError, Result};
use crate::policy::{head_logprobs, DecisionKey, LegalSpace, PolicyGrad, PolicyParams};

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// Contribution of each head to `loss`.
    pub per_head: Vec<f64>,
    pub grad: PolicyGrad,
}

/// `-sum_t sum_j sum_l w_j * v_{j,t} * log P_j(target)`, with `v` defaulting to 1.
///
/// `value_weights[t][j]` scales head `j` of example `t`.
pub fn weighted_mtp_loss(
    params: &PolicyParams,
    batch: &[TrainingExample],
    value_weights: Option<&[Vec<f64>]>,
) -> Result<LossOutput> {
    if batch.is_empty() {
        return Err(GprError::invalid("empty training batch"));
    }
    let mut out = LossOutput {
        loss: 0.0,
        per_head: vec![0.0; params.num_heads()],
        grad: PolicyGrad::new(),
    };
    for (t, ex) in batch.iter().enumerate() {
        for (j, target) in ex.targets.iter().enumerate().take(params.num_heads()) {
            let v = match value_weights {
                Some(w) => w[t][j],
                None => 1.0,
            };
            let w = params.head_weights()[j] * v;
            if w == 0.0 {
                continue;
            }
            let codes = target.path.codes();
            if codes.len() != params.num_levels() {
                return Err(GprError::invalid(format!("target {} has the wrong depth", target.path)));
            }
            for (l, &code) in codes.iter().enumerate() {
                let prefix = &codes[..l];
                let legal = ex.legal.legal_codes(l, prefix);
                let idx = legal
                    .iter()
                    .position(|&c| c == code)
                    .ok_or_else(|| GprError::invalid(format!("target {} is illegal at level {l}", target.path)))?;
                let lps = head_logprobs(params, &ex.state, j, l, prefix, &legal)?;
                let nll = -lps[idx];
                out.loss += w * nll;
                out.per_head[j] += w * nll;
                let k = params.level_sizes()[l];
                let row = out
                    .grad
                    .entry(DecisionKey::new(j, l, ex.state.bucket, prefix))
                    .or_insert_with(|| vec![0.0; k]);
                for (i, (&c, lp)) in legal.iter().zip(&lps).enumerate() {
                    let onehot = if i == idx { 1.0 } else { 0.0 };
                    row[c as usize] += w * (lp.exp() - onehot);
                }
            }
        }
    }
    if !out.loss.is_finite() {
        return Err(GprError::numerical("mtp loss", format!("value {}", out.loss)));
    }
    Ok(out)
}

pub fn mtp_loss(params: &PolicyParams, batch: &[TrainingExample]) -> Result<LossOutput> {
    weighted_mtp_loss(params, batch, None)
}

/// Per-(example, head) value weights under a fitted weighter.
pub(crate) fn batch_weights(batch: &[TrainingExample], weighter: &ValueWeighter) -> Result<Vec<Vec<f64>>> {
    batch
        .iter()
        .map(|ex| ex.targets.iter().map(|t| weighter.target_weight(t)).collect())
        .collect()
}

/// MTP loss with each term scaled by its normalized value weight. The
/// normalization is fitted on `batch`.
pub fn vaft_loss(params: &PolicyParams, batch: &[TrainingExample], cfg: &ValueWeightConfig) -> Result<LossOutput> {
    let weighter = ValueWeighter::fit_examples(batch, cfg)?;
    let w = batch_weights(batch, &weighter)?;
    weighted_mtp_loss(params, batch, Some(&w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{FullSpace, IntentState, LegalSets};
    use crate::quantizer::CodePath;
    use crate::schema::ActionType;
    use crate::training::Target;

    fn example(paths: &[&[u32]]) -> TrainingExample {
        TrainingExample {
            state: IntentState::from_bucket(0),
            targets: paths
                .iter()
                .map(|p| Target::new(CodePath::new(p.to_vec()), ActionType::Click, 1.0, 0.5, 0.5))
                .collect(),
            legal: LegalSets::Full(FullSpace { level_sizes: vec![2, 2] }),
        }
    }

    #[test]
    fn uniform_single_head_is_cross_entropy() {
        let p = PolicyParams::new(1, vec![2, 2]).unwrap();
        let out = mtp_loss(&p, &[example(&[&[0, 1]])]).unwrap();
        assert!((out.loss - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn extra_targets_and_missing_heads() {
        let p = PolicyParams::new(2, vec![2, 2]).unwrap();
        let one = mtp_loss(&p, &[example(&[&[0, 1]])]).unwrap();
        assert_eq!(one.per_head[1], 0.0);
        let three = mtp_loss(&p, &[example(&[&[0, 1], &[1, 1], &[1, 0]])]).unwrap();
        assert!((three.loss - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_contributes_nothing() {
        let p = PolicyParams::new(1, vec![2, 2]).unwrap();
        let batch = [example(&[&[0, 1]]), example(&[&[1, 1]])];
        let out = weighted_mtp_loss(&p, &batch, Some(&[vec![0.0], vec![1.0]])).unwrap();
        assert!(out.grad.keys().all(|k| k.prefix.first() != Some(&0)));
    }

    #[test]
    fn illegal_target_rejected() {
        let p = PolicyParams::new(1, vec![2, 2]).unwrap();
        assert!(mtp_loss(&p, &[example(&[&[0, 2]])]).is_err());
        assert!(mtp_loss(&p, &[]).is_err());
    }
}
