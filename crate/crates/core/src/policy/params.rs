use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{log_softmax, IntentState, LegalSpace};
use crate::error::{GprError, Result};
use crate::quantizer::CodePath;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DecisionKey {
    pub head: u16,
    pub level: u8,
    pub bucket: u32,
    pub prefix: Vec<u32>,
}

impl DecisionKey {
    pub fn new(head: usize, level: usize, bucket: u32, prefix: &[u32]) -> Self {
        DecisionKey {
            head: head as u16,
            level: level as u8,
            bucket,
            prefix: prefix.to_vec(),
        }
    }
}

/// Sparse gradient over logit rows.
pub type PolicyGrad = BTreeMap<DecisionKey, Vec<f64>>;

/// Which head distribution a decision is read from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadSelection {
    Head(usize),
    /// `sum_j w_j P_j`, the head-weighted mixture.
    Mixture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    num_heads: usize,
    level_sizes: Vec<usize>,
    head_weights: Vec<f64>,
    logits: BTreeMap<DecisionKey, Vec<f64>>,
}

impl PolicyParams {
    /// Uniform policy with head weights 1/N.
    pub fn new(num_heads: usize, level_sizes: Vec<usize>) -> Result<Self> {
        if num_heads == 0 || num_heads > usize::from(u16::MAX) {
            return Err(GprError::invalid(format!("head count {num_heads} out of range")));
        }
        if level_sizes.is_empty() || level_sizes.len() > usize::from(u8::MAX) || level_sizes.contains(&0) {
            return Err(GprError::invalid("level sizes must be non-empty and positive"));
        }
        Ok(PolicyParams {
            num_heads,
            level_sizes,
            head_weights: vec![1.0 / num_heads as f64; num_heads],
            logits: BTreeMap::new(),
        })
    }

    pub fn num_heads(&self) -> usize {
        self.num_heads
    }

    pub fn level_sizes(&self) -> &[usize] {
        &self.level_sizes
    }

    pub fn num_levels(&self) -> usize {
        self.level_sizes.len()
    }

    pub fn head_weights(&self) -> &[f64] {
        &self.head_weights
    }

    /// Sets head weights, renormalizing onto the simplex.
    pub fn set_head_weights(&mut self, weights: &[f64]) -> Result<()> {
        let sum: f64 = weights.iter().sum();
        if weights.len() != self.num_heads || weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) || sum <= 0.0 {
            return Err(GprError::invalid("head weights must be non-negative with a positive sum"));
        }
        self.head_weights = weights.iter().map(|w| w / sum).collect();
        Ok(())
    }

    pub fn logits(&self, key: &DecisionKey) -> Option<&[f64]> {
        self.logits.get(key).map(Vec::as_slice)
    }

    pub fn set_logits(&mut self, key: DecisionKey, row: Vec<f64>) -> Result<()> {
        self.check_key(&key)?;
        if row.len() != self.level_sizes[usize::from(key.level)] || row.iter().any(|v| !v.is_finite()) {
            return Err(GprError::invalid(format!("logit row for {key:?} must hold finite values over the level")));
        }
        self.logits.insert(key, row);
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&DecisionKey, &Vec<f64>)> {
        self.logits.iter()
    }

    pub fn num_entries(&self) -> usize {
        self.logits.len()
    }

    fn check_key(&self, key: &DecisionKey) -> Result<()> {
        let level = usize::from(key.level);
        if usize::from(key.head) >= self.num_heads || level >= self.num_levels() || key.prefix.len() != level {
            return Err(GprError::invalid(format!("decision key {key:?} does not fit the policy shape")));
        }
        Ok(())
    }

    /// Gradient step `logits -= lr * grad`. A zero learning rate is an exact no-op.
    pub fn apply(&mut self, grad: &PolicyGrad, lr: f64) -> Result<()> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(GprError::invalid(format!("learning rate {lr} must be non-negative")));
        }
        if lr == 0.0 {
            return Ok(());
        }
        for (key, g) in grad {
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            self.check_key(key)?;
            let k = self.level_sizes[usize::from(key.level)];
            let row = self.logits.entry(key.clone()).or_insert_with(|| vec![0.0; k]);
            for (r, gv) in row.iter_mut().zip(g) {
                *r -= lr * gv;
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(GprError::numerical("policy logits", format!("non-finite row at {key:?}")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.head_weights.iter().sum();
        if self.head_weights.len() != self.num_heads
            || self.head_weights.iter().any(|&w| !(w >= 0.0))
            || (sum - 1.0).abs() > 1e-9
        {
            return Err(GprError::invalid("head weights are not on the simplex"));
        }
        for (key, row) in &self.logits {
            self.check_key(key)?;
            if row.len() != self.level_sizes[usize::from(key.level)] || row.iter().any(|v| !v.is_finite()) {
                return Err(GprError::invalid(format!("bad logit row at {key:?}")));
            }
        }
        Ok(())
    }
}

fn check_decision(params: &PolicyParams, head: usize, level: usize, prefix: &[u32], legal: &[u32]) -> Result<()> {
    if legal.is_empty() {
        return Err(GprError::invalid(format!("empty legal set at level {level}, prefix {prefix:?}")));
    }
    if head >= params.num_heads() {
        return Err(GprError::invalid(format!("head {head} >= {}", params.num_heads())));
    }
    if level >= params.num_levels() || prefix.len() != level {
        return Err(GprError::invalid(format!("prefix {prefix:?} does not match level {level}")));
    }
    let k = params.level_sizes()[level];
    if let Some(c) = legal.iter().find(|&&c| c as usize >= k) {
        return Err(GprError::invalid(format!("legal code {c} >= level size {k}")));
    }
    Ok(())
}

/// Log-probabilities over `legal` (aligned with it) for one head. Codes
/// outside `legal` have probability zero.
pub fn head_logprobs(
    params: &PolicyParams,
    state: &IntentState,
    head: usize,
    level: usize,
    prefix: &[u32],
    legal: &[u32],
) -> Result<Vec<f64>> {
    check_decision(params, head, level, prefix, legal)?;
    let key = DecisionKey::new(head, level, state.bucket, prefix);
    let masked: Vec<f64> = match params.logits(&key) {
        Some(row) => legal.iter().map(|&c| row[c as usize]).collect(),
        None => vec![0.0; legal.len()],
    };
    Ok(log_softmax(&masked))
}

pub fn decision_logprobs(
    params: &PolicyParams,
    state: &IntentState,
    sel: HeadSelection,
    level: usize,
    prefix: &[u32],
    legal: &[u32],
) -> Result<Vec<f64>> {
    match sel {
        HeadSelection::Head(j) => head_logprobs(params, state, j, level, prefix, legal),
        HeadSelection::Mixture => {
            let mut probs = vec![0.0; legal.len()];
            for (j, &w) in params.head_weights().iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (p, lp) in probs.iter_mut().zip(head_logprobs(params, state, j, level, prefix, legal)?) {
                    *p += w * lp.exp();
                }
            }
            Ok(probs.into_iter().map(f64::ln).collect())
        }
    }
}

fn position(legal: &[u32], code: u32, level: usize) -> Result<usize> {
    legal
        .iter()
        .position(|&c| c == code)
        .ok_or_else(|| GprError::invalid(format!("code {code} is not legal at level {level}")))
}

pub fn path_logprob_sel(
    params: &PolicyParams,
    state: &IntentState,
    sel: HeadSelection,
    path: &CodePath,
    legal: &(impl LegalSpace + ?Sized),
) -> Result<f64> {
    if path.len() != params.num_levels() {
        return Err(GprError::invalid(format!("path {path} does not have {} levels", params.num_levels())));
    }
    let codes = path.codes();
    let mut total = 0.0;
    for (l, &code) in codes.iter().enumerate() {
        let set = legal.legal_codes(l, &codes[..l]);
        let i = position(&set, code, l)?;
        total += decision_logprobs(params, state, sel, l, &codes[..l], &set)?[i];
    }
    Ok(total)
}

/// Sum over levels of the chosen code's log-probability under one head.
pub fn path_logprob(
    params: &PolicyParams,
    state: &IntentState,
    head: usize,
    path: &CodePath,
    legal: &(impl LegalSpace + ?Sized),
) -> Result<f64> {
    path_logprob_sel(params, state, HeadSelection::Head(head), path, legal)
}

pub fn sample_path_sel(
    params: &PolicyParams,
    state: &IntentState,
    sel: HeadSelection,
    legal: &(impl LegalSpace + ?Sized),
    seed: u64,
) -> Result<(CodePath, Vec<f64>)> {
    let mut rng = rng::seeded(seed);
    let mut codes = Vec::with_capacity(params.num_levels());
    let mut probs = Vec::with_capacity(params.num_levels());
    for l in 0..params.num_levels() {
        let set = legal.legal_codes(l, &codes);
        if set.is_empty() {
            return Err(GprError::DecodeFailure { prefix: codes });
        }
        let lps = decision_logprobs(params, state, sel, l, &codes, &set)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = set.len() - 1;
        for (i, lp) in lps.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                pick = i;
                break;
            }
        }
        codes.push(set[pick]);
        probs.push(lps[pick].exp());
    }
    Ok((CodePath(codes), probs))
}

/// Ancestral sampling under one head. Returns the path and the probability
/// of each chosen code.
pub fn sample_path(
    params: &PolicyParams,
    state: &IntentState,
    head: usize,
    legal: &(impl LegalSpace + ?Sized),
    seed: u64,
) -> Result<(CodePath, Vec<f64>)> {
    sample_path_sel(params, state, HeadSelection::Head(head), legal, seed)
}

/// Log-probability of `chosen` and its gradient with respect to the logit
/// rows that produced it.
pub fn decision_grad(
    params: &PolicyParams,
    state: &IntentState,
    sel: HeadSelection,
    level: usize,
    prefix: &[u32],
    legal: &[u32],
    chosen: u32,
) -> Result<(f64, Vec<(DecisionKey, Vec<f64>)>)> {
    let idx = position(legal, chosen, level)?;
    let k = params.level_sizes().get(level).copied().unwrap_or(0);
    let row_grad = |lps: &[f64], scale: f64| {
        let mut g = vec![0.0; k];
        for (i, (&c, lp)) in legal.iter().zip(lps).enumerate() {
            let onehot = if i == idx { 1.0 } else { 0.0 };
            g[c as usize] = scale * (onehot - lp.exp());
        }
        g
    };
    match sel {
        HeadSelection::Head(j) => {
            let lps = head_logprobs(params, state, j, level, prefix, legal)?;
            let g = row_grad(&lps, 1.0);
            Ok((lps[idx], vec![(DecisionKey::new(j, level, state.bucket, prefix), g)]))
        }
        HeadSelection::Mixture => {
            let per_head = (0..params.num_heads())
                .map(|j| head_logprobs(params, state, j, level, prefix, legal))
                .collect::<Result<Vec<_>>>()?;
            let q: f64 = params
                .head_weights()
                .iter()
                .zip(&per_head)
                .map(|(w, lps)| w * lps[idx].exp())
                .sum();
            let mut out = Vec::new();
            for (j, (&w, lps)) in params.head_weights().iter().zip(&per_head).enumerate() {
                if w == 0.0 {
                    continue;
                }
                let g = row_grad(lps, w * lps[idx].exp() / q);
                out.push((DecisionKey::new(j, level, state.bucket, prefix), g));
            }
            Ok((q.ln(), out))
        }
    }
}
