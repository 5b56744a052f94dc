use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::Trie;
use crate::error::{GprError, Result};
use crate::policy::{decision_logprobs, value_estimate, HeadSelection, IntentState, LegalSpace, PolicyParams, ValueParams};
use crate::quantizer::CodePath;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamConfig {
    /// Expansion width of the lowest-valued beam.
    pub base_width: usize,
    /// Expansion width of the highest-valued beam, and of every beam when
    /// guidance is off.
    pub max_width: usize,
    /// Number of candidates returned.
    pub k: usize,
    pub value_guidance: bool,
    /// Optional cap on the frontier size after each level.
    #[serde(default)]
    pub beam_size: Option<usize>,
    #[serde(default = "default_selection")]
    pub selection: HeadSelection,
}

fn default_selection() -> HeadSelection {
    HeadSelection::Mixture
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            base_width: 2,
            max_width: 8,
            k: 40,
            value_guidance: true,
            beam_size: None,
            selection: HeadSelection::Mixture,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 || self.max_width < self.base_width || self.k == 0 || self.beam_size == Some(0) {
            return Err(GprError::invalid(format!(
                "beam config needs 1 <= base_width <= max_width and k >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub item_id: String,
    pub path: CodePath,
    /// Path log-probability.
    pub score: f64,
    /// Probability of each chosen code under the decoding policy.
    pub probs: Vec<f64>,
    /// Critic value of each prefix `z_{1:l}` for `l = 0..L-1`.
    pub values: Vec<f64>,
}

/// Maps a value onto a beam width in `[base_width, max_width]`, linearly across
/// `range`. A degenerate range gives `base_width`.
pub fn dynamic_width(value: f64, range: (f64, f64), cfg: &BeamConfig) -> usize {
    let (lo, hi) = range;
    if !(hi > lo) {
        return cfg.base_width;
    }
    let frac = ((value - lo) / (hi - lo)).clamp(0.0, 1.0);
    cfg.base_width + ((cfg.max_width - cfg.base_width) as f64 * frac).round() as usize
}

#[derive(Clone)]
struct Beam {
    codes: Vec<u32>,
    score: f64,
    probs: Vec<f64>,
    values: Vec<f64>,
}

/// Higher score first, then the lexicographically smaller path.
fn rank(a_score: f64, a: &[u32], b_score: f64, b: &[u32]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a.cmp(b))
}

/// Level-synchronous beam search restricted to trie children.
pub fn beam_search(
    policy: &PolicyParams,
    vparams: &ValueParams,
    state: &IntentState,
    trie: &Trie,
    cfg: &BeamConfig,
) -> Result<Vec<Candidate>> {
    cfg.validate()?;
    if trie.is_empty() {
        return Ok(Vec::new());
    }
    if trie.levels() != policy.num_levels() {
        return Err(GprError::invalid(format!(
            "trie depth {} does not match policy depth {}",
            trie.levels(),
            policy.num_levels()
        )));
    }
    let mut frontier = vec![Beam {
        codes: Vec::new(),
        score: 0.0,
        probs: Vec::new(),
        values: Vec::new(),
    }];
    for level in 0..trie.levels() {
        let values: Vec<f64> = frontier.iter().map(|b| value_estimate(vparams, state, &b.codes)).collect();
        let range = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let mut next = Vec::new();
        for (beam, &v) in frontier.iter().zip(&values) {
            let legal = trie.legal_codes(level, &beam.codes);
            if legal.is_empty() {
                continue;
            }
            let width = if cfg.value_guidance {
                dynamic_width(v, range, cfg)
            } else {
                cfg.max_width
            };
            let lps = decision_logprobs(policy, state, cfg.selection, level, &beam.codes, &legal)?;
            let mut order: Vec<usize> = (0..legal.len()).collect();
            order.sort_by(|&a, &b| lps[b].total_cmp(&lps[a]).then(legal[a].cmp(&legal[b])));
            // codes whose probability underflowed are never candidates
            for &i in order.iter().filter(|&&i| lps[i].exp() > 0.0).take(width) {
                let mut codes = beam.codes.clone();
                codes.push(legal[i]);
                let mut probs = beam.probs.clone();
                probs.push(lps[i].exp());
                let mut vals = beam.values.clone();
                vals.push(v);
                next.push(Beam {
                    codes,
                    score: beam.score + lps[i],
                    probs,
                    values: vals,
                });
            }
        }
        next.sort_by(|a, b| rank(a.score, &a.codes, b.score, &b.codes));
        if let Some(cap) = cfg.beam_size {
            next.truncate(cap);
        }
        frontier = next;
    }
    frontier.truncate(cfg.k);
    frontier
        .into_iter()
        .map(|b| {
            let path = CodePath(b.codes);
            let item_id = trie
                .item_at(&path)
                .ok_or_else(|| GprError::invalid(format!("decoded path {path} is not a trie leaf")))?
                .to_string();
            Ok(Candidate {
                item_id,
                path,
                score: b.score,
                probs: b.probs,
                values: b.values,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{path_logprob_sel, DecisionKey, ValueKey};

    fn trie(paths: &[&[u32]]) -> Trie {
        let mut t = Trie::new(paths[0].len());
        for (i, p) in paths.iter().enumerate() {
            t.insert(&format!("i{i}"), &CodePath::new(p.to_vec())).unwrap();
        }
        t
    }

    #[test]
    fn width_endpoints_and_midpoint() {
        let cfg = BeamConfig {
            base_width: 2,
            max_width: 6,
            ..Default::default()
        };
        assert_eq!(dynamic_width(1.0, (0.0, 1.0), &cfg), 6);
        assert_eq!(dynamic_width(0.0, (0.0, 1.0), &cfg), 2);
        assert_eq!(dynamic_width(0.5, (0.0, 1.0), &cfg), 4);
        assert_eq!(dynamic_width(3.0, (1.0, 1.0), &cfg), 2);
    }

    #[test]
    fn single_path() {
        let mut p = PolicyParams::new(1, vec![3, 3]).unwrap();
        p.set_logits(DecisionKey::new(0, 1, 0, &[2]), vec![0.0, 1.0, 0.5]).unwrap();
        let t = trie(&[&[2, 1]]);
        let s = IntentState::from_bucket(0);
        let out = beam_search(&p, &ValueParams::new(), &s, &t, &BeamConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].score, 0.0);
        assert_eq!(out[0].item_id, "i0");
        let lp = path_logprob_sel(&p, &s, HeadSelection::Mixture, &out[0].path, &t).unwrap();
        assert_eq!(out[0].score, lp);
    }

    #[test]
    fn ties_prefer_smaller_path() {
        let p = PolicyParams::new(1, vec![3, 3]).unwrap();
        let t = trie(&[&[1, 0], &[0, 2]]);
        let out = beam_search(&p, &ValueParams::new(), &IntentState::from_bucket(0), &t, &BeamConfig::default()).unwrap();
        assert_eq!(out[0].path, CodePath::new(vec![0, 2]));
        assert_eq!(out[1].path, CodePath::new(vec![1, 0]));
    }

    #[test]
    fn guidance_narrows_low_value_beams() {
        let p = PolicyParams::new(1, vec![2, 4]).unwrap();
        let t = trie(&[&[0, 0], &[0, 1], &[0, 2], &[1, 0], &[1, 1], &[1, 2]]);
        let mut v = ValueParams::new();
        v.set(ValueKey::new(0, &[1]), 5.0).unwrap();
        let cfg = BeamConfig {
            base_width: 2,
            max_width: 3,
            k: 10,
            ..Default::default()
        };
        let out = beam_search(&p, &v, &IntentState::from_bucket(0), &t, &cfg).unwrap();
        let under = |c: u32| out.iter().filter(|x| x.path.codes()[0] == c).count();
        assert_eq!(under(0), 2);
        assert_eq!(under(1), 3);
        assert!(out.iter().all(|c| t.item_at(&c.path).is_some()));
    }

    #[test]
    fn empty_trie_gives_nothing() {
        let p = PolicyParams::new(1, vec![2]).unwrap();
        let out = beam_search(&p, &ValueParams::new(), &IntentState::from_bucket(0), &Trie::new(1), &BeamConfig::default()).unwrap();
        assert!(out.is_empty());
    }
}
