use serde::{Deserialize, Serialize};

use super::{EpisodeRecord, RankingOracle};
use crate::error::{GprError, Result};

/// Auxiliary ranking target added to eCPM in the final value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuxTarget {
    Pctr,
    Pcvr,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxWeight {
    pub target: AuxTarget,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub targets: Vec<AuxWeight>,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            targets: vec![
                AuxWeight {
                    target: AuxTarget::Pctr,
                    alpha: 0.5,
                },
                AuxWeight {
                    target: AuxTarget::Pcvr,
                    alpha: 0.5,
                },
            ],
        }
    }
}

impl RewardConfig {
    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.iter().any(|t| !t.alpha.is_finite()) {
            return Err(GprError::invalid("reward weights must be finite"));
        }
        Ok(())
    }
}

/// `ecpm + (1/N) * sum_i alpha_i * aux_i` with `aux` aligned to `cfg.targets`.
pub fn combine_reward(ecpm: f64, aux: &[f64], cfg: &RewardConfig) -> f64 {
    if cfg.targets.is_empty() {
        return ecpm;
    }
    let s: f64 = cfg.targets.iter().zip(aux).map(|(t, v)| t.alpha * v).sum();
    ecpm + s / cfg.n_targets() as f64
}

/// Final value of showing `item` to a user of `segment`.
pub fn final_value(oracle: &RankingOracle, segment: u32, item: &str, cfg: &RewardConfig) -> Result<f64> {
    let ecpm = oracle.ecpm(segment, item)?;
    let aux = cfg
        .targets
        .iter()
        .map(|t| match t.target {
            AuxTarget::Pctr => oracle.pctr(segment, item),
            AuxTarget::Pcvr => oracle.pcvr(segment, item),
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(combine_reward(ecpm, &aux, cfg))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedReport {
    /// Mean over requests of the per-request mean normalized value.
    pub mean: f64,
    /// Mean over requests of the per-request max normalized value.
    pub max: f64,
    pub lo: f64,
    pub hi: f64,
    /// All values were identical; `mean` and `max` are reported as zero.
    pub degenerate: bool,
    pub requests: usize,
}

/// Min-max normalizes every candidate value across all groups with one
/// shared range, then reports per-group aggregates. Each group is a list of
/// requests, each request a list of candidate values. Empty requests are skipped.
pub fn normalize_value_groups(groups: &[Vec<Vec<f64>>]) -> Vec<NormalizedReport> {
    let (lo, hi) = groups
        .iter()
        .flatten()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let degenerate = !(hi > lo);
    if degenerate {
        log::warn!("final values span a degenerate range; reporting zeros");
    }
    groups
        .iter()
        .map(|requests| {
            let (mut mean, mut max, mut n) = (0.0, 0.0, 0usize);
            if !degenerate {
                for vals in requests.iter().filter(|v| !v.is_empty()) {
                    let norm: Vec<f64> = vals.iter().map(|v| (v - lo) / (hi - lo)).collect();
                    mean += norm.iter().sum::<f64>() / norm.len() as f64;
                    max += norm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    n += 1;
                }
            } else {
                n = requests.iter().filter(|v| !v.is_empty()).count();
            }
            let d = n.max(1) as f64;
            NormalizedReport {
                mean: if degenerate { 0.0 } else { mean / d },
                max: if degenerate { 0.0 } else { max / d },
                lo,
                hi,
                degenerate,
                requests: n,
            }
        })
        .collect()
}

pub fn normalize_final_values(episodes: &[EpisodeRecord]) -> NormalizedReport {
    let values = episodes.iter().map(EpisodeRecord::final_values).collect();
    normalize_value_groups(&[values]).remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_hand_example() {
        let r = combine_reward(1.0, &[0.2, 0.1], &RewardConfig::default());
        assert!((r - 1.075).abs() < 1e-15);
        let zero = RewardConfig {
            targets: vec![AuxWeight {
                target: AuxTarget::Pctr,
                alpha: 0.0,
            }],
        };
        assert_eq!(combine_reward(0.7, &[0.9], &zero), 0.7);
        assert_eq!(combine_reward(0.7, &[], &RewardConfig { targets: vec![] }), 0.7);
    }

    #[test]
    fn normalization_endpoints_and_aggregates() {
        let r = normalize_value_groups(&[vec![vec![1.0, 3.0]]]).remove(0);
        assert_eq!((r.mean, r.max, r.degenerate), (0.5, 1.0, false));
        let r = normalize_value_groups(&[vec![vec![0.0, 0.5, 1.0]]]).remove(0);
        assert!((r.mean - 0.5).abs() < 1e-15);
        assert_eq!(r.max, 1.0);
        let r = normalize_value_groups(&[vec![vec![2.0, 2.0], vec![2.0]]]).remove(0);
        assert!(r.degenerate);
        assert_eq!((r.mean, r.max, r.requests), (0.0, 0.0, 2));
    }

    #[test]
    fn groups_share_a_range() {
        let out = normalize_value_groups(&[vec![vec![0.0, 1.0]], vec![vec![2.0, 4.0]]]);
        assert_eq!(out[0].max, 0.25);
        assert_eq!(out[1].mean, 0.75);
        assert_eq!(out[0].hi, 4.0);
    }
}
