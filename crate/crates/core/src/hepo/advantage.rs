use serde::{Deserialize, Serialize};

use crate::error::{GprError, Result};

pub const DEFAULT_EPS_NUM: f64 = 1e-8;

/// Advantages, returns and TD errors of one candidate trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvantageSet {
    /// `delta_l` for the coarse levels `0..L-1`.
    pub deltas: Vec<f64>,
    /// GAE advantages for the coarse levels `0..L-1`.
    pub advantages: Vec<f64>,
    /// Discounted return from every level `0..L`.
    pub returns: Vec<f64>,
}

/// `rewards[l]` is earned at level `l`; `values[l]` is `V(s, z_{1:l})`, the
/// critic on the length-`l` prefix.
pub fn gae_advantages(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<AdvantageSet> {
    let l = rewards.len();
    if l == 0 || values.len() != l {
        return Err(GprError::invalid(format!(
            "{} rewards and {} values; both need one entry per level",
            l,
            values.len()
        )));
    }
    let deltas: Vec<f64> = (0..l - 1).map(|i| rewards[i] + gamma * values[i + 1] - values[i]).collect();
    let mut advantages = vec![0.0; l - 1];
    let mut acc = 0.0;
    for i in (0..l - 1).rev() {
        acc = deltas[i] + gamma * lambda * acc;
        advantages[i] = acc;
    }
    let mut returns = vec![0.0; l];
    let mut g = 0.0;
    for i in (0..l).rev() {
        g = rewards[i] + gamma * g;
        returns[i] = g;
    }
    Ok(AdvantageSet {
        deltas,
        advantages,
        returns,
    })
}

/// Within-request standardization with the population deviation.
pub fn zscore_advantage(values: &[f64], eps_num: f64) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    let sd = var.sqrt();
    values.iter().map(|v| (v - mu) / (sd + eps_num)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_critic_example() {
        let a = gae_advantages(&[0.1, 0.0, 2.0], &[0.0; 3], 1.0, 1.0).unwrap();
        assert_eq!(a.deltas, vec![0.1, 0.0]);
        assert_eq!(a.advantages, vec![0.1, 0.0]);
        assert!((a.returns[0] - 2.1).abs() < 1e-15);
        assert_eq!(a.returns[2], 2.0);
    }

    #[test]
    fn lambda_zero_is_td() {
        let r = [0.2, 0.05, 0.0, 1.0];
        let v = [0.3, -0.1, 0.7, 0.2];
        let a = gae_advantages(&r, &v, 0.9, 0.0).unwrap();
        assert_eq!(a.advantages, a.deltas);
        let g0 = gae_advantages(&r, &v, 0.0, 0.5).unwrap();
        for i in 0..3 {
            assert_eq!(g0.deltas[i], r[i] - v[i]);
        }
    }

    #[test]
    fn length_mismatch() {
        assert!(gae_advantages(&[1.0], &[0.0, 0.0], 1.0, 1.0).is_err());
        assert!(gae_advantages(&[], &[], 1.0, 1.0).is_err());
        let one = gae_advantages(&[3.0], &[1.0], 1.0, 1.0).unwrap();
        assert!(one.advantages.is_empty());
        assert_eq!(one.returns, vec![3.0]);
    }

    #[test]
    fn zscore_hand_example() {
        let z = zscore_advantage(&[1.0, 2.0, 3.0], DEFAULT_EPS_NUM);
        assert!((z[2] - 1.224_744_871).abs() < 1e-6);
        assert!(z.iter().sum::<f64>().abs() < 1e-12);
        assert_eq!(zscore_advantage(&[4.0, 4.0], DEFAULT_EPS_NUM), vec![0.0, 0.0]);
    }
}
