use serde::{Deserialize, Serialize};

use crate::error::{GprError, Result};
use crate::policy::{decision_grad, HeadSelection, IntentState, PolicyGrad, PolicyParams, ValueGrad, ValueKey};
use crate::quantizer::CodePath;

/// One candidate trajectory prepared for the policy update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySample {
    pub state: IntentState,
    pub path: CodePath,
    /// Legal codes at each level under the path's own prefix.
    pub legal: Vec<Vec<u32>>,
    /// Behavior probability of each chosen code.
    pub behavior: Vec<f64>,
    /// Advantage at each level.
    pub advantages: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyLossOutput {
    pub loss: f64,
    pub grad: PolicyGrad,
    /// Share of decisions where the clipped branch was selected by the min.
    pub clip_fraction: f64,
    /// Mean of `(rho - 1) - ln rho` over decisions.
    pub approx_kl: f64,
}

/// Negated clipped surrogate averaged over trajectories:
/// `-(1/n) sum_i sum_l c_l * min(rho A, clip(rho, 1-eps, 1+eps) A)`.
///
/// Gradients flow through `rho` only where the unclipped term attains the min.
pub fn hepo_policy_loss(
    params: &PolicyParams,
    samples: &[PolicySample],
    sel: HeadSelection,
    clip_eps: f64,
    coefficients: &[f64],
) -> Result<PolicyLossOutput> {
    if samples.is_empty() {
        return Err(GprError::invalid("empty policy batch"));
    }
    if !(clip_eps > 0.0) {
        return Err(GprError::invalid("clip radius must be positive"));
    }
    let n = samples.len() as f64;
    let levels = params.num_levels();
    let mut out = PolicyLossOutput {
        loss: 0.0,
        grad: PolicyGrad::new(),
        clip_fraction: 0.0,
        approx_kl: 0.0,
    };
    let mut decisions = 0usize;
    let mut clipped = 0usize;
    for s in samples {
        if s.path.len() != levels || s.legal.len() != levels || s.behavior.len() != levels || s.advantages.len() != levels
        {
            return Err(GprError::invalid(format!("policy sample {} is ragged", s.path)));
        }
        let codes = s.path.codes();
        for l in 0..levels {
            let b = s.behavior[l];
            if !(b > 0.0 && b <= 1.0) {
                return Err(GprError::invalid(format!("behavior probability {b} at level {l} of {}", s.path)));
            }
            let (lp, rows) = decision_grad(params, &s.state, sel, l, &codes[..l], &s.legal[l], codes[l])?;
            let rho = lp.exp() / b;
            let a = s.advantages[l];
            let c = coefficient(coefficients, l);
            let unclipped = rho * a;
            let clipped_term = rho.clamp(1.0 - clip_eps, 1.0 + clip_eps) * a;
            decisions += 1;
            out.approx_kl += (rho - 1.0) - rho.ln();
            if clipped_term < unclipped {
                clipped += 1;
                out.loss -= c * clipped_term / n;
                continue;
            }
            out.loss -= c * unclipped / n;
            let scale = -c * a * rho / n;
            if scale == 0.0 {
                continue;
            }
            for (key, g) in rows {
                let k = g.len();
                let row = out.grad.entry(key).or_insert_with(|| vec![0.0; k]);
                for (r, gv) in row.iter_mut().zip(g) {
                    *r += scale * gv;
                }
            }
        }
    }
    if !out.loss.is_finite() {
        return Err(GprError::numerical("hepo policy loss", format!("value {}", out.loss)));
    }
    out.clip_fraction = clipped as f64 / decisions.max(1) as f64;
    out.approx_kl /= decisions.max(1) as f64;
    Ok(out)
}

/// Per-level loss coefficient; levels past the end of the list use 1.
pub fn coefficient(coefficients: &[f64], level: usize) -> f64 {
    coefficients.get(level).copied().unwrap_or(1.0)
}

/// Critic targets of one candidate trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueSample {
    pub state: IntentState,
    pub path: CodePath,
    /// `returns[l]` is the target for the length-`l` prefix.
    pub returns: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueLossOutput {
    pub loss: f64,
    pub grad: ValueGrad,
}

/// `(1/n) sum_i sum_l (V(s, z_{1:l}) - G_l)^2` over trajectories.
pub fn value_loss(vparams: &crate::policy::ValueParams, samples: &[ValueSample]) -> Result<ValueLossOutput> {
    if samples.is_empty() {
        return Err(GprError::invalid("empty value batch"));
    }
    let n = samples.len() as f64;
    let mut out = ValueLossOutput {
        loss: 0.0,
        grad: ValueGrad::new(),
    };
    for s in samples {
        if s.returns.len() != s.path.len() {
            return Err(GprError::invalid(format!("value sample {} needs one return per level", s.path)));
        }
        for (l, &g) in s.returns.iter().enumerate() {
            let key = ValueKey::new(s.state.bucket, &s.path.codes()[..l]);
            let v = vparams.get(&key);
            out.loss += (v - g) * (v - g) / n;
            *out.grad.entry(key).or_insert(0.0) += 2.0 * (v - g) / n;
        }
    }
    if !out.loss.is_finite() {
        return Err(GprError::numerical("value loss", format!("value {}", out.loss)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{DecisionKey, ValueParams};

    fn sample(adv: [f64; 2], behavior: [f64; 2]) -> PolicySample {
        PolicySample {
            state: IntentState::from_bucket(1),
            path: CodePath::new(vec![1, 0]),
            legal: vec![vec![0, 1], vec![0, 1, 2]],
            behavior: behavior.to_vec(),
            advantages: adv.to_vec(),
        }
    }

    #[test]
    fn identity_ratio_gives_advantage_sum() {
        let p = PolicyParams::new(1, vec![2, 3]).unwrap();
        let s = sample([0.5, -2.0], [0.5, 1.0 / 3.0]);
        let out = hepo_policy_loss(&p, &[s], HeadSelection::Head(0), 0.2, &[]).unwrap();
        assert!((out.loss - 1.5).abs() < 1e-12);
        assert_eq!(out.clip_fraction, 0.0);
        assert!(out.approx_kl.abs() < 1e-12);
    }

    #[test]
    fn ratio_two_is_clipped() {
        // pi = 0.5 against behaviour 0.25 -> rho = 2
        let p = PolicyParams::new(1, vec![2, 3]).unwrap();
        let s = sample([1.0, 0.0], [0.25, 1.0 / 3.0]);
        let out = hepo_policy_loss(&p, &[s], HeadSelection::Head(0), 0.2, &[]).unwrap();
        assert!((out.loss + 1.2).abs() < 1e-12);
        assert_eq!(out.clip_fraction, 0.5);
        let key = DecisionKey::new(0, 0, 1, &[]);
        assert!(out.grad.get(&key).is_none_or(|g| g.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn zero_advantage_zero_grad() {
        let p = PolicyParams::new(2, vec![2, 3]).unwrap();
        let s = sample([0.0, 0.0], [0.4, 0.2]);
        let out = hepo_policy_loss(&p, &[s], HeadSelection::Mixture, 0.2, &[]).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grad.values().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn zero_behavior_rejected() {
        let p = PolicyParams::new(1, vec![2, 3]).unwrap();
        let s = sample([1.0, 1.0], [0.0, 0.5]);
        assert!(hepo_policy_loss(&p, &[s], HeadSelection::Head(0), 0.2, &[]).is_err());
    }

    #[test]
    fn value_loss_hand_example() {
        let s = ValueSample {
            state: IntentState::from_bucket(0),
            path: CodePath::new(vec![1, 2]),
            returns: vec![1.0, 2.0],
        };
        let out = value_loss(&ValueParams::new(), std::slice::from_ref(&s)).unwrap();
        assert_eq!(out.loss, 5.0);
        assert_eq!(out.grad[&ValueKey::new(0, &[])], -2.0);
        assert_eq!(out.grad[&ValueKey::new(0, &[1])], -4.0);
        let mut v = ValueParams::new();
        v.set(ValueKey::new(0, &[]), 1.0).unwrap();
        v.set(ValueKey::new(0, &[1]), 2.0).unwrap();
        assert_eq!(value_loss(&v, &[s]).unwrap().loss, 0.0);
    }
}
