use serde::{Deserialize, Serialize};

use super::{Target, TrainingExample};
use crate::error::{GprError, Result};
use crate::schema::ActionType;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValueWeightConfig {
    /// Upper clip on raw values, as a percentile of the fitted batch. `None` disables.
    pub clip_percentile: Option<f64>,
    /// Multipliers for (impression, click, conversion).
    pub coefficients: [f64; 3],
}

impl Default for ValueWeightConfig {
    fn default() -> Self {
        ValueWeightConfig {
            clip_percentile: Some(99.0),
            coefficients: [1.0, 2.0, 4.0],
        }
    }
}

impl ValueWeightConfig {
    pub fn coefficient(&self, action: ActionType) -> f64 {
        match action {
            ActionType::Impression => self.coefficients[0],
            ActionType::Click => self.coefficients[1],
            ActionType::Conversion => self.coefficients[2],
        }
    }
}

/// eCPM divided by the action's denominator: 1, pCTR, or pCTR·pCVR.
pub fn raw_value(action: ActionType, ecpm: f64, pctr: f64, pcvr: f64) -> Result<f64> {
    for (name, p) in [("pCTR", pctr), ("pCVR", pcvr)] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(GprError::invalid(format!("{name} {p} outside (0, 1]")));
        }
    }
    if !(ecpm >= 0.0 && ecpm.is_finite()) {
        return Err(GprError::invalid(format!("eCPM {ecpm} must be finite and non-negative")));
    }
    Ok(match action {
        ActionType::Impression => ecpm,
        ActionType::Click => ecpm / pctr,
        ActionType::Conversion => ecpm / (pctr * pcvr),
    })
}

/// Normalization fitted on a batch: clip, `log1p`, then min-max into [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ValueWeighter {
    cfg: ValueWeightConfig,
    clip: f64,
    lo: f64,
    hi: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

impl ValueWeighter {
    /// Fits on raw values (one per weighted term).
    pub fn fit(raws: &[f64], cfg: &ValueWeightConfig) -> Result<Self> {
        if raws.is_empty() {
            return Err(GprError::invalid("cannot fit value weights on an empty batch"));
        }
        if raws.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(GprError::invalid("raw values must be finite and non-negative"));
        }
        let mut sorted = raws.to_vec();
        sorted.sort_by(f64::total_cmp);
        let clip = match cfg.clip_percentile {
            Some(q) => percentile(&sorted, q),
            None => f64::INFINITY,
        };
        let lo = sorted[0].min(clip).ln_1p();
        let hi = sorted[sorted.len() - 1].min(clip).ln_1p();
        Ok(ValueWeighter {
            cfg: cfg.clone(),
            clip,
            lo,
            hi,
        })
    }

    /// Fits on the best raw value of every target in `examples`.
    pub fn fit_examples(examples: &[TrainingExample], cfg: &ValueWeightConfig) -> Result<Self> {
        let raws = examples
            .iter()
            .flat_map(|e| &e.targets)
            .map(|t| best_action(t, cfg).map(|(_, raw)| raw))
            .collect::<Result<Vec<_>>>()?;
        if raws.is_empty() {
            return Err(GprError::invalid("no targets to fit value weights on"));
        }
        Self::fit(&raws, cfg)
    }

    /// Clipped, log-transformed, min-max normalized raw value in [0, 1].
    pub fn normalize(&self, raw: f64) -> f64 {
        let v = raw.min(self.clip).ln_1p();
        if self.hi > self.lo {
            ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
        } else if v > 0.0 {
            // every fitted value was identical and positive
            1.0
        } else {
            0.0
        }
    }

    pub fn weight(&self, action: ActionType, raw: f64) -> f64 {
        self.cfg.coefficient(action) * self.normalize(raw)
    }

    /// Weight of a target, taking the most valuable of its actions.
    pub fn target_weight(&self, target: &Target) -> Result<f64> {
        let mut best = 0.0f64;
        for &a in &target.actions {
            let raw = raw_value(a, target.ecpm, target.pctr, target.pcvr)?;
            best = best.max(self.weight(a, raw));
        }
        Ok(best)
    }

    pub fn config(&self) -> &ValueWeightConfig {
        &self.cfg
    }
}

fn best_action(t: &Target, cfg: &ValueWeightConfig) -> Result<(ActionType, f64)> {
    let mut best: Option<(ActionType, f64, f64)> = None;
    for &a in &t.actions {
        let raw = raw_value(a, t.ecpm, t.pctr, t.pcvr)?;
        let key = cfg.coefficient(a) * raw;
        if best.is_none_or(|(_, _, k)| key > k) {
            best = Some((a, raw, key));
        }
    }
    best.map(|(a, r, _)| (a, r))
        .ok_or_else(|| GprError::invalid(format!("target {} has no action", t.path)))
}

/// Normalized weight of one interaction under a fitted weighter.
pub fn value_weight(
    action: ActionType,
    ecpm: f64,
    pctr: f64,
    pcvr: f64,
    weighter: &ValueWeighter,
) -> Result<f64> {
    Ok(weighter.weight(action, raw_value(action, ecpm, pctr, pcvr)?))
}
