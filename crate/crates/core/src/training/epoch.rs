use std::io::Write;

use serde::{Deserialize, Serialize};

use super::loss::{batch_weights, weighted_mtp_loss};
use super::{TrainingExample, ValueWeightConfig, ValueWeighter};
use crate::error::{GprError, Result};
use crate::policy::PolicyParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mtp,
    Vaft,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub value_weights: ValueWeightConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            value_weights: ValueWeightConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub step: usize,
    pub loss: f64,
    pub per_head: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub batches: Vec<BatchRecord>,
}

impl EpochReport {
    pub fn mean_loss(&self) -> f64 {
        if self.batches.is_empty() {
            return 0.0;
        }
        self.batches.iter().map(|b| b.loss).sum::<f64>() / self.batches.len() as f64
    }

    /// CSV with columns `step,loss,head0..`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let heads = self.batches.first().map_or(0, |b| b.per_head.len());
        let mut header = vec!["step".to_string(), "loss".to_string()];
        header.extend((0..heads).map(|j| format!("head{j}")));
        out.write_record(&header)?;
        for b in &self.batches {
            let mut rec = vec![b.step.to_string(), b.loss.to_string()];
            rec.extend(b.per_head.iter().map(f64::to_string));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// One pass of sequential minibatch descent. Each step moves by `lr` times the
/// batch-mean gradient. For value-aware training the weight normalization
/// is fitted once over the whole dataset so every batch shares one scale.
pub fn train_epoch(
    params: &PolicyParams,
    dataset: &[TrainingExample],
    lr: f64,
    kind: LossKind,
    cfg: &TrainConfig,
) -> Result<(PolicyParams, EpochReport)> {
    if cfg.batch_size == 0 {
        return Err(GprError::invalid("batch size must be positive"));
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(GprError::invalid(format!("learning rate {lr} must be non-negative")));
    }
    let weights = match kind {
        LossKind::Mtp => None,
        LossKind::Vaft => {
            let weighter = ValueWeighter::fit_examples(dataset, &cfg.value_weights)?;
            Some(batch_weights(dataset, &weighter)?)
        }
    };
    let mut current = params.clone();
    let mut report = EpochReport::default();
    for (step, start) in (0..dataset.len()).step_by(cfg.batch_size).enumerate() {
        let end = (start + cfg.batch_size).min(dataset.len());
        let batch = &dataset[start..end];
        let w = weights.as_ref().map(|w| &w[start..end]);
        let out = weighted_mtp_loss(&current, batch, w).map_err(|e| match e {
            GprError::NumericalFailure { component, detail } => GprError::NumericalFailure {
                component,
                detail: format!("{detail} at batch {step}"),
            },
            other => other,
        })?;
        current.apply(&out.grad, lr / batch.len() as f64)?;
        report.batches.push(BatchRecord {
            step,
            loss: out.loss,
            per_head: out.per_head,
        });
    }
    Ok((current, report))
}
