//! Multi-token prediction pretraining and value-aware fine-tuning over the
//! tabular policy.

mod epoch;
mod loss;
mod weights;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{GprError, Result};
use crate::policy::{IntentState, LegalSets, LegalSpace};
use crate::quantizer::CodePath;
use crate::schema::ActionType;

pub use epoch::{train_epoch, BatchRecord, EpochReport, LossKind, TrainConfig};
pub use loss::{mtp_loss, vaft_loss, weighted_mtp_loss, LossOutput};
pub use weights::{raw_value, value_weight, ValueWeightConfig, ValueWeighter};

/// Ground-truth item for one head at one position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub path: CodePath,
    /// Actions observed on the item at this position; the most valuable one
    /// sets the value weight.
    pub actions: Vec<ActionType>,
    pub ecpm: f64,
    pub pctr: f64,
    pub pcvr: f64,
}

impl Target {
    pub fn new(path: CodePath, action: ActionType, ecpm: f64, pctr: f64, pcvr: f64) -> Self {
        Target {
            path,
            actions: vec![action],
            ecpm,
            pctr,
            pcvr,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub state: IntentState,
    /// `targets[j]` is the target of head `j`; heads past the end are skipped.
    pub targets: Vec<Target>,
    pub legal: LegalSets,
}

impl TrainingExample {
    pub fn validate(&self) -> Result<()> {
        for t in &self.targets {
            if t.actions.is_empty() {
                return Err(GprError::invalid(format!("target {} has no action", t.path)));
            }
            if !(t.ecpm >= 0.0 && t.ecpm.is_finite()) {
                return Err(GprError::invalid(format!("target {} has eCPM {}", t.path, t.ecpm)));
            }
            for p in [t.pctr, t.pcvr] {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(GprError::invalid(format!("target {} has rate {p} outside (0, 1]", t.path)));
                }
            }
            self.legal.check_path(&t.path)?;
        }
        Ok(())
    }
}

pub fn read_examples_jsonl<R: BufRead>(reader: R) -> Result<Vec<TrainingExample>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: TrainingExample =
            serde_json::from_str(&line).map_err(|e| GprError::Format(format!("example line {}: {e}", n + 1)))?;
        out.push(ex);
    }
    Ok(out)
}

pub fn write_examples_jsonl<W: Write>(examples: &[TrainingExample], mut w: W) -> Result<()> {
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
