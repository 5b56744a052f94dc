//! The staged training regimen on a synthetic world: multi-token
//! pretraining, value-aware fine-tuning, then HEPO, with shared-range
//! evaluation of every checkpoint.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::decoder::BeamConfig;
use crate::error::{GprError, Result};
use crate::hepo::{greedy_values, hepo_iteration, HepoConfig, HepoState, IterationReport};
use crate::metrics_eval::{hitrate_at_k, ndcg, opr, RankedList};
use crate::policy::{HeadSelection, PolicyParams, ValueParams};
use crate::rng;
use crate::simenv::{normalize_value_groups, ArrConfig, Environment, Request, RewardConfig, World};
use crate::training::{train_epoch, EpochReport, LossKind, TrainConfig, TrainingExample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Mtp,
    Vaft,
    Hepo,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Mtp, Stage::Vaft, Stage::Hepo];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Mtp => "mtp",
            Stage::Vaft => "vaft",
            Stage::Hepo => "hepo",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = GprError;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| GprError::invalid(format!("unknown stage {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Cutoff for HitRate and the length of the ranked lists; capped by the catalog.
    pub k: usize,
    /// Candidates per request for the normalized final value.
    pub value_k: usize,
    pub heldout_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 100,
            value_k: 10,
            heldout_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub num_heads: usize,
    pub train_seed: u64,
    pub train: TrainConfig,
    pub mtp_epochs: usize,
    pub mtp_lr: f64,
    pub vaft_epochs: usize,
    pub vaft_lr: f64,
    pub run_vaft: bool,
    pub run_hepo: bool,
    pub hepo: HepoConfig,
    pub hepo_iterations: usize,
    pub hepo_seed: u64,
    pub arr: ArrConfig,
    pub reward: RewardConfig,
    pub beam: BeamConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            num_heads: 4,
            train_seed: 0,
            train: TrainConfig::default(),
            mtp_epochs: 5,
            mtp_lr: 0.5,
            vaft_epochs: 5,
            vaft_lr: 0.5,
            run_vaft: true,
            run_hepo: true,
            hepo: HepoConfig::default(),
            hepo_iterations: 100,
            hepo_seed: 0,
            arr: ArrConfig::default(),
            reward: RewardConfig::default(),
            beam: BeamConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stage: Stage,
    pub policy: PolicyParams,
    pub vparams: ValueParams,
}

/// Seeded epochs of supervised training from `start`.
pub fn run_supervised(
    start: &PolicyParams,
    examples: &[TrainingExample],
    kind: LossKind,
    epochs: usize,
    lr: f64,
    train: &TrainConfig,
    seed: u64,
) -> Result<(PolicyParams, Vec<EpochReport>)> {
    let mut policy = start.clone();
    let mut reports = Vec::with_capacity(epochs);
    let mut order: Vec<TrainingExample> = examples.to_vec();
    for e in 0..epochs {
        order.shuffle(&mut rng::seeded(rng::derive_seed(seed, e as u64)));
        let (next, report) = train_epoch(&policy, &order, lr, kind, train)?;
        policy = next;
        reports.push(report);
    }
    Ok((policy, reports))
}

/// HEPO iterations from `start`, one generation round per iteration.
pub fn run_hepo(
    world: &World,
    env: &Environment,
    start: &PolicyParams,
    vparams: &ValueParams,
    cfg: &PipelineConfig,
) -> Result<(HepoState, Vec<IterationReport>)> {
    let mut state = HepoState::new(start.clone(), vparams.clone(), &cfg.hepo);
    let mut reports = Vec::with_capacity(cfg.hepo_iterations);
    for it in 0..cfg.hepo_iterations {
        let requests = world.requests(it as u64, &cfg.arr)?;
        let (next, report) = hepo_iteration(&state, env, &requests, &cfg.hepo, cfg.hepo_seed)?;
        state = next;
        reports.push(report);
    }
    Ok((state, reports))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub stage: Stage,
    pub requests: usize,
    pub hitrate: f64,
    pub ndcg: f64,
    pub opr: f64,
    pub mean_normalized: f64,
    pub max_normalized: f64,
    pub degenerate: bool,
    pub greedy_value: f64,
    pub optimum_value: f64,
}

/// Decoding used for evaluation: exact policy order over eligible items.
pub fn eval_beam(level_sizes: &[usize], k: usize, selection: HeadSelection) -> BeamConfig {
    let width = level_sizes.iter().copied().max().unwrap_or(1);
    BeamConfig {
        base_width: 1,
        max_width: width,
        k,
        value_guidance: false,
        beam_size: None,
        selection,
    }
}

/// Scores checkpoints on the same held-out requests. Final values of every
/// checkpoint are normalized with one shared range.
pub fn evaluate(
    env: &Environment,
    checkpoints: &[Checkpoint],
    heldout: &[(Request, String)],
    cfg: &EvalConfig,
) -> Result<Vec<EvalReport>> {
    if heldout.is_empty() {
        return Err(GprError::invalid("no held-out requests"));
    }
    let sel = env.config().beam.selection;
    let k = cfg.k.min(env.catalog().len()).max(1);
    let rank_env = env.with_beam(eval_beam(env.level_sizes(), k, sel))?;
    let value_env = env.with_beam(eval_beam(env.level_sizes(), cfg.value_k.max(1), sel))?;
    let mut groups = Vec::with_capacity(checkpoints.len());
    let mut reports = Vec::with_capacity(checkpoints.len());
    for ck in checkpoints {
        let (mut hit, mut nd, mut op, mut n, mut n_opr) = (0.0, 0.0, 0.0, 0usize, 0usize);
        let mut values = Vec::new();
        let requests: Vec<Request> = heldout.iter().map(|(r, _)| r.clone()).collect();
        for (req, truth) in heldout {
            let Some(ep) = rank_env.generate_candidates(&ck.policy, &ck.vparams, req)? else {
                continue;
            };
            let list = RankedList::from_order(ep.candidates.iter().map(|c| c.item_id.clone()).collect())?;
            let mut ecpm = BTreeMap::new();
            for item in env.catalog().iter().filter(|i| i.eligible(&req.profile)) {
                ecpm.insert(item.item_id.clone(), env.oracle().ecpm(req.segment, &item.item_id)?);
            }
            hit += hitrate_at_k(&list, truth, k)?;
            nd += ndcg(&list, &ecpm)?;
            if list.len() >= 2 {
                op += opr(&list, &ecpm)?;
                n_opr += 1;
            }
            n += 1;
            if let Some(vep) = value_env.generate_candidates(&ck.policy, &ck.vparams, req)? {
                values.push(vep.final_values());
            }
        }
        if n == 0 {
            return Err(GprError::invalid("no held-out request has an eligible item"));
        }
        let (greedy, optimum) = greedy_values(env, &ck.policy, &ck.vparams, &requests)?;
        groups.push(values);
        reports.push(EvalReport {
            stage: ck.stage,
            requests: n,
            hitrate: hit / n as f64,
            ndcg: nd / n as f64,
            opr: if n_opr > 0 { op / n_opr as f64 } else { 0.0 },
            mean_normalized: 0.0,
            max_normalized: 0.0,
            degenerate: false,
            greedy_value: greedy,
            optimum_value: optimum,
        });
    }
    for (r, norm) in reports.iter_mut().zip(normalize_value_groups(&groups)) {
        r.mean_normalized = norm.mean;
        r.max_normalized = norm.max;
        r.degenerate = norm.degenerate;
    }
    Ok(reports)
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub checkpoints: Vec<Checkpoint>,
    pub mtp_reports: Vec<EpochReport>,
    pub vaft_reports: Vec<EpochReport>,
    pub hepo_reports: Vec<IterationReport>,
    pub eval: Vec<EvalReport>,
}

/// Runs every enabled stage in order and evaluates each checkpoint.
pub fn run_pipeline(world: &World, cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let env = world.environment(cfg.reward.clone(), cfg.beam.clone())?;
    let examples = world.training_examples(world.event_log()?, cfg.num_heads)?;
    let init = PolicyParams::new(cfg.num_heads, world.cfg.level_sizes.clone())?;
    let (mtp, mtp_reports) = run_supervised(
        &init,
        &examples,
        LossKind::Mtp,
        cfg.mtp_epochs,
        cfg.mtp_lr,
        &cfg.train,
        rng::derive_seed(cfg.train_seed, 1),
    )?;
    let mut checkpoints = vec![Checkpoint {
        stage: Stage::Mtp,
        policy: mtp,
        vparams: ValueParams::new(),
    }];
    let mut vaft_reports = Vec::new();
    if cfg.run_vaft {
        let (vaft, reports) = run_supervised(
            &checkpoints[0].policy,
            &examples,
            LossKind::Vaft,
            cfg.vaft_epochs,
            cfg.vaft_lr,
            &cfg.train,
            rng::derive_seed(cfg.train_seed, 2),
        )?;
        vaft_reports = reports;
        checkpoints.push(Checkpoint {
            stage: Stage::Vaft,
            policy: vaft,
            vparams: ValueParams::new(),
        });
    }
    let mut hepo_reports = Vec::new();
    if cfg.run_hepo {
        let last = checkpoints.last().expect("the MTP checkpoint always exists");
        let (state, reports) = run_hepo(world, &env, &last.policy, &last.vparams, cfg)?;
        hepo_reports = reports;
        checkpoints.push(Checkpoint {
            stage: Stage::Hepo,
            policy: state.policy,
            vparams: state.vparams,
        });
    }
    let heldout = world.heldout(cfg.eval.heldout_seed)?;
    let eval = evaluate(&env, &checkpoints, &heldout, &cfg.eval)?;
    Ok(PipelineOutcome {
        checkpoints,
        mtp_reports,
        vaft_reports,
        hepo_reports,
        eval,
    })
}
