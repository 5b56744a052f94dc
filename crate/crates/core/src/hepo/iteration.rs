use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    gae_advantages, hepo_policy_loss, process_reward, value_loss, zscore_advantage, PolicySample,
    PopularityStore, ValueSample, DEFAULT_EPS_NUM,
};
use crate::decoder::BeamConfig;
use crate::error::{GprError, Result};
use crate::policy::{HeadSelection, PolicyParams, ValueParams};
use crate::rng;
use crate::simenv::{normalize_final_values, Environment, EpisodeRecord, Request};

pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HepoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    /// Process-reward scale per coarse level; missing levels use [`DEFAULT_ALPHA`].
    pub alphas: Vec<f64>,
    /// Policy-loss coefficient per level; missing levels use 1.
    pub coefficients: Vec<f64>,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub eps_num: f64,
    /// Iterations between pushes of the trained policy to serving.
    pub push_interval: u64,
    /// Positives a user needs before their own popularity table is used.
    pub min_user_positives: u64,
}

impl Default for HepoConfig {
    fn default() -> Self {
        HepoConfig {
            gamma: 1.0,
            lambda: 0.95,
            clip_eps: 0.2,
            alphas: Vec::new(),
            coefficients: Vec::new(),
            policy_lr: 1.0,
            value_lr: 1.0,
            eps_num: DEFAULT_EPS_NUM,
            push_interval: 1,
            min_user_positives: 20,
        }
    }
}

impl HepoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.gamma) || !unit(self.lambda) {
            return Err(GprError::invalid("gamma and lambda must lie in [0, 1]"));
        }
        if !(self.clip_eps > 0.0) || !(self.eps_num > 0.0) || self.push_interval == 0 {
            return Err(GprError::invalid("clip radius, eps_num and push interval must be positive"));
        }
        if !(self.policy_lr >= 0.0 && self.value_lr >= 0.0) {
            return Err(GprError::invalid("learning rates must be non-negative"));
        }
        if self.alphas.iter().chain(&self.coefficients).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(GprError::invalid("process scales and coefficients must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn alpha(&self, level: usize) -> f64 {
        self.alphas.get(level).copied().unwrap_or(DEFAULT_ALPHA)
    }
}

/// Trainer state carried across iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct HepoState {
    pub policy: PolicyParams,
    pub vparams: ValueParams,
    /// Snapshot serving requests; refreshed every `push_interval` iterations.
    pub behavior: PolicyParams,
    pub popularity: PopularityStore,
    pub iteration: u64,
}

impl HepoState {
    pub fn new(policy: PolicyParams, vparams: ValueParams, cfg: &HepoConfig) -> Self {
        let levels = policy.num_levels();
        HepoState {
            behavior: policy.clone(),
            policy,
            vparams,
            popularity: PopularityStore::new(levels, cfg.min_user_positives),
            iteration: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: u64,
    pub episodes: usize,
    pub synthetic: usize,
    pub empty: usize,
    /// Mean final value over all candidates.
    pub mean_r: f64,
    /// Mean final value of the exposed candidates.
    pub mean_chosen_r: f64,
    pub mean_normalized: f64,
    pub max_normalized: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
}

/// Rewards, advantages and returns for every candidate of every episode.
pub fn prepare_samples(
    episodes: &[EpisodeRecord],
    popularity: &PopularityStore,
    cfg: &HepoConfig,
) -> Result<(Vec<PolicySample>, Vec<ValueSample>)> {
    let mut policy = Vec::new();
    let mut value = Vec::new();
    for ep in episodes {
        ep.validate()?;
        let table = popularity.table_for(&ep.user_id, ep.state.bucket);
        let terminal = zscore_advantage(&ep.final_values(), cfg.eps_num);
        for (c, z) in ep.candidates.iter().zip(terminal) {
            let levels = c.path.len();
            let codes = c.path.codes();
            let rewards = (0..levels)
                .map(|l| process_reward(table, codes[l], &c.legal[l], l, levels, c.final_value, cfg.alpha(l)))
                .collect::<Result<Vec<f64>>>()?;
            let adv = gae_advantages(&rewards, &c.values, cfg.gamma, cfg.lambda)?;
            let mut advantages = adv.advantages;
            advantages.push(z);
            policy.push(PolicySample {
                state: ep.state.clone(),
                path: c.path.clone(),
                legal: c.legal.clone(),
                behavior: c.probs.clone(),
                advantages,
            });
            value.push(ValueSample {
                state: ep.state.clone(),
                path: c.path.clone(),
                returns: adv.returns,
            });
        }
    }
    Ok((policy, value))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
}

/// One clipped policy step and one critic step on recorded episodes. Usable
/// on replayed logs without an environment.
pub fn hepo_update(
    policy: &PolicyParams,
    vparams: &ValueParams,
    popularity: &PopularityStore,
    episodes: &[EpisodeRecord],
    sel: HeadSelection,
    cfg: &HepoConfig,
) -> Result<(PolicyParams, ValueParams, UpdateStats)> {
    cfg.validate()?;
    let (ps, vs) = prepare_samples(episodes, popularity, cfg)?;
    if ps.is_empty() {
        return Ok((policy.clone(), vparams.clone(), UpdateStats::default()));
    }
    let pl = hepo_policy_loss(policy, &ps, sel, cfg.clip_eps, &cfg.coefficients)?;
    let vl = value_loss(vparams, &vs)?;
    let mut next_policy = policy.clone();
    next_policy.apply(&pl.grad, cfg.policy_lr)?;
    let mut next_values = vparams.clone();
    next_values.apply(&vl.grad, cfg.value_lr)?;
    Ok((
        next_policy,
        next_values,
        UpdateStats {
            clip_fraction: pl.clip_fraction,
            approx_kl: pl.approx_kl,
            policy_loss: pl.loss,
            value_loss: vl.loss,
        },
    ))
}

/// Serves `requests` with the behavior snapshot, updates policy and critic,
/// then exposes each episode's best candidate and folds click outcomes
/// into the popularity tables.
pub fn hepo_iteration(
    state: &HepoState,
    env: &Environment,
    requests: &[Request],
    cfg: &HepoConfig,
    seed: u64,
) -> Result<(HepoState, IterationReport)> {
    cfg.validate()?;
    let mut episodes = Vec::with_capacity(requests.len());
    let mut empty = 0;
    for req in requests {
        match env.generate_candidates(&state.behavior, &state.vparams, req)? {
            Some(ep) => episodes.push(ep),
            None => empty += 1,
        }
    }
    let mut next = state.clone();
    next.iteration += 1;
    let mut report = IterationReport {
        iteration: state.iteration,
        episodes: episodes.len(),
        synthetic: episodes.iter().filter(|e| e.synthetic).count(),
        empty,
        ..Default::default()
    };
    if episodes.is_empty() {
        log::warn!("hepo iteration {} produced no episodes; skipping update", state.iteration);
        return Ok((next, report));
    }
    let sel = env.config().beam.selection;
    let (policy, vparams, stats) =
        hepo_update(&state.policy, &state.vparams, &state.popularity, &episodes, sel, cfg)?;
    next.policy = policy;
    next.vparams = vparams;
    if next.iteration % cfg.push_interval == 0 {
        next.behavior = next.policy.clone();
    }

    let iter_seed = rng::derive_seed(seed, state.iteration);
    for ep in &episodes {
        let c = &ep.candidates[ep.chosen];
        let pctr = env.oracle().pctr(ep.segment, &c.item_id)?;
        let mut r = rng::seeded(rng::derive_seed(iter_seed, ep.request_id));
        let positive = r.random_bool(pctr);
        next.popularity.record(&ep.user_id, ep.state.bucket, &c.path, positive)?;
    }

    let all: Vec<f64> = episodes.iter().flat_map(|e| e.final_values()).collect();
    let norm = normalize_final_values(&episodes);
    report.mean_r = all.iter().sum::<f64>() / all.len() as f64;
    report.mean_chosen_r =
        episodes.iter().map(|e| e.candidates[e.chosen].final_value).sum::<f64>() / episodes.len() as f64;
    report.mean_normalized = norm.mean;
    report.max_normalized = norm.max;
    report.clip_fraction = stats.clip_fraction;
    report.approx_kl = stats.approx_kl;
    report.policy_loss = stats.policy_loss;
    report.value_loss = stats.value_loss;
    Ok((next, report))
}

pub fn write_reports_csv<W: Write>(reports: &[IterationReport], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in reports {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Greedy decoding: one beam of width one.
pub fn greedy_beam(sel: HeadSelection) -> BeamConfig {
    BeamConfig {
        base_width: 1,
        max_width: 1,
        k: 1,
        value_guidance: false,
        beam_size: Some(1),
        selection: sel,
    }
}

/// Mean final value of greedy decoding and mean enumerated optimum over the
/// requests that have an eligible item.
pub fn greedy_values(
    env: &Environment,
    policy: &PolicyParams,
    vparams: &ValueParams,
    requests: &[Request],
) -> Result<(f64, f64)> {
    let genv = env.with_beam(greedy_beam(env.config().beam.selection))?;
    let (mut got, mut best, mut n) = (0.0, 0.0, 0usize);
    for req in requests {
        let Some(ep) = genv.generate_candidates(policy, vparams, req)? else {
            continue;
        };
        let (_, opt) = env
            .optimum(req.segment, &req.profile)?
            .ok_or_else(|| GprError::invalid("eligible request without an optimum"))?;
        got += ep.candidates[0].final_value;
        best += opt;
        n += 1;
    }
    if n == 0 {
        return Err(GprError::invalid("no request has an eligible item"));
    }
    Ok((got / n as f64, best / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simenv::{generate_world, ArrConfig, RewardConfig, WorldConfig};

    fn setup() -> (Environment, Vec<Request>, HepoState) {
        let w = generate_world(&WorldConfig {
            num_segments: 2,
            users_per_segment: 3,
            catalog_size: 8,
            level_sizes: vec![4, 4],
            ..Default::default()
        })
        .unwrap();
        let env = w.environment(RewardConfig::default(), BeamConfig::default()).unwrap();
        let reqs = w.requests(0, &ArrConfig::default()).unwrap();
        let policy = PolicyParams::new(2, w.cfg.level_sizes.clone()).unwrap();
        let state = HepoState::new(policy, ValueParams::new(), &HepoConfig::default());
        (env, reqs, state)
    }

    #[test]
    fn zero_rates_keep_parameters() {
        let (env, reqs, state) = setup();
        let cfg = HepoConfig {
            policy_lr: 0.0,
            value_lr: 0.0,
            ..Default::default()
        };
        let (next, report) = hepo_iteration(&state, &env, &reqs, &cfg, 1).unwrap();
        assert_eq!(next.policy, state.policy);
        assert_eq!(next.vparams, state.vparams);
        assert!(report.episodes > 0);
        assert!(report.synthetic > 0);
        assert_eq!(report.clip_fraction, 0.0);
    }

    #[test]
    fn iteration_is_reproducible() {
        let (env, reqs, state) = setup();
        let cfg = HepoConfig::default();
        let (a, ra) = hepo_iteration(&state, &env, &reqs, &cfg, 5).unwrap();
        let (b, rb) = hepo_iteration(&state, &env, &reqs, &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_ne!(a.policy, state.policy);
    }

    #[test]
    fn lagged_behavior_snapshot() {
        let (env, reqs, state) = setup();
        let cfg = HepoConfig {
            push_interval: 2,
            ..Default::default()
        };
        let (one, _) = hepo_iteration(&state, &env, &reqs, &cfg, 0).unwrap();
        assert_eq!(one.behavior, state.policy);
        let (two, r2) = hepo_iteration(&one, &env, &reqs, &cfg, 0).unwrap();
        assert_eq!(two.behavior, two.policy);
        assert!(r2.approx_kl > 0.0);
    }

    #[test]
    fn no_episodes_is_a_no_op() {
        let (env, _, state) = setup();
        let (next, report) = hepo_iteration(&state, &env, &[], &HepoConfig::default(), 0).unwrap();
        assert_eq!(next.policy, state.policy);
        assert_eq!(report.episodes, 0);
    }
}
