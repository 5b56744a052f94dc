use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::reward::final_value;
use super::{RankingOracle, RewardConfig};
use crate::decoder::{beam_search, build_trie, BeamConfig, CatalogItem, TargetingProfile};
use crate::error::{GprError, Result};
use crate::policy::{intent_encode, FeaturizerConfig, IntentState, LegalSpace, PolicyParams, ValueParams};
use crate::quantizer::CodePath;
use crate::schema::UserJourney;

/// One ad request: the journey up to and including its E token.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub request_id: u64,
    pub user_id: String,
    /// Latent user segment the oracle is keyed by; never seen by the policy.
    pub segment: u32,
    pub profile: TargetingProfile,
    pub journey: UserJourney,
    pub timestamp: i64,
    pub synthetic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeCandidate {
    pub item_id: String,
    pub path: CodePath,
    /// Behavior probability of each chosen code.
    pub probs: Vec<f64>,
    /// Critic values of the prefixes of lengths `0..L-1` at generation time.
    pub values: Vec<f64>,
    /// Legal codes at each level under this candidate's prefix.
    pub legal: Vec<Vec<u32>>,
    pub final_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub request_id: u64,
    pub user_id: String,
    pub segment: u32,
    pub oracle_version: u32,
    pub state: IntentState,
    pub candidates: Vec<EpisodeCandidate>,
    /// Candidate that was exposed: the highest final value.
    pub chosen: usize,
    pub timestamp: i64,
    pub synthetic: bool,
}

impl EpisodeRecord {
    pub fn final_values(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.final_value).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() || self.chosen >= self.candidates.len() {
            return Err(GprError::invalid(format!("episode {} has no valid candidates", self.request_id)));
        }
        for c in &self.candidates {
            if c.probs.len() != c.path.len() || c.values.len() != c.path.len() || c.legal.len() != c.path.len() {
                return Err(GprError::invalid(format!("episode {} candidate {} is ragged", self.request_id, c.path)));
            }
            if c.probs.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
                return Err(GprError::invalid(format!(
                    "episode {} candidate {} has a probability outside (0, 1]",
                    self.request_id, c.path
                )));
            }
            for (l, (code, legal)) in c.path.codes().iter().zip(&c.legal).enumerate() {
                if !legal.contains(code) {
                    return Err(GprError::invalid(format!("code {code} at level {l} of {} is not legal", c.path)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub beam: BeamConfig,
    #[serde(default)]
    pub featurizer: FeaturizerConfig,
}

/// Serving-side simulation: catalog, oracle and decoding settings.
#[derive(Clone, Debug)]
pub struct Environment {
    catalog: Vec<CatalogItem>,
    oracle: RankingOracle,
    cfg: EnvConfig,
    level_sizes: Vec<usize>,
    by_path: BTreeMap<CodePath, usize>,
}

impl Environment {
    pub fn new(catalog: Vec<CatalogItem>, oracle: RankingOracle, cfg: EnvConfig, level_sizes: Vec<usize>) -> Result<Self> {
        cfg.reward.validate()?;
        cfg.beam.validate()?;
        let mut by_path = BTreeMap::new();
        for (i, item) in catalog.iter().enumerate() {
            item.path.validate(&level_sizes)?;
            oracle.bid(&item.item_id)?;
            if by_path.insert(item.path.clone(), i).is_some() {
                return Err(GprError::invalid(format!("catalog path {} is not unique", item.path)));
            }
        }
        Ok(Environment {
            catalog,
            oracle,
            cfg,
            level_sizes,
            by_path,
        })
    }

    pub fn catalog(&self) -> &[CatalogItem] {
        &self.catalog
    }

    pub fn oracle(&self) -> &RankingOracle {
        &self.oracle
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn level_sizes(&self) -> &[usize] {
        &self.level_sizes
    }

    pub fn with_oracle(&self, oracle: RankingOracle) -> Result<Self> {
        Environment::new(self.catalog.clone(), oracle, self.cfg.clone(), self.level_sizes.clone())
    }

    pub fn with_beam(&self, beam: BeamConfig) -> Result<Self> {
        let cfg = EnvConfig { beam, ..self.cfg.clone() };
        Environment::new(self.catalog.clone(), self.oracle.clone(), cfg, self.level_sizes.clone())
    }

    pub fn item_at(&self, path: &CodePath) -> Option<&CatalogItem> {
        self.by_path.get(path).map(|&i| &self.catalog[i])
    }

    pub fn state_of(&self, request: &Request) -> IntentState {
        intent_encode(&request.journey, &self.cfg.featurizer)
    }

    /// Final value of the item at `path`.
    pub fn final_value(&self, segment: u32, path: &CodePath) -> Result<f64> {
        let item = self
            .item_at(path)
            .ok_or_else(|| GprError::invalid(format!("path {path} resolves to no catalog item")))?;
        final_value(&self.oracle, segment, &item.item_id, &self.cfg.reward)
    }

    /// Best eligible item and its final value, by enumeration.
    pub fn optimum(&self, segment: u32, profile: &TargetingProfile) -> Result<Option<(String, f64)>> {
        let mut best: Option<(String, f64)> = None;
        for item in self.catalog.iter().filter(|i| i.eligible(profile)) {
            let v = final_value(&self.oracle, segment, &item.item_id, &self.cfg.reward)?;
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((item.item_id.clone(), v));
            }
        }
        Ok(best)
    }

    /// Beam-searches `k` candidates and scores them. `None` when no catalog
    /// item is eligible for the request.
    pub fn generate_candidates(
        &self,
        policy: &PolicyParams,
        vparams: &ValueParams,
        request: &Request,
    ) -> Result<Option<EpisodeRecord>> {
        let trie = build_trie(&self.catalog, &request.profile, self.level_sizes.len())?;
        if trie.is_empty() {
            log::debug!("request {} has no eligible items", request.request_id);
            return Ok(None);
        }
        let state = self.state_of(request);
        let found = beam_search(policy, vparams, &state, &trie, &self.cfg.beam)?;
        let mut candidates = Vec::with_capacity(found.len());
        for c in found {
            let codes = c.path.codes();
            let legal = (0..codes.len()).map(|l| trie.legal_codes(l, &codes[..l])).collect();
            let r = final_value(&self.oracle, request.segment, &c.item_id, &self.cfg.reward)?;
            candidates.push(EpisodeCandidate {
                item_id: c.item_id,
                path: c.path,
                probs: c.probs,
                values: c.values,
                legal,
                final_value: r,
            });
        }
        let chosen = candidates
            .iter()
            .enumerate()
            .fold(0, |best, (i, c)| if c.final_value > candidates[best].final_value { i } else { best });
        let ep = EpisodeRecord {
            request_id: request.request_id,
            user_id: request.user_id.clone(),
            segment: request.segment,
            oracle_version: self.oracle.version(),
            state,
            candidates,
            chosen,
            timestamp: request.timestamp,
            synthetic: request.synthetic,
        };
        ep.validate()?;
        Ok(Some(ep))
    }
}

pub fn generate_candidates(
    env: &Environment,
    policy: &PolicyParams,
    vparams: &ValueParams,
    request: &Request,
) -> Result<Option<EpisodeRecord>> {
    env.generate_candidates(policy, vparams, request)
}

pub fn read_episodes_jsonl<R: BufRead>(reader: R) -> Result<Vec<EpisodeRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ep: EpisodeRecord =
            serde_json::from_str(&line).map_err(|e| GprError::Format(format!("episode line {}: {e}", n + 1)))?;
        ep.validate()?;
        out.push(ep);
    }
    Ok(out)
}

pub fn write_episodes_jsonl<W: Write>(episodes: &[EpisodeRecord], mut w: W) -> Result<()> {
    for ep in episodes {
        serde_json::to_writer(&mut w, ep)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
