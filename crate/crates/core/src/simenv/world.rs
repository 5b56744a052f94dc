use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::arr::{arr_schedule, synthesize_request, ActivityTier, PeakHours, UserState};
use super::{EnvConfig, Environment, OracleConfig, RankingOracle, Request, RewardConfig};
use crate::decoder::{BeamConfig, CatalogItem, Targeting, TargetingProfile};
use crate::error::{GprError, Result};
use crate::policy::{intent_encode, FeaturizerConfig, LegalSets, PathSet};
use crate::quantizer::{rqkp_init, CodePath, EmbeddingCorpus};
use crate::rng;
use crate::schema::{
    build_sequence, group_events, ActionType, AdInteraction, EnvContext, RawEvent, Token, UserJourney, UserProfile,
};
use crate::training::{Target, TrainingExample};

/// Two-level Gaussian mixture: top-cluster centers, per-top sub-cluster
/// offsets, and isotropic point noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n: usize,
    pub dim: usize,
    pub top_clusters: usize,
    pub sub_clusters: usize,
    pub top_scale: f64,
    pub sub_scale: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n: 10_000,
            dim: 32,
            top_clusters: 16,
            sub_clusters: 16,
            top_scale: 1.0,
            sub_scale: 0.4,
            noise: 0.2,
            seed: 0,
        }
    }
}

pub fn hierarchical_corpus(cfg: &CorpusConfig) -> Result<EmbeddingCorpus> {
    if cfg.n == 0 || cfg.dim == 0 || cfg.top_clusters == 0 || cfg.sub_clusters == 0 {
        return Err(GprError::invalid("corpus sizes must be positive"));
    }
    let mut r = rng::seeded(cfg.seed);
    let d = cfg.dim;
    let tops = Array2::from_shape_fn((cfg.top_clusters, d), |_| {
        let z: f64 = StandardNormal.sample(&mut r);
        cfg.top_scale * z
    });
    let subs = Array2::from_shape_fn((cfg.top_clusters * cfg.sub_clusters, d), |_| {
        let z: f64 = StandardNormal.sample(&mut r);
        cfg.sub_scale * z
    });
    let mut v = Array2::zeros((cfg.n, d));
    for i in 0..cfg.n {
        let t = r.random_range(0..cfg.top_clusters);
        let s = t * cfg.sub_clusters + r.random_range(0..cfg.sub_clusters);
        for j in 0..d {
            let e: f64 = StandardNormal.sample(&mut r);
            v[[i, j]] = tops[[t, j]] + subs[[s, j]] + cfg.noise * e;
        }
    }
    let ids = (0..cfg.n).map(|i| format!("item{i:05}")).collect();
    EmbeddingCorpus::new(ids, v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub seed: u64,
    pub num_segments: u32,
    pub users_per_segment: usize,
    /// Number of distinct-path items kept in the catalog.
    pub catalog_size: usize,
    /// Candidate items generated per catalog slot before path deduplication.
    pub pool_factor: usize,
    pub embedding_dim: usize,
    pub level_sizes: Vec<usize>,
    pub cluster_noise: f64,
    /// O tokens per request.
    pub organic_views: usize,
    pub sessions_per_user: usize,
    pub session_gap_secs: i64,
    pub start_epoch: i64,
    /// Expected fraction of user-item pairs excluded by age targeting.
    pub targeting_exclusion: f64,
    pub age_buckets: u8,
    pub genders: u8,
    pub geos: u32,
    pub high_activity_fraction: f64,
    pub low_relative_rate: f64,
    pub buckets: u32,
    pub oracle: OracleConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 0,
            num_segments: 4,
            users_per_segment: 16,
            catalog_size: 32,
            pool_factor: 4,
            embedding_dim: 8,
            level_sizes: vec![4, 4, 4],
            cluster_noise: 0.2,
            organic_views: 3,
            sessions_per_user: 24,
            session_gap_secs: 3600,
            start_epoch: 1_700_000_000,
            targeting_exclusion: 0.25,
            age_buckets: 8,
            genders: 2,
            geos: 4,
            high_activity_fraction: 0.5,
            low_relative_rate: 0.5,
            buckets: 4096,
            oracle: OracleConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimUser {
    pub user_id: String,
    pub segment: u32,
    pub profile: UserProfile,
    pub targeting: TargetingProfile,
    pub tier: ActivityTier,
}

/// Rehearsal settings for request generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrConfig {
    pub enabled: bool,
    /// Length of one generation round; synthetic requests fall inside it.
    pub window_secs: i64,
    pub peak: PeakHours,
    /// Chance of fresh organic views before each synthetic request.
    pub fresh_view_prob: f64,
}

impl Default for ArrConfig {
    fn default() -> Self {
        ArrConfig {
            enabled: true,
            window_secs: 4 * 3600,
            peak: PeakHours::default(),
            fresh_view_prob: 0.5,
        }
    }
}

/// A seeded synthetic market: catalog, users and the oracle that scores them.
#[derive(Clone, Debug)]
pub struct World {
    pub cfg: WorldConfig,
    /// Embeddings of the catalog items.
    pub items: EmbeddingCorpus,
    pub catalog: Vec<CatalogItem>,
    pub users: Vec<SimUser>,
    pub oracle: RankingOracle,
}

pub fn generate_world(cfg: &WorldConfig) -> Result<World> {
    let l = cfg.level_sizes.len();
    if l == 0 || cfg.level_sizes.contains(&0) {
        return Err(GprError::invalid("world needs positive codebook sizes"));
    }
    if cfg.catalog_size == 0 || cfg.pool_factor == 0 || cfg.num_segments == 0 || cfg.users_per_segment == 0 {
        return Err(GprError::invalid("world sizes must be positive"));
    }
    if cfg.organic_views == 0 {
        return Err(GprError::invalid("requests need at least one organic view"));
    }
    let k1 = cfg.level_sizes[0] as u64;
    if k1.checked_pow(cfg.organic_views as u32).is_some_and(|c| c < u64::from(cfg.num_segments)) {
        return Err(GprError::invalid(
            "level-1 codes over the organic window cannot distinguish every segment",
        ));
    }
    if !(0.0..1.0).contains(&cfg.targeting_exclusion) || cfg.age_buckets == 0 || cfg.genders == 0 || cfg.geos == 0 {
        return Err(GprError::invalid("invalid targeting or demographic settings"));
    }

    // grow the candidate pool until enough distinct paths appear
    let mut attempt = 0;
    let (pool, model, rows) = loop {
        let pool_cfg = CorpusConfig {
            n: (cfg.catalog_size * cfg.pool_factor) << attempt,
            dim: cfg.embedding_dim,
            top_clusters: cfg.level_sizes[0],
            sub_clusters: cfg.level_sizes.get(1).copied().unwrap_or(1),
            top_scale: 1.0,
            sub_scale: 0.4,
            noise: cfg.cluster_noise,
            seed: rng::derive_seed(cfg.seed, 11 + attempt as u64),
        };
        let pool = hierarchical_corpus(&pool_cfg)?;
        let model = rqkp_init(&pool, &cfg.level_sizes, rng::derive_seed(cfg.seed, 12))?;
        let mut seen = BTreeMap::new();
        let mut rows = Vec::new();
        for (i, id) in pool.ids().iter().enumerate() {
            let path = model.encode(pool.row(i))?;
            if seen.contains_key(&path) {
                continue;
            }
            seen.insert(path, id.clone());
            rows.push(i);
            if rows.len() == cfg.catalog_size {
                break;
            }
        }
        if rows.len() == cfg.catalog_size || attempt == 3 {
            break (pool, model, rows);
        }
        attempt += 1;
    };
    if rows.len() < cfg.catalog_size {
        log::warn!("only {} distinct paths for a catalog of {}", rows.len(), cfg.catalog_size);
    }
    let mut ids_sorted = rows.clone();
    ids_sorted.sort_unstable();
    let items = pool.subset(&ids_sorted)?;

    let oracle = RankingOracle::new(
        OracleConfig {
            num_segments: cfg.num_segments,
            ..cfg.oracle.clone()
        },
        &items,
    )?;

    let mut tr = rng::seeded(rng::derive_seed(cfg.seed, 13));
    let ages = usize::from(cfg.age_buckets);
    let span = ((ages as f64) * (1.0 - cfg.targeting_exclusion)).round().clamp(1.0, ages as f64) as usize;
    let mut catalog = Vec::with_capacity(items.len());
    for (i, id) in items.ids().iter().enumerate() {
        let start = tr.random_range(0..=ages - span);
        catalog.push(CatalogItem {
            item_id: id.clone(),
            path: model.encode(items.row(i))?,
            targeting: Targeting {
                age_min: start as u8,
                age_max: (start + span - 1) as u8,
                genders: Vec::new(),
                geos: Vec::new(),
            },
            budget_remaining: 1_000.0,
            active: true,
            ecpm: oracle.bid(id)?,
        });
    }

    let mut ur = rng::seeded(rng::derive_seed(cfg.seed, 14));
    let mut users = Vec::new();
    for s in 0..cfg.num_segments {
        for u in 0..cfg.users_per_segment {
            let age = ur.random_range(0..cfg.age_buckets);
            let gender = ur.random_range(0..cfg.genders);
            let high = ur.random_bool(cfg.high_activity_fraction.clamp(0.0, 1.0));
            let tier = if high {
                ActivityTier::High
            } else {
                ActivityTier::Low {
                    relative_rate: cfg.low_relative_rate,
                }
            };
            tier.validate()?;
            users.push(SimUser {
                user_id: format!("user{s:02}_{u:03}"),
                segment: s,
                profile: UserProfile {
                    age_bucket: age,
                    gender,
                    activity_tier: u8::from(!high),
                },
                targeting: TargetingProfile {
                    age_bucket: age,
                    gender,
                    geo: ur.random_range(0..cfg.geos),
                },
                tier,
            });
        }
    }
    Ok(World {
        cfg: cfg.clone(),
        items,
        catalog,
        users,
        oracle,
    })
}

fn hour_of(clock: i64) -> u8 {
    (clock.rem_euclid(86_400) / 3600) as u8
}

impl World {
    /// Covers exactly the organic views and the E token of a request.
    pub fn featurizer(&self) -> FeaturizerConfig {
        FeaturizerConfig {
            window: self.cfg.organic_views + 1,
            buckets: self.cfg.buckets,
        }
    }

    pub fn env_config(&self, reward: RewardConfig, beam: BeamConfig) -> EnvConfig {
        EnvConfig {
            reward,
            beam,
            featurizer: self.featurizer(),
        }
    }

    pub fn environment(&self, reward: RewardConfig, beam: BeamConfig) -> Result<Environment> {
        Environment::new(
            self.catalog.clone(),
            self.oracle.clone(),
            self.env_config(reward, beam),
            self.cfg.level_sizes.clone(),
        )
    }

    /// Organic views of a segment. Level-1 codes spell the segment in base
    /// `K_1`, so each segment lands in its own context bucket.
    pub fn organic_views(&self, segment: u32, r: &mut rng::Rng) -> Vec<CodePath> {
        let k1 = self.cfg.level_sizes[0] as u64;
        let mut digits = u64::from(segment);
        (0..self.cfg.organic_views)
            .map(|_| {
                let mut codes = vec![(digits % k1) as u32];
                digits /= k1;
                for &k in &self.cfg.level_sizes[1..] {
                    codes.push(r.random_range(0..k as u32));
                }
                CodePath::new(codes)
            })
            .collect()
    }

    fn env_context(&self, clock: i64, r: &mut rng::Rng) -> EnvContext {
        EnvContext {
            placement_id: r.random_range(0..4),
            hour_of_day: hour_of(clock),
            privacy: false,
        }
    }

    /// A fresh observed request `[U, O.., E]` at `clock`.
    pub fn request_for(&self, user: &SimUser, clock: i64, request_id: u64, r: &mut rng::Rng) -> Result<Request> {
        let mut tokens = vec![Token::User(user.profile)];
        tokens.extend(self.organic_views(user.segment, r).into_iter().map(Token::Organic));
        tokens.push(Token::Env(self.env_context(clock, r)));
        let stamps = vec![clock; tokens.len()];
        Ok(Request {
            request_id,
            user_id: user.user_id.clone(),
            segment: user.segment,
            profile: user.targeting,
            journey: UserJourney::new(user.user_id.clone(), tokens, stamps)?,
            timestamp: clock,
            synthetic: false,
        })
    }

    /// Observed requests for generation round `round`, followed by each
    /// user's rehearsal requests inside the round's window.
    pub fn requests(&self, round: u64, arr: &ArrConfig) -> Result<Vec<Request>> {
        let mut r = rng::seeded(rng::derive_seed(rng::derive_seed(self.cfg.seed, 21), round));
        let base = self.cfg.start_epoch + round as i64 * arr.window_secs;
        let mut real = Vec::with_capacity(self.users.len());
        let mut synthetic = Vec::new();
        for (ui, user) in self.users.iter().enumerate() {
            let clock = base + r.random_range(0..arr.window_secs.max(1)) / 4;
            let id = (round << 32) | ((ui as u64) << 8);
            let req = self.request_for(user, clock, id, &mut r)?;
            if arr.enabled {
                let mut state = UserState {
                    user_id: user.user_id.clone(),
                    segment: user.segment,
                    profile: user.targeting,
                    tier: user.tier,
                    last_request: Some(req.clone()),
                    fresh_organic: Vec::new(),
                };
                let mut t = clock;
                for k in 1..256u64 {
                    t = arr_schedule(user.tier, t, arr.peak.is_peak(t))?;
                    if t >= base + arr.window_secs {
                        break;
                    }
                    state.fresh_organic = if r.random_bool(arr.fresh_view_prob.clamp(0.0, 1.0)) {
                        self.organic_views(user.segment, &mut r)
                    } else {
                        Vec::new()
                    };
                    let ctx = self.env_context(t, &mut r);
                    let s = synthesize_request(&state, ctx, t, id | k)?;
                    state.last_request = Some(s.clone());
                    synthetic.push(s);
                }
            }
            real.push(req);
        }
        real.extend(synthetic);
        Ok(real)
    }

    /// Held-out requests, one per user, each with a ground-truth ad drawn in
    /// proportion to pCTR among the user's eligible items.
    pub fn heldout(&self, seed: u64) -> Result<Vec<(Request, String)>> {
        let mut r = rng::seeded(rng::derive_seed(rng::derive_seed(self.cfg.seed, 31), seed));
        let clock = self.cfg.start_epoch - 86_400;
        let mut out = Vec::new();
        for (ui, user) in self.users.iter().enumerate() {
            let req = self.request_for(user, clock, (1 << 63) | ui as u64, &mut r)?;
            let eligible: Vec<&CatalogItem> = self.catalog.iter().filter(|i| i.eligible(&user.targeting)).collect();
            if eligible.is_empty() {
                continue;
            }
            let w = eligible
                .iter()
                .map(|i| self.oracle.pctr(user.segment, &i.item_id))
                .collect::<Result<Vec<f64>>>()?;
            let mut u = r.random::<f64>() * w.iter().sum::<f64>();
            let mut pick = eligible.len() - 1;
            for (i, wi) in w.iter().enumerate() {
                if u < *wi {
                    pick = i;
                    break;
                }
                u -= wi;
            }
            out.push((req, eligible[pick].item_id.clone()));
        }
        Ok(out)
    }

    /// Logged sessions `[O.., E, I]` per user under uniform exposure over
    /// eligible items, with outcomes sampled from the oracle.
    pub fn event_log(&self) -> Result<Vec<RawEvent>> {
        let mut r = rng::seeded(rng::derive_seed(self.cfg.seed, 41));
        let mut events = Vec::new();
        let gap = self.cfg.session_gap_secs.max(self.cfg.organic_views as i64 + 2);
        for user in &self.users {
            let eligible: Vec<&CatalogItem> = self.catalog.iter().filter(|i| i.eligible(&user.targeting)).collect();
            let t0 = self.cfg.start_epoch - 30 * 86_400 + r.random_range(0..gap);
            events.push(RawEvent::from_token(&user.user_id, t0, &Token::User(user.profile)));
            for s in 0..self.cfg.sessions_per_user {
                let mut t = t0 + s as i64 * gap + 1;
                for view in self.organic_views(user.segment, &mut r) {
                    events.push(RawEvent::from_token(&user.user_id, t, &Token::Organic(view)));
                    t += 1;
                }
                let ctx = self.env_context(t, &mut r);
                events.push(RawEvent::from_token(&user.user_id, t, &Token::Env(ctx)));
                t += 1;
                if eligible.is_empty() {
                    continue;
                }
                let item = eligible[r.random_range(0..eligible.len())];
                let pctr = self.oracle.pctr(user.segment, &item.item_id)?;
                let pcvr = self.oracle.pcvr(user.segment, &item.item_id)?;
                let action = if r.random_bool(pctr) {
                    if r.random_bool(pcvr) {
                        ActionType::Conversion
                    } else {
                        ActionType::Click
                    }
                } else {
                    ActionType::Impression
                };
                let ad = AdInteraction {
                    path: item.path.clone(),
                    action,
                    ecpm: self.oracle.ecpm(user.segment, &item.item_id)?,
                    pctr,
                    pcvr,
                };
                events.push(RawEvent::from_token(&user.user_id, t, &Token::Ad(ad)));
            }
        }
        Ok(events)
    }

    pub fn targeting_map(&self) -> HashMap<String, TargetingProfile> {
        self.users.iter().map(|u| (u.user_id.clone(), u.targeting)).collect()
    }
}

/// Training examples from logged journeys: one per I token, with the state
/// of the journey before it and head `j` targeting the `j`-th ad from there.
/// Legal paths are the catalog items eligible for the user.
pub fn examples_from_events(
    events: Vec<RawEvent>,
    catalog: &[CatalogItem],
    targeting: &HashMap<String, TargetingProfile>,
    featurizer: &FeaturizerConfig,
    level_sizes: &[usize],
    num_heads: usize,
) -> Result<Vec<TrainingExample>> {
    let mut legal_cache: HashMap<TargetingProfile, Arc<PathSet>> = HashMap::new();
    let mut out = Vec::new();
    for (user_id, evs) in group_events(events) {
        let journey = build_sequence(&evs, Some(level_sizes))?;
        let profile = targeting
            .get(&user_id)
            .ok_or_else(|| GprError::invalid(format!("no targeting profile for user {user_id}")))?;
        let legal = match legal_cache.get(profile) {
            Some(s) => s.clone(),
            None => {
                let set = Arc::new(PathSet::new(
                    catalog.iter().filter(|i| i.eligible(profile)).map(|i| i.path.clone()),
                )?);
                legal_cache.insert(*profile, set.clone());
                set
            }
        };
        let ads: Vec<(usize, &AdInteraction)> = journey
            .tokens
            .iter()
            .enumerate()
            .filter_map(|(i, t)| match t {
                Token::Ad(a) => Some((i, a)),
                _ => None,
            })
            .collect();
        for (n, &(pos, _)) in ads.iter().enumerate() {
            let prefix = UserJourney {
                user_id: journey.user_id.clone(),
                tokens: journey.tokens[..pos].to_vec(),
                timestamps: journey.timestamps[..pos].to_vec(),
            };
            let targets = ads[n..]
                .iter()
                .take(num_heads)
                .map(|(_, a)| Target::new(a.path.clone(), a.action, a.ecpm, a.pctr, a.pcvr))
                .collect();
            let ex = TrainingExample {
                state: intent_encode(&prefix, featurizer),
                targets,
                legal: LegalSets::Paths(legal.clone()),
            };
            ex.validate()?;
            out.push(ex);
        }
    }
    Ok(out)
}

impl World {
    pub fn training_examples(&self, events: Vec<RawEvent>, num_heads: usize) -> Result<Vec<TrainingExample>> {
        examples_from_events(
            events,
            &self.catalog,
            &self.targeting_map(),
            &self.featurizer(),
            &self.cfg.level_sizes,
            num_heads,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::BeamConfig;
    use crate::policy::{PolicyParams, ValueParams};

    fn small() -> WorldConfig {
        WorldConfig {
            num_segments: 2,
            users_per_segment: 4,
            catalog_size: 8,
            level_sizes: vec![4, 4],
            sessions_per_user: 5,
            ..Default::default()
        }
    }

    #[test]
    fn world_is_seeded() {
        let a = generate_world(&small()).unwrap();
        let b = generate_world(&small()).unwrap();
        assert_eq!(a.catalog, b.catalog);
        assert_eq!(a.event_log().unwrap(), b.event_log().unwrap());
        assert_eq!(a.catalog.len(), 8);
        let c = generate_world(&WorldConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.event_log().unwrap(), c.event_log().unwrap());
    }

    #[test]
    fn segments_map_to_distinct_buckets() {
        let w = generate_world(&small()).unwrap();
        let env = w.environment(RewardConfig::default(), BeamConfig::default()).unwrap();
        let reqs = w.requests(0, &ArrConfig::default()).unwrap();
        let mut by_seg: BTreeMap<u32, std::collections::BTreeSet<u32>> = BTreeMap::new();
        for r in &reqs {
            by_seg.entry(r.segment).or_default().insert(env.state_of(r).bucket);
        }
        assert_eq!(by_seg.len(), 2);
        assert!(by_seg.values().all(|b| b.len() == 1));
        assert_ne!(by_seg[&0], by_seg[&1]);
        assert!(reqs.iter().any(|r| r.synthetic));
    }

    #[test]
    fn episodes_replay_their_rewards() {
        let w = generate_world(&small()).unwrap();
        let env = w.environment(RewardConfig::default(), BeamConfig::default()).unwrap();
        let policy = PolicyParams::new(2, w.cfg.level_sizes.clone()).unwrap();
        let v = ValueParams::new();
        for req in w.requests(0, &ArrConfig::default()).unwrap() {
            let Some(ep) = env.generate_candidates(&policy, &v, &req).unwrap() else {
                continue;
            };
            let again = env.generate_candidates(&policy, &v, &req).unwrap().unwrap();
            assert_eq!(ep, again);
            assert_eq!(ep.synthetic, req.synthetic);
            for c in &ep.candidates {
                let r = env.final_value(ep.segment, &c.path).unwrap();
                assert_eq!(r.to_bits(), c.final_value.to_bits());
            }
            let best = ep.final_values().into_iter().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(ep.candidates[ep.chosen].final_value, best);
        }
    }

    #[test]
    fn candidates_capped_by_eligible_items() {
        let w = generate_world(&small()).unwrap();
        let mut catalog = w.catalog.clone();
        for item in catalog.iter_mut().skip(3) {
            item.active = false;
        }
        let env = Environment::new(
            catalog,
            w.oracle.clone(),
            w.env_config(RewardConfig::default(), BeamConfig::default()),
            w.cfg.level_sizes.clone(),
        )
        .unwrap();
        let policy = PolicyParams::new(1, w.cfg.level_sizes.clone()).unwrap();
        let mut req = w.heldout(0).unwrap().remove(0).0;
        req.profile = TargetingProfile {
            age_bucket: 0,
            ..req.profile
        };
        let eligible = env.catalog().iter().filter(|i| i.eligible(&req.profile)).count();
        match env.generate_candidates(&policy, &ValueParams::new(), &req).unwrap() {
            Some(ep) => assert_eq!(ep.candidates.len(), eligible),
            None => assert_eq!(eligible, 0),
        }
    }

    #[test]
    fn no_eligible_items_gives_marker() {
        let w = generate_world(&small()).unwrap();
        let mut catalog = w.catalog.clone();
        for item in &mut catalog {
            item.budget_remaining = 0.0;
        }
        let env = Environment::new(
            catalog,
            w.oracle.clone(),
            w.env_config(RewardConfig::default(), BeamConfig::default()),
            w.cfg.level_sizes.clone(),
        )
        .unwrap();
        let policy = PolicyParams::new(1, w.cfg.level_sizes.clone()).unwrap();
        let req = w.heldout(0).unwrap().remove(0).0;
        assert!(env.generate_candidates(&policy, &ValueParams::new(), &req).unwrap().is_none());
    }

    #[test]
    fn targeting_exclusion_fraction() {
        let cfg = WorldConfig {
            users_per_segment: 200,
            ..small()
        };
        let w = generate_world(&cfg).unwrap();
        let (mut excluded, mut total) = (0usize, 0usize);
        for u in &w.users {
            for i in &w.catalog {
                total += 1;
                excluded += usize::from(!i.eligible(&u.targeting));
            }
        }
        let frac = excluded as f64 / total as f64;
        assert!((frac - cfg.targeting_exclusion).abs() < 0.05, "{frac}");
    }

    #[test]
    fn examples_follow_the_log() {
        let w = generate_world(&small()).unwrap();
        let events = w.event_log().unwrap();
        let n_ads = events.iter().filter(|e| e.kind == "I").count();
        let ex = w.training_examples(events, 2).unwrap();
        assert_eq!(ex.len(), n_ads);
        assert!(ex.iter().all(|e| !e.targets.is_empty() && e.targets.len() <= 2));
    }
}
