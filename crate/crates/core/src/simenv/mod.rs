//! Simulated serving: a seeded ranking oracle, the final-value reward,
//! K-candidate episodes, normalized reporting, request rehearsal, and a
//! synthetic world generator.

mod arr;
mod episode;
mod oracle;
mod reward;
mod world;

pub use arr::{
    arr_schedule, synthesize_request, ActivityTier, PeakHours, UserState, OFF_PEAK_INTERVAL_SECS, PEAK_INTERVAL_SECS,
};
pub use episode::{
    generate_candidates, read_episodes_jsonl, write_episodes_jsonl, EnvConfig, Environment, EpisodeCandidate,
    EpisodeRecord, Request,
};
pub use oracle::{OracleConfig, RankingOracle};
pub use reward::{
    combine_reward, final_value, normalize_final_values, normalize_value_groups, AuxTarget, AuxWeight,
    NormalizedReport, RewardConfig,
};
pub use world::{
    examples_from_events, generate_world, hierarchical_corpus, ArrConfig, CorpusConfig, SimUser, World, WorldConfig,
};
