//! Hierarchical policy optimization over simulated episodes: popularity
//! process rewards, GAE at coarse levels with a within-request z-score at the
//! final level, a clipped policy loss and a squared-error critic.

mod advantage;
mod iteration;
mod loss;
mod popularity;

pub use advantage::{gae_advantages, zscore_advantage, AdvantageSet, DEFAULT_EPS_NUM};
pub use iteration::{
    greedy_beam, greedy_values, hepo_iteration, hepo_update, prepare_samples, write_reports_csv, HepoConfig,
    HepoState, IterationReport, UpdateStats, DEFAULT_ALPHA,
};
pub use loss::{
    coefficient, hepo_policy_loss, value_loss, PolicyLossOutput, PolicySample, ValueLossOutput, ValueSample,
};
pub use popularity::{popularity_update, process_reward, PopularityStore, PopularityTable};
