use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::schema::{TokenKind, UserJourney};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturizerConfig {
    /// Number of most recent tokens summarized.
    pub window: usize,
    /// Number of context buckets.
    pub buckets: u32,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            window: 16,
            buckets: 4096,
        }
    }
}

/// Deterministic summary of a journey that keys the policy and value tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntentState {
    pub bucket: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_features: Option<Vec<f64>>,
}

impl IntentState {
    pub fn from_bucket(bucket: u32) -> Self {
        IntentState {
            bucket,
            raw_features: None,
        }
    }
}

/// Hashes the kinds and level-1 codes of the last `window` tokens into a
/// bucket. Raw features are the kind frequencies inside the window.
pub fn intent_encode(journey: &UserJourney, cfg: &FeaturizerConfig) -> IntentState {
    let tokens = &journey.tokens;
    let recent = &tokens[tokens.len().saturating_sub(cfg.window)..];
    let mut h = FnvHasher::default();
    let mut counts = [0f64; 4];
    for t in recent {
        let kind = t.kind();
        counts[kind.index()] += 1.0;
        h.write_u8(kind as u8);
        h.write_u32(t.path().and_then(|p| p.level1()).unwrap_or(u32::MAX));
    }
    let bucket = (h.finish() % u64::from(cfg.buckets.max(1))) as u32;
    let n = recent.len().max(1) as f64;
    IntentState {
        bucket,
        raw_features: Some(TokenKind::ALL.iter().map(|k| counts[k.index()] / n).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::CodePath;
    use crate::schema::{Token, UserProfile};

    fn journey(codes: &[u32]) -> UserJourney {
        let mut tokens = vec![Token::User(UserProfile::default())];
        tokens.extend(codes.iter().map(|&c| Token::Organic(CodePath::new(vec![c, 0]))));
        let ts = (0..tokens.len() as i64).collect();
        UserJourney::new("u", tokens, ts).unwrap()
    }

    #[test]
    fn identical_journeys_share_bucket() {
        let cfg = FeaturizerConfig::default();
        assert_eq!(intent_encode(&journey(&[1, 2, 3]), &cfg), intent_encode(&journey(&[1, 2, 3]), &cfg));
    }

    #[test]
    fn only_the_window_matters() {
        let cfg = FeaturizerConfig { window: 2, buckets: 1 << 20 };
        let a = intent_encode(&journey(&[9, 1, 2]), &cfg);
        let b = intent_encode(&journey(&[5, 1, 2]), &cfg);
        let c = intent_encode(&journey(&[5, 2, 1]), &cfg);
        assert_eq!(a.bucket, b.bucket);
        assert_ne!(a.bucket, c.bucket);
    }

    #[test]
    fn single_bucket() {
        let cfg = FeaturizerConfig { window: 16, buckets: 1 };
        assert_eq!(intent_encode(&journey(&[4, 7]), &cfg).bucket, 0);
    }

    #[test]
    fn kind_frequencies() {
        let cfg = FeaturizerConfig::default();
        let s = intent_encode(&journey(&[1, 2, 3]), &cfg);
        assert_eq!(s.raw_features.unwrap(), vec![0.25, 0.75, 0.0, 0.0]);
    }
}
