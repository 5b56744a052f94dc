//! Unified U/O/E/I token journeys and the hybrid attention mask.

mod attention;
mod mask;
mod token;

pub use attention::{attention_weights, hybrid_attention_forward};
pub use mask::{build_hybrid_mask, HybridMask};
pub use token::{
    build_sequence, group_events, read_events_jsonl, write_events_jsonl, ActionType, AdInteraction, EnvContext,
    RawEvent, Token, TokenKind, UserJourney, UserProfile,
};
