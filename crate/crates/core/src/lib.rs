//! Generative ad recommendation over hierarchical semantic IDs.
//!
//! The crate covers the whole offline loop:
//!
//! - [`quantizer`]: residual k-means codebooks, refinement through an affine
//!   encoder/decoder, and code-quality metrics.
//! - [`schema`]: unified U/O/E/I token journeys and the hybrid attention mask.
//! - [`policy`]: a context-bucketed tabular hierarchical softmax with parallel
//!   prediction heads, and the tabular value function used as critic.
//! - [`training`]: multi-token prediction and value-aware fine-tuning losses.
//! - [`decoder`]: per-request tries and value-guided trie-constrained beam search.
//! - [`simenv`]: the seeded serving simulator, reward, and request rehearsal.
//! - [`hepo`]: process rewards, advantages, and the clipped policy update.
//! - [`metrics_eval`]: HitRate@k, nDCG and ordered pair ratio.
//! - [`pipeline`]: in-memory orchestration of the three training stages.

// `!(a > b)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decoder;
pub mod error;
pub mod hepo;
pub mod metrics_eval;
pub mod pipeline;
pub mod policy;
pub mod quantizer;
pub mod rng;
pub mod schema;
pub mod simenv;
pub mod training;

pub use error::{GprError, Result};
pub use policy::{IntentState, LegalSpace, PolicyParams, ValueParams};
pub use quantizer::{CodePath, Codebook, EmbeddingCorpus};
pub use schema::{Token, TokenKind, UserJourney};
