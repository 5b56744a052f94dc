//! Per-request tries over the eligible catalog and value-guided,
//! trie-constrained beam search.

mod beam;
mod catalog;
mod trie;

pub use beam::{beam_search, dynamic_width, BeamConfig, Candidate};
pub use catalog::{
    dedupe_catalog, read_catalog_jsonl, write_catalog_jsonl, CatalogItem, Targeting, TargetingProfile,
};
pub use trie::{build_trie, Trie};
