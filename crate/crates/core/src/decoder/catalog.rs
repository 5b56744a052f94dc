use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{GprError, Result};
use crate::quantizer::CodePath;

/// User attributes that targeting rules are checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TargetingProfile {
    pub age_bucket: u8,
    pub gender: u8,
    pub geo: u32,
}

/// Empty gender or geo lists admit everyone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Targeting {
    pub age_min: u8,
    pub age_max: u8,
    #[serde(default)]
    pub genders: Vec<u8>,
    #[serde(default)]
    pub geos: Vec<u32>,
}

impl Default for Targeting {
    fn default() -> Self {
        Targeting {
            age_min: 0,
            age_max: u8::MAX,
            genders: Vec::new(),
            geos: Vec::new(),
        }
    }
}

impl Targeting {
    pub fn admits(&self, user: &TargetingProfile) -> bool {
        (self.age_min..=self.age_max).contains(&user.age_bucket)
            && (self.genders.is_empty() || self.genders.contains(&user.gender))
            && (self.geos.is_empty() || self.geos.contains(&user.geo))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogItem {
    pub item_id: String,
    pub path: CodePath,
    #[serde(default)]
    pub targeting: Targeting,
    pub budget_remaining: f64,
    pub active: bool,
    /// Bid-side value used to pick a survivor when paths collide.
    #[serde(default)]
    pub ecpm: f64,
}

impl CatalogItem {
    /// Active, funded, and admitted by targeting.
    pub fn eligible(&self, user: &TargetingProfile) -> bool {
        self.active && self.budget_remaining > 0.0 && self.targeting.admits(user)
    }
}

/// Keeps one item per path: the highest eCPM, then the smallest id.
/// Returns the survivors in input order and the ids that were dropped.
pub fn dedupe_catalog(items: Vec<CatalogItem>) -> Result<(Vec<CatalogItem>, Vec<String>)> {
    let mut ids = std::collections::BTreeSet::new();
    let mut best: BTreeMap<&CodePath, usize> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        if !ids.insert(item.item_id.as_str()) {
            return Err(GprError::invalid(format!("duplicate item id {}", item.item_id)));
        }
        let slot = best.entry(&item.path).or_insert(i);
        let cur = &items[*slot];
        if item.ecpm > cur.ecpm || (item.ecpm == cur.ecpm && item.item_id < cur.item_id) {
            *slot = i;
        }
    }
    let keep: std::collections::BTreeSet<usize> = best.into_values().collect();
    let mut kept = Vec::with_capacity(keep.len());
    let mut dropped = Vec::new();
    for (i, item) in items.into_iter().enumerate() {
        if keep.contains(&i) {
            kept.push(item);
        } else {
            log::info!("dropping {} (path {} taken by a higher-value item)", item.item_id, item.path);
            dropped.push(item.item_id);
        }
    }
    Ok((kept, dropped))
}

pub fn read_catalog_jsonl<R: BufRead>(reader: R) -> Result<Vec<CatalogItem>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| GprError::Format(format!("catalog line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_catalog_jsonl<W: Write>(items: &[CatalogItem], mut w: W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
