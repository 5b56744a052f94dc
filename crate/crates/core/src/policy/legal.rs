use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{GprError, Result};
use crate::quantizer::CodePath;

/// The legal continuation codes at each decoding step.
pub trait LegalSpace {
    fn num_levels(&self) -> usize;

    /// Sorted legal codes at `level`, given the codes chosen at earlier levels.
    fn legal_codes(&self, level: usize, prefix: &[u32]) -> Vec<u32>;

    /// Checks that `path` is legal at every level.
    fn check_path(&self, path: &CodePath) -> Result<()> {
        if path.len() != self.num_levels() {
            return Err(GprError::invalid(format!(
                "path {path} has {} levels, expected {}",
                path.len(),
                self.num_levels()
            )));
        }
        for (l, &code) in path.codes().iter().enumerate() {
            if self.legal_codes(l, &path.codes()[..l]).binary_search(&code).is_err() {
                return Err(GprError::invalid(format!("code {code} at level {l} of {path} is illegal")));
            }
        }
        Ok(())
    }
}

/// Every code of every level is legal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FullSpace {
    pub level_sizes: Vec<usize>,
}

impl LegalSpace for FullSpace {
    fn num_levels(&self) -> usize {
        self.level_sizes.len()
    }

    fn legal_codes(&self, level: usize, _prefix: &[u32]) -> Vec<u32> {
        (0..self.level_sizes[level] as u32).collect()
    }
}

/// A fixed legal set per level, independent of the prefix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSets {
    sets: Vec<Vec<u32>>,
}

impl LevelSets {
    pub fn new(sets: Vec<Vec<u32>>) -> Self {
        let sets = sets
            .into_iter()
            .map(|s| s.into_iter().collect::<BTreeSet<_>>().into_iter().collect())
            .collect();
        LevelSets { sets }
    }
}

impl LegalSpace for LevelSets {
    fn num_levels(&self) -> usize {
        self.sets.len()
    }

    fn legal_codes(&self, level: usize, _prefix: &[u32]) -> Vec<u32> {
        self.sets[level].clone()
    }
}

/// Legal continuations are the children of `prefix` among a set of full paths.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<CodePath>", into = "Vec<CodePath>")]
pub struct PathSet {
    levels: usize,
    paths: BTreeSet<CodePath>,
    children: BTreeMap<Vec<u32>, Vec<u32>>,
}

impl PathSet {
    /// All paths must share one length.
    pub fn new(paths: impl IntoIterator<Item = CodePath>) -> Result<Self> {
        let paths: BTreeSet<CodePath> = paths.into_iter().collect();
        let levels = paths.first().map_or(0, CodePath::len);
        if paths.iter().any(|p| p.len() != levels) {
            return Err(GprError::invalid("paths in a legal set must share one length"));
        }
        Ok(Self::build(levels, paths))
    }

    fn build(levels: usize, paths: BTreeSet<CodePath>) -> Self {
        let mut children: BTreeMap<Vec<u32>, BTreeSet<u32>> = BTreeMap::new();
        for p in &paths {
            for l in 0..levels {
                children.entry(p.codes()[..l].to_vec()).or_default().insert(p.codes()[l]);
            }
        }
        PathSet {
            levels,
            paths,
            children: children.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
        }
    }

    pub fn paths(&self) -> impl Iterator<Item = &CodePath> {
        self.paths.iter()
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn contains(&self, path: &CodePath) -> bool {
        self.paths.contains(path)
    }
}

impl From<Vec<CodePath>> for PathSet {
    fn from(paths: Vec<CodePath>) -> Self {
        let levels = paths.first().map_or(0, CodePath::len);
        Self::build(levels, paths.into_iter().collect())
    }
}

impl From<PathSet> for Vec<CodePath> {
    fn from(set: PathSet) -> Self {
        set.paths.into_iter().collect()
    }
}

impl LegalSpace for PathSet {
    fn num_levels(&self) -> usize {
        self.levels
    }

    fn legal_codes(&self, _level: usize, prefix: &[u32]) -> Vec<u32> {
        self.children.get(prefix).cloned().unwrap_or_default()
    }
}

/// Serializable choice of legal space carried by training examples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegalSets {
    Full(FullSpace),
    PerLevel(LevelSets),
    Paths(Arc<PathSet>),
}

impl LegalSpace for LegalSets {
    fn num_levels(&self) -> usize {
        match self {
            LegalSets::Full(s) => s.num_levels(),
            LegalSets::PerLevel(s) => s.num_levels(),
            LegalSets::Paths(s) => s.num_levels(),
        }
    }

    fn legal_codes(&self, level: usize, prefix: &[u32]) -> Vec<u32> {
        match self {
            LegalSets::Full(s) => s.legal_codes(level, prefix),
            LegalSets::PerLevel(s) => s.legal_codes(level, prefix),
            LegalSets::Paths(s) => s.legal_codes(level, prefix),
        }
    }
}
