use crate::error::{GprError, Result};
use crate::policy::LegalSpace;
use crate::quantizer::CodePath;

use super::{CatalogItem, TargetingProfile};

#[derive(Clone, Debug, PartialEq)]
struct Node {
    code: u32,
    /// Child node indices, sorted by code.
    children: Vec<usize>,
    item: Option<usize>,
}

/// Prefix tree over the eligible items of one request. Node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct Trie {
    levels: usize,
    nodes: Vec<Node>,
    items: Vec<(String, CodePath)>,
}

impl Trie {
    pub fn new(levels: usize) -> Self {
        Trie {
            levels,
            nodes: vec![Node {
                code: 0,
                children: Vec::new(),
                item: None,
            }],
            items: Vec::new(),
        }
    }

    pub fn insert(&mut self, item_id: &str, path: &CodePath) -> Result<()> {
        if path.len() != self.levels {
            return Err(GprError::invalid(format!("path {path} does not have {} levels", self.levels)));
        }
        let mut node = 0;
        for &code in path.codes() {
            node = match self.child(node, code) {
                Some(c) => c,
                None => {
                    let idx = self.nodes.len();
                    self.nodes.push(Node {
                        code,
                        children: Vec::new(),
                        item: None,
                    });
                    let pos = self.nodes[node]
                        .children
                        .partition_point(|&c| self.nodes[c].code < code);
                    self.nodes[node].children.insert(pos, idx);
                    idx
                }
            };
        }
        if let Some(prev) = self.nodes[node].item {
            return Err(GprError::invalid(format!(
                "items {} and {item_id} share path {path}",
                self.items[prev].0
            )));
        }
        self.nodes[node].item = Some(self.items.len());
        self.items.push((item_id.to_string(), path.clone()));
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn num_leaves(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `(item_id, path)` for every leaf, in insertion order.
    pub fn leaves(&self) -> &[(String, CodePath)] {
        &self.items
    }

    fn child(&self, node: usize, code: u32) -> Option<usize> {
        let children = &self.nodes[node].children;
        children
            .binary_search_by_key(&code, |&c| self.nodes[c].code)
            .ok()
            .map(|i| children[i])
    }

    fn walk(&self, prefix: &[u32]) -> Option<usize> {
        prefix.iter().try_fold(0, |node, &code| self.child(node, code))
    }

    pub fn item_at(&self, path: &CodePath) -> Option<&str> {
        if path.len() != self.levels {
            return None;
        }
        let node = self.walk(path.codes())?;
        self.nodes[node].item.map(|i| self.items[i].0.as_str())
    }

    /// Largest child count of any node.
    pub fn max_branching(&self) -> usize {
        self.nodes.iter().map(|n| n.children.len()).max().unwrap_or(0)
    }
}

impl LegalSpace for Trie {
    fn num_levels(&self) -> usize {
        self.levels
    }

    fn legal_codes(&self, _level: usize, prefix: &[u32]) -> Vec<u32> {
        match self.walk(prefix) {
            Some(node) => self.nodes[node].children.iter().map(|&c| self.nodes[c].code).collect(),
            None => Vec::new(),
        }
    }
}

/// Inserts every active, funded item whose targeting admits `user`.
pub fn build_trie(catalog: &[CatalogItem], user: &TargetingProfile, levels: usize) -> Result<Trie> {
    let mut trie = Trie::new(levels);
    for item in catalog.iter().filter(|i| i.eligible(user)) {
        trie.insert(&item.item_id, &item.path)?;
    }
    Ok(trie)
}
