//! String ↔ id tables for node labels, edge labels, target tokens and
//! characters.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::{LabeledGraph, GLOBAL_LABEL, GLOBAL_NODE_LABEL, SELF_LABEL};
use crate::{Error, Result};

pub const UNK: &str = "<unk>";
pub const PAD: &str = "<pad>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(items: Vec<String>) -> Self {
        let index = items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self { items, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.items
    }
}

impl Vocab {
    /// Reserved entries first, then `rest` in sorted order without repeats.
    pub fn build<'a>(reserved: &[&str], rest: impl IntoIterator<Item = &'a str>) -> Self {
        let mut items: Vec<String> = reserved.iter().map(|s| s.to_string()).collect();
        let seen: BTreeSet<&str> = rest.into_iter().collect();
        for s in seen {
            if !reserved.contains(&s) {
                items.push(s.to_string());
            }
        }
        items.into()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, s: &str) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Id of `s`, or of [`UNK`] when absent.
    pub fn id_or_unk(&self, s: &str) -> usize {
        self.get(s)
            .or_else(|| self.get(UNK))
            .expect("open vocabularies reserve <unk>")
    }

    pub fn item(&self, id: usize) -> &str {
        &self.items[id]
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }
}

/// The four vocabularies of a model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Vocabs {
    pub node: Vocab,
    /// Closed: unknown edge labels are an error.
    pub edge: Vocab,
    pub token: Vocab,
    pub chars: Vocab,
}

pub const CHAR_PAD: usize = 0;

impl Vocabs {
    /// Collects vocabularies from augmented training graphs and tokenized
    /// targets.
    pub fn build<'a>(
        graphs: impl IntoIterator<Item = &'a LabeledGraph>,
        targets: impl IntoIterator<Item = &'a [String]>,
    ) -> Self {
        let graphs: Vec<&LabeledGraph> = graphs.into_iter().collect();
        let targets: Vec<&[String]> = targets.into_iter().collect();
        let node = Vocab::build(
            &[UNK, GLOBAL_NODE_LABEL],
            graphs.iter().flat_map(|g| g.nodes().iter().map(|n| n.label.as_str())),
        );
        let mut edge_labels: BTreeSet<String> = BTreeSet::new();
        for g in &graphs {
            for e in g.edges() {
                edge_labels.insert(e.label.clone());
                if e.label != SELF_LABEL && e.label != GLOBAL_LABEL {
                    edge_labels.insert(crate::graph::toggle_reverse(&e.label));
                }
            }
        }
        let r_global = crate::graph::reverse_label(GLOBAL_LABEL);
        let edge = Vocab::build(
            &[SELF_LABEL, GLOBAL_LABEL, &r_global],
            edge_labels.iter().map(String::as_str),
        );
        let token = Vocab::build(
            &[PAD, UNK, BOS, EOS],
            targets.iter().flat_map(|t| t.iter().map(String::as_str)),
        );
        let mut chars: BTreeSet<String> = BTreeSet::new();
        for g in &graphs {
            for n in g.nodes() {
                chars.extend(n.char_seq.iter().map(|c| c.to_string()));
            }
        }
        for t in &targets {
            for w in t.iter() {
                chars.extend(w.chars().map(|c| c.to_string()));
            }
        }
        for s in [BOS, EOS, UNK, GLOBAL_NODE_LABEL] {
            chars.extend(s.chars().map(|c| c.to_string()));
        }
        let chars = Vocab::build(&[PAD, UNK], chars.iter().map(String::as_str));
        Self {
            node,
            edge,
            token,
            chars,
        }
    }

    pub fn edge_id(&self, label: &str) -> Result<usize> {
        self.edge.get(label).ok_or_else(|| Error::UnknownLabel {
            kind: "edge label",
            label: label.to_string(),
        })
    }

    pub fn char_ids(&self, word: &str) -> Vec<usize> {
        word.chars()
            .map(|c| self.chars.id_or_unk(c.encode_utf8(&mut [0; 4])))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
