//! Labeled graph model, input readers and structural augmentation.

mod conllu;
mod penman;

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use conllu::{parse_conllu, parse_conllu_document, ConlluSentence};
pub use penman::{parse_penman, parse_penman_document, render_penman, PenmanEntry};

/// Label of the self-loop added to every node.
pub const SELF_LABEL: &str = "self";
/// Label of the edges from the global node to every other node.
pub const GLOBAL_LABEL: &str = "global";
/// Prefix marking a reversed edge.
pub const REVERSE_PREFIX: &str = "R_";
/// Node label of the global node.
pub const GLOBAL_NODE_LABEL: &str = "<global>";

/// "The boy wants the girl to believe him." as PENMAN; `boy` is reentrant.
pub const BOY_WANTS_AMR: &str =
    "(w / want-01 :ARG0 (b / boy) :ARG1 (b2 / believe-01 :ARG0 (g / girl) :ARG1 b))";

pub fn reverse_label(label: &str) -> String {
    format!("{REVERSE_PREFIX}{label}")
}

/// Flips the reverse marker: `ARG0 ↔ R_ARG0`.
pub fn toggle_reverse(label: &str) -> String {
    match label.strip_prefix(REVERSE_PREFIX) {
        Some(base) => base.to_string(),
        None => reverse_label(label),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    /// Semantic graphs: absolute position is the distance from the root.
    #[default]
    Amr,
    /// Dependency trees: absolute position is the surface token index.
    Dependency,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeRecord {
    pub id: usize,
    pub label: String,
    pub char_seq: Vec<char>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub src: usize,
    pub dst: usize,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledGraph {
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
    root: usize,
    augmented: bool,
    kind: GraphKind,
}

impl LabeledGraph {
    /// Empty graph of the given kind; the first node added becomes the root
    /// unless [`set_root`](Self::set_root) is called.
    pub fn new(kind: GraphKind) -> Self {
        Self {
            nodes: Vec::new(),
            edges: Vec::new(),
            root: 0,
            augmented: false,
            kind,
        }
    }

    pub fn add_node(&mut self, label: impl Into<String>) -> Result<usize> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::Graph("node label must be non-empty".into()));
        }
        let id = self.nodes.len();
        self.nodes.push(NodeRecord {
            id,
            char_seq: label.chars().collect(),
            label,
        });
        Ok(id)
    }

    /// Adds `src → dst`; identical triples are rejected.
    pub fn add_edge(&mut self, src: usize, dst: usize, label: impl Into<String>) -> Result<()> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::Graph("edge label must be non-empty".into()));
        }
        let n = self.nodes.len();
        if src >= n || dst >= n {
            return Err(Error::Graph(format!(
                "edge {src} -> {dst} references a node outside 0..{n}"
            )));
        }
        if self
            .edges
            .iter()
            .any(|e| e.src == src && e.dst == dst && e.label == label)
        {
            return Err(Error::Graph(format!(
                "duplicate edge ({src}, {dst}, {label})"
            )));
        }
        self.edges.push(EdgeRecord { src, dst, label });
        Ok(())
    }

    pub fn set_root(&mut self, root: usize) -> Result<()> {
        if root >= self.nodes.len() {
            return Err(Error::Graph(format!("root {root} is not a node")));
        }
        self.root = root;
        Ok(())
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    /// Number of nodes, including the global node when augmented.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of nodes of the underlying input graph.
    pub fn original_len(&self) -> usize {
        self.nodes.len() - usize::from(self.augmented)
    }

    pub fn global_node(&self) -> Option<usize> {
        self.augmented.then(|| self.nodes.len() - 1)
    }

    pub fn label(&self, id: usize) -> &str {
        &self.nodes[id].label
    }

    /// Edges of the input graph (no reverse, self-loop or global edges).
    pub fn original_edges(&self) -> impl Iterator<Item = &EdgeRecord> {
        let augmented = self.augmented;
        self.edges.iter().filter(move |e| !augmented || is_original(&e.label))
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Graph("graph has no nodes".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i || n.label.is_empty() || n.char_seq != n.label.chars().collect::<Vec<_>>() {
                return Err(Error::Graph(format!("node record {i} is inconsistent")));
            }
        }
        if self.root >= self.nodes.len() {
            return Err(Error::Graph("root out of range".into()));
        }
        let mut seen = HashSet::new();
        for e in &self.edges {
            if e.src >= self.nodes.len() || e.dst >= self.nodes.len() {
                return Err(Error::Graph(format!("dangling edge {e:?}")));
            }
            if !seen.insert(e) {
                return Err(Error::Graph(format!("duplicate edge {e:?}")));
            }
        }
        if !self.augmented {
            let reach = undirected_distances(self.nodes.len(), self.original_edges(), self.root);
            if reach.iter().any(Option::is_none) {
                return Err(Error::Graph("some nodes are not connected to the root".into()));
            }
        }
        Ok(())
    }

    /// Adds reverse edges, a self-loop on every node and a global node with
    /// an edge to every other node.
    pub fn augment(&self) -> Result<LabeledGraph> {
        if self.augmented {
            return Err(Error::Graph("graph is already augmented".into()));
        }
        for e in &self.edges {
            if !is_original(&e.label) {
                return Err(Error::Graph(format!(
                    "edge label `{}` is reserved for augmentation",
                    e.label
                )));
            }
        }
        let mut g = self.clone();
        for e in &self.edges {
            g.add_edge(e.dst, e.src, reverse_label(&e.label))?;
        }
        let global = g.add_node(GLOBAL_NODE_LABEL)?;
        for v in 0..g.nodes.len() {
            g.add_edge(v, v, SELF_LABEL)?;
        }
        for v in 0..global {
            g.add_edge(global, v, GLOBAL_LABEL)?;
        }
        g.augmented = true;
        Ok(g)
    }

    /// Drops everything `augment` added.
    pub fn strip_augmentation(&self) -> LabeledGraph {
        if !self.augmented {
            return self.clone();
        }
        let n = self.original_len();
        LabeledGraph {
            nodes: self.nodes[..n].to_vec(),
            edges: self.original_edges().cloned().collect(),
            root: self.root,
            augmented: false,
            kind: self.kind,
        }
    }

    /// Relabels nodes by `perm` (new id of old node `i` is `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Result<LabeledGraph> {
        let n = self.nodes.len();
        let mut check = perm.to_vec();
        check.sort_unstable();
        if perm.len() != n || check != (0..n).collect::<Vec<_>>() {
            return Err(Error::Graph("not a permutation of the node ids".into()));
        }
        let mut nodes = self.nodes.clone();
        for (old, node) in self.nodes.iter().enumerate() {
            nodes[perm[old]] = NodeRecord {
                id: perm[old],
                ..node.clone()
            };
        }
        Ok(LabeledGraph {
            nodes,
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    src: perm[e.src],
                    dst: perm[e.dst],
                    label: e.label.clone(),
                })
                .collect(),
            root: perm[self.root],
            augmented: self.augmented,
            kind: self.kind,
        })
    }
}

/// Whether `label` belongs to the input graph rather than to augmentation.
pub fn is_original(label: &str) -> bool {
    label != SELF_LABEL && label != GLOBAL_LABEL && !label.starts_with(REVERSE_PREFIX)
}

/// BFS hop counts from `src`, treating edges as undirected.
fn undirected_distances<'a>(
    n: usize,
    edges: impl Iterator<Item = &'a EdgeRecord>,
    src: usize,
) -> Vec<Option<usize>> {
    let adj = adjacency(n, edges, true);
    bfs(&adj, src)
}

fn adjacency<'a>(
    n: usize,
    edges: impl Iterator<Item = &'a EdgeRecord>,
    undirected: bool,
) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        adj[e.src].push(e.dst);
        if undirected {
            adj[e.dst].push(e.src);
        }
    }
    adj
}

fn bfs(adj: &[Vec<usize>], src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].unwrap();
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Absolute position of every node (indexed by node id).
///
/// Semantic graphs use the number of input edges on the shortest directed
/// path from the root; nodes that cannot be reached along edge direction
/// fall back to the undirected distance. Dependency trees use the 1-based
/// surface index. The global node is always at position 0.
pub fn absolute_positions(g: &LabeledGraph) -> Vec<usize> {
    let n = g.original_len();
    let mut pos = match g.kind {
        GraphKind::Dependency => (1..=n).collect::<Vec<_>>(),
        GraphKind::Amr => {
            let directed = bfs(&adjacency(n, g.original_edges(), false), g.root);
            let undirected = bfs(&adjacency(n, g.original_edges(), true), g.root);
            directed
                .iter()
                .zip(&undirected)
                .map(|(d, u)| d.or(*u).unwrap_or(0))
                .collect()
        }
    };
    if g.augmented {
        pos.push(0);
    }
    pos
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub size: usize,
    pub diameter: usize,
    pub reentrancies: usize,
    /// Set when the undirected graph has more than one component; the
    /// diameter is then that of the largest component.
    #[serde(default)]
    pub disconnected: bool,
}

/// Size, undirected diameter and number of nodes with in-degree ≥ 2 of the
/// input graph.
pub fn graph_stats(g: &LabeledGraph) -> GraphStats {
    let base = g.strip_augmentation();
    let n = base.len();
    let adj = adjacency(n, base.edges.iter(), true);
    let mut component = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for s in 0..n {
        if component[s] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let members: Vec<usize> = bfs(&adj, s)
            .iter()
            .enumerate()
            .filter_map(|(v, d)| d.map(|_| v))
            .collect();
        for &v in &members {
            component[v] = id;
        }
        sizes.push(members.len());
    }
    let largest = (0..sizes.len()).max_by_key(|&c| (sizes[c], usize::MAX - c)).unwrap_or(0);
    let mut diameter = 0;
    for s in (0..n).filter(|&v| component[v] == largest) {
        for d in bfs(&adj, s).into_iter().flatten() {
            diameter = diameter.max(d);
        }
    }
    let mut indegree = vec![0usize; n];
    for e in &base.edges {
        indegree[e.dst] += 1;
    }
    GraphStats {
        size: n,
        diameter,
        reentrancies: indegree.iter().filter(|&&d| d >= 2).count(),
        disconnected: sizes.len() > 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boy_wants() -> LabeledGraph {
        parse_penman(BOY_WANTS_AMR).unwrap()
    }

    fn id_of(g: &LabeledGraph, label: &str) -> usize {
        g.nodes().iter().find(|n| n.label == label).unwrap().id
    }

    #[test]
    fn augment_edge_count_follows_formula() {
        let g = boy_wants();
        let a = g.augment().unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a.edges().len(), 2 * 4 + 5 + 4);
        a.validate().unwrap();
    }

    #[test]
    fn augment_single_node() {
        let mut g = LabeledGraph::new(GraphKind::Amr);
        g.add_node("x").unwrap();
        let a = g.augment().unwrap();
        assert_eq!(a.edges().len(), 3);
        assert_eq!(a.global_node(), Some(1));
    }

    #[test]
    fn augment_adds_reverse_edges_and_is_not_idempotent() {
        let g = boy_wants();
        let a = g.augment().unwrap();
        let (w, b2) = (id_of(&a, "want-01"), id_of(&a, "believe-01"));
        assert!(a
            .edges()
            .iter()
            .any(|e| e.src == b2 && e.dst == w && e.label == "R_ARG1"));
        assert!(a.augment().is_err());
    }

    #[test]
    fn strip_recovers_input() {
        let g = boy_wants();
        assert_eq!(g.augment().unwrap().strip_augmentation(), g);
    }

    #[test]
    fn reserved_labels_are_rejected() {
        let mut g = LabeledGraph::new(GraphKind::Amr);
        let a = g.add_node("a").unwrap();
        let b = g.add_node("b").unwrap();
        g.add_edge(a, b, "R_x").unwrap();
        assert!(g.augment().is_err());
    }

    #[test]
    fn duplicate_triples_rejected_but_multi_labels_allowed() {
        let mut g = LabeledGraph::new(GraphKind::Amr);
        let a = g.add_node("a").unwrap();
        let b = g.add_node("b").unwrap();
        g.add_edge(a, b, "ARG0").unwrap();
        g.add_edge(a, b, "ARG1").unwrap();
        assert!(g.add_edge(a, b, "ARG0").is_err());
    }

    #[test]
    fn positions_of_boy_wants() {
        let a = boy_wants().augment().unwrap();
        let pos = absolute_positions(&a);
        assert_eq!(pos[id_of(&a, "want-01")], 0);
        assert_eq!(pos[id_of(&a, "girl")], 2);
        assert_eq!(pos[id_of(&a, "boy")], 1);
        assert_eq!(pos[a.global_node().unwrap()], 0);
    }

    #[test]
    fn positions_fall_back_to_undirected_distance() {
        let mut g = LabeledGraph::new(GraphKind::Amr);
        let r = g.add_node("r").unwrap();
        let c = g.add_node("c").unwrap();
        let up = g.add_node("up").unwrap();
        g.add_edge(r, c, "ARG0").unwrap();
        g.add_edge(up, c, "ARG1").unwrap();
        let pos = absolute_positions(&g.augment().unwrap());
        assert_eq!(pos[up], 2);
    }

    #[test]
    fn stats_of_boy_wants_and_single_node() {
        let s = graph_stats(&boy_wants());
        assert_eq!((s.size, s.diameter, s.reentrancies), (4, 2, 1));
        let mut g = LabeledGraph::new(GraphKind::Amr);
        g.add_node("x").unwrap();
        let s = graph_stats(&g);
        assert_eq!((s.size, s.diameter, s.reentrancies), (1, 0, 0));
    }

    #[test]
    fn stats_flag_disconnected_graphs() {
        let mut g = LabeledGraph::new(GraphKind::Amr);
        for l in ["a", "b", "c", "d", "e"] {
            g.add_node(l).unwrap();
        }
        g.add_edge(0, 1, "x").unwrap();
        g.add_edge(1, 2, "x").unwrap();
        g.add_edge(3, 4, "x").unwrap();
        let s = graph_stats(&g);
        assert!(s.disconnected);
        assert_eq!(s.diameter, 2);
        assert!(g.validate().is_err());
    }
}
