//! Shortest relation paths between every ordered node pair.

use std::collections::{HashMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use gt_autodiff::rng::{mix, uniform01};

use crate::graph::{LabeledGraph, GLOBAL_LABEL, SELF_LABEL};
use crate::{Error, Result};

/// Label sequence of a single path.
pub type Labels = Vec<String>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathConfig {
    /// Maximum number of shortest paths kept per pair.
    pub cap: usize,
    /// Paths with more hops keep only their final `max_len` labels.
    pub max_len: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self { cap: 4, max_len: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationPath {
    pub src: usize,
    pub dst: usize,
    pub labels: Labels,
}

impl RelationPath {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// All retained shortest paths of an augmented graph, indexed by ordered
/// pair `(i, j)` at `i * n + j` where `n` includes the global node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathTable {
    n: usize,
    paths: Vec<Vec<Labels>>,
    hops: Vec<usize>,
}

impl PathTable {
    /// Number of nodes including the global node.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Retained paths for `i → j`, sorted lexicographically.
    pub fn paths(&self, i: usize, j: usize) -> &[Labels] {
        &self.paths[i * self.n + j]
    }

    /// Shortest-path length in edges; 0 for `i == j` although the stored
    /// path is `["self"]`.
    pub fn hops(&self, i: usize, j: usize) -> usize {
        self.hops[i * self.n + j]
    }

    pub fn relation_paths(&self, i: usize, j: usize) -> Vec<RelationPath> {
        self.paths(i, j)
            .iter()
            .map(|labels| RelationPath {
                src: i,
                dst: j,
                labels: labels.clone(),
            })
            .collect()
    }

    /// Writes one `{src, dst, paths}` JSON object per ordered pair.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            src: usize,
            dst: usize,
            paths: &'a [Labels],
        }
        for i in 0..self.n {
            for j in 0..self.n {
                let row = Row {
                    src: i,
                    dst: j,
                    paths: self.paths(i, j),
                };
                serde_json::to_writer(&mut out, &row)?;
                out.write_all(b"\n")
                    .map_err(|e| Error::io("<path dump>", e))?;
            }
        }
        Ok(())
    }
}

/// Breadth-first search from every ordinary node over the augmented graph
/// without its global and self edges. Pairs touching the global node get
/// fixed single-label paths.
pub fn all_shortest_paths(g: &LabeledGraph, cfg: PathConfig) -> Result<PathTable> {
    if !g.is_augmented() {
        return Err(Error::Graph("shortest paths need an augmented graph".into()));
    }
    if cfg.cap == 0 || cfg.max_len == 0 {
        return Err(Error::Config("path cap and max_len must be at least 1".into()));
    }
    let n = g.len();
    let global = g.global_node().expect("augmented graphs have a global node");
    let mut out_edges: Vec<Vec<(usize, &str)>> = vec![Vec::new(); n];
    for e in g.edges() {
        if e.label == GLOBAL_LABEL || e.label == SELF_LABEL {
            continue;
        }
        out_edges[e.src].push((e.dst, e.label.as_str()));
    }

    let mut paths = vec![Vec::new(); n * n];
    let mut hops = vec![0; n * n];
    for s in 0..n {
        if s == global {
            continue;
        }
        let (dist, found) = bfs_paths(&out_edges, s, global, cfg.cap);
        for t in 0..n {
            if t == global || t == s {
                continue;
            }
            let d = dist[t].ok_or_else(|| {
                Error::Graph(format!("node {t} is unreachable from node {s}"))
            })?;
            hops[s * n + t] = d;
            paths[s * n + t] = found[t]
                .iter()
                .map(|p| truncate(p, cfg.max_len))
                .collect();
        }
    }
    for v in 0..n {
        paths[v * n + v] = vec![vec![SELF_LABEL.to_string()]];
        if v != global {
            paths[global * n + v] = vec![vec![GLOBAL_LABEL.to_string()]];
            paths[v * n + global] = vec![vec![crate::graph::reverse_label(GLOBAL_LABEL)]];
            hops[global * n + v] = 1;
            hops[v * n + global] = 1;
        }
    }
    Ok(PathTable { n, paths, hops })
}

fn truncate(p: &[String], max_len: usize) -> Labels {
    p[p.len().saturating_sub(max_len)..].to_vec()
}

/// BFS distances plus the `cap` lexicographically smallest shortest paths
/// to every node. Keeping only the best `cap` prefixes at each node is
/// exact: all prefixes reaching a node have the same length, so the order
/// of an extension is decided by its prefix first.
#[allow(clippy::type_complexity)]
fn bfs_paths(
    out_edges: &[Vec<(usize, &str)>],
    s: usize,
    skip: usize,
    cap: usize,
) -> (Vec<Option<usize>>, Vec<Vec<Labels>>) {
    let n = out_edges.len();
    let mut dist = vec![None; n];
    let mut order = Vec::with_capacity(n);
    dist[s] = Some(0);
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &(v, _) in &out_edges[u] {
            if v != skip && dist[v].is_none() {
                dist[v] = Some(dist[u].unwrap() + 1);
                queue.push_back(v);
            }
        }
    }
    let mut found: Vec<Vec<Labels>> = vec![Vec::new(); n];
    found[s] = vec![Vec::new()];
    for &u in &order {
        let du = dist[u].unwrap();
        let prefixes = std::mem::take(&mut found[u]);
        for &(v, label) in &out_edges[u] {
            if v == skip || dist[v] != Some(du + 1) {
                continue;
            }
            for p in &prefixes {
                let mut q = p.clone();
                q.push(label.to_string());
                found[v].push(q);
            }
        }
        found[u] = prefixes;
        // pruning early only bounds memory; the final pass settles the order
        for &(v, _) in &out_edges[u] {
            if dist[v] == Some(du + 1) && found[v].len() > cap {
                prune(&mut found[v], cap);
            }
        }
    }
    for f in &mut found {
        prune(f, cap);
    }
    (dist, found)
}

fn prune(paths: &mut Vec<Labels>, cap: usize) {
    paths.sort();
    paths.dedup();
    paths.truncate(cap);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Test,
}

/// Per ordered pair: indices into [`PathTable::paths`] with weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    n: usize,
    choices: Vec<Vec<(usize, f64)>>,
}

impl Selection {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &[(usize, f64)] {
        &self.choices[i * self.n + j]
    }
}

/// Training samples one path per pair (seeded); testing weights all
/// retained paths equally.
pub fn select_paths(table: &PathTable, mode: Mode, seed: u64) -> Selection {
    let choices = table
        .paths
        .iter()
        .enumerate()
        .map(|(pair, ps)| match (mode, ps.len()) {
            (_, 1) => vec![(0, 1.0)],
            (Mode::Train, k) => {
                let u = uniform01(mix(seed, 0x5e1ec7), pair as u64);
                vec![(((u * k as f64) as usize).min(k - 1), 1.0)]
            }
            (Mode::Test, k) => (0..k).map(|p| (p, 1.0 / k as f64)).collect(),
        })
        .collect();
    Selection {
        n: table.n,
        choices,
    }
}

/// Distinct label sequences of a batch and, per graph and pair, the
/// weighted references into them.
#[derive(Clone, Debug, PartialEq)]
pub struct DedupBatch {
    pub unique: Vec<Labels>,
    /// `index[g][i * n + j]` lists `(unique id, weight)`.
    pub index: Vec<Vec<Vec<(usize, f64)>>>,
}

impl DedupBatch {
    /// Label sequences and weights selected for pair `(i, j)` of graph `g`.
    pub fn resolve(&self, g: usize, n: usize, i: usize, j: usize) -> Vec<(&Labels, f64)> {
        self.index[g][i * n + j]
            .iter()
            .map(|&(u, w)| (&self.unique[u], w))
            .collect()
    }
}

/// Collects every selected path of the batch once, in first-seen order.
pub fn dedup_paths(batch: &[(&PathTable, &Selection)]) -> DedupBatch {
    let mut ids: HashMap<&Labels, usize> = HashMap::new();
    let mut unique = Vec::new();
    let mut index = Vec::with_capacity(batch.len());
    for (table, sel) in batch {
        let mut per_graph = Vec::with_capacity(table.paths.len());
        for (pair, choice) in sel.choices.iter().enumerate() {
            let refs = choice
                .iter()
                .map(|&(p, w)| {
                    let labels = &table.paths[pair][p];
                    let id = *ids.entry(labels).or_insert_with(|| {
                        unique.push(labels.clone());
                        unique.len() - 1
                    });
                    (id, w)
                })
                .collect();
            per_graph.push(refs);
        }
        index.push(per_graph);
    }
    DedupBatch { unique, index }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_penman, LabeledGraph, GraphKind};

    fn boy_wants() -> LabeledGraph {
        parse_penman(crate::graph::BOY_WANTS_AMR).unwrap().augment().unwrap()
    }

    fn labels(p: &[&str]) -> Labels {
        p.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn boy_wants_paths() {
        let g = boy_wants();
        let t = all_shortest_paths(&g, PathConfig::default()).unwrap();
        let id = |l: &str| g.nodes().iter().position(|n| n.label == l).unwrap();
        let (want, girl) = (id("want-01"), id("girl"));
        assert_eq!(t.paths(want, girl), [labels(&["ARG1", "ARG0"])]);
        assert_eq!(t.paths(girl, want), [labels(&["R_ARG0", "R_ARG1"])]);
        assert_eq!(t.paths(girl, girl), [labels(&["self"])]);
        assert_eq!(t.hops(girl, girl), 0);
        let gl = g.global_node().unwrap();
        assert_eq!(t.paths(gl, girl), [labels(&["global"])]);
        assert_eq!(t.paths(girl, gl), [labels(&["R_global"])]);
        assert_eq!(t.paths(gl, gl), [labels(&["self"])]);
    }

    #[test]
    fn ties_are_capped_in_label_order() {
        // four parallel two-hop routes a -> m_k -> b with distinct labels
        let mut g = LabeledGraph::new(GraphKind::Amr);
        let a = g.add_node("a").unwrap();
        let b = g.add_node("b").unwrap();
        for (k, l) in ["d", "c", "b", "a", "e"].iter().enumerate() {
            let m = g.add_node(format!("m{k}")).unwrap();
            g.add_edge(a, m, *l).unwrap();
            g.add_edge(m, b, "x").unwrap();
        }
        let g = g.augment().unwrap();
        let t = all_shortest_paths(&g, PathConfig { cap: 3, max_len: 8 }).unwrap();
        assert_eq!(
            t.paths(a, b),
            [labels(&["a", "x"]), labels(&["b", "x"]), labels(&["c", "x"])]
        );
    }

    #[test]
    fn long_paths_keep_their_tail() {
        let mut g = LabeledGraph::new(GraphKind::Amr);
        let mut prev = g.add_node("n0").unwrap();
        for k in 1..6 {
            let v = g.add_node(format!("n{k}")).unwrap();
            g.add_edge(prev, v, format!("e{k}")).unwrap();
            prev = v;
        }
        let g = g.augment().unwrap();
        let t = all_shortest_paths(&g, PathConfig { cap: 4, max_len: 2 }).unwrap();
        assert_eq!(t.paths(0, 5), [labels(&["e4", "e5"])]);
        assert_eq!(t.hops(0, 5), 5);
    }

    #[test]
    fn selection_policies() {
        let t = PathTable {
            n: 1,
            paths: vec![vec![labels(&["a"]), labels(&["b"]), labels(&["c"])]],
            hops: vec![1],
        };
        let s1 = select_paths(&t, Mode::Train, 7);
        assert_eq!(s1, select_paths(&t, Mode::Train, 7));
        assert_eq!(s1.get(0, 0).len(), 1);
        let two = PathTable {
            n: 1,
            paths: vec![vec![labels(&["a"]), labels(&["b"])]],
            hops: vec![1],
        };
        assert_eq!(select_paths(&two, Mode::Test, 0).get(0, 0), [(0, 0.5), (1, 0.5)]);
        // the sampler reaches every path across seeds
        let mut seen = [false; 3];
        for seed in 0..64 {
            seen[select_paths(&t, Mode::Train, seed).get(0, 0)[0].0] = true;
        }
        assert_eq!(seen, [true; 3]);
    }

    #[test]
    fn dedup_is_idempotent_and_lossless() {
        let g = boy_wants();
        let t = all_shortest_paths(&g, PathConfig::default()).unwrap();
        let s = select_paths(&t, Mode::Test, 0);
        let one = dedup_paths(&[(&t, &s)]);
        let two = dedup_paths(&[(&t, &s), (&t, &s)]);
        assert_eq!(one.unique, two.unique);
        let n = t.n();
        for i in 0..n {
            for j in 0..n {
                let direct: Vec<_> = s.get(i, j).iter().map(|&(p, w)| (&t.paths(i, j)[p], w)).collect();
                assert_eq!(two.resolve(1, n, i, j), direct);
            }
        }
    }

    #[test]
    fn jsonl_dump_has_one_row_per_pair() {
        let t = all_shortest_paths(&boy_wants(), PathConfig::default()).unwrap();
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 25);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["paths"][0][0], "self");
    }

    #[test]
    fn unaugmented_input_is_rejected() {
        let g = parse_penman(crate::graph::BOY_WANTS_AMR).unwrap();
        assert!(all_shortest_paths(&g, PathConfig::default()).is_err());
    }
}
