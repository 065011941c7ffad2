//! Seeded fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use gt_autodiff::rng::uniform01;
use gt_autodiff::Matrix;
use graph_transformer::graph::{GraphKind, LabeledGraph, GLOBAL_LABEL, SELF_LABEL};
use graph_transformer::model::{GraphInput, Model, ModelConfig};
use graph_transformer::vocab::Vocabs;

const CONCEPTS: [&str; 10] = [
    "want-01", "boy", "girl", "believe-01", "go-02", "city", "name", "tall", "see-01", "house",
];
const ROLES: [&str; 5] = ["ARG0", "ARG1", "ARG2", "mod", "location"];

/// Uniform integer in `lo..hi` from a counter-based stream.
pub fn pick(seed: u64, k: u64, lo: usize, hi: usize) -> usize {
    lo + (uniform01(seed, k) * (hi - lo) as f64) as usize
}

/// A connected, unaugmented graph with `1..=max_nodes` nodes: a random tree
/// plus a few extra edges that create reentrancies.
pub fn random_graph(seed: u64, max_nodes: usize) -> LabeledGraph {
    let n = pick(seed, 0, 1, max_nodes + 1);
    let mut g = LabeledGraph::new(GraphKind::Amr);
    let mut k = 1;
    let mut next = || {
        k += 1;
        k
    };
    for _ in 0..n {
        g.add_node(CONCEPTS[pick(seed, next(), 0, CONCEPTS.len())]).unwrap();
    }
    for v in 1..n {
        let parent = pick(seed, next(), 0, v);
        let role = ROLES[pick(seed, next(), 0, ROLES.len())];
        g.add_edge(parent, v, role).unwrap();
    }
    let extra = pick(seed, next(), 0, n / 2 + 1);
    for _ in 0..extra {
        let (u, v) = (pick(seed, next(), 0, n), pick(seed, next(), 0, n));
        let role = ROLES[pick(seed, next(), 0, ROLES.len())];
        if u != v {
            let _ = g.add_edge(u, v, role);
        }
    }
    g
}

/// A permutation of `0..n` (Fisher-Yates on the counter stream).
pub fn permutation(seed: u64, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = pick(seed, 10_000 + i as u64, 0, i + 1);
        p.swap(i, j);
    }
    p
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    Matrix::from_shape_fn((rows, cols), |(i, j)| 2.0 * uniform01(seed, (i * cols + j) as u64) - 1.0)
}

/// All-pairs hop counts over the augmented graph's ordinary nodes, with
/// self and global edges ignored; `None` for unreachable pairs.
pub fn floyd_warshall(aug: &LabeledGraph) -> Vec<Vec<Option<usize>>> {
    let n = aug.original_len();
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    for e in aug.edges() {
        if e.label == SELF_LABEL || e.label == GLOBAL_LABEL || e.src >= n || e.dst >= n {
            continue;
        }
        if e.src != e.dst {
            d[e.src][e.dst] = Some(1);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

/// Vocabularies covering every random-graph label and the given targets.
pub fn vocabs_for(graphs: &[LabeledGraph], targets: &[&str]) -> Vocabs {
    let aug: Vec<LabeledGraph> = graphs.iter().map(|g| g.augment().unwrap()).collect();
    let words: Vec<Vec<String>> = targets
        .iter()
        .map(|t| t.split_whitespace().map(str::to_string).collect())
        .collect();
    Vocabs::build(aug.iter(), words.iter().map(Vec::as_slice))
}

/// Graphs plus a freshly initialized model that knows all their labels.
pub fn model_for<F: gt_autodiff::Float>(
    graphs: &[LabeledGraph],
    targets: &[&str],
    config: ModelConfig,
    seed: u64,
) -> (Model<F>, Vec<GraphInput>) {
    let model = Model::new(config, vocabs_for(graphs, targets), seed).unwrap();
    let inputs = graphs
        .iter()
        .map(|g| GraphInput::new(g, &model.vocabs, &model.config).unwrap())
        .collect();
    (model, inputs)
}

pub const TARGETS: [&str; 4] = [
    "the boy wants the girl to believe him",
    "a tall girl sees the house",
    "the boy goes to the city",
    "she believes the tall boy",
];
