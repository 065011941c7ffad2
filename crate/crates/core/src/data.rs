//! Corpus readers, the preprocessed JSONL format and a synthetic toy corpus.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{
    absolute_positions, graph_stats, parse_conllu_document, parse_penman, parse_penman_document, EdgeRecord,
    GraphKind, GraphStats, LabeledGraph,
};
use crate::relpath::{all_shortest_paths, Labels, PathConfig};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFormat {
    Penman,
    Conllu,
    /// Output of `preprocess`.
    Jsonl,
}

impl InputFormat {
    /// Guesses from the extension: `.jsonl`, `.conllu`, anything else is
    /// PENMAN.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") => InputFormat::Jsonl,
            Some("conllu") | Some("conll") => InputFormat::Conllu,
            _ => InputFormat::Penman,
        }
    }
}

impl std::str::FromStr for InputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "penman" | "amr" => Ok(InputFormat::Penman),
            "conllu" => Ok(InputFormat::Conllu),
            "jsonl" => Ok(InputFormat::Jsonl),
            other => Err(Error::Config(format!("unknown input format `{other}`"))),
        }
    }
}

/// One unaugmented graph with its optional reference text.
#[derive(Clone, Debug)]
pub struct Record {
    pub id: String,
    /// 1-based line where the graph starts in its source file.
    pub line: usize,
    pub graph: LabeledGraph,
    pub target: Option<String>,
}

/// Records that parsed, plus one message per skipped entry.
#[derive(Debug, Default)]
pub struct Corpus {
    pub records: Vec<Record>,
    pub warnings: Vec<String>,
}

/// `(line, id, target, parsed graph)` of one corpus entry.
type Entry = (usize, Option<String>, Option<String>, Result<LabeledGraph>);

fn collect(entries: Vec<Entry>, skip_bad: bool) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    for (k, (line, id, target, graph)) in entries.into_iter().enumerate() {
        match graph {
            Ok(graph) => corpus.records.push(Record {
                id: id.unwrap_or_else(|| format!("g{}", k + 1)),
                line,
                graph,
                target,
            }),
            Err(e) if skip_bad => corpus.warnings.push(format!("line {line}: {e}")),
            Err(e) => {
                return Err(Error::Format {
                    line,
                    msg: e.to_string(),
                })
            }
        }
    }
    if corpus.records.is_empty() {
        return Err(Error::Data("corpus contains no usable graphs".into()));
    }
    Ok(corpus)
}

/// Parses a whole corpus. Without `skip_bad` the first malformed entry is
/// an error carrying its line number.
pub fn read_corpus(text: &str, format: InputFormat, skip_bad: bool) -> Result<Corpus> {
    match format {
        InputFormat::Penman => collect(
            parse_penman_document(text)
                .into_iter()
                .map(|e| (e.line, e.id, e.sentence, e.graph))
                .collect(),
            skip_bad,
        ),
        InputFormat::Conllu => collect(
            parse_conllu_document(text)
                .into_iter()
                .map(|s| (s.line, None, s.target, s.graph))
                .collect(),
            skip_bad,
        ),
        InputFormat::Jsonl => {
            let mut entries = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let parsed = serde_json::from_str::<Preprocessed>(line)
                    .map_err(|e| Error::Parse {
                        offset: 0,
                        msg: e.to_string(),
                    })
                    .and_then(|p| p.graph().map(|g| (p.id, p.target, g)));
                entries.push(match parsed {
                    Ok((id, target, g)) => (i + 1, Some(id), target, Ok(g)),
                    Err(e) => (i + 1, None, None, Err(e)),
                });
            }
            collect(entries, skip_bad)
        }
    }
}

pub fn load_corpus(path: &Path, format: InputFormat, skip_bad: bool) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_corpus(&text, format, skip_bad)
}

/// One line of preprocessed JSONL: the original graph, its augmented
/// positions and statistics, and every retained relation path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessed {
    pub id: String,
    pub kind: GraphKind,
    /// Node labels in id order; the global node is last.
    pub nodes: Vec<String>,
    /// Edges of the unaugmented graph.
    pub edges: Vec<EdgeRecord>,
    pub root: usize,
    pub positions: Vec<usize>,
    pub stats: GraphStats,
    /// `paths[i * n + j]` for the augmented graph.
    pub paths: Vec<Vec<Labels>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

impl Preprocessed {
    pub fn new(rec: &Record, cfg: PathConfig) -> Result<Self> {
        let aug = rec.graph.augment()?;
        let table = all_shortest_paths(&aug, cfg)?;
        let n = table.n();
        Ok(Self {
            id: rec.id.clone(),
            kind: aug.kind(),
            nodes: aug.nodes().iter().map(|v| v.label.clone()).collect(),
            edges: aug.original_edges().cloned().collect(),
            root: aug.root(),
            positions: absolute_positions(&aug),
            stats: graph_stats(&aug),
            paths: (0..n * n).map(|k| table.paths(k / n, k % n).to_vec()).collect(),
            target: rec.target.clone(),
        })
    }

    /// Rebuilds the unaugmented graph.
    pub fn graph(&self) -> Result<LabeledGraph> {
        let original = self.nodes.len().checked_sub(1).ok_or_else(|| Error::Data("record without nodes".into()))?;
        let mut g = LabeledGraph::new(self.kind);
        for label in &self.nodes[..original] {
            g.add_node(label.as_str())?;
        }
        for e in &self.edges {
            g.add_edge(e.src, e.dst, e.label.as_str())?;
        }
        g.set_root(self.root)?;
        g.validate()?;
        Ok(g)
    }
}

/// Writes preprocessed records as JSONL.
pub fn write_jsonl(records: &[Preprocessed], mut out: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
    }
    Ok(())
}

/// Corpus-level averages in the spirit of a dataset statistics table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub graphs: usize,
    pub avg_nodes: f64,
    pub avg_edges: f64,
    pub avg_diameter: f64,
    pub avg_reentrancies: f64,
    pub max_nodes: usize,
}

pub fn summarize(graphs: &[&LabeledGraph]) -> CorpusSummary {
    let k = graphs.len().max(1) as f64;
    let stats: Vec<GraphStats> = graphs.iter().map(|g| graph_stats(g)).collect();
    let edges: usize = graphs.iter().map(|g| g.original_edges().count()).sum();
    CorpusSummary {
        graphs: graphs.len(),
        avg_nodes: stats.iter().map(|s| s.size).sum::<usize>() as f64 / k,
        avg_edges: edges as f64 / k,
        avg_diameter: stats.iter().map(|s| s.diameter).sum::<usize>() as f64 / k,
        avg_reentrancies: stats.iter().map(|s| s.reentrancies).sum::<usize>() as f64 / k,
        max_nodes: stats.iter().map(|s| s.size).max().unwrap_or(0),
    }
}

impl std::fmt::Display for CorpusSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "graphs={} n={:.2} m={:.2} diameter={:.2} reentrancies={:.2} max_n={}",
            self.graphs, self.avg_nodes, self.avg_edges, self.avg_diameter, self.avg_reentrancies, self.max_nodes
        )
    }
}

const SUBJECTS: [&str; 6] = ["boy", "girl", "cat", "dog", "teacher", "child"];
const VERBS: [(&str, &str); 5] = [
    ("see-01", "sees"),
    ("want-01", "wants"),
    ("like-01", "likes"),
    ("help-01", "helps"),
    ("follow-01", "follows"),
];
const MODIFIERS: [&str; 4] = ["tall", "small", "happy", "old"];

/// `n` distinct subject-verb-object graphs with their sentences, e.g.
/// `(l / like-01 :ARG0 (c / cat) :ARG1 (d / dog :mod (o / old)))` with
/// "the cat likes the old dog". Every third object carries a modifier.
pub fn synthetic_svo(n: usize, seed: u64) -> Result<Vec<(LabeledGraph, String)>> {
    let mut combos = Vec::new();
    for (s, subj) in SUBJECTS.iter().enumerate() {
        for verb in VERBS {
            for (o, obj) in SUBJECTS.iter().enumerate() {
                if s != o {
                    combos.push((*subj, verb, *obj));
                }
            }
        }
    }
    if n > combos.len() {
        return Err(Error::Config(format!("at most {} synthetic pairs exist", combos.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    combos.shuffle(&mut rng);
    combos
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(k, (subj, (frame, verb), obj))| {
            let modifier = (k % 3 == 2).then(|| MODIFIERS[(k / 3) % MODIFIERS.len()]);
            let object = match modifier {
                Some(m) => format!("(o / {obj} :mod (m / {m}))"),
                None => format!("(o / {obj})"),
            };
            let amr = format!("(v / {frame} :ARG0 (s / {subj}) :ARG1 {object})");
            let sentence = match modifier {
                Some(m) => format!("the {subj} {verb} the {m} {obj}"),
                None => format!("the {subj} {verb} the {obj}"),
            };
            Ok((parse_penman(&amr)?, sentence))
        })
        .collect()
}
