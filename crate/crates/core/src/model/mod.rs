//! Graph Transformer: relation encoder, relation-aware graph encoder and
//! copy-augmented sequence decoder.

pub mod decoder;
pub mod encoder;
pub mod layers;
pub mod relation;

use serde::{Deserialize, Serialize};

use gt_autodiff::{Float, ParamStore};

use crate::graph::{absolute_positions, graph_stats, GraphStats, LabeledGraph, GLOBAL_NODE_LABEL};
use crate::relpath::{all_shortest_paths, PathConfig, PathTable};
use crate::vocab::{Vocabs, BOS, EOS};
use crate::{Error, Result};

pub use decoder::{Decoder, GateMode, Hypothesis, StepDistribution};
pub use encoder::{Encoder, EncoderOutput, RelationInputs};
pub use layers::Ctx;
pub use relation::RelationEncoder;

/// Network dimensions. Defaults follow the reference hyper-parameters;
/// `layers` is not fixed there and defaults to 6.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub char_emb: usize,
    pub char_filters: usize,
    pub char_width: usize,
    pub char_out: usize,
    pub node_emb: usize,
    pub edge_emb: usize,
    pub token_emb: usize,
    /// GRU hidden size per direction of the relation encoder.
    pub rel_hidden: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub layers: usize,
    pub dropout: f64,
    pub max_position: usize,
    pub path_cap: usize,
    pub max_path_len: usize,
    /// Turns the copy mechanism on; off means plain softmax over the vocabulary.
    pub copy: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            char_emb: 32,
            char_filters: 256,
            char_width: 3,
            char_out: 128,
            node_emb: 300,
            edge_emb: 200,
            token_emb: 300,
            rel_hidden: 128,
            heads: 8,
            d_model: 512,
            d_ff: 1024,
            layers: 6,
            dropout: 0.2,
            max_position: 255,
            path_cap: 4,
            max_path_len: 8,
            copy: true,
        }
    }
}

impl ModelConfig {
    /// Small dimensions for gradient checks and fast tests.
    pub fn tiny() -> Self {
        Self {
            char_emb: 4,
            char_filters: 6,
            char_width: 3,
            char_out: 5,
            node_emb: 6,
            edge_emb: 5,
            token_emb: 6,
            rel_hidden: 4,
            heads: 2,
            d_model: 8,
            d_ff: 12,
            layers: 1,
            dropout: 0.0,
            max_position: 16,
            path_cap: 4,
            max_path_len: 8,
            copy: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("char_emb", self.char_emb),
            ("char_filters", self.char_filters),
            ("char_width", self.char_width),
            ("char_out", self.char_out),
            ("node_emb", self.node_emb),
            ("edge_emb", self.edge_emb),
            ("token_emb", self.token_emb),
            ("rel_hidden", self.rel_hidden),
            ("heads", self.heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("path_cap", self.path_cap),
            ("max_path_len", self.max_path_len),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn path_config(&self) -> PathConfig {
        PathConfig {
            cap: self.path_cap,
            max_len: self.max_path_len,
        }
    }
}

/// An augmented graph with everything the encoder reads.
#[derive(Clone, Debug)]
pub struct GraphInput {
    pub graph: LabeledGraph,
    pub positions: Vec<usize>,
    pub paths: PathTable,
    pub stats: GraphStats,
    /// Node vocabulary ids, global node last.
    pub labels: Vec<usize>,
    pub chars: Vec<Vec<usize>>,
}

impl GraphInput {
    /// Augments `g` (when needed), assigns positions and computes paths.
    /// Edge labels outside the closed edge vocabulary are rejected here.
    pub fn new(g: &LabeledGraph, vocabs: &Vocabs, cfg: &ModelConfig) -> Result<Self> {
        let graph = if g.is_augmented() { g.clone() } else { g.augment()? };
        for e in graph.edges() {
            vocabs.edge_id(&e.label)?;
        }
        let positions = absolute_positions(&graph);
        let paths = all_shortest_paths(&graph, cfg.path_config())?;
        let stats = graph_stats(&graph);
        let labels = graph
            .nodes()
            .iter()
            .map(|n| vocabs.node.id_or_unk(&n.label))
            .collect();
        let chars = graph.nodes().iter().map(|n| vocabs.char_ids(&n.label)).collect();
        Ok(Self {
            graph,
            positions,
            paths,
            stats,
            labels,
            chars,
        })
    }

    /// Number of ordinary (non-global) nodes.
    pub fn n(&self) -> usize {
        self.graph.original_len()
    }

    /// Surface forms of the ordinary nodes, used by the copy mechanism.
    pub fn surface_forms(&self) -> Vec<&str> {
        self.graph.nodes()[..self.n()]
            .iter()
            .map(|n| n.label.as_str())
            .collect()
    }

    /// Replaces node label ids (not characters) by `<unk>` where `mask` is
    /// set; the global node is never replaced.
    pub fn with_unk(&self, mask: &[bool], unk: usize) -> Self {
        let mut out = self.clone();
        for (i, &m) in mask.iter().enumerate().take(self.n()) {
            if m {
                out.labels[i] = unk;
            }
        }
        out
    }
}

/// A tokenized target sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetInput {
    pub words: Vec<String>,
}

impl TargetInput {
    pub fn new(sentence: &str) -> Result<Self> {
        let words: Vec<String> = sentence.split_whitespace().map(str::to_string).collect();
        if words.is_empty() {
            return Err(Error::Data("empty target sentence".into()));
        }
        Ok(Self { words })
    }

    /// Decoder inputs `<s> y1 … yT` with the gold outputs `y1 … yT </s>`.
    pub fn teacher_forcing(&self) -> (Vec<String>, Vec<String>) {
        let mut inputs = vec![BOS.to_string()];
        inputs.extend(self.words.iter().cloned());
        let mut outputs = self.words.clone();
        outputs.push(EOS.to_string());
        (inputs, outputs)
    }
}

#[derive(Clone, Debug)]
pub struct Example {
    pub graph: GraphInput,
    pub target: Option<TargetInput>,
}

/// Parameters and vocabularies of a complete model.
#[derive(Clone, Debug)]
pub struct Model<F: Float> {
    pub config: ModelConfig,
    pub vocabs: Vocabs,
    pub store: ParamStore<F>,
    pub relation: RelationEncoder,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl<F: Float> Model<F> {
    /// Registers all parameters in a fixed order; `seed` drives their
    /// initialization.
    pub fn new(config: ModelConfig, vocabs: Vocabs, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocabs.node.get(GLOBAL_NODE_LABEL).is_none() {
            return Err(Error::Config("node vocabulary lacks the global node entry".into()));
        }
        let mut store = ParamStore::new(seed);
        let relation = RelationEncoder::new(&mut store, &config, vocabs.edge.len());
        let encoder = Encoder::new(&mut store, &config, &vocabs);
        let decoder = Decoder::new(&mut store, &config, &vocabs);
        Ok(Self {
            config,
            vocabs,
            store,
            relation,
            encoder,
            decoder,
        })
    }

    pub fn prepare(&self, g: &LabeledGraph, target: Option<&str>) -> Result<Example> {
        Ok(Example {
            graph: GraphInput::new(g, &self.vocabs, &self.config)?,
            target: target.map(TargetInput::new).transpose()?,
        })
    }

    /// Rebuilds the model around parameters read from a checkpoint.
    pub fn with_params(config: ModelConfig, vocabs: Vocabs, tensors: Vec<(String, gt_autodiff::Matrix<F>)>) -> Result<Self> {
        let mut model = Self::new(config, vocabs, 0)?;
        let expected = model.store.len();
        let mut seen = 0;
        for (name, value) in tensors {
            if model.store.id(&name).is_some() {
                model.store.set(&name, value)?;
                seen += 1;
            }
        }
        if seen != expected {
            return Err(Error::Version(format!(
                "checkpoint provides {seen} of {expected} model parameters"
            )));
        }
        Ok(model)
    }
}
