//! Transformer decoder with a copy mechanism over node surface forms.

use gt_autodiff::{Float, Init, Matrix, ParamId, ParamStore, Tape, Var};

use super::encoder::EncoderOutput;
use super::layers::{causal_mask, clip_positions, Attention, CharCnn, Ctx, FeedForward, LayerNorm, Linear};
use super::{GraphInput, Model, ModelConfig};
use crate::relpath::Mode;
use crate::vocab::{Vocabs, BOS, EOS, PAD, UNK};
use crate::Result;

#[derive(Clone, Copy, Debug)]
pub struct DecoderLayer {
    pub self_attn: Attention,
    pub ln1: LayerNorm,
    pub cross: Attention,
    pub ln2: LayerNorm,
    pub ffn: FeedForward,
    pub ln3: LayerNorm,
}

#[derive(Clone, Debug)]
pub struct Decoder {
    pub tok_emb: ParamId,
    pub chars: CharCnn,
    pub input: Linear,
    pub pos_emb: ParamId,
    pub layers: Vec<DecoderLayer>,
    pub out: Linear,
    /// Query map of the single-head copy attention, `[d, d]`.
    pub copy_q: ParamId,
    /// Two-way generate/copy switch.
    pub gate: Linear,
    pub max_position: usize,
    pub copy: bool,
}

/// How the generate/copy switch is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateMode {
    Learned,
    /// `P(gen) = 1`: the mixture reduces to the vocabulary softmax.
    ForceGen,
}

/// A decoder input token: vocabulary id (or `<unk>`) plus characters of the
/// actual surface string.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenIn {
    pub id: usize,
    pub chars: Vec<usize>,
}

impl TokenIn {
    pub fn new(vocabs: &Vocabs, word: &str) -> Self {
        Self {
            id: vocabs.token.id_or_unk(word),
            chars: vocabs.char_ids(word),
        }
    }
}

/// Encoder output prepared for decoding: node memory and the per-layer
/// cross-attention keys and values.
pub struct Memory {
    pub node_reps: Var,
    pub global: Var,
    cross: Vec<(Var, Var)>,
}

/// Self-attention keys and values of the prefix, per layer.
#[derive(Clone, Debug, Default)]
pub struct Cache {
    layers: Vec<(Var, Var)>,
}

impl Cache {
    pub fn len<F: Float>(&self, tape: &Tape<F>) -> usize {
        self.layers.first().map(|(k, _)| tape.shape(*k).0).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// Output distributions of a decoder state (as tape values).
pub struct StepDistribution {
    pub logits: Var,
    /// `gen(y | h)`, `[T, |V|]`.
    pub gen: Var,
    /// Copy attention over ordinary nodes, `[T, n]`.
    pub copy: Option<Var>,
    /// `[P(gen), P(copy)]` per row, `[T, 2]`.
    pub gate: Option<Var>,
}

/// Extended output space: the vocabulary followed by node surface forms
/// that are not in it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CopyMap {
    pub vocab: usize,
    pub oov: Vec<String>,
    /// Extended id of each ordinary node's surface form.
    pub node_ext: Vec<usize>,
}

impl CopyMap {
    pub fn new(vocabs: &Vocabs, forms: &[&str]) -> Self {
        let vocab = vocabs.token.len();
        let mut oov: Vec<String> = Vec::new();
        let node_ext = forms
            .iter()
            .map(|f| match vocabs.token.get(f) {
                Some(id) => id,
                None => match oov.iter().position(|o| o == f) {
                    Some(k) => vocab + k,
                    None => {
                        oov.push(f.to_string());
                        vocab + oov.len() - 1
                    }
                },
            })
            .collect();
        Self { vocab, oov, node_ext }
    }

    pub fn len(&self) -> usize {
        self.vocab + self.oov.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Extended id of a gold word; unknown, uncopyable words map to `<unk>`.
    pub fn ext_id(&self, vocabs: &Vocabs, word: &str) -> usize {
        vocabs
            .token
            .get(word)
            .or_else(|| self.oov.iter().position(|o| o == word).map(|k| self.vocab + k))
            .unwrap_or_else(|| vocabs.token.id_or_unk(UNK))
    }

    pub fn word<'a>(&'a self, vocabs: &'a Vocabs, ext: usize) -> &'a str {
        if ext < self.vocab {
            vocabs.token.item(ext)
        } else {
            &self.oov[ext - self.vocab]
        }
    }
}

impl Decoder {
    pub fn new<F: Float>(store: &mut ParamStore<F>, cfg: &ModelConfig, vocabs: &Vocabs) -> Self {
        let d = cfg.d_model;
        let tok_emb = store.add("dec.tok_emb", (vocabs.token.len(), cfg.token_emb), Init::Xavier);
        let chars = CharCnn::new(
            store,
            "dec.char",
            vocabs.chars.len(),
            cfg.char_emb,
            cfg.char_filters,
            cfg.char_width,
            cfg.char_out,
        );
        let input = Linear::new(store, "dec.input", cfg.token_emb + cfg.char_out, d, true);
        let pos_emb = store.add("dec.pos_emb", (cfg.max_position + 1, d), Init::Xavier);
        let layers = (0..cfg.layers)
            .map(|l| DecoderLayer {
                self_attn: Attention::new(store, &format!("dec.{l}.self"), d, cfg.heads),
                ln1: LayerNorm::new(store, &format!("dec.{l}.ln1"), d),
                cross: Attention::new(store, &format!("dec.{l}.cross"), d, cfg.heads),
                ln2: LayerNorm::new(store, &format!("dec.{l}.ln2"), d),
                ffn: FeedForward::new(store, &format!("dec.{l}.ffn"), d, cfg.d_ff),
                ln3: LayerNorm::new(store, &format!("dec.{l}.ln3"), d),
            })
            .collect();
        let out = Linear::new(store, "dec.out", d, vocabs.token.len(), true);
        let copy_q = store.add("dec.copy_q", (d, d), Init::Xavier);
        let gate = Linear::new(store, "dec.gate", d, 2, true);
        Self {
            tok_emb,
            chars,
            input,
            pos_emb,
            layers,
            out,
            copy_q,
            gate,
            max_position: cfg.max_position,
            copy: cfg.copy,
        }
    }

    /// Precomputes cross-attention keys and values over ordinary nodes; the
    /// global row is never part of the memory.
    pub fn memory<F: Float>(&self, ctx: &Ctx<F>, enc: &EncoderOutput) -> Result<Memory> {
        let t = ctx.tape;
        let cross = self
            .layers
            .iter()
            .map(|l| {
                Ok((
                    t.matmul(enc.node_reps, ctx.p(l.cross.wk))?,
                    t.matmul(enc.node_reps, ctx.p(l.cross.wv))?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Memory {
            node_reps: enc.node_reps,
            global: enc.global,
            cross,
        })
    }

    /// `Proj([tok_emb ; charCNN]) + pos_emb(t) + x_global` for each token.
    fn embed<F: Float>(&self, ctx: &Ctx<F>, mem: &Memory, tokens: &[TokenIn], first_pos: usize) -> Result<Var> {
        let t = ctx.tape;
        let ids: Vec<usize> = tokens.iter().map(|k| k.id).collect();
        let chars: Vec<Vec<usize>> = tokens.iter().map(|k| k.chars.clone()).collect();
        let emb = t.embedding_lookup(ctx.p(self.tok_emb), &ids)?;
        let ch = self.chars.forward(ctx, &chars)?;
        let x = self.input.forward(ctx, t.concat(&[emb, ch], 1)?)?;
        let positions: Vec<usize> = (first_pos..first_pos + tokens.len()).collect();
        let pos = t.embedding_lookup(
            ctx.p(self.pos_emb),
            &clip_positions(&positions, self.max_position),
        )?;
        let x = t.add(x, pos)?;
        let x = t.add_row(x, mem.global)?;
        ctx.dropout(x)
    }

    fn cross_and_ffn<F: Float>(&self, ctx: &Ctx<F>, mem: &Memory, l: usize, x: Var) -> Result<Var> {
        let t = ctx.tape;
        let layer = &self.layers[l];
        let q = t.matmul(x, ctx.p(layer.cross.wq))?;
        let (k, v) = mem.cross[l];
        let s = layer.cross.scores(ctx, q, k, None)?;
        let (c, _) = layer.cross.combine(ctx, &s, v)?;
        let c = ctx.dropout(c)?;
        let x = layer.ln2.forward(ctx, t.add(x, c)?)?;
        let f = layer.ffn.forward(ctx, x)?;
        let f = ctx.dropout(f)?;
        layer.ln3.forward(ctx, t.add(x, f)?)
    }

    /// Hidden states for a whole teacher-forced input sequence, `[T, d]`.
    pub fn decode_train<F: Float>(&self, ctx: &Ctx<F>, mem: &Memory, tokens: &[TokenIn]) -> Result<Var> {
        if tokens.is_empty() {
            return Err(crate::Error::Data("empty decoder input".into()));
        }
        let t = ctx.tape;
        let mut x = self.embed(ctx, mem, tokens, 0)?;
        let mask = ctx.constant(causal_mask(tokens.len()));
        for (l, layer) in self.layers.iter().enumerate() {
            let (a, _) = layer.self_attn.forward(ctx, x, x, Some(mask))?;
            let a = ctx.dropout(a)?;
            x = layer.ln1.forward(ctx, t.add(x, a)?)?;
            x = self.cross_and_ffn(ctx, mem, l, x)?;
        }
        Ok(x)
    }

    /// One incremental step at position `cache.len()`; returns the extended
    /// cache and the hidden state `[1, d]`.
    pub fn step<F: Float>(&self, ctx: &Ctx<F>, mem: &Memory, cache: &Cache, token: &TokenIn) -> Result<(Cache, Var)> {
        let t = ctx.tape;
        let pos = cache.len(t);
        let mut x = self.embed(ctx, mem, std::slice::from_ref(token), pos)?;
        let mut next = Cache {
            layers: Vec::with_capacity(self.layers.len()),
        };
        for (l, layer) in self.layers.iter().enumerate() {
            let sa = &layer.self_attn;
            let q = t.matmul(x, ctx.p(sa.wq))?;
            let k = t.matmul(x, ctx.p(sa.wk))?;
            let v = t.matmul(x, ctx.p(sa.wv))?;
            let (k, v) = match cache.layers.get(l) {
                Some(&(pk, pv)) => (t.concat(&[pk, k], 0)?, t.concat(&[pv, v], 0)?),
                None => (k, v),
            };
            next.layers.push((k, v));
            let s = sa.scores(ctx, q, k, None)?;
            let (a, _) = sa.combine(ctx, &s, v)?;
            let a = ctx.dropout(a)?;
            x = layer.ln1.forward(ctx, t.add(x, a)?)?;
            x = self.cross_and_ffn(ctx, mem, l, x)?;
        }
        Ok((next, x))
    }

    /// Generation softmax, copy attention and switch for hidden states `h`.
    pub fn copy_distribution<F: Float>(
        &self,
        ctx: &Ctx<F>,
        h: Var,
        mem: &Memory,
        gate: GateMode,
    ) -> Result<StepDistribution> {
        let t = ctx.tape;
        let logits = self.out.forward(ctx, h)?;
        let gen = t.softmax(logits);
        if !self.copy {
            return Ok(StepDistribution {
                logits,
                gen,
                copy: None,
                gate: None,
            });
        }
        let d = ctx.store.value(self.copy_q).ncols();
        let cq = t.matmul(h, ctx.p(self.copy_q))?;
        let s = t.matmul_t(cq, mem.node_reps)?;
        let copy = t.softmax(t.scale(s, F::from_f64(1.0 / (d as f64).sqrt())));
        let rows = t.shape(h).0;
        let g = match gate {
            GateMode::Learned => t.softmax(self.gate.forward(ctx, h)?),
            GateMode::ForceGen => ctx.constant(Matrix::from_shape_fn((rows, 2), |(_, c)| {
                if c == 0 {
                    F::one()
                } else {
                    F::zero()
                }
            })),
        };
        Ok(StepDistribution {
            logits,
            gen,
            copy: Some(copy),
            gate: Some(g),
        })
    }

    /// `P(y_t)` of each gold word under the full mixture, `[T, 1]`.
    pub fn gold_probability<F: Float>(
        &self,
        ctx: &Ctx<F>,
        dist: &StepDistribution,
        vocabs: &Vocabs,
        map: &CopyMap,
        gold: &[String],
    ) -> Result<Var> {
        let t = ctx.tape;
        let ext: Vec<usize> = gold.iter().map(|w| map.ext_id(vocabs, w)).collect();
        let gen_ids: Vec<usize> = ext
            .iter()
            .map(|&e| if e < map.vocab { e } else { vocabs.token.id_or_unk(UNK) })
            .collect();
        let picked = t.pick(dist.gen, &gen_ids)?;
        let (Some(copy), Some(gate)) = (dist.copy, dist.gate) else {
            return Ok(picked);
        };
        // copyable out-of-vocabulary words get no generation mass
        let gen_mask = Matrix::from_shape_fn((gold.len(), 1), |(r, _)| {
            if ext[r] < map.vocab {
                F::one()
            } else {
                F::zero()
            }
        });
        let picked = t.mul(picked, ctx.constant(gen_mask))?;
        let n = map.node_ext.len();
        let copy_mask = Matrix::from_shape_fn((gold.len(), n), |(r, i)| {
            if map.node_ext[i] == ext[r] {
                F::one()
            } else {
                F::zero()
            }
        });
        let masked = t.mul(copy, ctx.constant(copy_mask))?;
        let copied = t.matmul(masked, ctx.constant(Matrix::ones((n, 1))))?;
        let gates = t.split(gate, &[1, 1])?;
        let p_gen = t.mul(gates[0], picked)?;
        let p_copy = t.mul(gates[1], copied)?;
        Ok(t.add(p_gen, p_copy)?)
    }

    /// The mixture over the extended output space as plain values,
    /// `[T, |V| + |oov|]`.
    pub fn mixture<F: Float>(&self, tape: &Tape<F>, dist: &StepDistribution, map: &CopyMap) -> Matrix<f64> {
        let gen = tape.value(dist.gen);
        let rows = gen.nrows();
        let mut out = Matrix::<f64>::zeros((rows, map.len()));
        let (copy, gate) = match (dist.copy, dist.gate) {
            (Some(c), Some(g)) => (Some(tape.value(c).clone()), Some(tape.value(g).clone())),
            _ => (None, None),
        };
        for r in 0..rows {
            let (pg, pc) = match &gate {
                Some(g) => (g[[r, 0]].to_f64(), g[[r, 1]].to_f64()),
                None => (1.0, 0.0),
            };
            for y in 0..map.vocab {
                out[[r, y]] = pg * gen[[r, y]].to_f64();
            }
            if let Some(c) = &copy {
                for (i, &e) in map.node_ext.iter().enumerate() {
                    out[[r, e]] += pc * c[[r, i]].to_f64();
                }
            }
        }
        out
    }
}

/// A decoded output sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub words: Vec<String>,
    /// Extended output ids including the final `</s>` when finished.
    pub ids: Vec<usize>,
    /// Sum of per-step log-probabilities.
    pub score: f64,
    /// False when `max_len` was reached without `</s>`.
    pub finished: bool,
}

impl Hypothesis {
    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

/// Restores output words produced by the copy mechanism (for example
/// de-anonymizing entity placeholders). The default keeps words as-is.
pub trait SurfaceHook {
    fn restore(&self, word: &str) -> String {
        word.to_string()
    }
}

/// Identity [`SurfaceHook`].
pub struct Identity;

impl SurfaceHook for Identity {}

struct Beam {
    ids: Vec<usize>,
    score: f64,
    cache: Cache,
}

impl<F: Float> Model<F> {
    /// Encodes a batch of graphs on one tape, sharing relation-path
    /// encodings across the batch.
    pub fn encode_batch(
        &self,
        ctx: &Ctx<F>,
        graphs: &[&GraphInput],
        mode: Mode,
        seed: u64,
    ) -> Result<Vec<EncoderOutput>> {
        let rels = self
            .relation
            .encode_batch(ctx, &self.vocabs, graphs, mode, seed)?;
        graphs
            .iter()
            .zip(&rels)
            .map(|(g, r)| self.encoder.encode(ctx, g, Some(r)))
            .collect()
    }

    /// Log-probabilities over the extended space for the next word given
    /// the decoder state after `cache`. `<pad>` and `<s>` are never
    /// proposed.
    fn next_log_probs(
        &self,
        ctx: &Ctx<F>,
        mem: &Memory,
        map: &CopyMap,
        cache: &Cache,
        last: usize,
    ) -> Result<(Cache, Vec<f64>)> {
        let word = map.word(&self.vocabs, last);
        let token = TokenIn {
            id: if last < map.vocab { last } else { self.vocabs.token.id_or_unk(UNK) },
            chars: self.vocabs.char_ids(word),
        };
        let (cache, h) = self.decoder.step(ctx, mem, cache, &token)?;
        let dist = self.decoder.copy_distribution(ctx, h, mem, GateMode::Learned)?;
        let p = self.decoder.mixture(ctx.tape, &dist, map);
        let mut lp: Vec<f64> = p.row(0).iter().map(|&x| x.max(1e-300).ln()).collect();
        for banned in [PAD, BOS] {
            if let Some(id) = self.vocabs.token.get(banned) {
                lp[id] = f64::NEG_INFINITY;
            }
        }
        Ok((cache, lp))
    }

    /// Greedy decoding: the most probable word at every step, ties to the
    /// lowest id.
    pub fn greedy(&self, g: &GraphInput, max_len: usize) -> Result<Hypothesis> {
        let tape = Tape::new(false);
        let ctx = Ctx::new(&tape, &self.store, 0.0, 0);
        let enc = self.encode_batch(&ctx, &[g], Mode::Test, 0)?.remove(0);
        let mem = self.decoder.memory(&ctx, &enc)?;
        let map = CopyMap::new(&self.vocabs, &g.surface_forms());
        let bos = self.vocabs.token.id_or_unk(BOS);
        let eos = self.vocabs.token.id_or_unk(EOS);
        let mut cache = Cache::default();
        let (mut ids, mut score, mut last) = (Vec::new(), 0.0, bos);
        for _ in 0..max_len {
            let (next, lp) = self.next_log_probs(&ctx, &mem, &map, &cache, last)?;
            cache = next;
            let best = argmax(&lp);
            score += lp[best];
            ids.push(best);
            last = best;
            if best == eos {
                break;
            }
        }
        Ok(self.finish(&map, ids, score, eos))
    }

    /// Beam search without length normalization. Finished hypotheses are
    /// retired; the search stops once no live hypothesis can beat the best
    /// finished one (scores only decrease) or at `max_len`.
    pub fn beam_search(&self, g: &GraphInput, beam: usize, max_len: usize) -> Result<Hypothesis> {
        let beam = beam.max(1);
        let tape = Tape::new(false);
        let ctx = Ctx::new(&tape, &self.store, 0.0, 0);
        let enc = self.encode_batch(&ctx, &[g], Mode::Test, 0)?.remove(0);
        let mem = self.decoder.memory(&ctx, &enc)?;
        let map = CopyMap::new(&self.vocabs, &g.surface_forms());
        let bos = self.vocabs.token.id_or_unk(BOS);
        let eos = self.vocabs.token.id_or_unk(EOS);

        let mut alive = vec![Beam {
            ids: Vec::new(),
            score: 0.0,
            cache: Cache::default(),
        }];
        let mut done: Vec<(Vec<usize>, f64)> = Vec::new();
        for _ in 0..max_len {
            let mut cands: Vec<(f64, usize, usize, Cache)> = Vec::new();
            for (b, hyp) in alive.iter().enumerate() {
                let last = hyp.ids.last().copied().unwrap_or(bos);
                let (cache, lp) = self.next_log_probs(&ctx, &mem, &map, &hyp.cache, last)?;
                for y in top_k(&lp, beam) {
                    cands.push((hyp.score + lp[y], b, y, cache.clone()));
                }
            }
            // stable order: score desc, then parent, then word id
            cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            cands.truncate(beam);
            let mut next = Vec::new();
            for (score, b, y, cache) in cands {
                let mut ids = alive[b].ids.clone();
                ids.push(y);
                if y == eos {
                    done.push((ids, score));
                } else {
                    next.push(Beam { ids, score, cache });
                }
            }
            alive = next;
            let best_done = done.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
            let best_alive = alive.iter().map(|b| b.score).fold(f64::NEG_INFINITY, f64::max);
            if alive.is_empty() || done.len() >= beam || best_done >= best_alive {
                break;
            }
        }
        let best = done
            .into_iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .or_else(|| {
                alive
                    .into_iter()
                    .map(|b| (b.ids, b.score))
                    .max_by(|a, b| a.1.total_cmp(&b.1))
            })
            .unwrap_or((Vec::new(), f64::NEG_INFINITY));
        Ok(self.finish(&map, best.0, best.1, eos))
    }

    fn finish(&self, map: &CopyMap, ids: Vec<usize>, score: f64, eos: usize) -> Hypothesis {
        let finished = ids.last() == Some(&eos);
        let words = ids
            .iter()
            .filter(|&&i| i != eos)
            .map(|&i| Identity.restore(map.word(&self.vocabs, i)))
            .collect();
        Hypothesis {
            words,
            ids,
            score,
            finished,
        }
    }
}

/// Index of the largest value; the lowest index wins ties.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// The `k` largest entries, ordered by value then index.
fn top_k(v: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}
