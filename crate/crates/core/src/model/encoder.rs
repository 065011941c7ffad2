//! Node initialization and stacked relation-aware global attention.

use gt_autodiff::{Float, Init, Matrix, ParamId, ParamStore, Var};

use super::layers::{clip_positions, Attention, CharCnn, Ctx, FeedForward, LayerNorm, Linear};
use super::{GraphInput, ModelConfig};
use crate::vocab::Vocabs;
use crate::Result;

/// Split relation encodings of every ordered pair of one graph; row
/// `i·n + j` holds `r_{i→j}` in `fwd` and `r_{j→i}` in `bwd`.
#[derive(Clone, Copy, Debug)]
pub struct RelationInputs {
    pub fwd: Var,
    pub bwd: Var,
    pub n: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderLayer {
    pub attn: Attention,
    pub ln1: LayerNorm,
    pub ffn: FeedForward,
    pub ln2: LayerNorm,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub node_emb: ParamId,
    pub chars: CharCnn,
    pub input: Linear,
    pub pos_emb: ParamId,
    pub layers: Vec<EncoderLayer>,
    pub max_position: usize,
}

pub struct EncoderOutput {
    /// `[n + 1, d]`, global node last.
    pub states: Var,
    /// `[n, d]`, ordinary nodes only.
    pub node_reps: Var,
    /// `[1, d]`
    pub global: Var,
    /// Attention weights per layer and head, each `[n + 1, n + 1]`.
    pub attention: Vec<Vec<Var>>,
}

impl Encoder {
    pub fn new<F: Float>(store: &mut ParamStore<F>, cfg: &ModelConfig, vocabs: &Vocabs) -> Self {
        let d = cfg.d_model;
        let node_emb = store.add("enc.node_emb", (vocabs.node.len(), cfg.node_emb), Init::Xavier);
        let chars = CharCnn::new(
            store,
            "enc.char",
            vocabs.chars.len(),
            cfg.char_emb,
            cfg.char_filters,
            cfg.char_width,
            cfg.char_out,
        );
        let input = Linear::new(store, "enc.input", cfg.node_emb + cfg.char_out, d, true);
        let pos_emb = store.add("enc.pos_emb", (cfg.max_position + 1, d), Init::Xavier);
        let layers = (0..cfg.layers)
            .map(|l| EncoderLayer {
                attn: Attention::new(store, &format!("enc.{l}.attn"), d, cfg.heads),
                ln1: LayerNorm::new(store, &format!("enc.{l}.ln1"), d),
                ffn: FeedForward::new(store, &format!("enc.{l}.ffn"), d, cfg.d_ff),
                ln2: LayerNorm::new(store, &format!("enc.{l}.ln2"), d),
            })
            .collect();
        Self {
            node_emb,
            chars,
            input,
            pos_emb,
            layers,
            max_position: cfg.max_position,
        }
    }

    /// `x⁰ = Proj([node_emb ; charCNN]) + pos_emb(position)`, `[n + 1, d]`.
    pub fn node_init<F: Float>(&self, ctx: &Ctx<F>, g: &GraphInput) -> Result<Var> {
        let t = ctx.tape;
        let emb = t.embedding_lookup(ctx.p(self.node_emb), &g.labels)?;
        let chars = self.chars.forward(ctx, &g.chars)?;
        let cat = t.concat(&[emb, chars], 1)?;
        let x = self.input.forward(ctx, cat)?;
        let pos = t.embedding_lookup(
            ctx.p(self.pos_emb),
            &clip_positions(&g.positions, self.max_position),
        )?;
        let x = t.add(x, pos)?;
        ctx.dropout(x)
    }

    pub fn encode<F: Float>(&self, ctx: &Ctx<F>, g: &GraphInput, rel: Option<&RelationInputs>) -> Result<EncoderOutput> {
        let t = ctx.tape;
        let mut x = self.node_init(ctx, g)?;
        let mut attention = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, weights) = encoder_block(ctx, layer, x, rel)?;
            x = y;
            attention.push(weights);
        }
        let n = g.n();
        Ok(EncoderOutput {
            states: x,
            node_reps: t.slice_rows(x, 0, n)?,
            global: t.slice_rows(x, n, 1)?,
            attention,
        })
    }
}

/// Per-head scaled scores of relation-aware attention:
///
/// ```text
/// s_ij = (x_i + r_{i→j}) W_q · (x_j + r_{j→i}) W_k / √d_head
///      = q_i·k_j + q_i·(r_{j→i} W_k) + (r_{i→j} W_q)·k_j + (r_{i→j} W_q)·(r_{j→i} W_k)
/// ```
///
/// The first term is the plain `Q Kᵀ` product; the other three are
/// evaluated pairwise and summed per head through a block indicator. With
/// all relation rows zero they contribute exact zeros.
pub fn relation_scores<F: Float>(
    ctx: &Ctx<F>,
    attn: &Attention,
    x: Var,
    rel: Option<&RelationInputs>,
) -> Result<Vec<Var>> {
    let t = ctx.tape;
    let (wq, wk) = (ctx.p(attn.wq), ctx.p(attn.wk));
    let q = t.matmul(x, wq)?;
    let k = t.matmul(x, wk)?;
    let dh = attn.d_head(ctx);
    let scale = F::from_f64(1.0 / (dh as f64).sqrt());
    let mut content = Vec::with_capacity(attn.heads);
    for h in 0..attn.heads {
        let qh = t.slice_cols(q, h * dh, dh)?;
        let kh = t.slice_cols(k, h * dh, dh)?;
        content.push(t.matmul_t(qh, kh)?);
    }
    let Some(rel) = rel else {
        return Ok(content.into_iter().map(|s| t.scale(s, scale)).collect());
    };
    let n = rel.n;
    let qr = t.matmul(rel.fwd, wq)?;
    let kr = t.matmul(rel.bwd, wk)?;
    let rows_i: Vec<usize> = (0..n * n).map(|p| p / n).collect();
    let rows_j: Vec<usize> = (0..n * n).map(|p| p % n).collect();
    let q_rep = t.embedding_lookup(q, &rows_i)?;
    let k_rep = t.embedding_lookup(k, &rows_j)?;
    let b = t.mul(q_rep, kr)?;
    let c = t.mul(qr, k_rep)?;
    let d = t.mul(qr, kr)?;
    let bcd = t.add(t.add(b, c)?, d)?;
    let width = dh * attn.heads;
    let blocks = ctx.constant(Matrix::from_shape_fn((width, attn.heads), |(r, h)| {
        if r / dh == h {
            F::one()
        } else {
            F::zero()
        }
    }));
    let per_head = t.matmul(bcd, blocks)?;
    content
        .into_iter()
        .enumerate()
        .map(|(h, a)| {
            let col = t.slice_cols(per_head, h, 1)?;
            let grid = t.reshape(col, n, n)?;
            Ok(t.scale(t.add(a, grid)?, scale))
        })
        .collect()
}

/// Multi-head relation-aware attention over all nodes (no adjacency mask).
pub fn relation_attention<F: Float>(
    ctx: &Ctx<F>,
    attn: &Attention,
    x: Var,
    rel: Option<&RelationInputs>,
) -> Result<(Var, Vec<Var>)> {
    let scores = relation_scores(ctx, attn, x, rel)?;
    for (h, &s) in scores.iter().enumerate() {
        let v = ctx.tape.value(s);
        if let Some(((i, j), _)) = v.indexed_iter().find(|(_, x)| !x.is_finite()) {
            return Err(crate::Error::Internal(format!(
                "non-finite attention score for pair ({i}, {j}) in head {h}"
            )));
        }
    }
    let v = ctx.tape.matmul(x, ctx.p(attn.wv))?;
    attn.combine(ctx, &scores, v)
}

/// `X' = LN(X + Drop(MHA(X, R)))`, `X'' = LN(X' + Drop(FFN(X')))`.
pub fn encoder_block<F: Float>(
    ctx: &Ctx<F>,
    layer: &EncoderLayer,
    x: Var,
    rel: Option<&RelationInputs>,
) -> Result<(Var, Vec<Var>)> {
    let t = ctx.tape;
    let (a, weights) = relation_attention(ctx, &layer.attn, x, rel)?;
    let a = ctx.dropout(a)?;
    let x = layer.ln1.forward(ctx, t.add(x, a)?)?;
    let f = layer.ffn.forward(ctx, x)?;
    let f = ctx.dropout(f)?;
    let x = layer.ln2.forward(ctx, t.add(x, f)?)?;
    Ok((x, weights))
}
