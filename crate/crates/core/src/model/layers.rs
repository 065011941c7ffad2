//! Parameterized building blocks shared by the encoder and decoder.

use std::cell::Cell;

use gt_autodiff::rng::mix;
use gt_autodiff::{Float, Init, Matrix, ParamId, ParamStore, Tape, Var};

use crate::vocab::CHAR_PAD;
use crate::Result;

/// Forward-pass context: tape, parameters and the dropout stream.
pub struct Ctx<'a, F: Float> {
    pub tape: &'a Tape<F>,
    pub store: &'a ParamStore<F>,
    dropout: f64,
    seed: u64,
    counter: Cell<u64>,
}

impl<'a, F: Float> Ctx<'a, F> {
    /// Dropout is active only when `tape` is in training mode.
    pub fn new(tape: &'a Tape<F>, store: &'a ParamStore<F>, dropout: f64, seed: u64) -> Self {
        Self {
            tape,
            store,
            dropout,
            seed,
            counter: Cell::new(0),
        }
    }

    pub fn p(&self, id: ParamId) -> Var {
        self.tape.param(self.store, id)
    }

    pub fn dropout(&self, x: Var) -> Result<Var> {
        if !self.tape.is_training() || self.dropout == 0.0 {
            return Ok(x);
        }
        let c = self.counter.get();
        self.counter.set(c + 1);
        Ok(self.tape.dropout(x, self.dropout, mix(self.seed, c))?)
    }

    pub fn constant(&self, m: Matrix<F>) -> Var {
        self.tape.constant(m)
    }
}

/// `y = x W (+ b)` with `W: [in, out]`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<F: Float>(store: &mut ParamStore<F>, name: &str, input: usize, output: usize, bias: bool) -> Self {
        Self {
            w: store.add(format!("{name}.w"), (input, output), Init::Xavier),
            b: bias.then(|| store.add(format!("{name}.b"), (1, output), Init::Zeros)),
        }
    }

    pub fn forward<F: Float>(&self, ctx: &Ctx<F>, x: Var) -> Result<Var> {
        let y = ctx.tape.matmul(x, ctx.p(self.w))?;
        match self.b {
            Some(b) => Ok(ctx.tape.add_row(y, ctx.p(b))?),
            None => Ok(y),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

pub const LN_EPS: f64 = 1e-6;

impl LayerNorm {
    pub fn new<F: Float>(store: &mut ParamStore<F>, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), (1, dim), Init::Ones),
            bias: store.add(format!("{name}.bias"), (1, dim), Init::Zeros),
        }
    }

    pub fn forward<F: Float>(&self, ctx: &Ctx<F>, x: Var) -> Result<Var> {
        Ok(ctx
            .tape
            .layer_norm(x, ctx.p(self.gain), ctx.p(self.bias), F::from_f64(LN_EPS))?)
    }
}

/// Character embeddings, one convolution, max over time, then a linear
/// map. Words shorter than the filter are padded with the pad character.
#[derive(Clone, Copy, Debug)]
pub struct CharCnn {
    pub emb: ParamId,
    pub conv_w: ParamId,
    pub conv_b: ParamId,
    pub proj: Linear,
    pub width: usize,
}

impl CharCnn {
    pub fn new<F: Float>(
        store: &mut ParamStore<F>,
        name: &str,
        chars: usize,
        emb: usize,
        filters: usize,
        width: usize,
        out: usize,
    ) -> Self {
        Self {
            emb: store.add(format!("{name}.emb"), (chars, emb), Init::Xavier),
            conv_w: store.add(format!("{name}.conv.w"), (filters, width * emb), Init::Xavier),
            conv_b: store.add(format!("{name}.conv.b"), (1, filters), Init::Zeros),
            proj: Linear::new(store, &format!("{name}.proj"), filters, out, true),
            width,
        }
    }

    /// `[words.len(), out]`
    pub fn forward<F: Float>(&self, ctx: &Ctx<F>, words: &[Vec<usize>]) -> Result<Var> {
        let t = ctx.tape;
        let mut flat = Vec::new();
        let mut in_segs: Vec<std::ops::Range<usize>> = Vec::with_capacity(words.len());
        let mut out_segs: Vec<std::ops::Range<usize>> = Vec::with_capacity(words.len());
        let mut windows = 0;
        for w in words {
            let start = flat.len();
            flat.extend_from_slice(w);
            while flat.len() - start < self.width {
                flat.push(CHAR_PAD);
            }
            in_segs.push(start..flat.len());
            let count = flat.len() - start - self.width + 1;
            out_segs.push(windows..windows + count);
            windows += count;
        }
        let e = t.embedding_lookup(ctx.p(self.emb), &flat)?;
        let cols = t.unfold(e, &in_segs, self.width)?;
        let conv = t.matmul_t(cols, ctx.p(self.conv_w))?;
        let conv = t.add_row(conv, ctx.p(self.conv_b))?;
        let pooled = t.segment_max(conv, &out_segs)?;
        self.proj.forward(ctx, pooled)
    }
}

/// Position-wise `Linear → ReLU → Linear`.
#[derive(Clone, Copy, Debug)]
pub struct FeedForward {
    pub l1: Linear,
    pub l2: Linear,
}

impl FeedForward {
    pub fn new<F: Float>(store: &mut ParamStore<F>, name: &str, d: usize, ff: usize) -> Self {
        Self {
            l1: Linear::new(store, &format!("{name}.l1"), d, ff, true),
            l2: Linear::new(store, &format!("{name}.l2"), ff, d, true),
        }
    }

    pub fn forward<F: Float>(&self, ctx: &Ctx<F>, x: Var) -> Result<Var> {
        let h = self.l1.forward(ctx, x)?;
        let h = ctx.tape.relu(h);
        self.l2.forward(ctx, h)
    }
}

/// Multi-head attention projections. Heads are column blocks of the
/// `[d, d]` query/key/value matrices.
#[derive(Clone, Copy, Debug)]
pub struct Attention {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub out: Linear,
    pub heads: usize,
}

impl Attention {
    pub fn new<F: Float>(store: &mut ParamStore<F>, name: &str, d: usize, heads: usize) -> Self {
        Self {
            wq: store.add(format!("{name}.wq"), (d, d), Init::Xavier),
            wk: store.add(format!("{name}.wk"), (d, d), Init::Xavier),
            wv: store.add(format!("{name}.wv"), (d, d), Init::Xavier),
            out: Linear::new(store, &format!("{name}.out"), d, d, true),
            heads,
        }
    }

    pub fn d_head<F: Float>(&self, ctx: &Ctx<F>) -> usize {
        ctx.store.value(self.wq).ncols() / self.heads
    }

    /// Softmax-normalizes per-head scores, mixes `v` and projects.
    /// Returns the output and the per-head weight matrices.
    pub fn combine<F: Float>(&self, ctx: &Ctx<F>, scores: &[Var], v: Var) -> Result<(Var, Vec<Var>)> {
        let t = ctx.tape;
        let dh = self.d_head(ctx);
        let mut outs = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for (h, &s) in scores.iter().enumerate() {
            let a = t.softmax(s);
            let vh = t.slice_cols(v, h * dh, dh)?;
            outs.push(t.matmul(a, vh)?);
            weights.push(a);
        }
        let cat = t.concat(&outs, 1)?;
        Ok((self.out.forward(ctx, cat)?, weights))
    }

    /// Scaled dot-product scores `q_h k_hᵀ / √d_head` per head, plus an
    /// optional additive mask.
    pub fn scores<F: Float>(&self, ctx: &Ctx<F>, q: Var, k: Var, mask: Option<Var>) -> Result<Vec<Var>> {
        let t = ctx.tape;
        let dh = self.d_head(ctx);
        let scale = F::from_f64(1.0 / (dh as f64).sqrt());
        (0..self.heads)
            .map(|h| {
                let qh = t.slice_cols(q, h * dh, dh)?;
                let kh = t.slice_cols(k, h * dh, dh)?;
                let s = t.scale(t.matmul_t(qh, kh)?, scale);
                match mask {
                    Some(m) => Ok(t.add(s, m)?),
                    None => Ok(s),
                }
            })
            .collect()
    }

    /// Plain attention of `queries` over `keys_values`.
    pub fn forward<F: Float>(
        &self,
        ctx: &Ctx<F>,
        queries: Var,
        keys_values: Var,
        mask: Option<Var>,
    ) -> Result<(Var, Vec<Var>)> {
        let t = ctx.tape;
        let q = t.matmul(queries, ctx.p(self.wq))?;
        let k = t.matmul(keys_values, ctx.p(self.wk))?;
        let v = t.matmul(keys_values, ctx.p(self.wv))?;
        let s = self.scores(ctx, q, k, mask)?;
        self.combine(ctx, &s, v)
    }
}

/// Additive mask that hides future positions: `[t, t]` with a large
/// negative value above the diagonal.
pub fn causal_mask<F: Float>(t: usize) -> Matrix<F> {
    Matrix::from_shape_fn((t, t), |(i, j)| {
        if j > i {
            F::from_f64(-1e9)
        } else {
            F::zero()
        }
    })
}

/// Embedding rows for positions, clipped at `max`.
pub fn clip_positions(positions: &[usize], max: usize) -> Vec<usize> {
    positions.iter().map(|&p| p.min(max)).collect()
}
