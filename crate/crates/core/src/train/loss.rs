//! Negative log-likelihood of gold words under the copy mixture.

use gt_autodiff::rng::{mix, uniform01};
use gt_autodiff::{Float, Var};

use crate::model::decoder::{CopyMap, TokenIn};
use crate::model::{Ctx, Example, GateMode, GraphInput, Model};
use crate::relpath::Mode;
use crate::vocab::UNK;
use crate::{Error, Result};

/// Gold probabilities below this are clamped before the logarithm.
pub const MIN_PROB: f64 = 1e-12;

pub struct LossOutput {
    /// Mean over target words, `[1, 1]`.
    pub loss: Var,
    pub tokens: usize,
    /// Gold words whose probability had to be clamped.
    pub clamped: usize,
    /// Gold words that are also the argmax of the mixture.
    pub correct: usize,
}

/// Loss of a batch on one tape. Relation paths are sampled (train) or
/// averaged (test) with `seed`. Without copying this is exactly the
/// vocabulary cross-entropy.
pub fn batch_loss<F: Float>(
    model: &Model<F>,
    ctx: &Ctx<F>,
    batch: &[&Example],
    mode: Mode,
    seed: u64,
    gate: GateMode,
) -> Result<LossOutput> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let t = ctx.tape;
    let graphs: Vec<&GraphInput> = batch.iter().map(|e| &e.graph).collect();
    let encoded = model.encode_batch(ctx, &graphs, mode, seed)?;
    let mut pieces = Vec::with_capacity(batch.len());
    let mut gen_targets = Vec::new();
    let (mut tokens, mut correct) = (0, 0);
    for (ex, enc) in batch.iter().zip(&encoded) {
        let target = ex
            .target
            .as_ref()
            .ok_or_else(|| Error::Data("training example without a target".into()))?;
        let (inputs, gold) = target.teacher_forcing();
        let inputs: Vec<TokenIn> = inputs.iter().map(|w| TokenIn::new(&model.vocabs, w)).collect();
        let mem = model.decoder.memory(ctx, enc)?;
        let h = model.decoder.decode_train(ctx, &mem, &inputs)?;
        let dist = model.decoder.copy_distribution(ctx, h, &mem, gate)?;
        let map = CopyMap::new(&model.vocabs, &ex.graph.surface_forms());
        let mixture = model.decoder.mixture(t, &dist, &map);
        for (r, w) in gold.iter().enumerate() {
            let want = map.ext_id(&model.vocabs, w);
            let row = mixture.row(r);
            let best = (0..row.len()).fold(0, |b, k| if row[k] > row[b] { k } else { b });
            correct += usize::from(best == want);
        }
        tokens += gold.len();
        if model.decoder.copy {
            pieces.push(model.decoder.gold_probability(ctx, &dist, &model.vocabs, &map, &gold)?);
        } else {
            pieces.push(dist.logits);
            gen_targets.extend(gold.iter().map(|w| model.vocabs.token.id_or_unk(w)));
        }
    }
    let all = t.concat(&pieces, 0)?;
    let (loss, clamped) = if model.decoder.copy {
        let clamped = t.value(all).iter().filter(|&&p| p.to_f64() < MIN_PROB).count();
        let ln = t.ln_clamp(all, F::from_f64(MIN_PROB));
        (t.scale(t.mean(ln), -F::one()), clamped)
    } else {
        (t.cross_entropy(all, &gen_targets)?, 0)
    };
    Ok(LossOutput {
        loss,
        tokens,
        clamped,
        correct,
    })
}

/// Independent Bernoulli(`rate`) draws, one per node.
pub fn unk_mask(nodes: usize, rate: f64, seed: u64) -> Vec<bool> {
    (0..nodes).map(|i| uniform01(seed, i as u64) < rate).collect()
}

/// Replaces each node label id by `<unk>` with probability `rate`; the
/// characters of the label stay visible.
pub fn unk_replace(graphs: &[&GraphInput], unk: usize, rate: f64, seed: u64) -> Vec<GraphInput> {
    graphs
        .iter()
        .enumerate()
        .map(|(k, g)| g.with_unk(&unk_mask(g.n(), rate, mix(seed, k as u64)), unk))
        .collect()
}

/// Convenience: the `<unk>` id of the node vocabulary.
pub fn node_unk<F: Float>(model: &Model<F>) -> usize {
    model.vocabs.node.id_or_unk(UNK)
}
