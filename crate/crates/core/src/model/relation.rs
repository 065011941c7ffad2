//! Bidirectional GRU over relation paths and the forward/backward split.

use std::collections::BTreeMap;

use gt_autodiff::gru::{gru_cell, GruParams};
use gt_autodiff::{Float, Init, Matrix, ParamId, ParamStore, Var};

use super::layers::Ctx;
use super::{GraphInput, ModelConfig};
use crate::relpath::{dedup_paths, select_paths, DedupBatch, Mode};
use crate::vocab::Vocabs;
use crate::Result;

#[derive(Clone, Copy, Debug)]
pub struct RelationEncoder {
    pub edge_emb: ParamId,
    pub fwd: GruParams,
    pub bwd: GruParams,
    /// `[2·rel_hidden, 2·d_model]`, no bias.
    pub w_r: ParamId,
    pub hidden: usize,
    pub d_model: usize,
}

impl RelationEncoder {
    pub fn new<F: Float>(store: &mut ParamStore<F>, cfg: &ModelConfig, edges: usize) -> Self {
        let h = cfg.rel_hidden;
        Self {
            edge_emb: store.add("rel.edge_emb", (edges, cfg.edge_emb), Init::Xavier),
            fwd: GruParams::new(store, "rel.gru_fwd", cfg.edge_emb, h),
            bwd: GruParams::new(store, "rel.gru_bwd", cfg.edge_emb, h),
            w_r: store.add("rel.w_r", (2 * h, 2 * cfg.d_model), Init::Xavier),
            hidden: h,
            d_model: cfg.d_model,
        }
    }

    /// `r = [→s_last ; ←s_first]` for every path, `[paths.len(), 2h]`.
    ///
    /// Paths are grouped by length and each group runs as one batch; each
    /// output row depends only on its own path, so the grouping does not
    /// change any value.
    pub fn encode_paths<F: Float>(&self, ctx: &Ctx<F>, paths: &[Vec<usize>]) -> Result<Var> {
        let t = ctx.tape;
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, p) in paths.iter().enumerate() {
            assert!(!p.is_empty(), "relation paths are never empty");
            groups.entry(p.len()).or_default().push(k);
        }
        let table = ctx.p(self.edge_emb);
        let mut parts = Vec::new();
        let mut order = Vec::with_capacity(paths.len());
        for (len, members) in &groups {
            let zero = t.constant(Matrix::zeros((members.len(), self.hidden)));
            let (mut f, mut b) = (zero, zero);
            for step in 0..*len {
                let ids: Vec<usize> = members.iter().map(|&m| paths[m][step]).collect();
                let x = t.embedding_lookup(table, &ids)?;
                f = gru_cell(t, ctx.store, &self.fwd, f, x)?;
                let ids: Vec<usize> = members.iter().map(|&m| paths[m][len - 1 - step]).collect();
                let x = t.embedding_lookup(table, &ids)?;
                b = gru_cell(t, ctx.store, &self.bwd, b, x)?;
            }
            parts.push(t.concat(&[f, b], 1)?);
            order.extend_from_slice(members);
        }
        let stacked = t.concat(&parts, 0)?;
        // row r of `stacked` holds path order[r]; put rows back in input order
        let mut inverse = vec![0; paths.len()];
        for (r, &k) in order.iter().enumerate() {
            inverse[k] = r;
        }
        Ok(t.embedding_lookup(stacked, &inverse)?)
    }

    /// `[r_fwd ; r_bwd] = r W_r`, each half `[rows, d_model]`.
    pub fn split<F: Float>(&self, ctx: &Ctx<F>, r: Var) -> Result<(Var, Var)> {
        let full = ctx.tape.matmul(r, ctx.p(self.w_r))?;
        let halves = ctx.tape.split(full, &[self.d_model, self.d_model])?;
        Ok((halves[0], halves[1]))
    }

    /// Relation table rows `(i, j) ↦ i·n + j` of one graph from the encoded
    /// unique paths of its batch.
    pub fn table<F: Float>(
        &self,
        ctx: &Ctx<F>,
        encoded: Var,
        batch: &DedupBatch,
        g: usize,
        n: usize,
    ) -> Result<super::RelationInputs> {
        let rows = batch.index[g]
            .iter()
            .map(|refs| refs.iter().map(|&(u, w)| (u, F::from_f64(w))).collect())
            .collect();
        debug_assert_eq!(batch.index[g].len(), n * n);
        let r = ctx.tape.weighted_rows(encoded, rows)?;
        let (fwd, bwd) = self.split(ctx, r)?;
        Ok(super::RelationInputs { fwd, bwd, n })
    }

    /// Encodes the relation tables of a batch, encoding each distinct path
    /// once. Training samples one path per pair; testing averages.
    pub fn encode_batch<F: Float>(
        &self,
        ctx: &Ctx<F>,
        vocabs: &Vocabs,
        graphs: &[&GraphInput],
        mode: Mode,
        seed: u64,
    ) -> Result<Vec<super::RelationInputs>> {
        let selections: Vec<_> = graphs
            .iter()
            .enumerate()
            .map(|(k, g)| select_paths(&g.paths, mode, gt_autodiff::rng::mix(seed, k as u64)))
            .collect();
        let pairs: Vec<_> = graphs.iter().map(|g| &g.paths).zip(&selections).collect();
        let batch = dedup_paths(&pairs);
        let ids = batch
            .unique
            .iter()
            .map(|p| p.iter().map(|l| vocabs.edge_id(l)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let encoded = self.encode_paths(ctx, &ids)?;
        graphs
            .iter()
            .enumerate()
            .map(|(k, g)| self.table(ctx, encoded, &batch, k, g.paths.n()))
            .collect()
    }
}
