//! Performance by graph property, and how far encoder attention reaches.

use std::io::Write;

use serde::Serialize;

use gt_autodiff::{Float, Matrix, Tape};

use crate::graph::GraphStats;
use crate::model::{Ctx, GraphInput, Model};
use crate::relpath::{Mode, PathTable};
use crate::{Error, Result};

pub const BINS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BinKey {
    Size,
    Diameter,
    Reentrancies,
}

impl BinKey {
    pub fn of(self, s: &GraphStats) -> f64 {
        (match self {
            BinKey::Size => s.size,
            BinKey::Diameter => s.diameter,
            BinKey::Reentrancies => s.reentrancies,
        }) as f64
    }
}

impl std::str::FromStr for BinKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "size" => Ok(BinKey::Size),
            "diameter" => Ok(BinKey::Diameter),
            "reentrancy" | "reentrancies" => Ok(BinKey::Reentrancies),
            other => Err(Error::Config(format!("unknown binning key `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bin {
    /// Inclusive lower and upper bounds of the key (`None` is unbounded).
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub count: usize,
    /// Macro average of the sentence scores; `None` for an empty bin.
    pub score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BinnedReport {
    pub key: BinKey,
    /// Upper bounds of the first three bins.
    pub edges: [f64; BINS - 1],
    pub bins: Vec<Bin>,
}

/// Nearest-rank quartiles of `values`.
pub fn quartile_edges(values: &[f64]) -> [f64; BINS - 1] {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
        v[rank - 1]
    };
    [at(0.25), at(0.5), at(0.75)]
}

/// Groups sentence scores into four bins by a graph property: bin `b`
/// holds keys in `(edges[b-1], edges[b]]`. Without `edges` the quartiles
/// of the corpus are used.
pub fn binned_report(
    scores: &[f64],
    stats: &[GraphStats],
    key: BinKey,
    edges: Option<[f64; BINS - 1]>,
) -> Result<BinnedReport> {
    if scores.len() != stats.len() {
        return Err(Error::Data(format!(
            "{} scores for {} graphs",
            scores.len(),
            stats.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Data("cannot bin an empty corpus".into()));
    }
    let keys: Vec<f64> = stats.iter().map(|s| key.of(s)).collect();
    let edges = edges.unwrap_or_else(|| quartile_edges(&keys));
    if edges.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config(format!("bin edges {edges:?} are not sorted")));
    }
    let mut sums = [0.0; BINS];
    let mut counts = [0usize; BINS];
    for (&k, &s) in keys.iter().zip(scores) {
        let b = edges.iter().position(|&e| k <= e).unwrap_or(BINS - 1);
        sums[b] += s;
        counts[b] += 1;
    }
    let bins = (0..BINS)
        .map(|b| Bin {
            lo: (b > 0).then(|| edges[b - 1]),
            hi: (b < BINS - 1).then(|| edges[b]),
            count: counts[b],
            score: (counts[b] > 0).then(|| sums[b] / counts[b] as f64),
        })
        .collect();
    Ok(BinnedReport { key, edges, bins })
}

impl BinnedReport {
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "bin,lo,hi,count,score")?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for (b, bin) in self.bins.iter().enumerate() {
            writeln!(
                w,
                "{b},{},{},{},{}",
                opt(bin.lo),
                opt(bin.hi),
                bin.count,
                bin.score.map(|s| format!("{s:.4}")).unwrap_or_default()
            )?;
        }
        Ok(())
    }
}

/// Attention of one graph: `[layer][head]` matrices over all nodes.
pub type AttentionMaps = Vec<Vec<Matrix<f64>>>;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeadDistance {
    pub layer: usize,
    pub head: usize,
    pub avg_distance: f64,
    /// Query nodes that contributed.
    pub queries: usize,
}

/// For every query node, the hop count to the key it weights most (lowest
/// id on ties), averaged per layer and head over nodes and graphs. The
/// global node is skipped both as query and as key; a node's distance to
/// itself is 0.
pub fn attention_distance(graphs: &[(&AttentionMaps, &PathTable, Option<usize>)]) -> Result<Vec<HeadDistance>> {
    let Some((first, _, _)) = graphs.first() else {
        return Err(Error::Data("no graphs to analyse".into()));
    };
    let layers = first.len();
    let heads = first.first().map_or(0, Vec::len);
    let mut sum = vec![vec![0.0; heads]; layers];
    let mut cnt = vec![vec![0usize; heads]; layers];
    for (maps, table, global) in graphs {
        if maps.len() != layers || maps.iter().any(|l| l.len() != heads) {
            return Err(Error::Data("graphs disagree on layer/head counts".into()));
        }
        let n = table.n();
        for (l, layer) in maps.iter().enumerate() {
            for (h, a) in layer.iter().enumerate() {
                if a.dim() != (n, n) {
                    return Err(Error::Data(format!(
                        "attention map {:?} does not match {n} nodes",
                        a.dim()
                    )));
                }
                for i in (0..n).filter(|&i| Some(i) != *global) {
                    let mut best: Option<usize> = None;
                    for j in (0..n).filter(|&j| Some(j) != *global) {
                        if best.is_none_or(|b| a[[i, j]] > a[[i, b]]) {
                            best = Some(j);
                        }
                    }
                    if let Some(j) = best {
                        sum[l][h] += table.hops(i, j) as f64;
                        cnt[l][h] += 1;
                    }
                }
            }
        }
    }
    let mut out = Vec::with_capacity(layers * heads);
    for l in 0..layers {
        for h in 0..heads {
            out.push(HeadDistance {
                layer: l,
                head: h,
                avg_distance: if cnt[l][h] > 0 { sum[l][h] / cnt[l][h] as f64 } else { 0.0 },
                queries: cnt[l][h],
            });
        }
    }
    Ok(out)
}

pub fn write_distance_csv(rows: &[HeadDistance], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "layer,head,avg_distance")?;
    for r in rows {
        writeln!(w, "{},{},{:.6}", r.layer, r.head, r.avg_distance)?;
    }
    Ok(())
}

/// Encoder attention weights of a graph in eval mode (relation paths
/// averaged, no dropout).
pub fn encoder_attention<F: Float>(model: &Model<F>, g: &GraphInput) -> Result<AttentionMaps> {
    let tape = Tape::new(false);
    let ctx = Ctx::new(&tape, &model.store, 0.0, 0);
    let enc = model.encode_batch(&ctx, &[g], Mode::Test, 0)?;
    Ok(enc[0]
        .attention
        .iter()
        .map(|layer| layer.iter().map(|&v| tape.value(v).mapv(F::to_f64)).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_penman, BOY_WANTS_AMR};
    use crate::relpath::{all_shortest_paths, PathConfig};

    fn stats(sizes: &[usize]) -> Vec<GraphStats> {
        sizes
            .iter()
            .map(|&s| GraphStats {
                size: s,
                diameter: 1,
                reentrancies: 0,
                disconnected: false,
            })
            .collect()
    }

    #[test]
    fn quartiles_by_nearest_rank() {
        assert_eq!(quartile_edges(&[1., 2., 3., 4., 5., 6., 7., 8.]), [2., 4., 6.]);
        assert_eq!(quartile_edges(&[5.]), [5., 5., 5.]);
    }

    #[test]
    fn single_bin_gets_overall_average_and_others_are_empty() {
        let r = binned_report(&[10., 20., 60.], &stats(&[3, 3, 3]), BinKey::Size, None).unwrap();
        assert_eq!(r.bins[0].count, 3);
        assert!((r.bins[0].score.unwrap() - 30.0).abs() < 1e-12);
        assert!(r.bins[1..].iter().all(|b| b.count == 0 && b.score.is_none()));
    }

    #[test]
    fn explicit_edges_partition_the_corpus() {
        let r = binned_report(
            &[1., 2., 3., 4., 5.],
            &stats(&[1, 5, 6, 10, 50]),
            BinKey::Size,
            Some([2., 6., 20.]),
        )
        .unwrap();
        let counts: Vec<_> = r.bins.iter().map(|b| b.count).collect();
        assert_eq!(counts, [1, 2, 1, 1]);
        assert_eq!(r.bins[1].score, Some(2.5));
    }

    #[test]
    fn identity_attention_has_zero_distance() {
        let g = parse_penman(BOY_WANTS_AMR).unwrap().augment().unwrap();
        let table = all_shortest_paths(&g, PathConfig::default()).unwrap();
        let n = table.n();
        let maps: AttentionMaps = vec![vec![Matrix::eye(n)]];
        let d = attention_distance(&[(&maps, &table, g.global_node())]).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].avg_distance, 0.0);
        assert_eq!(d[0].queries, n - 1);
    }

    #[test]
    fn ties_pick_the_lowest_key_and_global_is_ignored() {
        let g = parse_penman(BOY_WANTS_AMR).unwrap().augment().unwrap();
        let table = all_shortest_paths(&g, PathConfig::default()).unwrap();
        let n = table.n();
        let global = g.global_node().unwrap();
        let mut a = Matrix::from_elem((n, n), 0.1);
        for i in 0..n {
            a[[i, global]] = 0.9;
        }
        let maps: AttentionMaps = vec![vec![a]];
        let d = attention_distance(&[(&maps, &table, Some(global))]).unwrap();
        let want: f64 = (0..n).filter(|&i| i != global).map(|i| table.hops(i, 0) as f64).sum::<f64>() / (n - 1) as f64;
        assert!((d[0].avg_distance - want).abs() < 1e-12);
    }
}
