mod common;

use common::{model_for, permutation, random_graph, random_matrix, TARGETS};
use gt_autodiff::rng::uniform01;
use gt_autodiff::{grad_check_params, GradCheckConfig, Matrix, Tape};
use graph_transformer::model::decoder::{CopyMap, TokenIn};
use graph_transformer::model::encoder::{relation_scores, RelationInputs};
use graph_transformer::model::{Ctx, Example, GateMode, ModelConfig, TargetInput};
use graph_transformer::relpath::{select_paths, Mode};
use graph_transformer::train::batch_loss;

fn small() -> ModelConfig {
    ModelConfig {
        d_model: 16,
        heads: 4,
        d_ff: 24,
        layers: 2,
        ..ModelConfig::tiny()
    }
}

#[test]
fn zero_relations_give_vanilla_scores_bit_for_bit() {
    for seed in 0..5 {
        let g = random_graph(seed, 8);
        let (model, inputs) = model_for::<f64>(&[g], &TARGETS, small(), seed);
        let tape = Tape::new(false);
        let ctx = Ctx::new(&tape, &model.store, 0.0, 0);
        let x = model.encoder.node_init(&ctx, &inputs[0]).unwrap();
        let n = inputs[0].paths.n();
        let zeros = tape.constant(Matrix::zeros((n * n, 16)));
        let rel = RelationInputs { fwd: zeros, bwd: zeros, n };
        let attn = &model.encoder.layers[0].attn;
        let with_rel = relation_scores(&ctx, attn, x, Some(&rel)).unwrap();
        let q = tape.matmul(x, ctx.p(attn.wq)).unwrap();
        let k = tape.matmul(x, ctx.p(attn.wk)).unwrap();
        let vanilla = attn.scores(&ctx, q, k, None).unwrap();
        for (a, b) in with_rel.iter().zip(&vanilla) {
            assert_eq!(*tape.value(*a), *tape.value(*b));
        }
    }
}

#[test]
fn expanded_scores_match_factored_form() {
    let (n, d, heads) = (5, 12, 3);
    let dh = d / heads;
    let cfg = ModelConfig {
        d_model: d,
        heads,
        ..ModelConfig::tiny()
    };
    let (model, _) = model_for::<f64>(&[random_graph(1, 4)], &TARGETS, cfg, 1);
    for draw in 0..10u64 {
        let x = random_matrix(n, d, 100 + draw);
        let fwd = random_matrix(n * n, d, 200 + draw);
        let bwd = random_matrix(n * n, d, 300 + draw);
        let tape = Tape::new(false);
        let ctx = Ctx::new(&tape, &model.store, 0.0, 0);
        let rel = RelationInputs {
            fwd: tape.constant(fwd.clone()),
            bwd: tape.constant(bwd.clone()),
            n,
        };
        let attn = &model.encoder.layers[0].attn;
        let s = relation_scores(&ctx, attn, tape.constant(x.clone()), Some(&rel)).unwrap();
        let wq = model.store.value(attn.wq);
        let wk = model.store.value(attn.wk);
        for i in 0..n {
            for j in 0..n {
                let qi = (&x.row(i) + &fwd.row(i * n + j)).dot(wq);
                let kj = (&x.row(j) + &bwd.row(i * n + j)).dot(wk);
                for h in 0..heads {
                    let want: f64 = (0..dh).map(|c| qi[h * dh + c] * kj[h * dh + c]).sum::<f64>() / (dh as f64).sqrt();
                    let got = tape.value(s[h])[[i, j]];
                    assert!((got - want).abs() < 1e-10, "({i},{j}) head {h}: {got} vs {want}");
                }
            }
        }
    }
}

#[test]
fn encoder_is_permutation_equivariant() {
    for seed in 0..5 {
        let g = random_graph(seed, 9);
        let perm = permutation(seed, g.len());
        let h = g.permuted(&perm).unwrap();
        let (model, inputs) = model_for::<f32>(&[g, h], &TARGETS, small(), seed);
        let tape = Tape::new(false);
        let ctx = Ctx::new(&tape, &model.store, 0.0, 0);
        let refs: Vec<_> = inputs.iter().collect();
        let out = model.encode_batch(&ctx, &refs, Mode::Test, 0).unwrap();
        let (a, b) = (tape.value(out[0].node_reps), tape.value(out[1].node_reps));
        for (old, &new) in perm.iter().enumerate() {
            for c in 0..a.ncols() {
                assert!((a[[old, c]] - b[[new, c]]).abs() < 1e-5);
            }
        }
        let (ga, gb) = (tape.value(out[0].global), tape.value(out[1].global));
        assert!(ga.iter().zip(gb.iter()).all(|(x, y)| (x - y).abs() < 1e-5));
    }
}

#[test]
fn batched_relation_encoding_equals_pairwise() {
    let graphs: Vec<_> = (0..3).map(|s| random_graph(40 + s, 7)).collect();
    let (model, inputs) = model_for::<f64>(&graphs, &TARGETS, small(), 3);
    for mode in [Mode::Train, Mode::Test] {
        let tape = Tape::new(false);
        let ctx = Ctx::new(&tape, &model.store, 0.0, 0);
        let refs: Vec<_> = inputs.iter().collect();
        let seed = 17;
        let rels = model.relation.encode_batch(&ctx, &model.vocabs, &refs, mode, seed).unwrap();
        let w_r = model.store.value(model.relation.w_r).clone();
        let d = model.config.d_model;
        for (k, g) in inputs.iter().enumerate() {
            let sel = select_paths(&g.paths, mode, gt_autodiff::rng::mix(seed, k as u64));
            let n = g.paths.n();
            let (fwd, bwd) = (tape.value(rels[k].fwd).clone(), tape.value(rels[k].bwd).clone());
            for i in 0..n {
                for j in 0..n {
                    let mut r = Matrix::<f64>::zeros((1, 2 * model.config.rel_hidden));
                    for &(p, w) in sel.get(i, j) {
                        let ids: Vec<usize> = g.paths.paths(i, j)[p]
                            .iter()
                            .map(|l| model.vocabs.edge_id(l).unwrap())
                            .collect();
                        let single = model.relation.encode_paths(&ctx, &[ids]).unwrap();
                        r.row_mut(0).scaled_add(w, &tape.value(single).row(0));
                    }
                    let full = r.dot(&w_r);
                    for c in 0..d {
                        assert_eq!(fwd[[i * n + j, c]], full[[0, c]]);
                        assert_eq!(bwd[[i * n + j, c]], full[[0, d + c]]);
                    }
                }
            }
        }
    }
}

fn tokens(model: &graph_transformer::model::Model<f64>, sentence: &str) -> Vec<TokenIn> {
    let (inputs, _) = TargetInput::new(sentence).unwrap().teacher_forcing();
    inputs.iter().map(|w| TokenIn::new(&model.vocabs, w)).collect()
}

#[test]
fn incremental_decoding_matches_teacher_forcing() {
    let (model, inputs) = model_for::<f64>(&[random_graph(5, 6)], &TARGETS, small(), 5);
    let tape = Tape::new(false);
    let ctx = Ctx::new(&tape, &model.store, 0.0, 0);
    let enc = model.encode_batch(&ctx, &[&inputs[0]], Mode::Test, 0).unwrap();
    let mem = model.decoder.memory(&ctx, &enc[0]).unwrap();
    let toks = tokens(&model, TARGETS[0]);
    let full = model.decoder.decode_train(&ctx, &mem, &toks).unwrap();
    let mut cache = Default::default();
    for (t, tok) in toks.iter().enumerate() {
        let (next, h) = model.decoder.step(&ctx, &mem, &cache, tok).unwrap();
        cache = next;
        let want = tape.value(full).row(t).to_owned();
        let got = tape.value(h).row(0).to_owned();
        assert!((&want - &got).iter().all(|d| d.abs() < 1e-5), "position {t}");
    }
}

#[test]
fn decoder_states_ignore_future_tokens() {
    let (model, inputs) = model_for::<f64>(&[random_graph(6, 6)], &TARGETS, small(), 6);
    let tape = Tape::new(false);
    let ctx = Ctx::new(&tape, &model.store, 0.0, 0);
    let enc = model.encode_batch(&ctx, &[&inputs[0]], Mode::Test, 0).unwrap();
    let mem = model.decoder.memory(&ctx, &enc[0]).unwrap();
    let a = tokens(&model, "the boy wants the girl");
    let b = tokens(&model, "the boy sees a house");
    let ha = tape.value(model.decoder.decode_train(&ctx, &mem, &a).unwrap()).clone();
    let hb = tape.value(model.decoder.decode_train(&ctx, &mem, &b).unwrap()).clone();
    // inputs agree on "<s> the boy"; those rows must agree exactly
    for t in 0..3 {
        assert_eq!(ha.row(t), hb.row(t));
    }
    assert_ne!(ha.row(3), hb.row(3));
}

#[test]
fn copy_mixture_is_a_distribution_and_forced_gen_is_the_softmax() {
    let (model, inputs) = model_for::<f64>(&[random_graph(7, 6)], &TARGETS, small(), 7);
    let g = &inputs[0];
    let map = CopyMap::new(&model.vocabs, &g.surface_forms());
    for trial in 0..20u64 {
        let tape = Tape::new(false);
        let ctx = Ctx::new(&tape, &model.store, 0.0, 0);
        let enc = model.encode_batch(&ctx, &[g], Mode::Test, 0).unwrap();
        let mem = model.decoder.memory(&ctx, &enc[0]).unwrap();
        let h = tape.constant(random_matrix(50, 16, trial).mapv(|v| 3.0 * v));
        let dist = model.decoder.copy_distribution(&ctx, h, &mem, GateMode::Learned).unwrap();
        let mix = model.decoder.mixture(&tape, &dist, &map);
        for row in mix.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
        let forced = model.decoder.copy_distribution(&ctx, h, &mem, GateMode::ForceGen).unwrap();
        let mix = model.decoder.mixture(&tape, &forced, &map);
        let gen = tape.value(forced.gen);
        for r in 0..50 {
            for y in 0..map.vocab {
                assert_eq!(mix[[r, y]], gen[[r, y]]);
            }
            assert!(mix.row(r).iter().skip(map.vocab).all(|&p| p == 0.0));
        }
    }
}

#[test]
fn beam_of_one_is_greedy() {
    let graphs: Vec<_> = (0..10).map(|s| random_graph(100 + s, 8)).collect();
    let (model, inputs) = model_for::<f64>(&graphs, &TARGETS, small(), 11);
    for g in &inputs {
        let greedy = model.greedy(g, 12).unwrap();
        let beam = model.beam_search(g, 1, 12).unwrap();
        assert_eq!(greedy.ids, beam.ids);
        assert!((greedy.score - beam.score).abs() < 1e-9);
    }
}

#[test]
fn wider_beams_never_score_worse_than_greedy() {
    let graphs: Vec<_> = (0..6).map(|s| random_graph(200 + s, 6)).collect();
    let (model, inputs) = model_for::<f64>(&graphs, &TARGETS, small(), 12);
    for g in &inputs {
        let greedy = model.greedy(g, 10).unwrap();
        let beam = model.beam_search(g, 4, 10).unwrap();
        if greedy.finished {
            assert!(beam.score >= greedy.score - 1e-9);
        }
    }
}

#[test]
fn end_to_end_loss_passes_gradient_check() {
    let g = graph_transformer::graph::parse_penman("(w / want-01 :ARG0 (b / boy) :ARG1 (g / girl))").unwrap();
    let (model, _) = model_for::<f64>(&[g.clone()], &["the boy wants the girl"], ModelConfig::tiny(), 2);
    let ex = model.prepare(&g, Some("the boy wants a girl")).unwrap();
    let mut store = model.store.clone();
    let cfg = GradCheckConfig {
        tol: 1e-3,
        max_coords: 6,
        ..GradCheckConfig::default()
    };
    let report = grad_check_params(
        |tape, store| {
            let ctx = Ctx::new(tape, store, 0.0, 0);
            let out = batch_loss(&model, &ctx, &[&ex], Mode::Test, 0, GateMode::Learned)
                .map_err(|e| gt_autodiff::Error::InvalidArgument { op: "loss", msg: e.to_string() })?;
            Ok(out.loss)
        },
        &mut store,
        &cfg,
    )
    .unwrap();
    assert!(report.passed, "max rel err {} at {:?}", report.max_rel_err, report.worst);
    assert!(report.checked > 100);
}

#[test]
fn loss_without_copy_is_plain_cross_entropy() {
    let g = graph_transformer::graph::parse_penman("(w / want-01 :ARG0 (b / boy))").unwrap();
    let cfg = ModelConfig {
        copy: false,
        ..ModelConfig::tiny()
    };
    let (model, _) = model_for::<f64>(&[g.clone()], &["the boy wants"], cfg, 4);
    let ex = model.prepare(&g, Some("the boy wants")).unwrap();
    let tape = Tape::new(false);
    let ctx = Ctx::new(&tape, &model.store, 0.0, 0);
    let out = batch_loss(&model, &ctx, &[&ex], Mode::Test, 0, GateMode::Learned).unwrap();
    // independent oracle: −mean log softmax of the gold ids
    let enc = model.encode_batch(&ctx, &[&ex.graph], Mode::Test, 0).unwrap();
    let mem = model.decoder.memory(&ctx, &enc[0]).unwrap();
    let (inp, gold) = ex.target.as_ref().unwrap().teacher_forcing();
    let toks: Vec<_> = inp.iter().map(|w| TokenIn::new(&model.vocabs, w)).collect();
    let h = model.decoder.decode_train(&ctx, &mem, &toks).unwrap();
    let dist = model.decoder.copy_distribution(&ctx, h, &mem, GateMode::Learned).unwrap();
    let logits = tape.value(dist.logits).clone();
    let mut nll = 0.0;
    for (r, w) in gold.iter().enumerate() {
        let row = logits.row(r);
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        nll += lse - row[model.vocabs.token.id_or_unk(w)];
    }
    assert!((tape.scalar(out.loss) - nll / gold.len() as f64).abs() < 1e-12);
    assert_eq!(out.clamped, 0);
}

#[test]
fn unk_replacement_keeps_characters_and_global_node() {
    let (model, inputs) = model_for::<f64>(&[random_graph(9, 10)], &TARGETS, small(), 9);
    let unk = graph_transformer::train::loss::node_unk(&model);
    let g = &inputs[0];
    let out = graph_transformer::train::loss::unk_replace(&[g], unk, 1.0, 3);
    let n = g.n();
    assert!(out[0].labels[..n].iter().all(|&l| l == unk));
    assert_eq!(out[0].labels[n], g.labels[n]);
    assert_eq!(out[0].chars, g.chars);
    // the replacement rate is honoured on average
    let hits: usize = (0..2000u64).filter(|&k| uniform01(k, 0) < 0.33).count();
    let masked: usize = (0..2000u64)
        .map(|k| graph_transformer::train::loss::unk_mask(1, 0.33, k)[0] as usize)
        .sum();
    assert_eq!(hits, masked);
}

#[test]
fn teacher_forcing_adds_boundary_tokens() {
    let t = TargetInput::new("a b").unwrap();
    let (inp, gold) = t.teacher_forcing();
    assert_eq!(inp, ["<s>", "a", "b"]);
    assert_eq!(gold, ["a", "b", "</s>"]);
    assert!(TargetInput::new("   ").is_err());
    let _ = Example {
        graph: model_for::<f64>(&[random_graph(1, 3)], &TARGETS, small(), 1).1.remove(0),
        target: Some(t),
    };
}
