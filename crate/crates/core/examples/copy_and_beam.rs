// Trains a small model for a few hundred steps, then inspects the copy
// gate and compares greedy decoding with beam search.

use gt_autodiff::Tape;
use graph_transformer::data::synthetic_svo;
use graph_transformer::model::decoder::{CopyMap, TokenIn};
use graph_transformer::model::{Ctx, GateMode, ModelConfig};
use graph_transformer::relpath::Mode;
use graph_transformer::train::trainer::build_vocabs;
use graph_transformer::train::{Config, Trainer};

pub fn run_example() -> graph_transformer::Result<()> {
    let pairs = synthetic_svo(12, 4)?;
    let mut config = Config {
        model: ModelConfig {
            d_model: 32,
            heads: 4,
            d_ff: 64,
            layers: 2,
            ..ModelConfig::tiny()
        },
        ..Config::default()
    };
    config.train.warmup = 100;
    config.train.max_steps = 800;
    config.train.batch_size = 4;
    config.train.unk_rate = 0.0;
    let mut trainer = Trainer::<f64>::new(config, build_vocabs(&pairs)?)?;
    let data = pairs
        .iter()
        .map(|(g, s)| trainer.model.prepare(g, Some(s)))
        .collect::<graph_transformer::Result<Vec<_>>>()?;
    trainer.run(&data, &[], None)?;
    let model = &trainer.model;

    for (ex, (_, reference)) in data.iter().zip(&pairs).take(4) {
        let greedy = model.greedy(&ex.graph, 12)?;
        let beam = model.beam_search(&ex.graph, 4, 12)?;
        println!("ref    {reference}");
        println!("greedy {:<32} {:.3}", greedy.text(), greedy.score);
        println!("beam 4 {:<32} {:.3}\n", beam.text(), beam.score);
    }

    // per-position copy gate on the first reference
    let ex = &data[0];
    let tape = Tape::new(false);
    let ctx = Ctx::new(&tape, &model.store, 0.0, 0);
    let enc = model.encode_batch(&ctx, &[&ex.graph], Mode::Test, 0)?;
    let mem = model.decoder.memory(&ctx, &enc[0])?;
    let (inputs, gold) = ex.target.as_ref().expect("training pairs have targets").teacher_forcing();
    let toks: Vec<_> = inputs.iter().map(|w| TokenIn::new(&model.vocabs, w)).collect();
    let h = model.decoder.decode_train(&ctx, &mem, &toks)?;
    let dist = model.decoder.copy_distribution(&ctx, h, &mem, GateMode::Learned)?;
    let map = CopyMap::new(&model.vocabs, &ex.graph.surface_forms());
    let mix = model.decoder.mixture(&tape, &dist, &map);
    let gate = tape.value(dist.gate.expect("copy is enabled"));
    for (t, w) in gold.iter().enumerate() {
        println!("{w:>8}: p(gen) {:.2}, row sums to {:.6}", gate[[t, 0]], mix.row(t).sum());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
