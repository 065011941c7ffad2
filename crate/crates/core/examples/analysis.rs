// Attention-distance and binned-score reports for a briefly trained model
// on synthetic graphs.

use graph_transformer::data::synthetic_svo;
use graph_transformer::eval::analysis::encoder_attention;
use graph_transformer::eval::{attention_distance, binned_report, sentence_chrf_pp, BinKey};
use graph_transformer::model::ModelConfig;
use graph_transformer::train::trainer::build_vocabs;
use graph_transformer::train::{Config, Trainer};

pub fn run_example() -> graph_transformer::Result<()> {
    let pairs = synthetic_svo(24, 9)?;
    let mut config = Config {
        model: ModelConfig {
            d_model: 16,
            heads: 4,
            d_ff: 32,
            layers: 2,
            ..ModelConfig::tiny()
        },
        ..Config::default()
    };
    config.train.warmup = 40;
    config.train.max_steps = 120;
    let mut trainer = Trainer::<f64>::new(config, build_vocabs(&pairs)?)?;
    let data = pairs
        .iter()
        .map(|(g, s)| trainer.model.prepare(g, Some(s)))
        .collect::<graph_transformer::Result<Vec<_>>>()?;
    trainer.run(&data, &[], None)?;
    let model = &trainer.model;

    let maps = data
        .iter()
        .map(|ex| encoder_attention(model, &ex.graph))
        .collect::<graph_transformer::Result<Vec<_>>>()?;
    let items: Vec<_> = maps
        .iter()
        .zip(&data)
        .map(|(m, ex)| (m, &ex.graph.paths, ex.graph.graph.global_node()))
        .collect();
    for row in attention_distance(&items)? {
        println!("layer {} head {}: {:.3} hops", row.layer, row.head, row.avg_distance);
    }

    let mut scores = Vec::new();
    for (ex, (_, reference)) in data.iter().zip(&pairs) {
        scores.push(sentence_chrf_pp(&model.beam_search(&ex.graph, 4, 12)?.text(), reference));
    }
    let stats: Vec<_> = data.iter().map(|ex| ex.graph.stats).collect();
    let report = binned_report(&scores, &stats, BinKey::Size, None)?;
    report
        .write_csv(std::io::stdout())
        .map_err(|e| graph_transformer::Error::io("<stdout>", e))?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
