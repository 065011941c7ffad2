// Trains the full-width, two-layer model on twenty synthetic
// subject-verb-object graphs and decodes them back with beam search.
//
// ```bash
// cargo run --release --example toy_training
// ```

use std::time::Instant;

use graph_transformer::data::synthetic_svo;
use graph_transformer::train::trainer::{build_vocabs, teacher_forced_accuracy};
use graph_transformer::train::{Config, Trainer};

pub fn run_example() -> graph_transformer::Result<()> {
    let steps = std::env::var("TOY_STEPS").map_or(2000, |s| s.parse().expect("TOY_STEPS is a number"));
    train_toy(steps)
}

pub fn train_toy(max_steps: usize) -> graph_transformer::Result<()> {
    let pairs = synthetic_svo(20, 7)?;
    let mut config = Config::default();
    config.model.layers = 2;
    config.train.batch_size = 4;
    // batches of four need a gentler peak rate than the default warmup gives
    config.train.warmup = 4000;
    config.train.max_steps = max_steps;
    config.train.eval_every = 50;
    config.train.target_accuracy = 0.99;

    let mut trainer = Trainer::<f32>::new(config, build_vocabs(&pairs)?)?;
    let data = pairs
        .iter()
        .map(|(g, s)| trainer.model.prepare(g, Some(s)))
        .collect::<graph_transformer::Result<Vec<_>>>()?;

    let start = Instant::now();
    let report = trainer.run(&data, &[], None)?;
    println!(
        "{} steps in {:.1?}, final loss {:.4}, accuracy {:.3}",
        report.steps,
        start.elapsed(),
        report.losses.last().copied().unwrap_or(f64::NAN),
        teacher_forced_accuracy(&trainer.model, &data)?
    );
    for (ex, (_, reference)) in data.iter().zip(&pairs).take(5) {
        let hyp = trainer.model.beam_search(&ex.graph, 8, 20)?;
        println!("{:<40} | {}", hyp.text(), reference);
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
