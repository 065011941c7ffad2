// Runs the relation-aware encoder on one graph and on a relabelled copy,
// showing that node states follow the permutation.

use gt_autodiff::Tape;
use graph_transformer::graph::{parse_penman, BOY_WANTS_AMR};
use graph_transformer::model::{Ctx, GraphInput, Model, ModelConfig};
use graph_transformer::relpath::Mode;
use graph_transformer::train::trainer::build_vocabs;

pub fn run_example() -> graph_transformer::Result<()> {
    let g = parse_penman(BOY_WANTS_AMR)?;
    let perm = [2, 0, 3, 1];
    let h = g.permuted(&perm)?;
    let pairs = vec![(g.clone(), "the boy wants the girl to believe him".to_string())];
    let config = ModelConfig {
        d_model: 32,
        heads: 4,
        d_ff: 64,
        layers: 2,
        ..ModelConfig::tiny()
    };
    let model = Model::<f64>::new(config, build_vocabs(&pairs)?, 1)?;
    let inputs = [GraphInput::new(&g, &model.vocabs, &model.config)?, GraphInput::new(&h, &model.vocabs, &model.config)?];

    let tape = Tape::new(false);
    let ctx = Ctx::new(&tape, &model.store, 0.0, 0);
    let out = model.encode_batch(&ctx, &[&inputs[0], &inputs[1]], Mode::Test, 0)?;
    let (a, b) = (tape.value(out[0].node_reps), tape.value(out[1].node_reps));
    println!("node states {:?}, global state {:?}", a.dim(), tape.value(out[0].global).dim());
    for (old, &new) in perm.iter().enumerate() {
        let diff = (&a.row(old) - &b.row(new)).iter().fold(0.0f64, |m, d| m.max(d.abs()));
        println!("{:>10}: node {old} -> {new}, max diff {diff:.1e}", g.label(old));
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
