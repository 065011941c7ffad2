// Drives the command-line entry point in-process: preprocess a PENMAN
// file, train briefly, generate and score.

use std::fs;

use graph_transformer::cli::run_from;
use graph_transformer::data::synthetic_svo;
use graph_transformer::graph::render_penman;

fn step(args: &[&str]) -> graph_transformer::Result<()> {
    println!("$ graph-transformer {}", args.join(" "));
    let argv = std::iter::once("graph-transformer").chain(args.iter().copied());
    match run_from(argv) {
        0 => Ok(()),
        code => Err(graph_transformer::Error::Internal(format!("exit code {code}"))),
    }
}

pub fn run_example() -> graph_transformer::Result<()> {
    let dir = std::env::temp_dir().join(format!("gt-cli-example-{}", std::process::id()));
    fs::create_dir_all(&dir).map_err(|e| graph_transformer::Error::io(&dir, e))?;
    let path = |name: &str| dir.join(name).to_string_lossy().into_owned();

    let mut amr = String::new();
    let mut refs = String::new();
    for (g, s) in synthetic_svo(8, 5)? {
        amr.push_str(&format!("# ::snt {s}\n{}\n\n", render_penman(&g)?));
        refs.push_str(&format!("{s}\n"));
    }
    let write = |name: &str, text: &str| fs::write(dir.join(name), text).map_err(|e| graph_transformer::Error::io(dir.join(name), e));
    write("corpus.amr", &amr)?;
    write("refs.txt", &refs)?;

    step(&["preprocess", "--format", "penman", "--in", &path("corpus.amr"), "--out", &path("corpus.jsonl")])?;
    let (data, run_dir) = (path("corpus.jsonl"), path("run"));
    let mut train = vec!["train", "--data", &data, "--out-dir", &run_dir, "--seed", "1"];
    let sets = ["d_model=16", "heads=4", "d_ff=32", "layers=2", "node_emb=8", "token_emb=8", "edge_emb=8", "max_steps=40", "warmup=20", "eval_every=0"];
    for s in &sets {
        train.extend(["--set", s]);
    }
    let ckpt = path("run/last.ckpt");
    step(&train)?;
    step(&["generate", "--ckpt", &ckpt, "--in", &path("corpus.jsonl"), "--out", &path("hyps.txt"), "--beam", "4", "--max-len", "12"])?;
    step(&["evaluate", "--hyp", &path("hyps.txt"), "--ref", &path("refs.txt"), "--metric", "chrfpp"])?;
    step(&["analyze", "--ckpt", &ckpt, "--data", &path("corpus.jsonl"), "--report", "attn-distance", "--out", &path("attn.csv")])?;
    fs::remove_dir_all(&dir).map_err(|e| graph_transformer::Error::io(&dir, e))?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
