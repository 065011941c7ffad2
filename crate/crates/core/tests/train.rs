use std::fs;
use std::path::Path;

use graph_transformer::data::synthetic_svo;
use graph_transformer::model::{Example, ModelConfig};
use graph_transformer::train::trainer::{build_vocabs, load_model, FORMAT_VERSION};
use graph_transformer::train::{lr_schedule, Config, Trainer};
use graph_transformer::Error;

fn toy_config(max_steps: usize) -> Config {
    let mut c = Config {
        model: ModelConfig {
            dropout: 0.1,
            ..ModelConfig::tiny()
        },
        ..Config::default()
    };
    c.train.batch_size = 2;
    c.train.max_steps = max_steps;
    c.train.warmup = 4;
    c.train.eval_every = 0;
    c.train.checkpoint_every = 0;
    c.train.seed = 5;
    c
}

fn toy_trainer(config: Config) -> (Trainer<f32>, Vec<Example>) {
    let pairs = synthetic_svo(5, 1).unwrap();
    let trainer = Trainer::new(config, build_vocabs(&pairs).unwrap()).unwrap();
    let data = pairs
        .iter()
        .map(|(g, s)| trainer.model.prepare(g, Some(s)).unwrap())
        .collect();
    (trainer, data)
}

fn bytes(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap()
}

#[test]
fn resumed_run_replays_an_uninterrupted_one() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));

    let (mut t, data) = toy_trainer(toy_config(7));
    t.run(&data, &[], Some(&a)).unwrap();

    let (mut t, data) = toy_trainer(toy_config(3));
    t.run(&data, &[], Some(&b)).unwrap();
    let mut resumed = Trainer::<f32>::resume(&b).unwrap();
    assert_eq!(resumed.step, 3);
    resumed.config.train.max_steps = 7;
    resumed.run(&data, &[], Some(&b)).unwrap();

    assert_eq!(bytes(&a.join("last.ckpt")), bytes(&b.join("last.ckpt")));
    let metrics = |d: &Path| fs::read_to_string(d.join("metrics.csv")).unwrap();
    assert_eq!(metrics(&a), metrics(&b));
    assert_eq!(metrics(&a).lines().count(), 8);
}

#[test]
fn same_seed_same_bytes_and_other_seed_differs() {
    let dir = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for (k, seed) in [5, 5, 6].into_iter().enumerate() {
        let mut c = toy_config(4);
        c.train.seed = seed;
        let (mut t, data) = toy_trainer(c);
        let d = dir.path().join(k.to_string());
        t.run(&data, &[], Some(&d)).unwrap();
        outs.push(bytes(&d.join("last.ckpt")));
    }
    assert_eq!(outs[0], outs[1]);
    assert_ne!(outs[0], outs[2]);
}

#[test]
fn batches_cover_each_epoch_exactly_once() {
    let (t, _) = toy_trainer(toy_config(1));
    let mut seen: Vec<usize> = (1..=3).flat_map(|s| t.batch_indices(5, s)).collect();
    seen.sort_unstable();
    assert_eq!(seen, [0, 1, 2, 3, 4]);
    assert_ne!(t.batch_indices(5, 1), t.batch_indices(5, 4), "epochs reshuffle");
}

#[test]
fn loss_falls_on_a_tiny_corpus() {
    let mut c = toy_config(60);
    c.model.dropout = 0.0;
    c.train.unk_rate = 0.0;
    c.train.warmup = 30;
    let (mut t, data) = toy_trainer(c);
    let report = t.run(&data, &[], None).unwrap();
    let head: f64 = report.losses[..5].iter().sum::<f64>() / 5.0;
    let tail: f64 = report.losses[55..].iter().sum::<f64>() / 5.0;
    assert!(tail < head * 0.8, "{head} -> {tail}");
}

#[test]
fn dev_bleu_writes_best_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = toy_config(2);
    c.train.eval_every = 1;
    c.train.max_decode_len = 5;
    let (mut t, data) = toy_trainer(c);
    let report = t.run(&data, &data[..2], Some(dir.path())).unwrap();
    assert!(report.best_dev_bleu.is_some());
    assert!(dir.path().join("best.ckpt").exists());
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(metrics.lines().skip(1).all(|l| l.split(',').count() == 5));
    let model = load_model::<f32>(&dir.path().join("best.ckpt")).unwrap();
    assert_eq!(model.store.len(), t.model.store.len());
}

#[test]
fn accuracy_target_stops_early() {
    let mut c = toy_config(50);
    c.train.eval_every = 1;
    c.train.target_accuracy = 1e-9;
    let (mut t, data) = toy_trainer(c);
    let report = t.run(&data, &[], None).unwrap();
    assert!(report.stopped_early);
    assert_eq!(report.steps, 1);
}

#[test]
fn foreign_artifacts_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (mut t, data) = toy_trainer(toy_config(1));
    t.run(&data, &[], Some(dir.path())).unwrap();

    let state = dir.path().join("last.json");
    let text = fs::read_to_string(&state).unwrap();
    let wrong = format!("\"format_version\": {}", FORMAT_VERSION + 1);
    fs::write(&state, text.replace(&format!("\"format_version\": {FORMAT_VERSION}"), &wrong)).unwrap();
    assert!(matches!(Trainer::<f32>::resume(dir.path()), Err(Error::Version(_))));
    fs::write(&state, text).unwrap();

    let ckpt = dir.path().join("last.ckpt");
    let mut raw = bytes(&ckpt);
    raw[8..12].copy_from_slice(&99u32.to_le_bytes());
    fs::write(&ckpt, raw).unwrap();
    let err = load_model::<f32>(&ckpt).unwrap_err();
    assert!(matches!(err, Error::Version(_)), "{err}");
}

#[test]
fn schedule_matches_closed_form() {
    for (s, w, d) in [(1usize, 400usize, 512usize), (400, 400, 512), (4000, 400, 512), (10, 4000, 64)] {
        let (s_, w_, d_) = (s as f64, w as f64, d as f64);
        let want = if s_ < w_ { s_ / w_.powf(1.5) } else { 1.0 / s_.sqrt() } / d_.sqrt();
        assert!((lr_schedule(s, d, w) - want).abs() < 1e-15);
    }
}
