//! Seeded, resumable training loop with checkpoints and a metrics log.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use gt_autodiff::rng::{mix, sub_seed};
use gt_autodiff::{checkpoint, Float, Matrix, Tape};

use super::config::Config;
use super::loss::{batch_loss, node_unk, unk_replace};
use super::optim::{lr_schedule, Adam};
use crate::eval::bleu;
use crate::graph::LabeledGraph;
use crate::model::{Ctx, Example, GateMode, Model};
use crate::relpath::Mode;
use crate::vocab::Vocabs;
use crate::{Error, Result};

/// Bumped whenever the on-disk layout of a run directory changes.
pub const FORMAT_VERSION: u32 = 1;

pub const CONFIG_FILE: &str = "config.txt";
pub const VOCAB_FILE: &str = "vocab.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const LAST: &str = "last";
pub const BEST: &str = "best";

/// Vocabularies of a training corpus (graphs are augmented first).
pub fn build_vocabs(pairs: &[(LabeledGraph, String)]) -> Result<Vocabs> {
    let graphs = pairs
        .iter()
        .map(|(g, _)| if g.is_augmented() { Ok(g.clone()) } else { g.augment() })
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<Vec<String>> = pairs
        .iter()
        .map(|(_, s)| s.split_whitespace().map(str::to_string).collect())
        .collect();
    Ok(Vocabs::build(graphs.iter(), targets.iter().map(Vec::as_slice)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TrainerState {
    format_version: u32,
    step: usize,
    adam_t: u64,
    best_dev_bleu: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
    /// Teacher-forced accuracy on the (perturbed) batch.
    pub accuracy: f64,
    pub clamped: usize,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub steps: usize,
    pub losses: Vec<f64>,
    pub best_dev_bleu: Option<f64>,
    /// Last measured teacher-forced accuracy on the training set.
    pub train_accuracy: Option<f64>,
    pub stopped_early: bool,
}

pub struct Trainer<F: Float> {
    pub model: Model<F>,
    pub config: Config,
    pub adam: Adam<F>,
    /// Completed optimizer steps.
    pub step: usize,
    pub best_dev_bleu: Option<f64>,
}

impl<F: Float> Trainer<F> {
    pub fn new(config: Config, vocabs: Vocabs) -> Result<Self> {
        config.validate()?;
        let seed = sub_seed(config.train.seed, "init");
        let model = Model::new(config.model.clone(), vocabs, seed)?;
        let t = &config.train;
        let adam = Adam::new(&model.store, t.beta1, t.beta2, t.adam_eps);
        Ok(Self {
            model,
            config,
            adam,
            step: 0,
            best_dev_bleu: None,
        })
    }

    /// Example indices of the batch used at 1-based `step`: each epoch is
    /// a fresh seeded permutation cut into consecutive batches.
    pub fn batch_indices(&self, n: usize, step: usize) -> Vec<usize> {
        let b = self.config.train.batch_size.min(n);
        let per_epoch = n.div_ceil(b);
        let (epoch, k) = ((step - 1) / per_epoch, (step - 1) % per_epoch);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix(sub_seed(self.config.train.seed, "shuffle"), epoch as u64));
        perm.shuffle(&mut rng);
        perm[k * b..((k + 1) * b).min(n)].to_vec()
    }

    /// One optimizer step. Every random choice is a function of the seed
    /// and the step number, so a resumed run replays exactly.
    pub fn train_step(&mut self, data: &[Example]) -> Result<StepStats> {
        if data.is_empty() {
            return Err(Error::Data("empty training set".into()));
        }
        let step = self.step + 1;
        let seed = self.config.train.seed;
        let idx = self.batch_indices(data.len(), step);
        let graphs: Vec<_> = idx.iter().map(|&i| &data[i].graph).collect();
        let perturbed = unk_replace(
            &graphs,
            node_unk(&self.model),
            self.config.train.unk_rate,
            mix(sub_seed(seed, "unk"), step as u64),
        );
        let batch: Vec<Example> = perturbed
            .into_iter()
            .zip(&idx)
            .map(|(graph, &i)| Example {
                graph,
                target: data[i].target.clone(),
            })
            .collect();
        let refs: Vec<&Example> = batch.iter().collect();

        let tape = Tape::new(true);
        let (loss, tokens, correct, clamped) = {
            let ctx = Ctx::new(
                &tape,
                &self.model.store,
                self.config.model.dropout,
                mix(sub_seed(seed, "dropout"), step as u64),
            );
            let out = batch_loss(
                &self.model,
                &ctx,
                &refs,
                Mode::Train,
                mix(sub_seed(seed, "paths"), step as u64),
                GateMode::Learned,
            )?;
            let loss = tape.scalar(out.loss).to_f64();
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            tape.backward(out.loss)?;
            (loss, out.tokens, out.correct, out.clamped)
        };
        self.model.store.zero_grad();
        self.model.store.accumulate(&tape);
        drop(tape);
        let grad_norm = self.model.store.grad_norm();
        if !grad_norm.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        let lr = lr_schedule(step, self.config.model.d_model, self.config.train.warmup);
        self.adam.step(&mut self.model.store, lr);
        self.step = step;
        Ok(StepStats {
            step,
            loss,
            lr,
            grad_norm,
            accuracy: correct as f64 / tokens as f64,
            clamped,
        })
    }

    /// Trains until `max_steps` or the accuracy target. With `out`, writes
    /// the config, vocabularies, metrics log and checkpoints there.
    pub fn run(&mut self, train: &[Example], dev: &[Example], out: Option<&Path>) -> Result<TrainReport> {
        let mut log = match out {
            Some(dir) => Some(self.prepare_dir(dir)?),
            None => None,
        };
        let tc = self.config.train.clone();
        let mut report = TrainReport {
            best_dev_bleu: self.best_dev_bleu,
            ..Default::default()
        };
        while self.step < tc.max_steps {
            let stats = self.train_step(train)?;
            report.losses.push(stats.loss);
            let mut dev_bleu = None;
            let at_end = self.step == tc.max_steps;
            let evaluate = (tc.eval_every > 0 && self.step.is_multiple_of(tc.eval_every)) || at_end;
            if evaluate && !dev.is_empty() {
                let score = corpus_bleu(&self.model, dev, tc.eval_beam, tc.max_decode_len)?;
                dev_bleu = Some(score);
                if self.best_dev_bleu.is_none_or(|b| score > b) {
                    self.best_dev_bleu = Some(score);
                    if let Some(dir) = out {
                        self.save(dir, BEST)?;
                    }
                }
            }
            if let Some(w) = log.as_mut() {
                let bleu = dev_bleu.map(|b| format!("{b:.4}")).unwrap_or_default();
                writeln!(
                    w,
                    "{},{:.6},{:.8},{:.6},{}",
                    stats.step, stats.loss, stats.lr, stats.grad_norm, bleu
                )
                .map_err(|e| Error::io(METRICS_FILE, e))?;
            }
            let mut stop = false;
            if evaluate && tc.target_accuracy > 0.0 {
                let acc = teacher_forced_accuracy(&self.model, train)?;
                report.train_accuracy = Some(acc);
                stop = acc >= tc.target_accuracy;
            }
            if let Some(dir) = out {
                if tc.checkpoint_every > 0 && self.step.is_multiple_of(tc.checkpoint_every) {
                    self.save(dir, LAST)?;
                }
            }
            if stop {
                report.stopped_early = true;
                break;
            }
        }
        if let Some(dir) = out {
            self.save(dir, LAST)?;
        }
        report.steps = self.step;
        report.best_dev_bleu = self.best_dev_bleu;
        Ok(report)
    }

    fn prepare_dir(&self, dir: &Path) -> Result<fs::File> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cfg = dir.join(CONFIG_FILE);
        fs::write(&cfg, self.config.to_text()).map_err(|e| Error::io(&cfg, e))?;
        self.model.vocabs.save(&dir.join(VOCAB_FILE))?;
        // keep only the rows of steps already taken (relevant when resuming)
        let path = dir.join(METRICS_FILE);
        let mut kept = String::from("step,loss,lr,grad_norm,dev_bleu\n");
        if let Ok(old) = fs::read_to_string(&path) {
            for line in old.lines().skip(1) {
                let step: Option<usize> = line.split(',').next().and_then(|s| s.parse().ok());
                if step.is_some_and(|s| s <= self.step) {
                    kept.push_str(line);
                    kept.push('\n');
                }
            }
        }
        fs::write(&path, kept).map_err(|e| Error::io(&path, e))?;
        fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))
    }

    /// Writes `<name>.ckpt` (parameters and optimizer moments) and
    /// `<name>.json` (step counters).
    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        let store = &self.model.store;
        let mut tensors: Vec<(String, &Matrix<F>)> = store
            .ids()
            .map(|id| (store.name(id).to_string(), store.value(id)))
            .collect();
        tensors.extend(self.adam.named_state(store));
        let ckpt = dir.join(format!("{name}.ckpt"));
        checkpoint::save(&ckpt, &tensors).map_err(|e| match e {
            gt_autodiff::Error::Io(io) => Error::io(&ckpt, io),
            other => other.into(),
        })?;
        let state = TrainerState {
            format_version: FORMAT_VERSION,
            step: self.step,
            adam_t: self.adam.t,
            best_dev_bleu: self.best_dev_bleu,
        };
        let path = dir.join(format!("{name}.json"));
        fs::write(&path, serde_json::to_string_pretty(&state)?).map_err(|e| Error::io(&path, e))
    }

    /// Restores a run directory written by [`run`](Self::run) from its
    /// `last` checkpoint.
    pub fn resume(dir: &Path) -> Result<Self> {
        let config = read_config(dir)?;
        let vocabs = Vocabs::load(&dir.join(VOCAB_FILE))?;
        let state_path = dir.join(format!("{LAST}.json"));
        let text = fs::read_to_string(&state_path).map_err(|e| Error::io(&state_path, e))?;
        let state: TrainerState = serde_json::from_str(&text)?;
        if state.format_version != FORMAT_VERSION {
            return Err(Error::Version(format!(
                "run directory format {} (expected {FORMAT_VERSION})",
                state.format_version
            )));
        }
        let tensors = load_tensors::<F>(&dir.join(format!("{LAST}.ckpt")))?;
        let mut trainer = Self::new(config, vocabs)?;
        trainer.model = Model::with_params(trainer.config.model.clone(), trainer.model.vocabs.clone(), tensors.clone())?;
        trainer.adam.load_state(&trainer.model.store, &tensors, state.adam_t)?;
        trainer.step = state.step;
        trainer.best_dev_bleu = state.best_dev_bleu;
        Ok(trainer)
    }
}

pub fn read_config(dir: &Path) -> Result<Config> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Config::parse(&text)
}

/// Reads a checkpoint, reporting format problems as version errors.
pub fn load_tensors<F: Float>(path: &Path) -> Result<Vec<(String, Matrix<F>)>> {
    checkpoint::load(path).map_err(|e| match e {
        gt_autodiff::Error::Io(io) => Error::io(path, io),
        gt_autodiff::Error::Checkpoint(msg) => Error::Version(format!("{}: {msg}", path.display())),
        other => other.into(),
    })
}

/// Loads a model from `<dir>/<name>.ckpt` with the sibling config and
/// vocabulary files.
pub fn load_model<F: Float>(ckpt: &Path) -> Result<Model<F>> {
    let dir: PathBuf = ckpt.parent().map(Path::to_path_buf).unwrap_or_default();
    let config = read_config(&dir)?;
    let vocabs = Vocabs::load(&dir.join(VOCAB_FILE))?;
    Model::with_params(config.model, vocabs, load_tensors(ckpt)?)
}

/// Fraction of gold words that are the argmax of the mixture under
/// teacher forcing (eval mode, averaged relation paths).
pub fn teacher_forced_accuracy<F: Float>(model: &Model<F>, data: &[Example]) -> Result<f64> {
    let (mut correct, mut total) = (0, 0);
    for chunk in data.chunks(8) {
        let tape = Tape::new(false);
        let ctx = Ctx::new(&tape, &model.store, 0.0, 0);
        let refs: Vec<&Example> = chunk.iter().collect();
        let out = batch_loss(model, &ctx, &refs, Mode::Test, 0, GateMode::Learned)?;
        correct += out.correct;
        total += out.tokens;
    }
    Ok(correct as f64 / total.max(1) as f64)
}

/// Decodes every example and scores it against its target with BLEU.
pub fn corpus_bleu<F: Float>(model: &Model<F>, data: &[Example], beam: usize, max_len: usize) -> Result<f64> {
    let mut hyps = Vec::with_capacity(data.len());
    let mut refs = Vec::with_capacity(data.len());
    for ex in data {
        let hyp = model.beam_search(&ex.graph, beam, max_len)?;
        hyps.push(hyp.text());
        refs.push(
            ex.target
                .as_ref()
                .map(|t| t.words.join(" "))
                .ok_or_else(|| Error::Data("dev example without a target".into()))?,
        );
    }
    bleu(&hyps, &refs, true)
}
