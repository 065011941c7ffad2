//! The `graph-transformer` command line: preprocess, train, generate,
//! evaluate and analyze.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use gt_autodiff::rng::sub_seed;
use gt_autodiff::Float;

use crate::data::{load_corpus, summarize, write_jsonl, Corpus, InputFormat, Preprocessed};
use crate::eval::analysis::{encoder_attention, write_distance_csv, AttentionMaps};
use crate::eval::{attention_distance, binned_report, score, sentence_chrf_pp, BinKey, Metric};
use crate::manifest::{manifest_path, sha256_hex, RunManifest};
use crate::model::{Example, GraphInput, Model};
use crate::relpath::PathConfig;
use crate::train::trainer::{self, build_vocabs, load_model, read_config};
use crate::train::{Config, Precision, Trainer};
use crate::{exit, Error, Result};

#[derive(Debug, Parser)]
#[command(name = "graph-transformer", version, about = "Graph-to-sequence generation with relation-aware attention")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse graphs and write augmented graphs, positions, statistics and
    /// relation paths as JSONL.
    Preprocess(PreprocessArgs),
    /// Train a model; writes config, vocabularies, metrics and checkpoints.
    Train(TrainArgs),
    /// Decode every graph of a corpus, one sentence per line.
    Generate(GenerateArgs),
    /// Score hypotheses against references.
    Evaluate(EvaluateArgs),
    /// Binned performance reports and the attention-distance probe.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long, value_parser = parse_format)]
    pub format: InputFormat,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub max_path_len: usize,
    #[arg(long, default_value_t = 4)]
    pub path_cap: usize,
    /// Warn about malformed graphs instead of failing.
    #[arg(long)]
    pub skip_bad: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `key = value` configuration file; defaults apply otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training corpus (PENMAN, CoNLL-U or preprocessed JSONL).
    #[arg(long)]
    pub data: PathBuf,
    /// Development corpus scored with BLEU during training.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Configuration override, repeatable: `--set layers=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Continue from `<out-dir>/last.ckpt`; only training keys may be
    /// overridden.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub beam: usize,
    #[arg(long, default_value_t = 100)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, default_value = "bleu", value_parser = parse_metric)]
    pub metric: Metric,
    /// `sensitive` or `insensitive` (BLEU only).
    #[arg(long, default_value = "sensitive", value_parser = ["sensitive", "insensitive"])]
    pub case: String,
    /// Also write the score and a manifest as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// size, diameter, reentrancy or attn-distance.
    #[arg(long)]
    pub report: String,
    /// CSV output.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub beam: usize,
    #[arg(long, default_value_t = 100)]
    pub max_len: usize,
    /// Three comma-separated upper bin bounds instead of quartiles.
    #[arg(long)]
    pub edges: Option<String>,
}

fn parse_format(s: &str) -> std::result::Result<InputFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    let recorded = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli.command, recorded) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command, args: Vec<String>) -> Result<()> {
    match command {
        Command::Preprocess(a) => preprocess(a, args),
        Command::Train(a) => train(a, args),
        Command::Generate(a) => generate(a, args),
        Command::Evaluate(a) => evaluate(a, args),
        Command::Analyze(a) => analyze(a, args),
    }
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn finish(mut manifest: RunManifest, artifacts: &[&Path], at: &Path) -> Result<()> {
    for a in artifacts {
        manifest.artifact(a)?;
    }
    manifest.save(at)
}

fn preprocess(a: PreprocessArgs, args: Vec<String>) -> Result<()> {
    if a.path_cap == 0 || a.max_path_len == 0 {
        return Err(Error::Config("--path-cap and --max-path-len must be positive".into()));
    }
    let corpus = load_corpus(&a.input, a.format, a.skip_bad)?;
    for w in &corpus.warnings {
        eprintln!("warning: {w}");
    }
    let cfg = PathConfig {
        cap: a.path_cap,
        max_len: a.max_path_len,
    };
    let mut rows = Vec::with_capacity(corpus.records.len());
    for rec in &corpus.records {
        match Preprocessed::new(rec, cfg) {
            Ok(p) => rows.push(p),
            Err(e) if a.skip_bad => eprintln!("warning: line {}: {e}", rec.line),
            Err(e) => {
                return Err(Error::Format {
                    line: rec.line,
                    msg: e.to_string(),
                })
            }
        }
    }
    let mut out = std::io::BufWriter::new(create(&a.out)?);
    write_jsonl(&rows, &mut out)?;
    out.flush().map_err(|e| Error::io(&a.out, e))?;
    drop(out);
    let graphs: Vec<_> = corpus.records.iter().map(|r| &r.graph).collect();
    println!("{}", summarize(&graphs));
    let mut m = RunManifest::new("preprocess", args);
    m.input(&a.input)?;
    finish(m, &[&a.out], &manifest_path(&a.out))
}

fn pairs(corpus: &Corpus, what: &Path) -> Result<Vec<(crate::graph::LabeledGraph, String)>> {
    corpus
        .records
        .iter()
        .map(|r| match &r.target {
            Some(t) => Ok((r.graph.clone(), t.clone())),
            None => Err(Error::Data(format!(
                "{}: graph `{}` (line {}) has no reference sentence",
                what.display(),
                r.id,
                r.line
            ))),
        })
        .collect()
}

fn train(a: TrainArgs, args: Vec<String>) -> Result<()> {
    let precision = if a.resume {
        read_config(&a.out_dir)?.train.precision
    } else {
        let mut config = match &a.config {
            Some(p) => Config::parse(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
            None => Config::default(),
        };
        apply_overrides(&mut config, &a)?;
        config.train.precision
    };
    match precision {
        Precision::F32 => train_with::<f32>(a, args),
        Precision::F64 => train_with::<f64>(a, args),
    }
}

fn apply_overrides(config: &mut Config, a: &TrainArgs) -> Result<()> {
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{kv}` is not KEY=VALUE")))?;
        let (k, v) = (k.trim(), v.trim());
        if a.resume && serde_json::to_value(&config.model)?.get(k).is_some() {
            return Err(Error::Config(format!("model key `{k}` cannot change on resume")));
        }
        config.set(k, v)?;
    }
    if let Some(seed) = a.seed {
        config.train.seed = seed;
    }
    config.validate()
}

fn train_with<F: Float>(a: TrainArgs, args: Vec<String>) -> Result<()> {
    let train_corpus = load_corpus(&a.data, InputFormat::from_path(&a.data), false)?;
    let train_pairs = pairs(&train_corpus, &a.data)?;
    let mut trainer = if a.resume {
        let mut t = Trainer::<F>::resume(&a.out_dir)?;
        if a.seed.is_some() {
            return Err(Error::Config("--seed cannot change on resume".into()));
        }
        apply_overrides(&mut t.config, &a)?;
        t
    } else {
        let mut config = match &a.config {
            Some(p) => Config::parse(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
            None => Config::default(),
        };
        apply_overrides(&mut config, &a)?;
        Trainer::<F>::new(config, build_vocabs(&train_pairs)?)?
    };
    let prepare = |pairs: &[(crate::graph::LabeledGraph, String)]| {
        pairs
            .iter()
            .map(|(g, s)| trainer.model.prepare(g, Some(s)))
            .collect::<Result<Vec<Example>>>()
    };
    let train_data = prepare(&train_pairs)?;
    let dev_data = match &a.dev {
        Some(p) => {
            let corpus = load_corpus(p, InputFormat::from_path(p), false)?;
            prepare(&pairs(&corpus, p)?)?
        }
        None => Vec::new(),
    };
    let report = trainer.run(&train_data, &dev_data, Some(&a.out_dir))?;
    println!(
        "steps={} loss={:.4} best_dev_bleu={}{}",
        report.steps,
        report.losses.last().copied().unwrap_or(f64::NAN),
        report.best_dev_bleu.map_or("-".into(), |b| format!("{b:.2}")),
        if report.stopped_early { " (accuracy target reached)" } else { "" }
    );

    let mut m = RunManifest::new("train", args);
    let seed = trainer.config.train.seed;
    m.seeds.insert("seed".into(), seed);
    for name in ["init", "shuffle", "unk", "dropout", "paths"] {
        m.seeds.insert(name.into(), sub_seed(seed, name));
    }
    m.config_sha256 = Some(sha256_hex(trainer.config.to_text().as_bytes()));
    m.input(&a.data)?;
    if let Some(dev) = &a.dev {
        m.input(dev)?;
    }
    let dir = &a.out_dir;
    let mut artifacts: Vec<PathBuf> = [trainer::CONFIG_FILE, trainer::VOCAB_FILE, trainer::METRICS_FILE, "last.ckpt", "last.json"]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    for f in ["best.ckpt", "best.json"] {
        if dir.join(f).exists() {
            artifacts.push(dir.join(f));
        }
    }
    let refs: Vec<&Path> = artifacts.iter().map(PathBuf::as_path).collect();
    finish(m, &refs, &dir.join("manifest.json"))
}

fn checkpoint_precision(ckpt: &Path) -> Result<Precision> {
    let dir = ckpt.parent().unwrap_or(Path::new("."));
    Ok(read_config(dir)?.train.precision)
}

fn inputs<F: Float>(model: &Model<F>, path: &Path) -> Result<(Corpus, Vec<GraphInput>)> {
    let corpus = load_corpus(path, InputFormat::from_path(path), false)?;
    let graphs = corpus
        .records
        .iter()
        .map(|r| GraphInput::new(&r.graph, &model.vocabs, &model.config))
        .collect::<Result<Vec<_>>>()?;
    Ok((corpus, graphs))
}

fn generate(a: GenerateArgs, args: Vec<String>) -> Result<()> {
    match checkpoint_precision(&a.ckpt)? {
        Precision::F32 => generate_with::<f32>(a, args),
        Precision::F64 => generate_with::<f64>(a, args),
    }
}

fn generate_with<F: Float>(a: GenerateArgs, args: Vec<String>) -> Result<()> {
    if a.beam == 0 {
        return Err(Error::Config("--beam must be at least 1".into()));
    }
    let model = load_model::<F>(&a.ckpt)?;
    let (_, graphs) = inputs(&model, &a.input)?;
    let mut out = std::io::BufWriter::new(create(&a.out)?);
    for g in &graphs {
        let hyp = model.beam_search(g, a.beam, a.max_len)?;
        writeln!(out, "{}", hyp.text()).map_err(|e| Error::io(&a.out, e))?;
    }
    out.flush().map_err(|e| Error::io(&a.out, e))?;
    drop(out);
    let mut m = RunManifest::new("generate", args);
    m.input(&a.ckpt)?;
    m.input(&a.input)?;
    finish(m, &[&a.out], &manifest_path(&a.out))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)
        .map_err(|e| Error::io(path, e))?
        .lines()
        .map(str::to_string)
        .collect())
}

fn evaluate(a: EvaluateArgs, args: Vec<String>) -> Result<()> {
    let hyps = read_lines(&a.hyp)?;
    let refs = read_lines(&a.reference)?;
    let value = score(a.metric, &hyps, &refs, a.case == "sensitive")?;
    println!("{value:.2}");
    if let Some(out) = &a.out {
        let body = serde_json::json!({
            "metric": format!("{:?}", a.metric).to_lowercase(),
            "case": a.case,
            "sentences": hyps.len(),
            "score": value,
        });
        fs::write(out, serde_json::to_string_pretty(&body)? + "\n").map_err(|e| Error::io(out, e))?;
        let mut m = RunManifest::new("evaluate", args);
        m.input(&a.hyp)?;
        m.input(&a.reference)?;
        finish(m, &[out], &manifest_path(out))?;
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs, args: Vec<String>) -> Result<()> {
    match checkpoint_precision(&a.ckpt)? {
        Precision::F32 => analyze_with::<f32>(a, args),
        Precision::F64 => analyze_with::<f64>(a, args),
    }
}

fn parse_edges(s: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad --edges `{s}`")))?;
    v.try_into()
        .map_err(|_| Error::Config("--edges takes exactly three values".into()))
}

fn analyze_with<F: Float>(a: AnalyzeArgs, args: Vec<String>) -> Result<()> {
    let model = load_model::<F>(&a.ckpt)?;
    let (corpus, graphs) = inputs(&model, &a.data)?;
    let mut out = create(&a.out)?;
    let io = |e| Error::io(&a.out, e);
    if a.report == "attn-distance" {
        let maps = graphs
            .iter()
            .map(|g| encoder_attention(&model, g))
            .collect::<Result<Vec<AttentionMaps>>>()?;
        let items: Vec<_> = maps
            .iter()
            .zip(&graphs)
            .map(|(m, g)| (m, &g.paths, g.graph.global_node()))
            .collect();
        let rows = attention_distance(&items)?;
        write_distance_csv(&rows, &mut out).map_err(io)?;
        for r in &rows {
            println!("layer {} head {}: {:.3}", r.layer, r.head, r.avg_distance);
        }
    } else {
        let key: BinKey = a.report.parse()?;
        let edges = a.edges.as_deref().map(parse_edges).transpose()?;
        let references = pairs(&corpus, &a.data)?;
        let mut scores = Vec::with_capacity(graphs.len());
        for (g, (_, reference)) in graphs.iter().zip(&references) {
            let hyp = model.beam_search(g, a.beam, a.max_len)?;
            scores.push(sentence_chrf_pp(&hyp.text(), reference));
        }
        let stats: Vec<_> = graphs.iter().map(|g| g.stats).collect();
        let report = binned_report(&scores, &stats, key, edges)?;
        report.write_csv(&mut out).map_err(io)?;
        report.write_csv(std::io::stdout()).map_err(|e| Error::io("<stdout>", e))?;
    }
    drop(out);
    let mut m = RunManifest::new("analyze", args);
    m.input(&a.ckpt)?;
    m.input(&a.data)?;
    finish(m, &[&a.out], &manifest_path(&a.out))
}
