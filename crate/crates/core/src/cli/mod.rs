//! Command-line front end.

pub mod manifest;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::synth::standard_profiles;
use crate::data::{
    format_corpus, load_corpus, load_profiles, pairwise_kappa, save_corpus, synth_generate, vote_corpus, Corpus,
    LabeledSentence, LoadOptions, SynthSpec,
};
use crate::error::{Error, Result};
use crate::model::checkpoint::Tagger;
use crate::model::{Instance, Mode, Model, ModelConfig};
use crate::numcore::GradCheckOptions;
use crate::train_eval::{
    apply_embeddings, compare_experiment, evaluate, init_tagger, train_with_progress, CompareConfig, Dims, System,
    TrainConfig, DESK_EPOCHS,
};
use manifest::RunManifest;

pub const MODEL_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.tsv";

#[derive(Debug, Parser)]
#[command(name = "crowdner", version, about = "Character-level NER from crowd annotations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic crowd-annotated corpus.
    Synth(SynthArgs),
    /// Train a tagger.
    Train(TrainArgs),
    /// Tag raw text, one sentence per line.
    Tag(TagArgs),
    /// Score a tagger against gold data.
    Eval(EvalArgs),
    /// Majority-vote a crowd corpus.
    Vote(VoteArgs),
    /// Average pairwise Cohen's kappa of a crowd corpus.
    Kappa(KappaArgs),
    /// Finite-difference gradient check at toy sizes.
    Gradcheck(GradcheckArgs),
    /// Train baseline, voted and adversarial systems over several seeds.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML file with [[worker]] noise profiles (three built-in workers
    /// when omitted).
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub annotators: usize,
    #[arg(long, default_value_t = 800)]
    pub train_size: usize,
    #[arg(long, default_value_t = 200)]
    pub dev_size: usize,
    #[arg(long, default_value_t = 400)]
    pub test_size: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Model and optimizer settings shared by `train` and `compare`.
#[derive(Debug, Args, Clone)]
pub struct ConfigArgs {
    /// Small dimensions and 40 epochs for minutes-scale runs.
    #[arg(long)]
    pub desk: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub emb_dim: Option<usize>,
    #[arg(long)]
    pub label_emb_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> (Dims, TrainConfig) {
        let (mut dims, mut cfg) = (Dims::FULL, TrainConfig::default());
        if self.desk {
            dims = Dims::DESK;
            cfg.epochs = DESK_EPOCHS;
        }
        cfg.seed = self.seed;
        cfg.epochs = self.epochs.unwrap_or(cfg.epochs);
        cfg.batch = self.batch.unwrap_or(cfg.batch);
        cfg.lr = self.lr.unwrap_or(cfg.lr);
        cfg.l2 = self.l2.unwrap_or(cfg.l2);
        cfg.dropout = self.dropout.unwrap_or(cfg.dropout);
        dims.char_emb = self.emb_dim.unwrap_or(dims.char_emb);
        dims.label_emb = self.label_emb_dim.unwrap_or(dims.label_emb);
        dims.hidden = self.hidden_dim.unwrap_or(dims.hidden);
        (dims, cfg)
    }
}

fn record_config(m: &mut RunManifest, dims: Dims, cfg: &TrainConfig) {
    m.set("seed", cfg.seed);
    m.set("config.char_emb_dim", dims.char_emb);
    m.set("config.label_emb_dim", dims.label_emb);
    m.set("config.hidden_dim", dims.hidden);
    m.set("config.batch", cfg.batch);
    m.set("config.epochs", cfg.epochs);
    m.set("config.lr", format!("{:e}", cfg.lr));
    m.set("config.l2", format!("{:e}", cfg.l2));
    m.set("config.dropout", format!("{:e}", cfg.dropout));
    m.set("config.rmsprop_decay", format!("{:e}", cfg.decay));
    m.set("config.rmsprop_epsilon", format!("{:e}", cfg.epsilon));
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value = "adversarial")]
    pub mode: Mode,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    /// Pretrained character vectors in word2vec text format.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Reject corpus label sequences that are not valid BIEO.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TagArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Output corpus file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
}

#[derive(Debug, Args)]
pub struct VoteArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "adversarial")]
    pub mode: Mode,
    #[arg(long, default_value_t = 8)]
    pub emb_dim: usize,
    #[arg(long, default_value_t = 8)]
    pub label_emb_dim: usize,
    #[arg(long, default_value_t = 12)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub labels: usize,
    #[arg(long, default_value_t = 3)]
    pub workers: usize,
    #[arg(long, default_value_t = 10)]
    pub vocab: usize,
    /// Sentence length.
    #[arg(long, default_value_t = 6)]
    pub length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Coordinates sampled per parameter.
    #[arg(long, default_value_t = 64)]
    pub max_coords: usize,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "baseline,voted,adversarial")]
    pub systems: Vec<String>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Directory for the results table and manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Manifest path for a single output file: `<file>.manifest`.
pub fn manifest_beside(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn synth(args: &SynthArgs) -> Result<()> {
    let mut m = RunManifest::new("synth");
    let profiles = match &args.profiles {
        Some(p) => {
            m.input("profiles", p)?;
            load_profiles(p)?
        }
        None => {
            m.set("profiles", "standard");
            standard_profiles()
        }
    };
    let spec = SynthSpec {
        train: args.train_size,
        dev: args.dev_size,
        test: args.test_size,
        annotators: args.annotators,
        seed: args.seed,
    };
    let corpora = synth_generate(&spec, &profiles)?;
    create_dir(&args.out)?;
    m.set("seed", args.seed);
    m.set("annotators", args.annotators);
    m.set("sizes", format!("{} {} {}", spec.train, spec.dev, spec.test));
    for (name, corpus) in [
        ("train", &corpora.train),
        ("train_gold", &corpora.train_gold),
        ("dev", &corpora.dev),
        ("test", &corpora.test),
    ] {
        let path = args.out.join(format!("{name}.txt"));
        save_corpus(&path, corpus)?;
        m.output(name, &path)?;
    }
    m.write(&args.out)?;
    println!(
        "wrote {} crowd annotations, {} dev and {} test sentences to {}",
        corpora.train.len(),
        corpora.dev.len(),
        corpora.test.len(),
        args.out.display()
    );
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let (dims, cfg) = args.config.resolve();
    cfg.validate()?;
    let opts = LoadOptions {
        labels: None,
        strict: args.strict,
    };
    let train_corpus = load_corpus(&args.train, &opts)?;
    let dev = load_corpus(
        &args.dev,
        &LoadOptions {
            labels: Some(train_corpus.labels.clone()),
            strict: args.strict,
        },
    )?;
    if args.mode == Mode::Adversarial {
        if let Some(s) = train_corpus.sentences.iter().find(|s| s.worker.is_none()) {
            return Err(Error::validation(format!(
                "adversarial mode needs worker ids; sentence {} has none",
                s.id
            )));
        }
    }
    let mut m = RunManifest::new("train");
    m.set("mode", args.mode);
    record_config(&mut m, dims, &cfg);
    m.input("train", &args.train)?;
    m.input("dev", &args.dev)?;

    let mut tagger = init_tagger(args.mode, &train_corpus, dims, cfg.dropout, cfg.seed)?;
    if let Some(path) = &args.embeddings {
        let coverage = apply_embeddings(&mut tagger, path)?;
        m.input("embeddings", path)?;
        m.set("embeddings.hits", coverage.hits);
        eprintln!(
            "pretrained vectors for {} of {} characters",
            coverage.hits,
            tagger.vocab.len() - 1
        );
    }
    let outcome = train_with_progress(tagger, &train_corpus, &dev, &cfg, |r| {
        eprintln!("epoch {} loss {:.4} dev {}", r.epoch, r.train_loss, r.dev);
    })?;

    create_dir(&args.out)?;
    let model_path = args.out.join(MODEL_FILE);
    let history_path = args.out.join(HISTORY_FILE);
    outcome.tagger.save(&model_path)?;
    write_file(&history_path, &outcome.history.to_tsv())?;
    m.set(
        "best_epoch",
        outcome.history.best_epoch.map_or("none".to_string(), |e| e.to_string()),
    );
    m.output("model", &model_path)?;
    m.output("history", &history_path)?;
    m.write(&args.out)?;
    println!("saved {}", model_path.display());
    Ok(())
}

fn tag(args: &TagArgs) -> Result<()> {
    let tagger = Tagger::load(&args.model)?;
    let text = fs::read_to_string(&args.input).map_err(|e| Error::io(&args.input, e))?;
    let mut sentences = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            eprintln!("warning: {}:{}: empty line skipped", args.input.display(), i + 1);
            continue;
        }
        let chars: Vec<char> = line.chars().collect();
        let labels = tagger.tag(&chars)?;
        sentences.push(
            LabeledSentence::new(format!("line{}", i + 1), None, chars, labels)
                .map_err(|e| Error::parse(args.input.display().to_string(), i + 1, e.to_string()))?,
        );
    }
    let corpus = Corpus::new(sentences, tagger.labels.clone())?;
    match &args.out {
        Some(path) => {
            save_corpus(path, &corpus)?;
            let mut m = RunManifest::new("tag");
            m.input("model", &args.model)?;
            m.input("text", &args.input)?;
            m.output("tagged", path)?;
            write_file(&manifest_beside(path), &m.to_text())?;
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(format_corpus(&corpus).as_bytes())
                .map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let tagger = Tagger::load(&args.model)?;
    let gold = load_corpus(
        &args.gold,
        &LoadOptions {
            labels: Some(tagger.labels.clone()),
            strict: false,
        },
    )?;
    println!("{}", evaluate(&tagger, &gold)?);
    Ok(())
}

fn vote(args: &VoteArgs) -> Result<()> {
    let corpus = load_corpus(&args.input, &LoadOptions::default())?;
    let (voted, summary) = vote_corpus(&corpus)?;
    save_corpus(&args.out, &voted)?;
    let mut m = RunManifest::new("vote");
    m.input("crowd", &args.input)?;
    m.output("voted", &args.out)?;
    write_file(&manifest_beside(&args.out), &m.to_text())?;
    println!(
        "voted {} sentences, copied {} single annotations",
        summary.voted, summary.single
    );
    Ok(())
}

fn kappa(args: &KappaArgs) -> Result<()> {
    let corpus = load_corpus(&args.input, &LoadOptions::default())?;
    println!("{:.4}", pairwise_kappa(&corpus)?);
    Ok(())
}

fn gradcheck(args: &GradcheckArgs) -> Result<bool> {
    if args.length == 0 {
        return Err(Error::config("length must be positive"));
    }
    let mut cfg = ModelConfig::new(args.mode, args.vocab, args.labels, args.workers);
    cfg.char_emb_dim = args.emb_dim;
    cfg.label_emb_dim = args.label_emb_dim;
    cfg.hidden_dim = args.hidden_dim;
    cfg.seed = args.seed;
    let model = Model::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ 0x5eed);
    let inst = Instance {
        chars: (0..args.length).map(|_| rng.gen_range(0..args.vocab)).collect(),
        labels: (0..args.length).map(|_| rng.gen_range(0..args.labels)).collect(),
        worker: (args.mode == Mode::Adversarial).then(|| rng.gen_range(0..args.workers)),
    };
    let opts = GradCheckOptions {
        step: args.step,
        tolerance: args.tolerance,
        max_coords: args.max_coords,
        seed: args.seed,
        ..Default::default()
    };
    let report = model.grad_check(&inst, &opts)?;
    println!("{report}");
    Ok(report.passed())
}

fn parse_system(s: &str) -> Result<System> {
    match s {
        "baseline" => Ok(System::Baseline),
        "voted" => Ok(System::Voted),
        "adversarial" => Ok(System::Adversarial),
        _ => Err(Error::config(format!(
            "unknown system {s:?} (expected baseline|voted|adversarial)"
        ))),
    }
}

fn compare(args: &CompareArgs) -> Result<()> {
    let (dims, train_cfg) = args.config.resolve();
    train_cfg.validate()?;
    let systems = args
        .systems
        .iter()
        .map(|s| parse_system(s))
        .collect::<Result<Vec<_>>>()?;
    let train_corpus = load_corpus(&args.train, &LoadOptions::default())?;
    let fixed = LoadOptions {
        labels: Some(train_corpus.labels.clone()),
        strict: false,
    };
    let dev = load_corpus(&args.dev, &fixed)?;
    let test = load_corpus(&args.test, &fixed)?;
    let cfg = CompareConfig {
        dims,
        train: train_cfg,
        seeds: args.seeds.clone(),
        systems,
    };
    let report = compare_experiment(&train_corpus, &dev, &test, &cfg, |system, seed, r| {
        eprintln!("{system} seed {seed}: {r}");
    })?;
    for notice in &report.notices {
        eprintln!("notice: {notice}");
    }
    let table = report.to_table();
    print!("{table}");
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        let path = dir.join("results.tsv");
        write_file(&path, &table)?;
        let mut m = RunManifest::new("compare");
        record_config(&mut m, cfg.dims, &cfg.train);
        let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
        m.set("seeds", seeds.join(","));
        m.set("systems", args.systems.join(","));
        m.input("train", &args.train)?;
        m.input("dev", &args.dev)?;
        m.input("test", &args.test)?;
        m.output("results", &path)?;
        m.write(dir)?;
    }
    Ok(())
}

/// Runs a parsed command. `Ok(false)` signals a completed run whose result
/// is a failure (a gradient check that did not pass).
pub fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Synth(a) => synth(a).map(|_| true),
        Command::Train(a) => train(a).map(|_| true),
        Command::Tag(a) => tag(a).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::Vote(a) => vote(a).map(|_| true),
        Command::Kappa(a) => kappa(a).map(|_| true),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Compare(a) => compare(a).map(|_| true),
    }
}

/// Process entry point: one-line `error: ...` on stderr and a nonzero
/// status on failure (2 for configuration errors).
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: gradient check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', "; "));
            ExitCode::from(if matches!(e, Error::Config(_)) { 2 } else { 1 })
        }
    }
}
