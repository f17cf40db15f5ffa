//! Training loop, dev-based model selection and entity-level evaluation.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{load_embeddings, vote_corpus, Corpus, EmbeddingCoverage, Vocabulary};
use crate::error::{Error, Result};
use crate::model::checkpoint::Tagger;
use crate::model::{Instance, Mode, Model, ModelConfig};
use crate::numcore::{Gradients, Graph, RmsProp};
use crate::tagscheme::{labels_to_spans, DecodeMode, Span};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub dropout: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch: 128,
            epochs: 200,
            lr: 1e-3,
            l2: 1e-5,
            dropout: 0.2,
            decay: RmsProp::DEFAULT_DECAY,
            epsilon: RmsProp::DEFAULT_EPSILON,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::config(format!("l2 {} must be non-negative", self.l2)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if !(0.0..1.0).contains(&self.decay) {
            return Err(Error::config(format!("decay {} not in [0, 1)", self.decay)));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::config("epsilon must be positive"));
        }
        Ok(())
    }
}

/// Embedding and hidden sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub char_emb: usize,
    pub label_emb: usize,
    pub hidden: usize,
}

impl Dims {
    pub const FULL: Dims = Dims {
        char_emb: ModelConfig::DEFAULT_CHAR_EMB_DIM,
        label_emb: ModelConfig::DEFAULT_LABEL_EMB_DIM,
        hidden: ModelConfig::DEFAULT_HIDDEN_DIM,
    };
    pub const DESK: Dims = Dims {
        char_emb: 16,
        label_emb: 16,
        hidden: 32,
    };
}

pub const DESK_EPOCHS: usize = 40;

/// Fresh tagger sized for `train`: vocabulary from its characters, workers
/// from its annotations.
pub fn init_tagger(mode: Mode, train: &Corpus, dims: Dims, dropout: f64, seed: u64) -> Result<Tagger> {
    let vocab = Vocabulary::build(train.sentences.iter().map(|s| s.chars.as_slice()));
    let workers = match mode {
        Mode::Adversarial => train.workers.clone(),
        Mode::Baseline => Vec::new(),
    };
    let config = ModelConfig {
        mode,
        char_emb_dim: dims.char_emb,
        label_emb_dim: dims.label_emb,
        hidden_dim: dims.hidden,
        dropout,
        vocab_size: vocab.len(),
        num_labels: train.labels.len(),
        num_workers: workers.len(),
        seed,
    };
    Tagger::new(Model::new(config)?, vocab, train.labels.clone(), workers)
}

/// Replaces character-embedding rows with pretrained vectors.
pub fn apply_embeddings(tagger: &mut Tagger, path: &Path) -> Result<EmbeddingCoverage> {
    let id = tagger.model.char_emb.param;
    let (table, coverage) = load_embeddings(path, &tagger.vocab, tagger.model.store.value(id))?;
    *tagger.model.store.value_mut(id) = table;
    Ok(coverage)
}

/// Converts a corpus to index space. Worker indices follow `workers`;
/// an empty list drops worker information.
pub fn instances(corpus: &Corpus, tagger: &Tagger) -> Result<Vec<Instance>> {
    corpus
        .sentences
        .iter()
        .map(|s| {
            let worker = match (&s.worker, tagger.workers.is_empty()) {
                (Some(w), false) => Some(
                    tagger
                        .workers
                        .iter()
                        .position(|x| x == w)
                        .ok_or_else(|| Error::validation(format!("sentence {}: unknown worker {w}", s.id)))?,
                ),
                _ => None,
            };
            Ok(Instance {
                chars: tagger.vocab.encode(&s.chars),
                labels: tagger.labels.indices(&s.labels)?,
                worker,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl EvalResult {
    pub fn from_counts(gold: usize, predicted: usize, correct: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EvalResult {
            precision,
            recall,
            f1,
            gold,
            predicted,
            correct,
        }
    }
}

impl fmt::Display for EvalResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "P={:.4} R={:.4} F1={:.4} (gold={} predicted={} correct={})",
            self.precision, self.recall, self.f1, self.gold, self.predicted, self.correct
        )
    }
}

/// Micro-averaged exact-match scores over paired sentences.
pub fn score_spans(gold: &[Vec<Span>], predicted: &[Vec<Span>]) -> Result<EvalResult> {
    if gold.len() != predicted.len() {
        return Err(Error::validation("gold and predicted sentence counts differ"));
    }
    let (mut g, mut p, mut c) = (0, 0, 0);
    for (gs, ps) in gold.iter().zip(predicted) {
        g += gs.len();
        p += ps.len();
        c += ps.iter().filter(|s| gs.contains(s)).count();
    }
    Ok(EvalResult::from_counts(g, p, c))
}

pub fn evaluate(tagger: &Tagger, gold: &Corpus) -> Result<EvalResult> {
    let mut gs = Vec::with_capacity(gold.len());
    let mut ps = Vec::with_capacity(gold.len());
    for s in &gold.sentences {
        gs.push(s.spans());
        ps.push(labels_to_spans(&tagger.tag(&s.chars)?, DecodeMode::Lenient)?);
    }
    score_spans(&gs, &ps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sentence training objective over the epoch.
    pub train_loss: f64,
    pub dev: EvalResult,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch of the returned model; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

impl History {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\tdev_p\tdev_r\tdev_f1\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{}\t{:e}\t{:e}\t{:e}\t{:e}\n",
                r.epoch, r.train_loss, r.dev.precision, r.dev.recall, r.dev.f1
            ));
        }
        out
    }
}

pub struct TrainOutcome {
    pub tagger: Tagger,
    pub history: History,
}

/// Mixes a seed with an epoch number into an independent stream seed.
fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    let mut z = seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Trains `tagger` on `train`, evaluates on `dev` after every epoch and
/// returns the best-dev model (earliest epoch on ties).
pub fn train(tagger: Tagger, train: &Corpus, dev: &Corpus, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(tagger, train, dev, cfg, |_| {})
}

/// Like [`train`], calling `on_epoch` after each epoch.
pub fn train_with_progress(
    mut tagger: Tagger,
    train: &Corpus,
    dev: &Corpus,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::validation("training corpus is empty"));
    }
    let adversarial = tagger.model.mode() == Mode::Adversarial;
    if adversarial {
        if let Some(s) = train.sentences.iter().find(|s| s.worker.is_none()) {
            return Err(Error::validation(format!(
                "adversarial training needs a worker id on every sentence; {} has none",
                s.id
            )));
        }
    }
    if train.labels != tagger.labels {
        return Err(Error::validation("training corpus label set differs from the model's"));
    }
    let data = instances(train, &tagger)?;
    tagger.model.set_dropout(cfg.dropout)?;

    let mut history = History::default();
    if cfg.epochs == 0 {
        return Ok(TrainOutcome { tagger, history });
    }

    let mut opt = RmsProp::new(&tagger.model.store, cfg.decay, cfg.epsilon);
    let mut grads = Gradients::new(&tagger.model.store);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut best: Option<(f64, usize, crate::numcore::ParamStore)> = None;

    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, epoch));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch) {
            for &i in batch {
                let model = &tagger.model;
                let mut g = Graph::with_params(&model.store);
                let r: Option<&mut dyn RngCore> = if cfg.dropout > 0.0 { Some(&mut rng) } else { None };
                let loss = model.instance_loss(&mut g, &data[i], r)?;
                let value = g.value(loss).item();
                if !value.is_finite() {
                    return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
                }
                total += value;
                g.backward(loss, &mut grads)?;
            }
            opt.step(&mut tagger.model.store, &mut grads, cfg.lr, cfg.l2)?;
        }
        let record = EpochRecord {
            epoch,
            train_loss: total / data.len() as f64,
            dev: evaluate(&tagger, dev)?,
        };
        on_epoch(&record);
        if best.as_ref().is_none_or(|(f1, _, _)| record.dev.f1 > *f1) {
            best = Some((record.dev.f1, epoch, tagger.model.store.clone()));
        }
        history.epochs.push(record);
    }
    let (_, epoch, store) = best.expect("at least one epoch ran");
    tagger.model.store = store;
    history.best_epoch = Some(epoch);
    Ok(TrainOutcome { tagger, history })
}

/// Systems compared by [`compare_experiment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    /// LSTM-CRF on the raw crowd annotations.
    Baseline,
    /// LSTM-CRF on majority-voted annotations.
    Voted,
    /// Worker-adversarial model on the raw crowd annotations.
    Adversarial,
}

impl System {
    pub const ALL: [System; 3] = [System::Baseline, System::Voted, System::Adversarial];

    pub fn name(self) -> &'static str {
        match self {
            System::Baseline => "LSTM-CRF",
            System::Voted => "LSTM-CRF-VT",
            System::Adversarial => "ALCrowd",
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareConfig {
    pub dims: Dims,
    /// Shared training settings; `seed` is replaced by each entry of `seeds`.
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub systems: Vec<System>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemScores {
    pub system: System,
    /// Test scores per seed.
    pub runs: Vec<(u64, EvalResult)>,
}

impl SystemScores {
    fn mean(&self, f: impl Fn(&EvalResult) -> f64) -> f64 {
        self.runs.iter().map(|(_, r)| f(r)).sum::<f64>() / self.runs.len().max(1) as f64
    }

    pub fn mean_precision(&self) -> f64 {
        self.mean(|r| r.precision)
    }

    pub fn mean_recall(&self) -> f64 {
        self.mean(|r| r.recall)
    }

    pub fn mean_f1(&self) -> f64 {
        self.mean(|r| r.f1)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompareReport {
    pub rows: Vec<SystemScores>,
    pub notices: Vec<String>,
}

impl CompareReport {
    pub fn row(&self, system: System) -> Option<&SystemScores> {
        self.rows.iter().find(|r| r.system == system)
    }

    /// Tab-separated table of mean test scores (percent) and per-seed F1.
    pub fn to_table(&self) -> String {
        let mut out = String::from("system\tP\tR\tF1\tper_seed_f1\n");
        for row in &self.rows {
            let seeds: Vec<String> = row
                .runs
                .iter()
                .map(|(s, r)| format!("{s}:{:.2}", 100.0 * r.f1))
                .collect();
            out.push_str(&format!(
                "{}\t{:.2}\t{:.2}\t{:.2}\t{}\n",
                row.system,
                100.0 * row.mean_precision(),
                100.0 * row.mean_recall(),
                100.0 * row.mean_f1(),
                seeds.join(",")
            ));
        }
        out
    }
}

/// Trains every requested system once per seed with identical settings and
/// scores the best-dev model on `test`.
pub fn compare_experiment(
    train_corpus: &Corpus,
    dev: &Corpus,
    test: &Corpus,
    cfg: &CompareConfig,
    mut on_run: impl FnMut(System, u64, &EvalResult),
) -> Result<CompareReport> {
    if train_corpus.workers.len() < 2 {
        return Err(Error::validation(format!(
            "comparison needs at least 2 workers, corpus has {}",
            train_corpus.workers.len()
        )));
    }
    if cfg.seeds.is_empty() {
        return Err(Error::config("no seeds given"));
    }
    let mut report = CompareReport::default();
    let mut voted = None;
    if cfg.systems.contains(&System::Voted) {
        let (corpus, summary) = vote_corpus(train_corpus)?;
        if summary.voted == 0 {
            report
                .notices
                .push("voted system skipped: no sentence has more than one annotation".into());
        } else {
            voted = Some(corpus);
        }
    }
    for &system in &cfg.systems {
        let (mode, data) = match system {
            System::Baseline => (Mode::Baseline, train_corpus),
            System::Adversarial => (Mode::Adversarial, train_corpus),
            System::Voted => match &voted {
                Some(c) => (Mode::Baseline, c),
                None => continue,
            },
        };
        let mut runs = Vec::with_capacity(cfg.seeds.len());
        for &seed in &cfg.seeds {
            let tc = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let tagger = init_tagger(mode, data, cfg.dims, tc.dropout, seed)?;
            let outcome = train(tagger, data, dev, &tc)?;
            let result = evaluate(&outcome.tagger, test)?;
            on_run(system, seed, &result);
            runs.push((seed, result));
        }
        report.rows.push(SystemScores { system, runs });
    }
    Ok(report)
}
