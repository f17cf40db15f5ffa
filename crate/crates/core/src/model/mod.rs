//! Baseline LSTM-CRF and the worker-adversarial tagger.
//!
//! Parameters split into the tagger set (character embeddings, private and
//! common encoders, combiner, CRF) and the discriminator set (label
//! embeddings, label encoder, CNN discriminator). Both losses are summed and
//! minimized in one backward pass; the gradient-reversal node between the
//! common encoder and the discriminator turns that into a saddle-point
//! search: the discriminator minimizes its loss while the common encoder
//! maximizes it.

pub mod checkpoint;

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crf::{self, CrfLayer, Emissions};
use crate::error::{Error, Result};
use crate::layers::{BiLstm, CnnDiscriminator, Combiner, EmbeddingTable};
use crate::numcore::{grad_check, GradCheckOptions, GradCheckReport, Graph, Group, ParamId, ParamStore, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Baseline,
    Adversarial,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Adversarial => "adversarial",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "adversarial" => Ok(Mode::Adversarial),
            _ => Err(Error::config(format!("unknown mode {s:?} (expected baseline|adversarial)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub mode: Mode,
    pub char_emb_dim: usize,
    pub label_emb_dim: usize,
    /// LSTM state size per direction, combiner output and CNN width.
    pub hidden_dim: usize,
    pub dropout: f64,
    /// Character vocabulary size including UNK.
    pub vocab_size: usize,
    pub num_labels: usize,
    pub num_workers: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub const DEFAULT_CHAR_EMB_DIM: usize = 100;
    pub const DEFAULT_LABEL_EMB_DIM: usize = 50;
    pub const DEFAULT_HIDDEN_DIM: usize = 200;
    pub const DEFAULT_DROPOUT: f64 = 0.2;

    pub fn new(mode: Mode, vocab_size: usize, num_labels: usize, num_workers: usize) -> Self {
        ModelConfig {
            mode,
            char_emb_dim: Self::DEFAULT_CHAR_EMB_DIM,
            label_emb_dim: Self::DEFAULT_LABEL_EMB_DIM,
            hidden_dim: Self::DEFAULT_HIDDEN_DIM,
            dropout: Self::DEFAULT_DROPOUT,
            vocab_size,
            num_labels,
            num_workers,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("char embedding dim", self.char_emb_dim),
            ("label embedding dim", self.label_emb_dim),
            ("hidden dim", self.hidden_dim),
            ("vocabulary size", self.vocab_size),
            ("label count", self.num_labels),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if self.mode == Mode::Adversarial && self.num_workers < 2 {
            return Err(Error::config(format!(
                "adversarial mode needs at least 2 workers, got {}",
                self.num_workers
            )));
        }
        Ok(())
    }
}

/// One training example in index space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub chars: Vec<usize>,
    pub labels: Vec<usize>,
    pub worker: Option<usize>,
}

/// Adversarial-only components.
#[derive(Debug, Clone)]
pub struct WorkerBranch {
    pub common: BiLstm,
    pub label_emb: EmbeddingTable,
    pub label_lstm: BiLstm,
    pub discriminator: CnnDiscriminator,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    pub store: ParamStore,
    pub char_emb: EmbeddingTable,
    pub private: BiLstm,
    pub combiner: Combiner,
    pub crf: CrfLayer,
    pub adversarial: Option<WorkerBranch>,
    reverse_gradients: bool,
}

struct Encoded {
    private: Vec<Var>,
    common: Option<Vec<Var>>,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let rng = &mut rng;
        let mut store = ParamStore::new();
        let h = config.hidden_dim;

        let char_emb = EmbeddingTable::new(&mut store, "char_emb", Group::Ner, config.vocab_size, config.char_emb_dim, rng)?;
        let private = BiLstm::new(&mut store, "private_lstm", Group::Ner, config.char_emb_dim, h, rng)?;
        let common = match config.mode {
            Mode::Adversarial => Some(BiLstm::new(&mut store, "common_lstm", Group::Ner, config.char_emb_dim, h, rng)?),
            Mode::Baseline => None,
        };
        let combiner_in = if common.is_some() { 4 * h } else { 2 * h };
        let combiner = Combiner::new(&mut store, "combine", combiner_in, h, common.is_some(), rng)?;
        let crf = CrfLayer::new(&mut store, "crf", config.num_labels, h, rng)?;

        let adversarial = match common {
            Some(common) => {
                let label_emb = EmbeddingTable::new(
                    &mut store,
                    "label_emb",
                    Group::Discriminator,
                    config.num_labels,
                    config.label_emb_dim,
                    rng,
                )?;
                let label_lstm =
                    BiLstm::new(&mut store, "label_lstm", Group::Discriminator, config.label_emb_dim, h, rng)?;
                let discriminator = CnnDiscriminator::new(&mut store, "disc", 4 * h, h, config.num_workers, rng)?;
                Some(WorkerBranch {
                    common,
                    label_emb,
                    label_lstm,
                    discriminator,
                })
            }
            None => None,
        };

        let model = Model {
            config,
            store,
            char_emb,
            private,
            combiner,
            crf,
            adversarial,
            reverse_gradients: true,
        };
        model.check_partition()?;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn set_dropout(&mut self, p: f64) -> Result<()> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::config(format!("dropout {p} not in [0, 1)")));
        }
        self.config.dropout = p;
        Ok(())
    }

    /// Disables the gradient-reversal node. Only meant for verifying the
    /// reversal contract; training always keeps it on.
    pub fn set_reverse_gradients(&mut self, on: bool) {
        self.reverse_gradients = on;
    }

    /// Tagger-side parameters.
    pub fn theta(&self) -> Vec<ParamId> {
        let mut ids = vec![self.char_emb.param];
        ids.extend(self.private.param_ids());
        if let Some(adv) = &self.adversarial {
            ids.extend(adv.common.param_ids());
        }
        ids.extend([self.combiner.weight, self.combiner.bias, self.crf.emission, self.crf.transitions]);
        ids
    }

    /// Discriminator-only parameters.
    pub fn theta_prime(&self) -> Vec<ParamId> {
        match &self.adversarial {
            Some(adv) => {
                let mut ids = vec![adv.label_emb.param];
                ids.extend(adv.label_lstm.param_ids());
                ids.extend([adv.discriminator.conv, adv.discriminator.output]);
                ids
            }
            None => Vec::new(),
        }
    }

    pub fn common_params(&self) -> Vec<ParamId> {
        self.adversarial
            .as_ref()
            .map(|a| a.common.param_ids().to_vec())
            .unwrap_or_default()
    }

    fn check_partition(&self) -> Result<()> {
        let mut seen = vec![0u8; self.store.len()];
        for (ids, group) in [(self.theta(), Group::Ner), (self.theta_prime(), Group::Discriminator)] {
            for id in ids {
                seen[id.index()] += 1;
                if self.store.get(id).group != group {
                    return Err(Error::validation(format!(
                        "parameter {} registered in the wrong group",
                        self.store.get(id).name
                    )));
                }
            }
        }
        if let Some(pos) = seen.iter().position(|&c| c != 1) {
            return Err(Error::validation(format!(
                "parameter {} is not in exactly one of the tagger/discriminator sets",
                self.store.get(crate::numcore::ParamId(pos)).name
            )));
        }
        Ok(())
    }

    fn encode(&self, g: &mut Graph<'_>, chars: &[usize], mut rng: Option<&mut dyn RngCore>) -> Result<Encoded> {
        if chars.is_empty() {
            return Err(Error::validation("empty sentence"));
        }
        let p = self.config.dropout;
        let xs = self.char_emb.embed(g, chars)?;
        let private = self.private.run(g, &xs)?;
        let private = self.apply_dropout(g, private, p, &mut rng)?;
        let common = match &self.adversarial {
            Some(adv) => {
                let c = adv.common.run(g, &xs)?;
                Some(self.apply_dropout(g, c, p, &mut rng)?)
            }
            None => None,
        };
        Ok(Encoded { private, common })
    }

    fn apply_dropout(
        &self,
        g: &mut Graph<'_>,
        xs: Vec<Var>,
        p: f64,
        rng: &mut Option<&mut dyn RngCore>,
    ) -> Result<Vec<Var>> {
        match rng {
            Some(r) => xs.into_iter().map(|x| g.dropout(x, p, true, &mut **r)).collect(),
            None => Ok(xs),
        }
    }

    fn emissions(&self, g: &mut Graph<'_>, enc: &Encoded) -> Result<Emissions> {
        let features = enc
            .private
            .iter()
            .enumerate()
            .map(|(t, &h)| {
                let common = enc.common.as_ref().map(|c| c[t]);
                self.combiner.combine(g, common, h)
            })
            .collect::<Result<Vec<_>>>()?;
        self.crf.emissions(g, &features)
    }

    fn check_labels(&self, chars: &[usize], labels: &[usize]) -> Result<()> {
        if chars.len() != labels.len() {
            return Err(Error::validation(format!(
                "{} characters but {} labels",
                chars.len(),
                labels.len()
            )));
        }
        Ok(())
    }

    fn ner_loss_from(&self, g: &mut Graph<'_>, enc: &Encoded, gold: &[usize]) -> Result<Var> {
        let em = self.emissions(g, enc)?;
        let trans = g.param(self.crf.transitions);
        crf::nll(g, &em, trans, gold)
    }

    fn worker_loss_from(&self, g: &mut Graph<'_>, common: &[Var], gold: &[usize], worker: usize) -> Result<Var> {
        let adv = self
            .adversarial
            .as_ref()
            .ok_or_else(|| Error::config("worker loss requires adversarial mode"))?;
        if worker >= self.config.num_workers {
            return Err(Error::validation(format!(
                "unknown worker index {worker} ({} workers)",
                self.config.num_workers
            )));
        }
        let label_xs = adv.label_emb.embed(g, gold)?;
        let label_hs = adv.label_lstm.run(g, &label_xs)?;
        let scores = adv
            .discriminator
            .discriminate(g, common, &label_hs, self.reverse_gradients)?;
        let row = g.transpose(scores);
        let log_norm = g.logsumexp_rows(row)?;
        let target = g.pick(scores, worker, 0)?;
        g.sub(log_norm, target)
    }

    /// CRF negative log-likelihood of `gold`. Dropout is active iff `rng` is
    /// given.
    pub fn ner_loss(&self, g: &mut Graph<'_>, chars: &[usize], gold: &[usize], rng: Option<&mut dyn RngCore>) -> Result<Var> {
        self.check_labels(chars, gold)?;
        let enc = self.encode(g, chars, rng)?;
        self.ner_loss_from(g, &enc, gold)
    }

    /// `-log p(worker | chars, labels)` from the discriminator.
    pub fn worker_loss(
        &self,
        g: &mut Graph<'_>,
        chars: &[usize],
        gold: &[usize],
        worker: usize,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        self.check_labels(chars, gold)?;
        if self.adversarial.is_none() {
            return Err(Error::config("worker loss requires adversarial mode"));
        }
        let enc = self.encode(g, chars, rng)?;
        let common = enc.common.expect("adversarial model has common features");
        self.worker_loss_from(g, &common, gold, worker)
    }

    /// Per-instance objective: the NER loss, plus the worker loss in
    /// adversarial mode. Both share one pass through the encoders.
    pub fn instance_loss(&self, g: &mut Graph<'_>, inst: &Instance, rng: Option<&mut dyn RngCore>) -> Result<Var> {
        self.check_labels(&inst.chars, &inst.labels)?;
        let enc = self.encode(g, &inst.chars, rng)?;
        let ner = self.ner_loss_from(g, &enc, &inst.labels)?;
        match &enc.common {
            Some(common) => {
                let worker = inst
                    .worker
                    .ok_or_else(|| Error::validation("adversarial training instance without a worker"))?;
                let w = self.worker_loss_from(g, common, &inst.labels, worker)?;
                g.add(ner, w)
            }
            None => Ok(ner),
        }
    }

    /// Sum of instance losses on one tape.
    pub fn total_loss(&self, g: &mut Graph<'_>, batch: &[Instance], mut rng: Option<&mut dyn RngCore>) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::validation("empty batch"));
        }
        let mut losses = Vec::with_capacity(batch.len());
        for inst in batch {
            let r: Option<&mut dyn RngCore> = match rng {
                Some(ref mut r) => Some(&mut **r),
                None => None,
            };
            losses.push(self.instance_loss(g, inst, r)?);
        }
        g.sum(&losses)
    }

    /// Finite-difference check of [`Model::instance_loss`] (no dropout)
    /// against the analytic gradients of every parameter. Gradient reversal
    /// is switched off, since reversed gradients are deliberately not the
    /// derivative of the loss.
    pub fn grad_check(&self, inst: &Instance, opts: &GradCheckOptions) -> Result<GradCheckReport> {
        let mut plain = self.clone();
        plain.reverse_gradients = false;
        let plain = &plain;
        let mut store = self.store.clone();
        grad_check(
            &mut store,
            |params, grads| {
                let mut g = Graph::with_params(params);
                let loss = plain.instance_loss(&mut g, inst, None)?;
                let value = g.value(loss).item();
                if let Some(grads) = grads {
                    g.backward(loss, grads)?;
                }
                Ok(value)
            },
            opts,
        )
    }

    /// Emission matrix `(n, labels)` without dropout.
    pub fn emission_scores(&self, chars: &[usize]) -> Result<crate::numcore::Tensor> {
        let mut g = Graph::with_params(&self.store);
        let enc = self.encode(&mut g, chars, None)?;
        let em = self.emissions(&mut g, &enc)?;
        Ok(em.to_tensor(&g))
    }

    /// Viterbi label indices. The discriminator side is not evaluated.
    pub fn predict(&self, chars: &[usize]) -> Result<Vec<usize>> {
        let scores = self.emission_scores(chars)?;
        let (path, _) = crf::viterbi(&scores, self.store.value(self.crf.transitions))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Gradients;

    fn toy(mode: Mode) -> Model {
        let mut cfg = ModelConfig::new(mode, 10, 4, 3);
        cfg.char_emb_dim = 5;
        cfg.label_emb_dim = 3;
        cfg.hidden_dim = 4;
        cfg.dropout = 0.0;
        cfg.seed = 9;
        Model::new(cfg).unwrap()
    }

    #[test]
    fn partition_covers_everything_once() {
        for mode in [Mode::Baseline, Mode::Adversarial] {
            let m = toy(mode);
            let mut all: Vec<usize> = m.theta().iter().chain(&m.theta_prime()).map(|p| p.index()).collect();
            all.sort_unstable();
            assert_eq!(all, (0..m.store.len()).collect::<Vec<_>>());
        }
        assert!(toy(Mode::Baseline).theta_prime().is_empty());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ModelConfig::new(Mode::Adversarial, 10, 4, 1);
        assert!(Model::new(cfg.clone()).is_err());
        cfg.num_workers = 2;
        cfg.hidden_dim = 0;
        assert!(Model::new(cfg.clone()).is_err());
        cfg.hidden_dim = 3;
        cfg.dropout = 1.0;
        assert!(Model::new(cfg).is_err());
        assert!("both".parse::<Mode>().is_err());
    }

    #[test]
    fn baseline_has_no_common_encoder() {
        let m = toy(Mode::Baseline);
        assert!(m.store.iter().all(|(_, p)| !p.name.starts_with("common_lstm")));
        let mut g = Graph::with_params(&m.store);
        assert!(m.worker_loss(&mut g, &[1, 2], &[0, 0], 0, None).is_err());
    }

    #[test]
    fn ner_loss_is_non_negative_and_checks_lengths() {
        let m = toy(Mode::Adversarial);
        let mut g = Graph::with_params(&m.store);
        let loss = m.ner_loss(&mut g, &[1, 2, 3], &[0, 1, 3], None).unwrap();
        assert!(g.value(loss).item() >= 0.0);
        assert!(m.ner_loss(&mut g, &[1, 2], &[0], None).is_err());
        assert!(m.ner_loss(&mut g, &[], &[], None).is_err());
    }

    #[test]
    fn worker_loss_uniform_with_zero_output_layer() {
        let mut cfg = toy(Mode::Adversarial).config().clone();
        cfg.num_workers = 2;
        let mut m = Model::new(cfg).unwrap();
        let out = m.adversarial.as_ref().unwrap().discriminator.output;
        let (r, c) = m.store.value(out).shape();
        *m.store.value_mut(out) = crate::numcore::Tensor::zeros(r, c);
        let mut g = Graph::with_params(&m.store);
        let loss = m.worker_loss(&mut g, &[1, 2, 3], &[0, 1, 3], 1, None).unwrap();
        assert!((g.value(loss).item() - 2f64.ln()).abs() < 1e-15);
        assert!(m.worker_loss(&mut g, &[1, 2, 3], &[0, 1, 3], 2, None).is_err());
    }

    #[test]
    fn no_cross_talk_between_losses() {
        let m = toy(Mode::Adversarial);
        let mut g = Graph::with_params(&m.store);
        let loss = m.ner_loss(&mut g, &[1, 2, 3], &[0, 1, 3], None).unwrap();
        let mut grads = Gradients::new(&m.store);
        g.backward(loss, &mut grads).unwrap();
        for id in m.theta_prime() {
            assert!(grads.is_zero(id), "{}", m.store.get(id).name);
        }
        let common_ids = m.common_params();
        assert!(common_ids.iter().any(|&id| !grads.is_zero(id)));

        let mut g = Graph::with_params(&m.store);
        let loss = m.worker_loss(&mut g, &[1, 2, 3], &[0, 1, 3], 2, None).unwrap();
        let mut grads = Gradients::new(&m.store);
        g.backward(loss, &mut grads).unwrap();
        let mut untouched: Vec<ParamId> = m.private.param_ids().to_vec();
        untouched.extend([m.crf.emission, m.crf.transitions, m.combiner.weight, m.combiner.bias]);
        for id in untouched {
            assert!(grads.get(id).is_none(), "{}", m.store.get(id).name);
        }
    }

    #[test]
    fn batch_of_one_is_sum_of_parts() {
        let m = toy(Mode::Adversarial);
        let inst = Instance {
            chars: vec![3, 1, 4, 1],
            labels: vec![0, 1, 2, 3],
            worker: Some(1),
        };
        let mut g = Graph::with_params(&m.store);
        let total = m.total_loss(&mut g, std::slice::from_ref(&inst), None).unwrap();
        let ner = m.ner_loss(&mut g, &inst.chars, &inst.labels, None).unwrap();
        let wl = m.worker_loss(&mut g, &inst.chars, &inst.labels, 1, None).unwrap();
        let expect = g.value(ner).item() + g.value(wl).item();
        assert!((g.value(total).item() - expect).abs() < 1e-12);

        let b = toy(Mode::Baseline);
        let mut g = Graph::with_params(&b.store);
        let total = b.total_loss(&mut g, &[inst.clone(), inst.clone()], None).unwrap();
        let ner = b.ner_loss(&mut g, &inst.chars, &inst.labels, None).unwrap();
        assert!((g.value(total).item() - 2.0 * g.value(ner).item()).abs() < 1e-12);
        assert!(b.total_loss(&mut g, &[], None).is_err());
    }

    #[test]
    fn adversarial_instance_requires_worker() {
        let m = toy(Mode::Adversarial);
        let mut g = Graph::with_params(&m.store);
        let inst = Instance {
            chars: vec![1],
            labels: vec![0],
            worker: None,
        };
        assert!(m.instance_loss(&mut g, &inst, None).is_err());
    }

    #[test]
    fn predict_shape_and_determinism() {
        let m = toy(Mode::Adversarial);
        let p1 = m.predict(&[1, 2, 3, 4, 5]).unwrap();
        assert_eq!(p1.len(), 5);
        assert_eq!(p1, m.predict(&[1, 2, 3, 4, 5]).unwrap());
        assert!(m.predict(&[]).is_err());
    }

    #[test]
    fn predict_ignores_discriminator_side() {
        let m = toy(Mode::Adversarial);
        let before = m.emission_scores(&[1, 2, 3, 4]).unwrap();
        let mut perturbed = m.clone();
        for id in m.theta_prime() {
            for v in perturbed.store.value_mut(id).data_mut() {
                *v += 0.37;
            }
        }
        assert_eq!(perturbed.emission_scores(&[1, 2, 3, 4]).unwrap(), before);
        assert_eq!(perturbed.predict(&[1, 2, 3, 4]).unwrap(), m.predict(&[1, 2, 3, 4]).unwrap());
    }
}
