//! Embedding tables, BiLSTM encoders, the feature combiner and the CNN
//! worker discriminator.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::{Graph, Group, ParamId, ParamStore, Tensor, Var};

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(rows, cols, data).expect("finite init")
}

/// Embedding rows are drawn from `±sqrt(3 / dim)`, independent of the
/// vocabulary size.
pub fn embedding_uniform<R: Rng + ?Sized>(rng: &mut R, vocab: usize, dim: usize) -> Tensor {
    let bound = (3.0 / dim as f64).sqrt();
    let data = (0..vocab * dim).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(vocab, dim, data).expect("finite init")
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub param: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl EmbeddingTable {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        group: Group,
        vocab: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let param = store.add(name, group, embedding_uniform(rng, vocab, dim))?;
        Ok(EmbeddingTable { param, vocab, dim })
    }

    pub fn embed(&self, g: &mut Graph<'_>, ids: &[usize]) -> Result<Vec<Var>> {
        ids.iter().map(|&id| g.embed_row(self.param, id)).collect()
    }
}

/// One LSTM direction. The four gates share one stacked weight matrix over
/// `[x; h]`, in the row order input, forget, output, candidate.
#[derive(Debug, Clone)]
pub struct LstmParams {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        group: Group,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut w = Tensor::zeros(4 * hidden, input_dim + hidden);
        // per-gate Xavier bounds: each gate maps (input + hidden) -> hidden
        for gate in 0..4 {
            let block = xavier_uniform(rng, hidden, input_dim + hidden);
            let start = gate * hidden * (input_dim + hidden);
            w.data_mut()[start..start + block.len()].copy_from_slice(block.data());
        }
        let mut b = Tensor::zeros(4 * hidden, 1);
        for v in &mut b.data_mut()[hidden..2 * hidden] {
            *v = 1.0;
        }
        let weight = store.add(format!("{prefix}.W"), group, w)?;
        let bias = store.add(format!("{prefix}.b"), group, b)?;
        Ok(LstmParams {
            weight,
            bias,
            input_dim,
            hidden,
        })
    }

    /// One step from `state` (`[h; c]`, zero when absent); returns the new
    /// hidden vector and state.
    pub fn step(&self, g: &mut Graph<'_>, x: Var, state: Option<Var>) -> Result<(Var, Var)> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let next = g.lstm_cell(w, b, x, state)?;
        let h = g.slice(next, 0, self.hidden, 0, 1)?;
        Ok((h, next))
    }

    /// Runs over `xs` from a zero state and returns every hidden state.
    pub fn run(&self, g: &mut Graph<'_>, xs: &[Var]) -> Result<Vec<Var>> {
        let mut state = None;
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            if g.shape(x) != (self.input_dim, 1) {
                return Err(Error::Shape {
                    op: "lstm input",
                    left: (self.input_dim, 1),
                    right: g.shape(x),
                });
            }
            let (h, next) = self.step(g, x, state)?;
            state = Some(next);
            out.push(h);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct BiLstm {
    pub forward: LstmParams,
    pub backward: LstmParams,
    pub hidden: usize,
}

impl BiLstm {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        group: Group,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(BiLstm {
            forward: LstmParams::new(store, &format!("{prefix}.fwd"), group, input_dim, hidden, rng)?,
            backward: LstmParams::new(store, &format!("{prefix}.bwd"), group, input_dim, hidden, rng)?,
            hidden,
        })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    pub fn param_ids(&self) -> [ParamId; 4] {
        [
            self.forward.weight,
            self.forward.bias,
            self.backward.weight,
            self.backward.bias,
        ]
    }

    /// Position `t` of the output is the forward state at `t` stacked on the
    /// backward state at `t`.
    pub fn run(&self, g: &mut Graph<'_>, xs: &[Var]) -> Result<Vec<Var>> {
        if xs.is_empty() {
            return Err(Error::validation("bilstm over empty sequence"));
        }
        let fwd = self.forward.run(g, xs)?;
        let reversed: Vec<Var> = xs.iter().rev().copied().collect();
        let mut bwd = self.backward.run(g, &reversed)?;
        bwd.reverse();
        fwd.into_iter()
            .zip(bwd)
            .map(|(f, b)| g.concat_rows(&[f, b]))
            .collect()
    }
}

/// Affine combination of encoder features into tagger features. In
/// adversarial mode the input is common features stacked on private ones.
#[derive(Debug, Clone)]
pub struct Combiner {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub output_dim: usize,
    pub with_common: bool,
}

impl Combiner {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        output_dim: usize,
        with_common: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.add(format!("{prefix}.W"), Group::Ner, xavier_uniform(rng, output_dim, input_dim))?;
        let bias = store.add(format!("{prefix}.b"), Group::Ner, Tensor::zeros(output_dim, 1))?;
        Ok(Combiner {
            weight,
            bias,
            input_dim,
            output_dim,
            with_common,
        })
    }

    pub fn combine(&self, g: &mut Graph<'_>, common: Option<Var>, private: Var) -> Result<Var> {
        let input = match (common, self.with_common) {
            (Some(c), true) => g.concat_rows(&[c, private])?,
            (None, false) => private,
            (Some(_), false) => {
                return Err(Error::validation("baseline combiner given common features"))
            }
            (None, true) => {
                return Err(Error::validation("adversarial combiner requires common features"))
            }
        };
        if g.shape(input) != (self.input_dim, 1) {
            return Err(Error::Shape {
                op: "combine",
                left: (self.input_dim, 1),
                right: g.shape(input),
            });
        }
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let wx = g.matmul(w, input)?;
        g.add(wx, b)
    }
}

pub const CNN_WINDOW: usize = 5;

/// Window-5 convolution with tanh over `common ⊕ label` features, max
/// pooling over time, and a linear scorer with one output per worker.
#[derive(Debug, Clone)]
pub struct CnnDiscriminator {
    pub conv: ParamId,
    pub output: ParamId,
    pub feature_dim: usize,
    pub conv_dim: usize,
    pub workers: usize,
}

impl CnnDiscriminator {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        feature_dim: usize,
        conv_dim: usize,
        workers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if workers < 2 {
            return Err(Error::config(format!("discriminator needs at least 2 workers, got {workers}")));
        }
        let conv = store.add(
            format!("{prefix}.W_cnn"),
            Group::Discriminator,
            xavier_uniform(rng, conv_dim, CNN_WINDOW * feature_dim),
        )?;
        let output = store.add(
            format!("{prefix}.W_worker"),
            Group::Discriminator,
            xavier_uniform(rng, workers, conv_dim),
        )?;
        Ok(CnnDiscriminator {
            conv,
            output,
            feature_dim,
            conv_dim,
            workers,
        })
    }

    /// Worker scores `(workers, 1)`. With `reverse` set, the common features
    /// pass through a gradient-reversal node before anything else touches
    /// them.
    pub fn discriminate(&self, g: &mut Graph<'_>, common: &[Var], label: &[Var], reverse: bool) -> Result<Var> {
        let convolved = self.convolve(g, common, label, reverse)?;
        let pooled = g.max_pool_time(&convolved)?;
        let out = g.param(self.output);
        g.matmul(out, pooled)
    }

    /// The per-position convolution outputs before pooling.
    pub fn convolve(&self, g: &mut Graph<'_>, common: &[Var], label: &[Var], reverse: bool) -> Result<Vec<Var>> {
        if common.len() != label.len() {
            return Err(Error::validation(format!(
                "discriminator inputs differ in length: {} vs {}",
                common.len(),
                label.len()
            )));
        }
        if common.is_empty() {
            return Err(Error::validation("discriminator over empty sequence"));
        }
        let features = common
            .iter()
            .zip(label)
            .map(|(&c, &l)| {
                let c = if reverse { g.grad_reverse(c) } else { c };
                g.concat_rows(&[c, l])
            })
            .collect::<Result<Vec<_>>>()?;
        if g.shape(features[0]) != (self.feature_dim, 1) {
            return Err(Error::Shape {
                op: "discriminate",
                left: (self.feature_dim, 1),
                right: g.shape(features[0]),
            });
        }
        let pad = g.zeros(self.feature_dim, 1);
        let conv = g.param(self.conv);
        let half = (CNN_WINDOW / 2) as isize;
        let n = features.len() as isize;
        let mut convolved = Vec::with_capacity(features.len());
        for t in 0..n {
            let window: Vec<Var> = (t - half..=t + half)
                .map(|s| if (0..n).contains(&s) { features[s as usize] } else { pad })
                .collect();
            let stacked = g.concat_rows(&window)?;
            let pre = g.matmul(conv, stacked)?;
            convolved.push(g.tanh(pre));
        }
        Ok(convolved)
    }
}
