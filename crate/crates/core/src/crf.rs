//! Linear-chain CRF output layer.
//!
//! The transition matrix has two extra rows/columns for the sentence
//! boundaries: index `L` is BOS and `L + 1` is EOS, where `L` is the number
//! of labels. Every sequence score includes `BOS -> y_1` and `y_n -> EOS`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::xavier_uniform;
use crate::numcore::{logsumexp, Graph, Group, ParamId, ParamStore, Tensor, Var};

#[derive(Debug, Clone)]
pub struct CrfLayer {
    /// `(labels, feature_dim)`, no bias.
    pub emission: ParamId,
    /// `(labels + 2, labels + 2)`, indexed `[prev][next]`.
    pub transitions: ParamId,
    pub num_labels: usize,
    pub feature_dim: usize,
}

impl CrfLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        num_labels: usize,
        feature_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if num_labels == 0 {
            return Err(Error::config("CRF needs at least one label"));
        }
        let emission = store.add(
            format!("{prefix}.W_ner"),
            Group::Ner,
            xavier_uniform(rng, num_labels, feature_dim),
        )?;
        let transitions = store.add(
            format!("{prefix}.T"),
            Group::Ner,
            xavier_uniform(rng, num_labels + 2, num_labels + 2),
        )?;
        Ok(CrfLayer {
            emission,
            transitions,
            num_labels,
            feature_dim,
        })
    }

    pub fn emissions(&self, g: &mut Graph<'_>, features: &[Var]) -> Result<Emissions> {
        if features.is_empty() {
            return Err(Error::validation("emissions of empty sequence"));
        }
        let w = g.param(self.emission);
        let columns = features
            .iter()
            .map(|&h| g.matmul(w, h))
            .collect::<Result<Vec<_>>>()?;
        Ok(Emissions {
            columns,
            num_labels: self.num_labels,
        })
    }
}

/// Per-position label scores, one `(labels, 1)` node per position.
#[derive(Debug, Clone)]
pub struct Emissions {
    columns: Vec<Var>,
    num_labels: usize,
}

impl Emissions {
    /// Wraps a plain `(n, labels)` matrix as graph inputs.
    pub fn from_tensor(g: &mut Graph<'_>, scores: &Tensor) -> Result<Self> {
        if scores.rows() == 0 || scores.cols() == 0 {
            return Err(Error::validation("empty emission matrix"));
        }
        let columns = (0..scores.rows())
            .map(|t| g.input(Tensor::from_raw(scores.cols(), 1, scores.row_slice(t).to_vec())))
            .collect();
        Ok(Emissions {
            columns,
            num_labels: scores.cols(),
        })
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn position(&self, t: usize) -> Var {
        self.columns[t]
    }

    /// Current values as an `(n, labels)` matrix.
    pub fn to_tensor(&self, g: &Graph<'_>) -> Tensor {
        let mut data = Vec::with_capacity(self.columns.len() * self.num_labels);
        for &c in &self.columns {
            data.extend_from_slice(g.value(c).data());
        }
        Tensor::from_raw(self.columns.len(), self.num_labels, data)
    }
}

fn check_transitions(num_labels: usize, shape: (usize, usize)) -> Result<()> {
    let k = num_labels + 2;
    if shape != (k, k) {
        return Err(Error::Shape {
            op: "crf transitions",
            left: (k, k),
            right: shape,
        });
    }
    Ok(())
}

/// `Σ_t e[t][y_t] + T[y_{t-1}][y_t]`, with `y_0 = BOS` and a final
/// `T[y_n][EOS]`.
pub fn sequence_score(g: &mut Graph<'_>, em: &Emissions, trans: Var, labels: &[usize]) -> Result<Var> {
    let l = em.num_labels;
    check_transitions(l, g.shape(trans))?;
    if labels.len() != em.len() {
        return Err(Error::validation(format!(
            "label sequence length {} differs from sentence length {}",
            labels.len(),
            em.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= l) {
        return Err(Error::validation(format!("label index {bad} out of range ({l} labels)")));
    }
    let mut terms = Vec::with_capacity(2 * labels.len() + 1);
    let mut prev = l;
    for (t, &y) in labels.iter().enumerate() {
        terms.push(g.pick(em.columns[t], y, 0)?);
        terms.push(g.pick(trans, prev, y)?);
        prev = y;
    }
    terms.push(g.pick(trans, prev, l + 1)?);
    g.sum(&terms)
}

/// Log of the sum of `exp(score)` over every label sequence, by the forward
/// recursion in log space.
pub fn log_partition(g: &mut Graph<'_>, em: &Emissions, trans: Var) -> Result<Var> {
    let l = em.num_labels;
    check_transitions(l, g.shape(trans))?;
    if em.is_empty() {
        return Err(Error::validation("log partition of empty sequence"));
    }
    let inner = g.slice(trans, 0, l, 0, l)?;
    let start_row = g.slice(trans, l, 1, 0, l)?;
    let start = g.transpose(start_row);
    let end = g.slice(trans, 0, l, l + 1, 1)?;

    let mut alpha = g.add(start, em.columns[0])?;
    for &e in &em.columns[1..] {
        // m[i][j] = alpha[i] + T[i][j]; reduce over i for each j
        let m = g.add_broadcast_col(inner, alpha)?;
        let mt = g.transpose(m);
        let reduced = g.logsumexp_rows(mt)?;
        alpha = g.add(reduced, e)?;
    }
    let last = g.add(alpha, end)?;
    let row = g.transpose(last);
    g.logsumexp_rows(row)
}

/// Negative log-likelihood of `gold`: `log_partition - sequence_score`.
pub fn nll(g: &mut Graph<'_>, em: &Emissions, trans: Var, gold: &[usize]) -> Result<Var> {
    let score = sequence_score(g, em, trans, gold)?;
    let z = log_partition(g, em, trans)?;
    g.sub(z, score)
}

/// Highest-scoring label sequence and its score. At every backpointer and
/// at the final choice, ties go to the smaller label index.
pub fn viterbi(emissions: &Tensor, transitions: &Tensor) -> Result<(Vec<usize>, f64)> {
    let (n, l) = emissions.shape();
    check_transitions(l, transitions.shape())?;
    if n == 0 || l == 0 {
        return Err(Error::validation("viterbi over empty sequence"));
    }
    let (bos, eos) = (l, l + 1);
    let mut delta: Vec<f64> = (0..l)
        .map(|j| transitions.get(bos, j) + emissions.get(0, j))
        .collect();
    let mut back = vec![vec![0usize; l]; n];
    #[allow(clippy::needless_range_loop)]
    for t in 1..n {
        let mut next = vec![0.0; l];
        for j in 0..l {
            let mut best_i = 0;
            let mut best = delta[0] + transitions.get(0, j);
            for (i, &d) in delta.iter().enumerate().skip(1) {
                let s = d + transitions.get(i, j);
                if s > best {
                    best = s;
                    best_i = i;
                }
            }
            back[t][j] = best_i;
            next[j] = best + emissions.get(t, j);
        }
        delta = next;
    }
    let mut best_j = 0;
    let mut best = delta[0] + transitions.get(0, eos);
    for (j, &d) in delta.iter().enumerate().skip(1) {
        let s = d + transitions.get(j, eos);
        if s > best {
            best = s;
            best_j = j;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = best_j;
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok((path, best))
}

/// Exhaustive enumeration over all label sequences, for testing the
/// dynamic programs.
pub mod oracle {
    use super::*;

    pub const MAX_SEQUENCES: usize = 1_000_000;

    #[derive(Debug, Clone, PartialEq)]
    pub struct BruteForce {
        pub log_partition: f64,
        pub best: Vec<usize>,
        pub best_score: f64,
    }

    /// Direct summation of the score of `labels`.
    pub fn score(emissions: &Tensor, transitions: &Tensor, labels: &[usize]) -> f64 {
        let l = emissions.cols();
        let mut total = 0.0;
        let mut prev = l;
        for (t, &y) in labels.iter().enumerate() {
            total += emissions.get(t, y) + transitions.get(prev, y);
            prev = y;
        }
        total + transitions.get(prev, l + 1)
    }

    /// Calls `visit` on every label sequence in lexicographic order.
    pub fn for_each_sequence(n: usize, l: usize, mut visit: impl FnMut(&[usize])) {
        let mut seq = vec![0usize; n];
        loop {
            visit(&seq);
            let mut pos = n;
            loop {
                if pos == 0 {
                    return;
                }
                pos -= 1;
                seq[pos] += 1;
                if seq[pos] < l {
                    break;
                }
                seq[pos] = 0;
            }
        }
    }

    pub fn brute_force(emissions: &Tensor, transitions: &Tensor) -> Result<BruteForce> {
        let (n, l) = emissions.shape();
        check_transitions(l, transitions.shape())?;
        let count = (l as f64).powi(n as i32);
        if count > MAX_SEQUENCES as f64 {
            return Err(Error::validation(format!(
                "{l}^{n} sequences exceeds enumeration limit {MAX_SEQUENCES}"
            )));
        }
        let mut scores = Vec::with_capacity(count as usize);
        let mut best = Vec::new();
        let mut best_score = f64::NEG_INFINITY;
        for_each_sequence(n, l, |seq| {
            let s = score(emissions, transitions, seq);
            if s > best_score {
                best_score = s;
                best = seq.to_vec();
            }
            scores.push(s);
        });
        Ok(BruteForce {
            log_partition: logsumexp(&scores),
            best,
            best_score,
        })
    }

    /// `P(y_t = label)` for every position, by enumeration.
    pub fn marginals(emissions: &Tensor, transitions: &Tensor) -> Result<Tensor> {
        let (n, l) = emissions.shape();
        let z = brute_force(emissions, transitions)?.log_partition;
        let mut out = Tensor::zeros(n, l);
        for_each_sequence(n, l, |seq| {
            let p = (score(emissions, transitions, seq) - z).exp();
            for (t, &y) in seq.iter().enumerate() {
                let v = out.get(t, y);
                out.set(t, y, v + p);
            }
        });
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::brute_force;
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rows(r: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(r).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::new(r, c, (0..r * c).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
    }

    fn score_of(e: &Tensor, t: &Tensor, y: &[usize]) -> f64 {
        let mut g = Graph::new();
        let em = Emissions::from_tensor(&mut g, e).unwrap();
        let tv = g.input(t.clone());
        let s = sequence_score(&mut g, &em, tv, y).unwrap();
        g.value(s).item()
    }

    fn log_z(e: &Tensor, t: &Tensor) -> f64 {
        let mut g = Graph::new();
        let em = Emissions::from_tensor(&mut g, e).unwrap();
        let tv = g.input(t.clone());
        let z = log_partition(&mut g, &em, tv).unwrap();
        g.value(z).item()
    }

    #[test]
    fn sequence_score_examples() {
        assert_eq!(score_of(&rows(&[vec![2.0, 5.0]]), &Tensor::zeros(4, 4), &[1]), 5.0);
        let e = rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(score_of(&e, &Tensor::filled(4, 4, 0.5), &[0, 1]), 3.5);
    }

    #[test]
    fn sequence_score_errors() {
        let mut g = Graph::new();
        let em = Emissions::from_tensor(&mut g, &Tensor::zeros(2, 2)).unwrap();
        let t = g.input(Tensor::zeros(4, 4));
        assert!(sequence_score(&mut g, &em, t, &[0]).is_err());
        assert!(sequence_score(&mut g, &em, t, &[0, 2]).is_err());
        let bad = g.input(Tensor::zeros(2, 2));
        assert!(sequence_score(&mut g, &em, bad, &[0, 1]).is_err());
    }

    #[test]
    fn log_partition_examples() {
        assert_abs_diff_eq!(log_z(&Tensor::zeros(1, 2), &Tensor::zeros(4, 4)), 2f64.ln(), epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = random(&mut rng, 3, 4);
        let t = random(&mut rng, 6, 6);
        let expected = brute_force(&e, &t).unwrap().log_partition;
        assert_abs_diff_eq!(log_z(&e, &t), expected, epsilon = 1e-8);

        let mut shifted = e.clone();
        for v in &mut shifted.data_mut()[4..8] {
            *v -= 0.75;
        }
        assert_abs_diff_eq!(log_z(&shifted, &t), log_z(&e, &t) - 0.75, epsilon = 1e-12);
    }

    #[test]
    fn nll_examples() {
        let mut g = Graph::new();
        let em = Emissions::from_tensor(&mut g, &rows(&[vec![0.3], vec![-1.0]])).unwrap();
        let t = g.input(Tensor::filled(3, 3, 0.2));
        let loss = nll(&mut g, &em, t, &[0, 0]).unwrap();
        assert_abs_diff_eq!(g.value(loss).item(), 0.0, epsilon = 1e-15);

        for y in 0..2 {
            let mut g = Graph::new();
            let em = Emissions::from_tensor(&mut g, &Tensor::zeros(1, 2)).unwrap();
            let t = g.input(Tensor::zeros(4, 4));
            let loss = nll(&mut g, &em, t, &[y]).unwrap();
            assert_abs_diff_eq!(g.value(loss).item(), 2f64.ln(), epsilon = 1e-15);
        }
    }

    #[test]
    fn viterbi_examples() {
        let e = rows(&[vec![0.0, 3.0, 1.0], vec![2.0, 0.0, 1.0], vec![0.0, 0.0, 5.0]]);
        let (path, score) = viterbi(&e, &Tensor::zeros(5, 5)).unwrap();
        assert_eq!(path, vec![1, 0, 2]);
        assert_eq!(score, 10.0);

        let (path, _) = viterbi(&Tensor::filled(4, 3, 1.0), &Tensor::filled(5, 5, 0.5)).unwrap();
        assert_eq!(path, vec![0, 0, 0, 0]);
    }

    #[test]
    fn brute_force_guard_and_single_position() {
        assert!(brute_force(&Tensor::zeros(21, 2), &Tensor::zeros(4, 4)).is_err());
        let e = rows(&[vec![0.5, -0.25, 1.5]]);
        let t = Tensor::zeros(5, 5);
        let bf = brute_force(&e, &t).unwrap();
        assert_eq!(bf.best, vec![2]);
        assert_abs_diff_eq!(bf.log_partition, logsumexp(&[0.5, -0.25, 1.5]), epsilon = 1e-15);
    }

    #[test]
    fn emissions_from_layer() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let crf = CrfLayer::new(&mut store, "crf", 3, 4, &mut rng).unwrap();
        let mut g = Graph::with_params(&store);
        let onehot = g.input(Tensor::column(&[0.0, 1.0, 0.0, 0.0]).unwrap());
        let em = crf.emissions(&mut g, &[onehot, onehot]).unwrap();
        let m = em.to_tensor(&g);
        assert_eq!(m.shape(), (2, 3));
        let w = store.value(crf.emission);
        for j in 0..3 {
            assert_eq!(m.get(0, j), w.get(j, 1));
        }
        assert!(crf.emissions(&mut g, &[]).is_err());

        let mut zeroed = store.clone();
        *zeroed.value_mut(crf.emission) = Tensor::zeros(3, 4);
        let mut g = Graph::with_params(&zeroed);
        let h = g.input(Tensor::column(&[1.0, 2.0, 3.0, 4.0]).unwrap());
        let em = crf.emissions(&mut g, &[h]).unwrap();
        assert!(em.to_tensor(&g).data().iter().all(|&v| v == 0.0));
    }
}
