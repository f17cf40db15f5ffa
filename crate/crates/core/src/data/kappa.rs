//! Inter-annotator agreement.

use std::collections::{BTreeMap, HashMap};

use super::corpus::Corpus;
use crate::error::{Error, Result};

/// Cohen's kappa between two label index sequences. Defined as 1 when
/// chance agreement is 1.
pub fn cohen_kappa(a: &[usize], b: &[usize], num_labels: usize) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::validation("kappa needs two non-empty sequences of equal length"));
    }
    let n = a.len() as f64;
    let mut ca = vec![0usize; num_labels];
    let mut cb = vec![0usize; num_labels];
    let mut agree = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        if x >= num_labels || y >= num_labels {
            return Err(Error::validation("label index out of range"));
        }
        ca[x] += 1;
        cb[y] += 1;
        agree += usize::from(x == y);
    }
    let po = agree as f64 / n;
    let pe: f64 = ca.iter().zip(&cb).map(|(&x, &y)| (x as f64 / n) * (y as f64 / n)).sum();
    if pe >= 1.0 {
        return Ok(1.0);
    }
    Ok((po - pe) / (1.0 - pe))
}

/// Character-level Cohen's kappa for every worker pair over the sentences
/// both annotated, averaged over pairs sharing at least one sentence.
pub fn pairwise_kappa(corpus: &Corpus) -> Result<f64> {
    // worker -> sentence id -> label indices
    let mut by_worker: BTreeMap<usize, HashMap<&str, Vec<usize>>> = BTreeMap::new();
    for s in &corpus.sentences {
        let Some(w) = s.worker.as_deref().and_then(|w| corpus.worker_index(w)) else {
            continue;
        };
        by_worker
            .entry(w)
            .or_default()
            .insert(s.id.as_str(), corpus.labels.indices(&s.labels)?);
    }
    let workers: Vec<_> = by_worker.iter().collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..workers.len() {
        for j in i + 1..workers.len() {
            let (a, b) = (workers[i].1, workers[j].1);
            let mut ids: Vec<&&str> = a.keys().filter(|id| b.contains_key(**id)).collect();
            if ids.is_empty() {
                continue;
            }
            ids.sort();
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for id in ids {
                let (x, y) = (&a[*id], &b[*id]);
                if x.len() != y.len() {
                    return Err(Error::validation(format!("sentence {id}: annotation lengths differ")));
                }
                xs.extend_from_slice(x);
                ys.extend_from_slice(y);
            }
            total += cohen_kappa(&xs, &ys, corpus.labels.len())?;
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::validation("no two workers share an annotated sentence"));
    }
    Ok(total / pairs as f64)
}
