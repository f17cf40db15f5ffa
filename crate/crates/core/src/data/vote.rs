//! Character-level majority voting over re-annotations.

use super::corpus::{Corpus, LabeledSentence};
use crate::error::{Error, Result};
use crate::tagscheme::LabelSet;

/// Per position the most frequent label. Ties prefer `O`, then the
/// smallest label index.
pub fn majority_vote(annotations: &[&LabeledSentence], labels: &LabelSet) -> Result<LabeledSentence> {
    let first = annotations
        .first()
        .ok_or_else(|| Error::validation("majority vote needs at least one annotation"))?;
    for a in &annotations[1..] {
        if a.chars != first.chars {
            return Err(Error::validation(format!(
                "sentence {}: annotations disagree on characters",
                first.id
            )));
        }
    }
    let rows: Vec<Vec<usize>> = annotations
        .iter()
        .map(|a| labels.indices(&a.labels))
        .collect::<Result<_>>()?;
    let mut counts = vec![0usize; labels.len()];
    let mut voted = Vec::with_capacity(first.len());
    for pos in 0..first.len() {
        counts.iter_mut().for_each(|c| *c = 0);
        for r in &rows {
            counts[r[pos]] += 1;
        }
        // Index 0 is O, so the first maximum in index order implements both
        // tie rules.
        let mut best = 0;
        for (i, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = i;
            }
        }
        voted.push(best);
    }
    LabeledSentence::new(first.id.clone(), None, first.chars.clone(), labels.from_indices(&voted)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoteSummary {
    /// Sentences voted from two or more annotations.
    pub voted: usize,
    /// Sentences with a single annotation, copied through.
    pub single: usize,
}

/// Votes every sentence id once, in first-appearance order.
pub fn vote_corpus(corpus: &Corpus) -> Result<(Corpus, VoteSummary)> {
    let mut out = Vec::new();
    let mut summary = VoteSummary { voted: 0, single: 0 };
    for (_, group) in corpus.groups() {
        if group.len() >= 2 {
            summary.voted += 1;
        } else {
            summary.single += 1;
        }
        out.push(majority_vote(&group, &corpus.labels)?);
    }
    Ok((Corpus::new(out, corpus.labels.clone())?, summary))
}
