//! Crowd-annotated corpus files.
//!
//! ```text
//! # id=s0001 worker=w1
//! 我<TAB>O
//! 听<TAB>O
//! 稻<TAB>B-SONG
//! 香<TAB>E-SONG
//!
//! ```
//!
//! `worker=` is omitted for gold data. The same `id` may appear several
//! times with different workers.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tagscheme::{labels_to_spans, DecodeMode, EntityType, Label, LabelSet, Span};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSentence {
    pub id: String,
    pub worker: Option<String>,
    pub chars: Vec<char>,
    pub labels: Vec<Label>,
}

fn check_token(kind: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.contains(|c: char| c.is_whitespace() || c == '=') {
        return Err(Error::validation(format!(
            "{kind} {s:?} must be non-empty without whitespace or '='"
        )));
    }
    Ok(())
}

impl LabeledSentence {
    pub fn new(id: impl Into<String>, worker: Option<String>, chars: Vec<char>, labels: Vec<Label>) -> Result<Self> {
        let id = id.into();
        check_token("sentence id", &id)?;
        if let Some(w) = &worker {
            check_token("worker id", w)?;
        }
        if chars.is_empty() {
            return Err(Error::validation(format!("sentence {id} is empty")));
        }
        if chars.len() != labels.len() {
            return Err(Error::validation(format!(
                "sentence {id}: {} characters but {} labels",
                chars.len(),
                labels.len()
            )));
        }
        if let Some(c) = chars.iter().find(|c| **c == '\t' || **c == '\n' || **c == '\r') {
            return Err(Error::validation(format!("sentence {id} contains control character {c:?}")));
        }
        Ok(LabeledSentence {
            id,
            worker,
            chars,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn text(&self) -> String {
        self.chars.iter().collect()
    }

    /// Entity spans under lenient decoding.
    pub fn spans(&self) -> Vec<Span> {
        labels_to_spans(&self.labels, DecodeMode::Lenient).expect("lenient decoding never fails")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub sentences: Vec<LabeledSentence>,
    /// Worker ids in first-appearance order; a worker's index is its
    /// position here.
    pub workers: Vec<String>,
    pub labels: LabelSet,
}

impl Corpus {
    pub fn new(sentences: Vec<LabeledSentence>, labels: LabelSet) -> Result<Self> {
        let mut workers: Vec<String> = Vec::new();
        for s in &sentences {
            for l in &s.labels {
                if labels.index_of(l).is_none() {
                    return Err(Error::validation(format!("sentence {}: label {l} not in label set", s.id)));
                }
            }
            if let Some(w) = &s.worker {
                if !workers.contains(w) {
                    workers.push(w.clone());
                }
            }
        }
        Ok(Corpus {
            sentences,
            workers,
            labels,
        })
    }

    pub fn worker_index(&self, worker: &str) -> Option<usize> {
        self.workers.iter().position(|w| w == worker)
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Annotations grouped by sentence id, in first-appearance order.
    pub fn groups(&self) -> Vec<(&str, Vec<&LabeledSentence>)> {
        let mut order: Vec<&str> = Vec::new();
        let mut by_id: HashMap<&str, Vec<&LabeledSentence>> = HashMap::new();
        for s in &self.sentences {
            by_id
                .entry(s.id.as_str())
                .or_insert_with(|| {
                    order.push(s.id.as_str());
                    Vec::new()
                })
                .push(s);
        }
        order
            .into_iter()
            .map(|id| (id, by_id.remove(id).unwrap_or_default()))
            .collect()
    }

    pub fn has_workers(&self) -> bool {
        self.sentences.iter().all(|s| s.worker.is_some())
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Label set to validate against; inferred from the file when absent
    /// (entity types sorted by name).
    pub labels: Option<LabelSet>,
    /// Reject label sequences that are not valid BIEO.
    pub strict: bool,
}

struct RawSentence {
    id: String,
    worker: Option<String>,
    header_line: usize,
    chars: Vec<char>,
    labels: Vec<Label>,
}

pub fn parse_corpus(origin: &str, text: &str, opts: &LoadOptions) -> Result<Corpus> {
    let mut raw: Vec<RawSentence> = Vec::new();
    let mut current: Option<RawSentence> = None;
    let err = |line: usize, msg: String| Error::parse(origin, line, msg);

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            if let Some(s) = current.take() {
                raw.push(s);
            }
            continue;
        }
        if let Some(header) = line.strip_prefix("# ") {
            if let Some(s) = current.take() {
                raw.push(s);
            }
            let mut id = None;
            let mut worker = None;
            for field in header.split(' ') {
                match field.split_once('=') {
                    Some(("id", v)) if !v.is_empty() => id = Some(v.to_string()),
                    Some(("worker", v)) if !v.is_empty() => worker = Some(v.to_string()),
                    _ => return Err(err(lineno, format!("malformed header field {field:?}"))),
                }
            }
            let id = id.ok_or_else(|| err(lineno, "header without id=".into()))?;
            current = Some(RawSentence {
                id,
                worker,
                header_line: lineno,
                chars: Vec::new(),
                labels: Vec::new(),
            });
            continue;
        }
        let sentence = current
            .as_mut()
            .ok_or_else(|| err(lineno, "character line before any sentence header".into()))?;
        let (ch, label) = line
            .split_once('\t')
            .ok_or_else(|| err(lineno, format!("expected CHAR<TAB>LABEL, found {line:?}")))?;
        let mut it = ch.chars();
        let (Some(c), None) = (it.next(), it.next()) else {
            return Err(err(lineno, format!("expected a single character, found {ch:?}")));
        };
        let label: Label = label.parse().map_err(|e: Error| err(lineno, e.to_string()))?;
        sentence.chars.push(c);
        sentence.labels.push(label);
    }
    if let Some(s) = current.take() {
        raw.push(s);
    }

    let labels = match &opts.labels {
        Some(l) => l.clone(),
        None => {
            let types: BTreeSet<&EntityType> = raw
                .iter()
                .flat_map(|s| s.labels.iter().filter_map(Label::etype))
                .collect();
            LabelSet::new(types.into_iter().cloned().collect())?
        }
    };

    let mut sentences = Vec::with_capacity(raw.len());
    for s in raw {
        if s.chars.is_empty() {
            return Err(err(s.header_line, format!("sentence {} has no characters", s.id)));
        }
        for (pos, l) in s.labels.iter().enumerate() {
            if labels.index_of(l).is_none() {
                return Err(err(s.header_line + pos + 1, format!("unknown label {l}")));
            }
        }
        if opts.strict {
            labels_to_spans(&s.labels, DecodeMode::Strict)
                .map_err(|e| err(s.header_line, format!("sentence {}: {e}", s.id)))?;
        }
        sentences.push(
            LabeledSentence::new(s.id, s.worker, s.chars, s.labels).map_err(|e| err(s.header_line, e.to_string()))?,
        );
    }
    Corpus::new(sentences, labels)
}

pub fn load_corpus(path: &Path, opts: &LoadOptions) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&path.display().to_string(), &text, opts)
}

pub fn format_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    for s in &corpus.sentences {
        out.push_str("# id=");
        out.push_str(&s.id);
        if let Some(w) = &s.worker {
            out.push_str(" worker=");
            out.push_str(w);
        }
        out.push('\n');
        for (c, l) in s.chars.iter().zip(&s.labels) {
            out.push(*c);
            out.push('\t');
            out.push_str(&l.to_string());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    fs::write(path, format_corpus(corpus)).map_err(|e| Error::io(path, e))
}
