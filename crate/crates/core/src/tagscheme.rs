//! BIEO label space and conversion between entity spans and per-character
//! label sequences.
//!
//! There is no single-character label: a one-character entity is a lone
//! `B-XX`, so a set over `k` entity types has exactly `3k + 1` labels.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Entity type name such as `PER` or `SONG`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityType(String);

impl EntityType {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::validation("entity type must be non-empty"));
        }
        if name.contains('-') || name.chars().any(char::is_whitespace) {
            return Err(Error::validation(format!(
                "entity type {name:?} contains '-' or whitespace"
            )));
        }
        Ok(EntityType(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelKind {
    O,
    B,
    I,
    E,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Label {
    O,
    B(EntityType),
    I(EntityType),
    E(EntityType),
}

impl Label {
    pub fn kind(&self) -> LabelKind {
        match self {
            Label::O => LabelKind::O,
            Label::B(_) => LabelKind::B,
            Label::I(_) => LabelKind::I,
            Label::E(_) => LabelKind::E,
        }
    }

    pub fn etype(&self) -> Option<&EntityType> {
        match self {
            Label::O => None,
            Label::B(t) | Label::I(t) | Label::E(t) => Some(t),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::O => f.write_str("O"),
            Label::B(t) => write!(f, "B-{t}"),
            Label::I(t) => write!(f, "I-{t}"),
            Label::E(t) => write!(f, "E-{t}"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(Label::O);
        }
        let (prefix, etype) = s
            .split_once('-')
            .ok_or_else(|| Error::validation(format!("unknown label {s:?}")))?;
        let etype = EntityType::new(etype)
            .map_err(|_| Error::validation(format!("unknown label {s:?}")))?;
        match prefix {
            "B" => Ok(Label::B(etype)),
            "I" => Ok(Label::I(etype)),
            "E" => Ok(Label::E(etype)),
            _ => Err(Error::validation(format!("unknown label {s:?}"))),
        }
    }
}

/// Ordered label alphabet: `O` first, then `B`, `I`, `E` for each type in
/// type order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    types: Vec<EntityType>,
    labels: Vec<Label>,
    index: HashMap<Label, usize>,
}

impl LabelSet {
    pub fn new(types: Vec<EntityType>) -> Result<Self> {
        let mut labels = vec![Label::O];
        for (i, t) in types.iter().enumerate() {
            if types[..i].contains(t) {
                return Err(Error::validation(format!("duplicate entity type {t}")));
            }
            labels.push(Label::B(t.clone()));
            labels.push(Label::I(t.clone()));
            labels.push(Label::E(t.clone()));
        }
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Ok(LabelSet {
            types,
            labels,
            index,
        })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let types = names
            .iter()
            .map(|n| EntityType::new(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(types)
    }

    pub fn types(&self) -> &[EntityType] {
        &self.types
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &Label) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, index: usize) -> Option<&Label> {
        self.labels.get(index)
    }

    pub fn type_index(&self, etype: &EntityType) -> Option<usize> {
        self.types.iter().position(|t| t == etype)
    }

    /// Parses label text and checks that its entity type belongs to the set.
    pub fn parse(&self, text: &str) -> Result<Label> {
        let label: Label = text.parse()?;
        if self.index_of(&label).is_none() {
            return Err(Error::validation(format!(
                "label {text:?} not in label set"
            )));
        }
        Ok(label)
    }

    pub fn indices(&self, labels: &[Label]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| {
                self.index_of(l)
                    .ok_or_else(|| Error::validation(format!("label {l} not in label set")))
            })
            .collect()
    }

    pub fn from_indices(&self, indices: &[usize]) -> Result<Vec<Label>> {
        indices
            .iter()
            .map(|&i| {
                self.label(i)
                    .cloned()
                    .ok_or_else(|| Error::validation(format!("label index {i} out of range")))
            })
            .collect()
    }
}

/// Inclusive character range tagged with an entity type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub etype: EntityType,
}

impl Span {
    pub fn new(start: usize, end: usize, etype: EntityType) -> Self {
        Span { start, end, etype }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.start, self.end, self.etype)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Strict,
    Lenient,
}

pub fn spans_to_labels(n: usize, spans: &[Span]) -> Result<Vec<Label>> {
    let mut labels = vec![Label::O; n];
    let mut covered = vec![false; n];
    for span in spans {
        if span.start > span.end || span.end >= n {
            return Err(Error::validation(format!(
                "span {span} out of bounds for length {n}"
            )));
        }
        if covered[span.start..=span.end].iter().any(|&c| c) {
            return Err(Error::validation(format!("span {span} overlaps another span")));
        }
        covered[span.start..=span.end].iter_mut().for_each(|c| *c = true);
        labels[span.start] = Label::B(span.etype.clone());
        if span.end > span.start {
            for label in &mut labels[span.start + 1..span.end] {
                *label = Label::I(span.etype.clone());
            }
            labels[span.end] = Label::E(span.etype.clone());
        }
    }
    Ok(labels)
}

/// Whether `prev` may be immediately followed by `next` in a strict BIEO
/// sequence. `None` stands for the sentence boundary: BOS as `prev`, EOS as
/// `next`.
pub fn valid_transition(prev: Option<&Label>, next: Option<&Label>) -> bool {
    match (prev, next) {
        // an open entity must continue with I/E of the same type
        (Some(Label::I(p)), Some(Label::I(n) | Label::E(n))) => p == n,
        (Some(Label::I(_)), _) => false,
        (Some(Label::B(p)), Some(Label::I(n) | Label::E(n))) => p == n,
        (_, Some(Label::I(_) | Label::E(_))) => false,
        _ => true,
    }
}

pub fn labels_to_spans(labels: &[Label], mode: DecodeMode) -> Result<Vec<Span>> {
    match mode {
        DecodeMode::Strict => strict_spans(labels),
        DecodeMode::Lenient => Ok(lenient_spans(labels)),
    }
}

fn strict_spans(labels: &[Label]) -> Result<Vec<Span>> {
    let mut prev: Option<&Label> = None;
    for (pos, label) in labels.iter().enumerate() {
        if !valid_transition(prev, Some(label)) {
            let before = prev.map_or("BOS".to_string(), ToString::to_string);
            return Err(Error::validation(format!(
                "invalid label sequence at position {pos}: {before} -> {label}"
            )));
        }
        prev = Some(label);
    }
    if !valid_transition(prev, None) {
        let pos = labels.len() - 1;
        return Err(Error::validation(format!(
            "invalid label sequence at position {pos}: unterminated entity"
        )));
    }
    // a valid sequence is decoded identically by the lenient rule
    Ok(lenient_spans(labels))
}

fn lenient_spans(labels: &[Label]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        let Label::B(etype) = &labels[i] else {
            i += 1;
            continue;
        };
        let mut end = i;
        while matches!(labels.get(end + 1), Some(Label::I(t)) if t == etype) {
            end += 1;
        }
        if matches!(labels.get(end + 1), Some(Label::E(t)) if t == etype) {
            end += 1;
        }
        spans.push(Span::new(i, end, etype.clone()));
        i = end + 1;
    }
    spans
}
