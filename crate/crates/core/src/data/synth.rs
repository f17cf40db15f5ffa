//! Synthetic crowd corpora.
//!
//! Gold sentences come from a small template grammar of music-request
//! utterances with person and song slots filled from closed lexicons.
//! Each synthetic worker corrupts the gold spans (drop, boundary shift,
//! type confusion) and re-encodes them, so crowd labels are always valid
//! BIEO.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::corpus::{Corpus, LabeledSentence};
use crate::error::{Error, Result};
use crate::tagscheme::{spans_to_labels, EntityType, LabelSet, Span};

pub const PERSON: &str = "PER";
pub const SONG: &str = "SONG";

const TEMPLATES: &[&str] = &[
    "我想听{PER}的{SONG}",
    "播放一首{SONG}",
    "来一首{PER}唱的{SONG}",
    "{PER}有什么好听的歌",
    "给我放{SONG}吧",
    "你知道{PER}吗",
    "{SONG}是谁唱的",
    "我喜欢{PER}",
    "帮我找一下{PER}的新歌",
    "今天天气怎么样",
    "{PER}和{PER}合唱的{SONG}",
    "有没有{SONG}这首歌",
    "换一首{PER}的歌",
    "我最近在听{SONG}",
    "{PER}的演唱会什么时候开始",
    "请播放{PER}演唱的{SONG}",
    "随便放点音乐",
    "{SONG}太好听了",
    "能不能再放一遍{SONG}",
    "我朋友说{PER}唱歌很好听",
    "{SONG}的原唱是{PER}吗",
    "放一下{PER}的{SONG}和{SONG}",
    "你会唱{SONG}吗",
    "我不想听{PER}的歌了",
    "我想听{ANY}",
    "搜一下{ANY}",
    "{ANY}怎么样",
    "你喜欢{ANY}吗",
    "再来一遍{ANY}",
];

const SURNAMES: &str = "王李张刘陈杨黄赵周吴徐孙马朱胡郭何林罗高郑梁谢宋唐许韩冯邓曹彭曾肖田董潘袁蔡蒋余于杜叶程魏苏吕丁任沈姚卢";
const GIVEN: &str = "伟芳娜敏静丽强磊军洋勇艳杰娟涛明超秀霞平刚桂英华玉兰萍红建文辉力云飞鹏宇浩然子轩涵琪欣怡佳雨晨博雅思梦婷俊凯瑞泽宁嘉";
const TITLE: &str = "爱情风雨月光心梦海天夜花星时间路远方年少春秋冬夏雪云歌你我的在不是一个人走过来去想念说好美红蓝白城南北山河水火回家小大长老新旧等待再见告别故事温柔勇气孤单快乐";

const LEXICON_SEED: u64 = 0x6c65_7869_636f_6e73;
const LEXICON_SIZE: usize = 400;

/// Closed person and song lexicons, identical for every corpus seed.
fn lexicons() -> (Vec<Vec<char>>, Vec<Vec<char>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(LEXICON_SEED);
    let surnames: Vec<char> = SURNAMES.chars().collect();
    let given: Vec<char> = GIVEN.chars().collect();
    let title: Vec<char> = TITLE.chars().collect();
    let mut draw = |min: usize, max: usize, first: &[char], rest: &[char], taken: &mut Vec<Vec<char>>| loop {
        let len = rng.gen_range(min..=max);
        let mut w = vec![first[rng.gen_range(0..first.len())]];
        w.extend((1..len).map(|_| rest[rng.gen_range(0..rest.len())]));
        if !taken.contains(&w) {
            taken.push(w);
            return;
        }
    };
    let mut persons = Vec::with_capacity(LEXICON_SIZE);
    let mut songs = Vec::with_capacity(LEXICON_SIZE);
    for _ in 0..LEXICON_SIZE {
        draw(2, 3, &surnames, &given, &mut persons);
        draw(2, 4, &title, &title, &mut songs);
    }
    (persons, songs)
}

/// Entity types produced by the grammar, in label-set order.
pub fn entity_types() -> Vec<EntityType> {
    vec![
        EntityType::new(PERSON).expect("valid type"),
        EntityType::new(SONG).expect("valid type"),
    ]
}

pub fn label_set() -> LabelSet {
    LabelSet::new(entity_types()).expect("valid label set")
}

/// Sentence generator over the template grammar.
#[derive(Debug, Clone)]
pub struct Grammar {
    types: Vec<EntityType>,
    persons: Vec<Vec<char>>,
    songs: Vec<Vec<char>>,
}

impl Default for Grammar {
    fn default() -> Self {
        let (persons, songs) = lexicons();
        Grammar {
            types: entity_types(),
            persons,
            songs,
        }
    }
}

impl Grammar {
    /// One gold sentence and its spans.
    pub fn sentence<R: Rng>(&self, rng: &mut R) -> (Vec<char>, Vec<Span>) {
        let template = TEMPLATES[rng.gen_range(0..TEMPLATES.len())];
        let mut chars = Vec::new();
        let mut spans = Vec::new();
        let mut rest = template;
        while let Some(open) = rest.find('{') {
            chars.extend(rest[..open].chars());
            let close = open + rest[open..].find('}').expect("closed slot");
            let person = match &rest[open + 1..close] {
                PERSON => true,
                SONG => false,
                _ => rng.gen_bool(0.5),
            };
            let (lexicon, etype) = if person {
                (&self.persons, &self.types[0])
            } else {
                (&self.songs, &self.types[1])
            };
            let start = chars.len();
            chars.extend_from_slice(&lexicon[rng.gen_range(0..lexicon.len())]);
            spans.push(Span::new(start, chars.len() - 1, etype.clone()));
            rest = &rest[close + 1..];
        }
        chars.extend(rest.chars());
        (chars, spans)
    }
}

/// Noise model of one synthetic annotator.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseProfile {
    pub id: String,
    /// Probability that an entity is dropped.
    pub miss: f64,
    /// Probability that one boundary moves by one character.
    pub shift: f64,
    /// Row-stochastic matrix over entity types: `confusion[gold][annotated]`.
    pub confusion: Vec<Vec<f64>>,
}

impl NoiseProfile {
    pub fn clean(id: impl Into<String>, num_types: usize) -> Self {
        let confusion = (0..num_types)
            .map(|i| (0..num_types).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        NoiseProfile {
            id: id.into(),
            miss: 0.0,
            shift: 0.0,
            confusion,
        }
    }

    /// Profile that keeps the type with probability `1 - confusion` and
    /// otherwise spreads it evenly over the other types.
    pub fn uniform(id: impl Into<String>, num_types: usize, miss: f64, shift: f64, confusion: f64) -> Self {
        let mut p = Self::clean(id, num_types);
        p.miss = miss;
        p.shift = shift;
        if num_types > 1 {
            let off = confusion / (num_types - 1) as f64;
            for (i, row) in p.confusion.iter_mut().enumerate() {
                for (j, x) in row.iter_mut().enumerate() {
                    *x = if i == j { 1.0 - confusion } else { off };
                }
            }
        }
        p
    }

    pub fn validate(&self, num_types: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::config(format!("worker {}: {msg}", self.id)));
        if self.id.is_empty() || self.id.contains(|c: char| c.is_whitespace() || c == '=') {
            return bad("id must be non-empty without whitespace or '='".into());
        }
        for (name, r) in [("miss", self.miss), ("shift", self.shift)] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} rate {r} outside [0, 1]"));
            }
        }
        if self.confusion.len() != num_types || self.confusion.iter().any(|r| r.len() != num_types) {
            return bad(format!("confusion matrix must be {num_types}x{num_types}"));
        }
        for (i, row) in self.confusion.iter().enumerate() {
            if row.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return bad(format!("confusion row {i} has an entry outside [0, 1]"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return bad(format!("confusion row {i} sums to {sum}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    worker: Vec<NoiseProfile>,
}

/// Parses `[[worker]]` tables.
pub fn parse_profiles(origin: &str, text: &str) -> Result<Vec<NoiseProfile>> {
    let file: ProfileFile =
        toml::from_str(text).map_err(|e| Error::config(format!("{origin}: {}", e.message())))?;
    let n = entity_types().len();
    for p in &file.worker {
        p.validate(n)?;
    }
    Ok(file.worker)
}

pub fn load_profiles(path: &Path) -> Result<Vec<NoiseProfile>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_profiles(&path.display().to_string(), &text)
}

/// Three workers with distinct noise levels.
pub fn standard_profiles() -> Vec<NoiseProfile> {
    let n = entity_types().len();
    vec![
        NoiseProfile::uniform("w1", n, 0.10, 0.1, 0.1),
        NoiseProfile::uniform("w2", n, 0.15, 0.1, 0.2),
        NoiseProfile::uniform("w3", n, 0.20, 0.1, 0.3),
    ]
}

fn overlaps(a: &Span, b: &Span) -> bool {
    a.start <= b.end && b.start <= a.end
}

/// Applies a worker's noise to gold spans of a sentence of length `n`.
/// Shifts that would leave the sentence or overlap another entity are
/// skipped.
pub fn corrupt_spans<R: Rng>(
    gold: &[Span],
    n: usize,
    profile: &NoiseProfile,
    types: &[EntityType],
    rng: &mut R,
) -> Result<Vec<Span>> {
    let mut out = Vec::with_capacity(gold.len());
    for (i, span) in gold.iter().enumerate() {
        if rng.gen_bool(profile.miss) {
            continue;
        }
        let t = types
            .iter()
            .position(|t| *t == span.etype)
            .ok_or_else(|| Error::validation(format!("span type {} not in profile types", span.etype)))?;
        let u: f64 = rng.gen();
        let row = &profile.confusion[t];
        let mut acc = 0.0;
        let mut new_type = row.len() - 1;
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                new_type = j;
                break;
            }
        }
        let mut s = Span::new(span.start, span.end, types[new_type].clone());
        if rng.gen_bool(profile.shift) {
            let move_start = rng.gen_bool(0.5);
            let delta: isize = if rng.gen_bool(0.5) { 1 } else { -1 };
            let (start, end) = if move_start {
                (s.start as isize + delta, s.end as isize)
            } else {
                (s.start as isize, s.end as isize + delta)
            };
            if start >= 0 && start <= end && (end as usize) < n {
                let cand = Span::new(start as usize, end as usize, s.etype.clone());
                let clear = gold[i + 1..].iter().chain(&out).all(|g| !overlaps(g, &cand));
                if clear {
                    s = cand;
                }
            }
        }
        out.push(s);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    /// Workers per training sentence, sampled without replacement.
    pub annotators: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpora {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
    /// Gold version of the training sentences.
    pub train_gold: Corpus,
}

pub fn synth_generate(spec: &SynthSpec, profiles: &[NoiseProfile]) -> Result<SynthCorpora> {
    let types = entity_types();
    for p in profiles {
        p.validate(types.len())?;
    }
    if spec.annotators == 0 || spec.annotators > profiles.len() {
        return Err(Error::config(format!(
            "annotators per sentence must be in 1..={}, got {}",
            profiles.len(),
            spec.annotators
        )));
    }
    let labels = LabelSet::new(types.clone())?;
    let grammar = Grammar::default();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let gold_split = |prefix: &str, count: usize, rng: &mut ChaCha8Rng| -> Result<Vec<(LabeledSentence, Vec<Span>)>> {
        (0..count)
            .map(|i| {
                let (chars, spans) = grammar.sentence(rng);
                let labels = spans_to_labels(chars.len(), &spans)?;
                Ok((LabeledSentence::new(format!("{prefix}{:05}", i + 1), None, chars, labels)?, spans))
            })
            .collect()
    };
    let train_gold = gold_split("s", spec.train, &mut rng)?;
    let dev = gold_split("d", spec.dev, &mut rng)?;
    let test = gold_split("t", spec.test, &mut rng)?;

    let mut crowd = Vec::with_capacity(spec.train * spec.annotators);
    for (sentence, spans) in &train_gold {
        let mut chosen = sample(&mut rng, profiles.len(), spec.annotators).into_vec();
        chosen.sort_unstable();
        for w in chosen {
            let profile = &profiles[w];
            let noisy = corrupt_spans(spans, sentence.len(), profile, &types, &mut rng)?;
            crowd.push(LabeledSentence::new(
                sentence.id.clone(),
                Some(profile.id.clone()),
                sentence.chars.clone(),
                spans_to_labels(sentence.len(), &noisy)?,
            )?);
        }
    }
    let strip = |v: Vec<(LabeledSentence, Vec<Span>)>| v.into_iter().map(|(s, _)| s).collect::<Vec<_>>();
    Ok(SynthCorpora {
        train: Corpus::new(crowd, labels.clone())?,
        dev: Corpus::new(strip(dev), labels.clone())?,
        test: Corpus::new(strip(test), labels.clone())?,
        train_gold: Corpus::new(strip(train_gold), labels)?,
    })
}
