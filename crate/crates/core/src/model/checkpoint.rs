//! A trained model bundled with its vocabulary, label set and worker list.
//!
//! ```text
//! crowdner-model 1
//! mode adversarial
//! char_emb_dim 16
//! label_emb_dim 16
//! hidden_dim 32
//! dropout 0.2
//! seed 1
//! types PER SONG
//! workers w1 w2 w3
//! vocab 6211 542c ...
//! crowdner-params 1
//! ...
//! ```
//!
//! Vocabulary characters are written as hexadecimal code points in index
//! order.

use std::fs;
use std::path::Path;

use super::{Model, ModelConfig, Mode};
use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::numcore::checkpoint::{read_params, write_params, LineReader};
use crate::tagscheme::{Label, LabelSet};

pub const MODEL_MAGIC: &str = "crowdner-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Tagger {
    pub model: Model,
    pub vocab: Vocabulary,
    pub labels: LabelSet,
    pub workers: Vec<String>,
}

impl Tagger {
    pub fn new(model: Model, vocab: Vocabulary, labels: LabelSet, workers: Vec<String>) -> Result<Self> {
        let cfg = model.config();
        if cfg.vocab_size != vocab.len() {
            return Err(Error::validation(format!(
                "model vocabulary size {} differs from vocabulary {}",
                cfg.vocab_size,
                vocab.len()
            )));
        }
        if cfg.num_labels != labels.len() {
            return Err(Error::validation(format!(
                "model has {} labels but label set has {}",
                cfg.num_labels,
                labels.len()
            )));
        }
        if cfg.mode == Mode::Adversarial && cfg.num_workers != workers.len() {
            return Err(Error::validation(format!(
                "model has {} workers but {} worker ids given",
                cfg.num_workers,
                workers.len()
            )));
        }
        Ok(Tagger {
            model,
            vocab,
            labels,
            workers,
        })
    }

    pub fn tag(&self, chars: &[char]) -> Result<Vec<Label>> {
        let ids = self.vocab.encode(chars);
        self.labels.from_indices(&self.model.predict(&ids)?)
    }

    pub fn to_text(&self) -> String {
        let cfg = self.model.config();
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            if !v.is_empty() {
                out.push(' ');
                out.push_str(&v);
            }
            out.push('\n');
        };
        line(MODEL_MAGIC, MODEL_VERSION.to_string());
        line("mode", cfg.mode.to_string());
        line("char_emb_dim", cfg.char_emb_dim.to_string());
        line("label_emb_dim", cfg.label_emb_dim.to_string());
        line("hidden_dim", cfg.hidden_dim.to_string());
        line("dropout", format!("{:e}", cfg.dropout));
        line("seed", cfg.seed.to_string());
        let types: Vec<&str> = self.labels.types().iter().map(|t| t.as_str()).collect();
        line("types", types.join(" "));
        line("workers", self.workers.join(" "));
        let chars: Vec<String> = self.vocab.chars().iter().map(|c| format!("{:x}", *c as u32)).collect();
        line("vocab", chars.join(" "));
        let mut buf = Vec::new();
        write_params(&mut buf, &self.model.store).expect("writing to memory");
        out.push_str(std::str::from_utf8(&buf).expect("ascii parameters"));
        out
    }

    pub fn from_text(origin: &str, text: &str) -> Result<Self> {
        let mut r = LineReader::new(origin, text);
        let version = r.expect_key(MODEL_MAGIC)?;
        if version != MODEL_VERSION.to_string() {
            return Err(r.error(format!("unsupported model version {version:?}")));
        }
        fn num<T: std::str::FromStr>(r: &mut LineReader<'_>, key: &str) -> Result<T> {
            let v = r.expect_key(key)?;
            v.parse().map_err(|_| r.error(format!("bad value {v:?} for {key}")))
        }
        let mode: Mode = r.expect_key("mode")?.parse().map_err(|e: Error| r.error(e.to_string()))?;
        let char_emb_dim = num(&mut r, "char_emb_dim")?;
        let label_emb_dim = num(&mut r, "label_emb_dim")?;
        let hidden_dim = num(&mut r, "hidden_dim")?;
        let dropout = num(&mut r, "dropout")?;
        let seed = num(&mut r, "seed")?;
        let types: Vec<&str> = r.expect_key("types")?.split_whitespace().collect();
        let labels = LabelSet::from_names(&types).map_err(|e| r.error(e.to_string()))?;
        let workers: Vec<String> = r.expect_key("workers")?.split_whitespace().map(String::from).collect();
        let vocab_line = r.expect_key("vocab")?;
        let chars = vocab_line
            .split_whitespace()
            .map(|h| u32::from_str_radix(h, 16).ok().and_then(char::from_u32))
            .collect::<Option<Vec<char>>>()
            .ok_or_else(|| r.error("bad vocabulary code point"))?;
        let vocab = Vocabulary::from_chars(chars).map_err(|e| r.error(e.to_string()))?;
        let store = read_params(&mut r)?;
        if !r.peek_is_end() {
            r.next_line()?;
            return Err(r.error("trailing content after parameters"));
        }

        let config = ModelConfig {
            mode,
            char_emb_dim,
            label_emb_dim,
            hidden_dim,
            dropout,
            vocab_size: vocab.len(),
            num_labels: labels.len(),
            num_workers: workers.len(),
            seed,
        };
        let mut model = Model::new(config).map_err(|e| Error::parse(origin, 1, e.to_string()))?;
        model
            .store
            .copy_values_from(&store)
            .map_err(|e| Error::parse(origin, 1, e.to_string()))?;
        Tagger::new(model, vocab, labels, workers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&path.display().to_string(), &text)
    }
}
