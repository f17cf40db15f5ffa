//! Pretrained character vectors in word2vec text format.

use std::fs;
use std::path::Path;

use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingCoverage {
    /// Vocabulary characters found in the file.
    pub hits: usize,
    /// Entries in the file.
    pub entries: usize,
}

/// Overwrites rows of `base` (vocab × dim) for vocabulary characters found
/// in the file. Other rows, including UNK, keep their initial values.
pub fn parse_embeddings(origin: &str, text: &str, vocab: &Vocabulary, base: &Tensor) -> Result<(Tensor, EmbeddingCoverage)> {
    let (rows, dim) = base.shape();
    if rows != vocab.len() {
        return Err(Error::validation(format!(
            "embedding table has {rows} rows but vocabulary has {}",
            vocab.len()
        )));
    }
    let err = |line: usize, msg: String| Error::parse(origin, line, msg);
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [count, file_dim] = fields.as_slice() else {
        return Err(err(1, format!("expected \"<count> <dim>\", found {header:?}")));
    };
    let count: usize = count.parse().map_err(|_| err(1, format!("bad count {count:?}")))?;
    let file_dim: usize = file_dim.parse().map_err(|_| err(1, format!("bad dimension {file_dim:?}")))?;
    if file_dim != dim {
        return Err(err(1, format!("embedding dimension {file_dim} does not match configured {dim}")));
    }

    let mut table = base.clone();
    let mut entries = 0;
    let mut hits = 0;
    let mut row = Vec::with_capacity(dim);
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap_or_default();
        row.clear();
        for p in parts {
            let x: f64 = p.parse().map_err(|_| err(lineno, format!("non-numeric field {p:?}")))?;
            if !x.is_finite() {
                return Err(err(lineno, format!("non-finite field {p:?}")));
            }
            row.push(x);
        }
        if row.len() != dim {
            return Err(err(lineno, format!("expected {dim} values, found {}", row.len())));
        }
        entries += 1;
        let mut chars = token.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if let Some(idx) = vocab.get(c) {
                let start = idx * dim;
                table.data_mut()[start..start + dim].copy_from_slice(&row);
                hits += 1;
            }
        }
    }
    if entries != count {
        return Err(err(1, format!("header declares {count} entries but file has {entries}")));
    }
    Ok((table, EmbeddingCoverage { hits, entries }))
}

pub fn load_embeddings(path: &Path, vocab: &Vocabulary, base: &Tensor) -> Result<(Tensor, EmbeddingCoverage)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&path.display().to_string(), &text, vocab, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::from_chars(vec!['a', 'b']).unwrap()
    }

    #[test]
    fn full_coverage_copies_rows() {
        let base = Tensor::filled(3, 2, 9.0);
        let text = "2 2\na 1 2\nb 3 4 \n";
        let (t, cov) = parse_embeddings("e", text, &vocab(), &base).unwrap();
        assert_eq!(t.data(), &[9.0, 9.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(cov, EmbeddingCoverage { hits: 2, entries: 2 });
    }

    #[test]
    fn misses_keep_base() {
        let base = Tensor::filled(3, 2, 0.5);
        let (t, cov) = parse_embeddings("e", "1 2\nz 1 2\n", &vocab(), &base).unwrap();
        assert_eq!(t, base);
        assert_eq!(cov.hits, 0);
    }

    #[test]
    fn errors() {
        let base = Tensor::zeros(3, 2);
        let e = parse_embeddings("e", "1 3\na 1 2 3\n", &vocab(), &base).unwrap_err();
        assert!(e.to_string().contains("dimension"), "{e}");
        let e = parse_embeddings("e", "2 2\na 1 2\n", &vocab(), &base).unwrap_err();
        assert!(e.to_string().contains("declares"), "{e}");
        let e = parse_embeddings("e", "2 2\na 1 2\nb x 2\n", &vocab(), &base).unwrap_err();
        assert!(e.to_string().starts_with("e:3:"), "{e}");
    }
}
