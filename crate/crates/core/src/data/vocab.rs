use std::collections::HashMap;

use crate::error::{Error, Result};

/// Character index. Index 0 is reserved for unknown characters.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl Vocabulary {
    pub const UNK: usize = 0;

    /// Builds from characters in first-appearance order.
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a [char]>) -> Self {
        let mut vocab = Vocabulary::default();
        for s in sentences {
            for &c in s {
                if !vocab.index.contains_key(&c) {
                    vocab.chars.push(c);
                    vocab.index.insert(c, vocab.chars.len());
                }
            }
        }
        vocab
    }

    pub fn from_chars(chars: Vec<char>) -> Result<Self> {
        let mut index = HashMap::with_capacity(chars.len());
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, i + 1).is_some() {
                return Err(Error::validation(format!("duplicate vocabulary entry {c:?}")));
            }
        }
        Ok(Vocabulary { chars, index })
    }

    /// Size including UNK.
    pub fn len(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn get(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn lookup(&self, c: char) -> usize {
        self.get(c).unwrap_or(Self::UNK)
    }

    pub fn encode(&self, chars: &[char]) -> Vec<usize> {
        chars.iter().map(|&c| self.lookup(c)).collect()
    }

    /// Known characters in index order (index `i + 1`).
    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unk_is_reserved() {
        let a: Vec<char> = "我想听".chars().collect();
        let b: Vec<char> = "听歌".chars().collect();
        let v = Vocabulary::build([a.as_slice(), b.as_slice()]);
        assert_eq!(v.len(), 5);
        assert_eq!(v.lookup('我'), 1);
        assert_eq!(v.lookup('歌'), 4);
        assert_eq!(v.lookup('他'), Vocabulary::UNK);
        assert_eq!(Vocabulary::from_chars(v.chars().to_vec()).unwrap(), v);
        assert!(Vocabulary::from_chars(vec!['a', 'a']).is_err());
    }
}
