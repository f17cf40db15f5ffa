//! Text serialization of a parameter map.
//!
//! ```text
//! crowdner-params 1
//! count 2
//! param char_emb ner 3 2
//! 1e-1 -2.5e0 ...
//! ```
//!
//! Values use the shortest representation that parses back to the same
//! bits, so save/load is exact.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use super::params::{Group, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const PARAMS_MAGIC: &str = "crowdner-params";
pub const PARAMS_VERSION: u32 = 1;

pub fn write_params<W: Write>(out: &mut W, store: &ParamStore) -> io::Result<()> {
    writeln!(out, "{PARAMS_MAGIC} {PARAMS_VERSION}")?;
    writeln!(out, "count {}", store.len())?;
    for (_, p) in store.iter() {
        let (r, c) = p.value.shape();
        writeln!(out, "param {} {} {r} {c}", p.name, p.group)?;
        let mut first = true;
        for v in p.value.data() {
            if !first {
                out.write_all(b" ")?;
            }
            write!(out, "{v:e}")?;
            first = false;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Line source that tracks line numbers for error messages.
pub struct LineReader<'a> {
    origin: String,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> LineReader<'a> {
    pub fn new(origin: impl Into<String>, text: &'a str) -> Self {
        LineReader {
            origin: origin.into(),
            lines: text.lines().enumerate(),
            last: 0,
        }
    }

    pub fn next_line(&mut self) -> Result<&'a str> {
        match self.lines.next() {
            Some((i, line)) => {
                self.last = i + 1;
                Ok(line)
            }
            None => Err(self.error("unexpected end of file")),
        }
    }

    pub fn peek_is_end(&self) -> bool {
        self.lines.clone().next().is_none()
    }

    pub fn error(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.origin.clone(), self.last, msg)
    }

    /// Reads a line of the form `<key> <value...>` and returns the value.
    pub fn expect_key(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v),
            _ if line == key => Ok(""),
            _ => Err(self.error(format!("expected `{key}`, found {line:?}"))),
        }
    }
}

pub fn read_params(reader: &mut LineReader<'_>) -> Result<ParamStore> {
    let header = reader.next_line()?;
    let expected = format!("{PARAMS_MAGIC} {PARAMS_VERSION}");
    if header != expected {
        return Err(reader.error(format!("expected header {expected:?}, found {header:?}")));
    }
    let count: usize = reader
        .expect_key("count")?
        .parse()
        .map_err(|_| reader.error("bad parameter count"))?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let spec = reader.expect_key("param")?;
        let fields: Vec<&str> = spec.split(' ').collect();
        let [name, group, rows, cols] = fields[..] else {
            return Err(reader.error("expected `param <name> <group> <rows> <cols>`"));
        };
        let group = Group::parse(group).ok_or_else(|| reader.error(format!("unknown group {group:?}")))?;
        let rows: usize = rows.parse().map_err(|_| reader.error("bad row count"))?;
        let cols: usize = cols.parse().map_err(|_| reader.error("bad column count"))?;
        let values = reader.next_line()?;
        let data = if values.is_empty() {
            Vec::new()
        } else {
            values
                .split(' ')
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| reader.error(format!("non-numeric value in parameter {name}")))?
        };
        let value = Tensor::new(rows, cols, data).map_err(|e| reader.error(format!("parameter {name}: {e}")))?;
        store
            .add(name, group, value)
            .map_err(|e| reader.error(e.to_string()))?;
    }
    Ok(store)
}

pub fn save_params(path: &Path, store: &ParamStore) -> Result<()> {
    let mut buf = Vec::new();
    write_params(&mut buf, store).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<ParamStore> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_params(&mut LineReader::new(path.display().to_string(), &text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn store_from(values: &[f64]) -> ParamStore {
        let mut store = ParamStore::new();
        store
            .add("a.W", Group::Ner, Tensor::new(1, values.len(), values.to_vec()).unwrap())
            .unwrap();
        store
            .add("b", Group::Discriminator, Tensor::filled(2, 3, -0.0))
            .unwrap();
        store
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(values in proptest::collection::vec(
            any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..20)) {
            let store = store_from(&values);
            let mut buf = Vec::new();
            write_params(&mut buf, &store).unwrap();
            let text = String::from_utf8(buf).unwrap();
            let back = read_params(&mut LineReader::new("mem", &text)).unwrap();
            for ((_, a), (_, b)) in store.iter().zip(back.iter()) {
                prop_assert_eq!(&a.name, &b.name);
                prop_assert_eq!(a.group, b.group);
                let bits_a: Vec<u64> = a.value.data().iter().map(|v| v.to_bits()).collect();
                let bits_b: Vec<u64> = b.value.data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(bits_a, bits_b);
            }
        }
    }

    #[test]
    fn rejects_bad_version_and_values() {
        let err = read_params(&mut LineReader::new("m", "crowdner-params 9\ncount 0\n")).unwrap_err();
        assert!(err.to_string().contains("m:1"), "{err}");
        let text = "crowdner-params 1\ncount 1\nparam w ner 1 2\n1e0 x\n";
        let err = read_params(&mut LineReader::new("m", text)).unwrap_err();
        assert!(err.to_string().contains("m:4"), "{err}");
        let text = "crowdner-params 1\ncount 1\nparam w ner 1 2\n1e0\n";
        assert!(read_params(&mut LineReader::new("m", text)).is_err());
    }
}
