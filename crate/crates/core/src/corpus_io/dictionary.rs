use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::Tokenizer;
use crate::{Error, Result};

/// Source-to-target word translations. A source word may have several
/// translations; none maps to an empty set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BilingualDictionary {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl BilingualDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a pair as-is (no normalization).
    pub fn insert(&mut self, source: impl Into<String>, target: impl Into<String>) {
        self.entries
            .entry(source.into())
            .or_default()
            .insert(target.into());
    }

    pub fn lookup(&self, source: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(source)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// One `source target` line per pair, in sorted order.
    pub fn to_muse_string(&self) -> String {
        let mut out = String::new();
        for (s, ts) in &self.entries {
            for t in ts {
                out.push_str(s);
                out.push(' ');
                out.push_str(t);
                out.push('\n');
            }
        }
        out
    }
}

/// Reads a MUSE ground-truth dictionary: one `source target` pair per line,
/// separated by a tab or spaces. Both sides are normalized by `tokenizer` so
/// lookups agree with tokenized documents. Pairs where either side
/// normalizes to nothing are skipped.
pub fn load_dictionary(path: &Path, tokenizer: &Tokenizer) -> Result<BilingualDictionary> {
    let reader = BufReader::new(File::open(path)?);
    let mut dict = BilingualDictionary::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected 2 fields, found {}", fields.len()),
            });
        }
        if let (Some(s), Some(t)) = (tokenizer.normalize(fields[0]), tokenizer.normalize(fields[1])) {
            dict.insert(s, t);
        }
    }
    Ok(dict)
}
