//! Corpora, bilingual dictionaries and model artifacts on disk.

mod artifact;
mod dictionary;
mod tokenize;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{Error, Result};

pub use artifact::{load_model, save_model, Artifact, ARTIFACT_MAGIC, ARTIFACT_VERSION};
pub use dictionary::{load_dictionary, BilingualDictionary};
pub use tokenize::{tokenize, Tokenizer, TokenizerConfig};

/// A tokenized document. Empty token lists are legal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
    pub label: Option<usize>,
}

impl Document {
    pub fn new(id: impl Into<String>, tokens: Vec<String>, label: Option<usize>) -> Self {
        Self {
            id: id.into(),
            tokens,
            label,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// The K named classes of a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ClassLabelSpace {
    names: Vec<String>,
}

impl ClassLabelSpace {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::LabelSpace(format!(
                "need at least 2 classes, got {}",
                names.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::LabelSpace(format!("duplicate class name {n:?}")));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl TryFrom<Vec<String>> for ClassLabelSpace {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<ClassLabelSpace> for Vec<String> {
    fn from(space: ClassLabelSpace) -> Self {
        space.names
    }
}

/// Documents that all carry a label in `space`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    pub space: ClassLabelSpace,
    pub docs: Vec<Document>,
}

impl LabeledCorpus {
    pub fn new(space: ClassLabelSpace, docs: Vec<Document>) -> Result<Self> {
        for d in &docs {
            match d.label {
                Some(l) if l < space.len() => {}
                Some(l) => {
                    return Err(Error::InvalidArgument(format!(
                        "document {} has label {l} outside [0, {})",
                        d.id,
                        space.len()
                    )))
                }
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "document {} has no label",
                        d.id
                    )))
                }
            }
        }
        Ok(Self { space, docs })
    }

    pub fn labels(&self) -> Vec<usize> {
        self.docs.iter().map(|d| d.label.unwrap_or(0)).collect()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Same documents without their labels.
    pub fn unlabeled(&self) -> UnlabeledCorpus {
        UnlabeledCorpus {
            docs: self
                .docs
                .iter()
                .map(|d| Document::new(d.id.clone(), d.tokens.clone(), None))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UnlabeledCorpus {
    pub docs: Vec<Document>,
}

impl UnlabeledCorpus {
    pub fn new(docs: Vec<Document>) -> Self {
        Self { docs }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// One JSON object per line with `text`, optional `label` and `id`.
    #[default]
    Jsonl,
    /// `label<TAB>text` per line; the label column may be absent for
    /// unlabeled corpora.
    Tsv,
}

impl CorpusFormat {
    /// Guess from the file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("tab") => Self::Tsv,
            _ => Self::Jsonl,
        }
    }
}

/// What the caller expects to get back from [`load_corpus`].
#[derive(Debug, Clone, Copy)]
pub enum LoadMode<'a> {
    Labeled(&'a ClassLabelSpace),
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Corpus {
    Labeled(LabeledCorpus),
    Unlabeled(UnlabeledCorpus),
}

struct RawRecord {
    id: Option<String>,
    text: String,
    label: Option<Value>,
}

/// Reads a corpus file. In labeled mode every record must carry a label from
/// `space`; in unlabeled mode labels are ignored.
pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
    tokenizer: &Tokenizer,
    mode: LoadMode<'_>,
) -> Result<Corpus> {
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record(&line, format).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        })?;
        let id = rec.id.unwrap_or_else(|| format!("{}", line_no));
        let tokens = tokenizer.tokenize(&rec.text);
        let label = match mode {
            LoadMode::Unlabeled => None,
            LoadMode::Labeled(space) => {
                let value = rec.label.ok_or_else(|| Error::MissingLabel {
                    path: path.to_path_buf(),
                    line: line_no,
                })?;
                Some(resolve_label(&value, space).ok_or_else(|| Error::UnknownLabel {
                    path: path.to_path_buf(),
                    line: line_no,
                    label: match &value {
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    },
                })?)
            }
        };
        docs.push(Document { id, tokens, label });
    }
    Ok(match mode {
        LoadMode::Labeled(space) => Corpus::Labeled(LabeledCorpus {
            space: space.clone(),
            docs,
        }),
        LoadMode::Unlabeled => Corpus::Unlabeled(UnlabeledCorpus { docs }),
    })
}

pub fn load_labeled(
    path: &Path,
    format: CorpusFormat,
    tokenizer: &Tokenizer,
    space: &ClassLabelSpace,
) -> Result<LabeledCorpus> {
    match load_corpus(path, format, tokenizer, LoadMode::Labeled(space))? {
        Corpus::Labeled(c) => Ok(c),
        Corpus::Unlabeled(_) => unreachable!("labeled mode yields a labeled corpus"),
    }
}

pub fn load_unlabeled(
    path: &Path,
    format: CorpusFormat,
    tokenizer: &Tokenizer,
) -> Result<UnlabeledCorpus> {
    match load_corpus(path, format, tokenizer, LoadMode::Unlabeled)? {
        Corpus::Unlabeled(c) => Ok(c),
        Corpus::Labeled(_) => unreachable!("unlabeled mode yields an unlabeled corpus"),
    }
}

fn parse_record(line: &str, format: CorpusFormat) -> std::result::Result<RawRecord, String> {
    match format {
        CorpusFormat::Jsonl => {
            let value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
            let obj = value
                .as_object()
                .ok_or_else(|| "record is not a JSON object".to_string())?;
            let text = obj
                .get("text")
                .and_then(Value::as_str)
                .ok_or_else(|| "missing string field \"text\"".to_string())?
                .to_string();
            let id = match obj.get("id") {
                None | Some(Value::Null) => None,
                Some(Value::String(s)) => Some(s.clone()),
                Some(other) => Some(other.to_string()),
            };
            let label = match obj.get("label") {
                None | Some(Value::Null) => None,
                Some(v) => Some(v.clone()),
            };
            Ok(RawRecord { id, text, label })
        }
        CorpusFormat::Tsv => match line.split_once('\t') {
            Some((label, text)) => Ok(RawRecord {
                id: None,
                text: text.to_string(),
                label: (!label.is_empty()).then(|| Value::String(label.to_string())),
            }),
            None => Ok(RawRecord {
                id: None,
                text: line.to_string(),
                label: None,
            }),
        },
    }
}

fn resolve_label(value: &Value, space: &ClassLabelSpace) -> Option<usize> {
    match value {
        Value::String(s) => space.index_of(s),
        Value::Number(n) => n
            .as_u64()
            .map(|i| i as usize)
            .filter(|&i| i < space.len()),
        _ => None,
    }
}

/// Writes documents as JSONL with their tokens joined by single spaces.
/// Labels, when present, are written by class name.
pub fn write_jsonl(path: &Path, docs: &[Document], space: Option<&ClassLabelSpace>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for d in docs {
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), Value::String(d.id.clone()));
        obj.insert("text".into(), Value::String(d.tokens.join(" ")));
        if let (Some(label), Some(space)) = (d.label, space) {
            obj.insert("label".into(), Value::String(space.name(label).to_string()));
        }
        serde_json::to_writer(&mut out, &Value::Object(obj))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
