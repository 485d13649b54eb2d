//! The transferred bag-of-seed-words classifier.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus_io::{Document, UnlabeledCorpus};
use crate::scalar::{softmax_in_place, Scalar};
use crate::seed_transfer::TeacherMatrix;
use crate::vectorizer::{binary_bow, transform_tfidf, Vocabulary};
use crate::{Error, Result};

/// How a document is encoded before multiplying with the teacher matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeacherInput {
    /// 0/1 presence of each term.
    #[default]
    Binary,
    /// Tf-idf weights over the target unigram vocabulary.
    Tfidf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Labeler {
    Teacher,
    Student,
}

/// One pseudo-labeled document. `row` indexes the corpus the set was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PseudoLabel<T> {
    pub row: usize,
    pub id: String,
    pub q: Vec<T>,
    pub labeler: Labeler,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PseudoLabeledSet<T> {
    pub entries: Vec<PseudoLabel<T>>,
}

impl<T: Scalar> PseudoLabeledSet<T> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rows(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.row).collect()
    }

    /// Writes one `{"id", "q", "labeler"}` object per line.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Line<'a, T> {
            id: &'a str,
            q: &'a [T],
            labeler: Labeler,
        }
        let mut out = BufWriter::new(File::create(path)?);
        for e in &self.entries {
            serde_json::to_writer(
                &mut out,
                &Line {
                    id: &e.id,
                    q: &e.q,
                    labeler: e.labeler,
                },
            )?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Teacher classifier: `q = softmax(Z h)` with `h` the document encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Teacher<T> {
    pub matrix: TeacherMatrix<T>,
    pub vocab: Vocabulary,
    pub input: TeacherInput,
}

impl<T: Scalar> Teacher<T> {
    pub fn new(matrix: TeacherMatrix<T>, vocab: Vocabulary, input: TeacherInput) -> Result<Self> {
        if matrix.n_cols() != vocab.len() {
            return Err(Error::Dimension(format!(
                "teacher matrix has {} columns, vocabulary has {} terms",
                matrix.n_cols(),
                vocab.len()
            )));
        }
        Ok(Self {
            matrix,
            vocab,
            input,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.matrix.n_classes()
    }

    /// Seed columns present in `doc`.
    pub fn seeds_in(&self, doc: &Document) -> Vec<usize> {
        binary_bow(doc, &self.vocab)
            .into_iter()
            .filter(|&c| self.matrix.is_seed_column(c))
            .collect()
    }

    pub fn covers(&self, doc: &Document) -> bool {
        doc.tokens
            .iter()
            .any(|t| self.vocab.get(t).is_some_and(|c| self.matrix.is_seed_column(c)))
    }

    pub fn logits(&self, doc: &Document) -> Vec<T> {
        let mut logits = vec![T::zero(); self.n_classes()];
        match self.input {
            TeacherInput::Binary => {
                for c in self.seeds_in(doc) {
                    let col = self.matrix.column(c).expect("seed column");
                    for (l, &w) in logits.iter_mut().zip(col) {
                        *l += w;
                    }
                }
            }
            TeacherInput::Tfidf => {
                let x = transform_tfidf::<T>(std::slice::from_ref(doc), &self.vocab);
                let (cols, vals) = x.row(0);
                for (&c, &v) in cols.iter().zip(vals) {
                    if let Some(col) = self.matrix.column(c) {
                        for (l, &w) in logits.iter_mut().zip(col) {
                            *l += v * w;
                        }
                    }
                }
            }
        }
        logits
    }

    /// Class distribution for `doc`. Exactly uniform when no seed occurs.
    pub fn predict(&self, doc: &Document) -> Vec<T> {
        let mut q = self.logits(doc);
        softmax_in_place(&mut q);
        q
    }

    /// Pseudo-labels for the documents containing at least one seed word.
    pub fn label_covered(&self, corpus: &UnlabeledCorpus) -> PseudoLabeledSet<T> {
        let entries: Vec<_> = corpus
            .docs
            .iter()
            .enumerate()
            .filter(|(_, d)| self.covers(d))
            .map(|(row, d)| PseudoLabel {
                row,
                id: d.id.clone(),
                q: self.predict(d),
                labeler: Labeler::Teacher,
            })
            .collect();
        if entries.is_empty() {
            log::warn!("no unlabeled document contains a seed word; co-training cannot start");
        }
        PseudoLabeledSet { entries }
    }

    /// Fraction of documents containing at least one seed word.
    pub fn coverage(&self, corpus: &UnlabeledCorpus) -> Result<f64> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let covered = corpus.docs.iter().filter(|d| self.covers(d)).count();
        Ok(covered as f64 / corpus.len() as f64)
    }

    /// The distinct seed terms, for callers that need to strip them.
    pub fn seed_terms(&self) -> HashSet<&str> {
        self.matrix
            .seed_columns()
            .map(|c| self.vocab.term(c))
            .collect()
    }
}
