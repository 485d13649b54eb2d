//! Vocabularies and sparse tf-idf document-term matrices.
//!
//! Idf is smoothed, `ln((1 + N) / (1 + df)) + 1` with `N` the number of
//! documents the vocabulary was fitted on, and term frequencies are raw
//! counts. Rows are then scaled to unit Euclidean norm unless they are empty.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus_io::{Artifact, Document};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Term index fitted on a corpus. Terms are sorted lexicographically, so the
/// column of a term only depends on the set of retained terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<usize>,
    ngram_range: (usize, usize),
    n_docs: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    terms: Vec<String>,
    df: Vec<usize>,
    ngram_range: (usize, usize),
    n_docs: usize,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let index = r
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            terms: r.terms,
            df: r.df,
            ngram_range: r.ngram_range,
            n_docs: r.n_docs,
            index,
        }
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        Self {
            terms: v.terms,
            df: v.df,
            ngram_range: v.ngram_range,
            n_docs: v.n_docs,
        }
    }
}

impl Artifact for Vocabulary {
    const KIND: &'static str = "vocabulary";
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, column: usize) -> &str {
        &self.terms[column]
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.index.contains_key(term)
    }

    pub fn df(&self, column: usize) -> usize {
        self.df[column]
    }

    pub fn ngram_range(&self) -> (usize, usize) {
        self.ngram_range
    }

    /// Number of documents the vocabulary was fitted on.
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn idf<T: Scalar>(&self, column: usize) -> T {
        let n = T::of_usize(self.n_docs);
        let df = T::of_usize(self.df[column]);
        ((T::one() + n) / (T::one() + df)).ln() + T::one()
    }

    /// Column ids of every n-gram of `tokens` that is in the vocabulary,
    /// with repetitions.
    fn columns_of<'a>(&'a self, tokens: &'a [String]) -> impl Iterator<Item = usize> + 'a {
        ngrams(tokens, self.ngram_range).filter_map(|g| self.get(&g))
    }
}

/// All n-grams of `tokens` for `n` in `lo..=hi`, joined by single spaces.
pub fn ngrams(tokens: &[String], (lo, hi): (usize, usize)) -> impl Iterator<Item = String> + '_ {
    (lo.max(1)..=hi).flat_map(move |n| tokens.windows(n).map(|w| w.join(" ")))
}

/// Fits a vocabulary of the n-grams whose document frequency is at least
/// `min_df`.
pub fn fit_vocabulary<'a, I>(docs: I, ngram_range: (usize, usize), min_df: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a Document>,
{
    if min_df < 1 {
        return Err(Error::InvalidArgument("min_df must be at least 1".into()));
    }
    let (lo, hi) = ngram_range;
    if lo < 1 || hi < lo {
        return Err(Error::InvalidArgument(format!(
            "invalid ngram range ({lo}, {hi})"
        )));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut n_docs = 0;
    for doc in docs {
        n_docs += 1;
        let distinct: HashSet<String> = ngrams(&doc.tokens, ngram_range).collect();
        for g in distinct {
            *counts.entry(g).or_default() += 1;
        }
    }
    if n_docs == 0 {
        return Err(Error::EmptyCorpus);
    }
    let (terms, df): (Vec<_>, Vec<_>) = counts.into_iter().filter(|&(_, c)| c >= min_df).unzip();
    Ok(VocabularyRepr {
        terms,
        df,
        ngram_range,
        n_docs,
    }
    .into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowNorm {
    L2,
    None,
}

/// Compressed sparse row matrix with non-negative entries. Column indices
/// within a row are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct DocTermMatrix<T> {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
    n_cols: usize,
    row_norm: RowNorm,
}

impl<T: Scalar> DocTermMatrix<T> {
    /// Builds from per-row `(column, value)` lists; each list must be sorted
    /// by column without duplicates.
    pub fn from_rows(rows: Vec<Vec<(usize, T)>>, n_cols: usize, row_norm: RowNorm) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for row in rows {
            for (c, v) in row {
                debug_assert!(c < n_cols);
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            indptr,
            indices,
            values,
            n_cols,
            row_norm,
        }
    }

    /// Dense row-major input, mostly for tests and small examples.
    pub fn from_dense(rows: &[Vec<T>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let sparse = rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != T::zero())
                    .map(|(c, v)| (c, *v))
                    .collect()
            })
            .collect();
        Self::from_rows(sparse, n_cols, RowNorm::None)
    }

    pub fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_norm(&self) -> RowNorm {
        self.row_norm
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(T::zero(), |p| vals[p])
    }

    /// `row_i · dense`.
    pub fn row_dot(&self, i: usize, dense: &[T]) -> T {
        let (cols, vals) = self.row(i);
        cols.iter().zip(vals).map(|(&c, &v)| v * dense[c]).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        (0..self.n_rows())
            .map(|i| {
                let mut r = vec![T::zero(); self.n_cols];
                let (cols, vals) = self.row(i);
                for (&c, &v) in cols.iter().zip(vals) {
                    r[c] = v;
                }
                r
            })
            .collect()
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self::from_rows(
            rows.iter()
                .map(|&i| {
                    let (c, v) = self.row(i);
                    c.iter().copied().zip(v.iter().copied()).collect()
                })
                .collect(),
            self.n_cols,
            self.row_norm,
        )
    }

    /// Copy with every entry in the given columns removed. Rows are not
    /// renormalized.
    pub fn without_columns(&self, columns: &HashSet<usize>) -> Self {
        Self::from_rows(
            (0..self.n_rows())
                .map(|i| {
                    let (c, v) = self.row(i);
                    c.iter()
                        .copied()
                        .zip(v.iter().copied())
                        .filter(|(c, _)| !columns.contains(c))
                        .collect()
                })
                .collect(),
            self.n_cols,
            self.row_norm,
        )
    }

    /// Column-major copy: for every column, the `(row, value)` entries.
    pub fn to_columns(&self) -> Vec<Vec<(usize, T)>> {
        let mut cols = vec![Vec::new(); self.n_cols];
        for i in 0..self.n_rows() {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                cols[j].push((i, x));
            }
        }
        cols
    }
}

/// Tf-idf matrix of `docs` over `vocab`, l2-normalized per row.
/// Out-of-vocabulary n-grams are ignored; a row with none left stays zero.
pub fn transform_tfidf<T: Scalar>(docs: &[Document], vocab: &Vocabulary) -> DocTermMatrix<T> {
    let idf: Vec<T> = (0..vocab.len()).map(|c| vocab.idf(c)).collect();
    let rows = docs
        .par_iter()
        .map(|doc| {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for c in vocab.columns_of(&doc.tokens) {
                *counts.entry(c).or_default() += 1;
            }
            let mut row: Vec<(usize, T)> = counts
                .into_iter()
                .map(|(c, n)| (c, T::of_usize(n) * idf[c]))
                .collect();
            let norm = row.iter().map(|(_, v)| *v * *v).sum::<T>().sqrt();
            if norm > T::zero() {
                for (_, v) in row.iter_mut() {
                    *v /= norm;
                }
            }
            row
        })
        .collect();
    DocTermMatrix::from_rows(rows, vocab.len(), RowNorm::L2)
}

/// Distinct in-vocabulary columns of `doc`, sorted; the sparse form of a
/// 0/1 presence vector.
pub fn binary_bow(doc: &Document, vocab: &Vocabulary) -> Vec<usize> {
    let mut cols: Vec<usize> = vocab.columns_of(&doc.tokens).collect();
    cols.sort_unstable();
    cols.dedup();
    cols
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(tokens: &[&str]) -> Document {
        Document::new("d", tokens.iter().map(|s| s.to_string()).collect(), None)
    }

    #[test]
    fn unigram_df_counts() {
        let corpus = [doc(&["a", "b"]), doc(&["b", "c"])];
        let v = fit_vocabulary(&corpus, (1, 1), 1).unwrap();
        assert_eq!(v.terms(), ["a", "b", "c"]);
        assert_eq!((0..3).map(|c| v.df(c)).collect::<Vec<_>>(), [1, 2, 1]);
    }

    #[test]
    fn min_df_prunes() {
        let corpus = [doc(&["a", "b"]), doc(&["b", "c"])];
        let v = fit_vocabulary(&corpus, (1, 1), 2).unwrap();
        assert_eq!(v.terms(), ["b"]);
    }

    #[test]
    fn bigrams_extracted() {
        let v = fit_vocabulary(&[doc(&["a", "b"])], (1, 2), 1).unwrap();
        assert_eq!(v.terms(), ["a", "a b", "b"]);
    }

    #[test]
    fn df_counts_documents_not_occurrences() {
        let v = fit_vocabulary(&[doc(&["a", "a", "a"])], (1, 1), 1).unwrap();
        assert_eq!(v.df(0), 1);
    }

    #[test]
    fn fit_errors() {
        let empty: [Document; 0] = [];
        assert!(matches!(fit_vocabulary(&empty, (1, 1), 1), Err(Error::EmptyCorpus)));
        assert!(fit_vocabulary(&[doc(&["a"])], (1, 1), 0).is_err());
        assert!(fit_vocabulary(&[doc(&["a"])], (2, 1), 1).is_err());
    }

    #[test]
    fn single_entry_row_is_one() {
        let corpus = [doc(&["a"])];
        let v = fit_vocabulary(&corpus, (1, 1), 1).unwrap();
        let m: DocTermMatrix<f64> = transform_tfidf(&corpus, &v);
        assert_eq!(m.to_dense(), vec![vec![1.0]]);
    }

    #[test]
    fn oov_row_is_zero() {
        let v = fit_vocabulary(&[doc(&["a"])], (1, 1), 1).unwrap();
        let m: DocTermMatrix<f64> = transform_tfidf(&[doc(&["zzz", "yyy"])], &v);
        assert_eq!(m.row(0).0.len(), 0);
    }

    #[test]
    fn two_document_idf_table() {
        // Hand computation: N = 2, df(a) = 1, df(b) = 2.
        let idf_a = (3.0f64 / 2.0).ln() + 1.0;
        let idf_b = 1.0;
        let norm = (idf_a * idf_a + idf_b * idf_b).sqrt();
        let corpus = [doc(&["a", "b"]), doc(&["b"])];
        let v = fit_vocabulary(&corpus, (1, 1), 1).unwrap();
        assert!((v.idf::<f64>(0) - 1.405465108108164).abs() < 1e-12);
        let m: DocTermMatrix<f64> = transform_tfidf(&corpus, &v);
        assert!((m.get(0, 0) - idf_a / norm).abs() < 1e-12);
        assert!((m.get(0, 1) - idf_b / norm).abs() < 1e-12);
        assert!((m.get(1, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binary_bow_is_presence() {
        let v = fit_vocabulary(&[doc(&["aime", "parfait", "film"])], (1, 1), 1).unwrap();
        let p = v.get("parfait").unwrap();
        assert_eq!(binary_bow(&doc(&["parfait", "parfait"]), &v), vec![p]);
        assert!(binary_bow(&doc(&["nope"]), &v).is_empty());
        assert_eq!(binary_bow(&doc(&["aime", "parfait"]), &v).len(), 2);
    }

    #[test]
    fn without_columns_drops_entries() {
        let m = DocTermMatrix::from_dense(&[vec![1.0f64, 2.0, 0.0], vec![0.0, 3.0, 4.0]]);
        let cut = m.without_columns(&[1].into_iter().collect());
        assert_eq!(cut.to_dense(), vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 4.0]]);
    }

    #[test]
    fn vocabulary_round_trips_as_artifact() {
        let v = fit_vocabulary(&[doc(&["x", "y", "z"])], (1, 1), 1).unwrap();
        let back = Vocabulary::from_bytes(&v.to_bytes().unwrap()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.get("z"), Some(2));
    }
}
