//! Seed words: extraction from a sparse source classifier, translation
//! through a bilingual dictionary, and transfer of their full weight
//! columns into a teacher matrix over the target vocabulary.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus_io::{Artifact, BilingualDictionary};
use crate::scalar::Scalar;
use crate::sparse_logreg::{seeds_per_class, WeightMatrix};
use crate::vectorizer::Vocabulary;
use crate::{Error, Result};

/// A source seed word and its weights for all K classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Seed<T> {
    pub term: String,
    pub weights: Vec<T>,
}

/// Ranked seed words per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SeedSet<T> {
    pub budget: usize,
    pub per_class: usize,
    pub classes: Vec<Vec<Seed<T>>>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl<T: Scalar> Artifact for SeedSet<T> {
    const KIND: &'static str = "seed-set";
}

impl<T: Scalar> SeedSet<T> {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Every seed once, in class order then rank order. A word extracted for
    /// several classes counts once against the budget.
    pub fn distinct(&self) -> Vec<&Seed<T>> {
        let mut seen = BTreeSet::new();
        self.classes
            .iter()
            .flatten()
            .filter(|s| seen.insert(s.term.as_str()))
            .collect()
    }

    /// One row per (class, rank): `class  rank  term  weight`, where the
    /// weight is the seed's weight for that class.
    pub fn write_tsv(&self, path: &Path, class_names: &[String]) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "class\trank\tterm\tweight")?;
        for (k, seeds) in self.classes.iter().enumerate() {
            let name = class_names.get(k).map_or_else(|| k.to_string(), Clone::clone);
            for (rank, s) in seeds.iter().enumerate() {
                writeln!(out, "{name}\t{}\t{}\t{}", rank + 1, s.term, s.weights[k])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn find(&self, term: &str) -> Option<&Seed<T>> {
        self.classes.iter().flatten().find(|s| s.term == term)
    }
}

/// Takes, for every class, the `floor(budget / K)` terms with the largest
/// positive weight. Ties are broken by term, lexicographically. A class with
/// fewer positive weights gets a shorter list and a warning.
pub fn extract_seeds<T: Scalar>(
    w: &WeightMatrix<T>,
    vocab: &Vocabulary,
    budget: usize,
    n_classes: usize,
) -> Result<SeedSet<T>> {
    if w.n_classes() != n_classes {
        return Err(Error::Dimension(format!(
            "weight matrix has {} classes, expected {n_classes}",
            w.n_classes()
        )));
    }
    if w.n_cols() != vocab.len() {
        return Err(Error::Dimension(format!(
            "weight matrix has {} columns, vocabulary has {} terms",
            w.n_cols(),
            vocab.len()
        )));
    }
    let per_class = seeds_per_class(budget, n_classes)?;
    let mut warnings = Vec::new();
    if !budget.is_multiple_of(n_classes) {
        warnings.push(format!(
            "budget {budget} is not divisible by {n_classes} classes; using {per_class} seeds per class"
        ));
    }
    let mut classes = Vec::with_capacity(n_classes);
    for k in 0..n_classes {
        let mut positive: Vec<(usize, T)> =
            w.row(k).iter().copied().filter(|(_, v)| *v > T::zero()).collect();
        positive.sort_by(|(ca, va), (cb, vb)| {
            vb.partial_cmp(va)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| vocab.term(*ca).cmp(vocab.term(*cb)))
        });
        if positive.len() < per_class {
            warnings.push(format!(
                "class {k} has only {} positive-weight terms, fewer than {per_class}",
                positive.len()
            ));
        }
        classes.push(
            positive
                .into_iter()
                .take(per_class)
                .map(|(c, _)| Seed {
                    term: vocab.term(c).to_string(),
                    weights: w.column(c),
                })
                .collect(),
        );
    }
    for msg in &warnings {
        log::warn!("{msg}");
    }
    Ok(SeedSet {
        budget,
        per_class,
        classes,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Translations taken from the bilingual dictionary.
    Dictionary,
    /// No dictionary entry; the source word is used unchanged.
    Identity,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Dictionary => "dictionary",
            Provenance::Identity => "identity",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dictionary" => Ok(Self::Dictionary),
            "identity" => Ok(Self::Identity),
            other => Err(Error::InvalidArgument(format!("unknown provenance {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TranslatedSeed<T> {
    pub source: String,
    /// Non-empty, sorted, distinct.
    pub targets: Vec<String>,
    pub weights: Vec<T>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TranslatedSeedSet<T> {
    pub n_classes: usize,
    pub entries: Vec<TranslatedSeed<T>>,
}

impl<T: Scalar> TranslatedSeedSet<T> {
    /// Number of (source, target) pairs.
    pub fn n_pairs(&self) -> usize {
        self.entries.iter().map(|e| e.targets.len()).sum()
    }

    /// Every distinct target term.
    pub fn target_terms(&self) -> BTreeSet<&str> {
        self.entries
            .iter()
            .flat_map(|e| e.targets.iter().map(String::as_str))
            .collect()
    }

    /// Writes `source<TAB>target<TAB>provenance` rows under a header line,
    /// one row per translation pair.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "source\ttarget\tprovenance")?;
        for e in &self.entries {
            for t in &e.targets {
                writeln!(out, "{}\t{}\t{}", e.source, t, e.provenance)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a (possibly hand-edited) translation TSV. Weights come from
    /// `seeds`; every source word in the file must be one of its seeds.
    pub fn read_tsv(path: &Path, seeds: &SeedSet<T>) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut order: Vec<String> = Vec::new();
        let mut grouped: HashMap<String, (BTreeSet<String>, Provenance)> = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            if line.trim().is_empty() || (i == 0 && line.starts_with("source\t")) {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(parse_err(format!("expected 3 columns, found {}", fields.len())));
            }
            let (source, target) = (fields[0].trim(), fields[1].trim());
            if source.is_empty() || target.is_empty() {
                return Err(parse_err("empty source or target".into()));
            }
            let provenance: Provenance = fields[2].trim().parse().map_err(|e: Error| parse_err(e.to_string()))?;
            if seeds.find(source).is_none() {
                return Err(parse_err(format!("{source:?} is not a seed word")));
            }
            match grouped.get_mut(source) {
                Some((targets, p)) => {
                    if *p != provenance {
                        return Err(parse_err(format!(
                            "conflicting provenance for {source:?}"
                        )));
                    }
                    targets.insert(target.to_string());
                }
                None => {
                    order.push(source.to_string());
                    grouped.insert(
                        source.to_string(),
                        ([target.to_string()].into_iter().collect(), provenance),
                    );
                }
            }
        }
        let entries = order
            .into_iter()
            .map(|source| {
                let (targets, provenance) = grouped.remove(&source).expect("grouped source");
                let weights = seeds.find(&source).expect("checked seed").weights.clone();
                TranslatedSeed {
                    source,
                    targets: targets.into_iter().collect(),
                    weights,
                    provenance,
                }
            })
            .collect();
        Ok(Self {
            n_classes: seeds.n_classes(),
            entries,
        })
    }
}

/// Maps every distinct seed to all of its dictionary translations, each
/// carrying the seed's weights. Seeds missing from the dictionary are kept
/// as their own translation.
pub fn translate_seeds<T: Scalar>(
    seeds: &SeedSet<T>,
    dict: &BilingualDictionary,
) -> TranslatedSeedSet<T> {
    let entries = seeds
        .distinct()
        .into_iter()
        .map(|seed| match dict.lookup(&seed.term) {
            Some(targets) if !targets.is_empty() => TranslatedSeed {
                source: seed.term.clone(),
                targets: targets.iter().cloned().collect(),
                weights: seed.weights.clone(),
                provenance: Provenance::Dictionary,
            },
            _ => TranslatedSeed {
                source: seed.term.clone(),
                targets: vec![seed.term.clone()],
                weights: seed.weights.clone(),
                provenance: Provenance::Identity,
            },
        })
        .collect();
    TranslatedSeedSet {
        n_classes: seeds.n_classes(),
        entries,
    }
}

/// Sparse `K x |V_T|` teacher weights, stored by column. Only seed columns
/// are present; every other column is zero. There is no intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TeacherMatrix<T> {
    n_classes: usize,
    n_cols: usize,
    columns: BTreeMap<usize, Vec<T>>,
}

impl<T: Scalar> Artifact for TeacherMatrix<T> {
    const KIND: &'static str = "teacher-matrix";
}

impl<T: Scalar> TeacherMatrix<T> {
    pub fn new(n_classes: usize, n_cols: usize) -> Self {
        Self {
            n_classes,
            n_cols,
            columns: BTreeMap::new(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Adds `weights` into column `c`. Columns that end up all-zero are removed.
    pub fn accumulate(&mut self, c: usize, weights: &[T]) {
        assert!(c < self.n_cols, "column {c} out of range");
        assert_eq!(weights.len(), self.n_classes);
        let col = self
            .columns
            .entry(c)
            .or_insert_with(|| vec![T::zero(); weights.len()]);
        for (a, &b) in col.iter_mut().zip(weights) {
            *a += b;
        }
        if col.iter().all(|v| *v == T::zero()) {
            self.columns.remove(&c);
        }
    }

    /// Replaces column `c` outright.
    pub fn set_column(&mut self, c: usize, weights: Vec<T>) {
        assert!(c < self.n_cols, "column {c} out of range");
        assert_eq!(weights.len(), self.n_classes);
        if weights.iter().all(|v| *v == T::zero()) {
            self.columns.remove(&c);
        } else {
            self.columns.insert(c, weights);
        }
    }

    pub fn column(&self, c: usize) -> Option<&[T]> {
        self.columns.get(&c).map(Vec::as_slice)
    }

    pub fn is_seed_column(&self, c: usize) -> bool {
        self.columns.contains_key(&c)
    }

    /// Column ids with any nonzero weight, ascending.
    pub fn seed_columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.columns.keys().copied()
    }

    pub fn n_seed_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> impl Iterator<Item = (usize, &[T])> + '_ {
        self.columns.iter().map(|(&c, v)| (c, v.as_slice()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TransferStats {
    /// Translation pairs whose target term is in the target vocabulary.
    pub transferred: usize,
    /// Translation pairs dropped because the target term is out of vocabulary.
    pub dropped: usize,
}

/// Copies each translated seed's weight column into the teacher column of
/// every target translation. Several seeds landing on one target word add up.
pub fn build_teacher_matrix<T: Scalar>(
    tset: &TranslatedSeedSet<T>,
    target_vocab: &Vocabulary,
) -> (TeacherMatrix<T>, TransferStats) {
    let mut z = TeacherMatrix::new(tset.n_classes, target_vocab.len());
    let mut stats = TransferStats::default();
    for entry in &tset.entries {
        for target in &entry.targets {
            match target_vocab.get(target) {
                Some(c) => {
                    z.accumulate(c, &entry.weights);
                    stats.transferred += 1;
                }
                None => stats.dropped += 1,
            }
        }
    }
    if stats.dropped > 0 {
        log::warn!(
            "{} translated seed words are not in the target vocabulary",
            stats.dropped
        );
    }
    (z, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::Document;
    use crate::vectorizer::fit_vocabulary;

    fn vocab(words: &[&str]) -> Vocabulary {
        let doc = Document::new("v", words.iter().map(|s| s.to_string()).collect(), None);
        fit_vocabulary([&doc], (1, 1), 1).unwrap()
    }

    fn seed_set(terms: &[(&str, Vec<f64>)]) -> SeedSet<f64> {
        SeedSet {
            budget: terms.len(),
            per_class: terms.len(),
            classes: vec![
                terms
                    .iter()
                    .map(|(t, w)| Seed {
                        term: t.to_string(),
                        weights: w.clone(),
                    })
                    .collect(),
                vec![],
            ],
            warnings: vec![],
        }
    }

    #[test]
    fn ranks_by_positive_weight() {
        let v = vocab(&["a", "b", "c", "d"]);
        let w = WeightMatrix::from_dense(
            &[vec![3.0, 1.0, 0.0, -2.0], vec![0.0, 0.5, 0.0, 2.0]],
            vec![0.0, 0.0],
            1.0,
        );
        let s = extract_seeds(&w, &v, 4, 2).unwrap();
        let class0: Vec<_> = s.classes[0].iter().map(|s| s.term.as_str()).collect();
        assert_eq!(class0, ["a", "b"]);
        let class1: Vec<_> = s.classes[1].iter().map(|s| s.term.as_str()).collect();
        assert_eq!(class1, ["d", "b"]);
        // Full column, not just the extracting class's weight.
        assert_eq!(s.classes[0][1].weights, vec![1.0, 0.5]);
        assert_eq!(s.distinct().len(), 3);
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = vocab(&["zeta", "alpha", "mid"]);
        let mut dense = vec![0.0; 3];
        for t in ["zeta", "alpha", "mid"] {
            dense[v.get(t).unwrap()] = 1.0;
        }
        let w = WeightMatrix::from_dense(&[dense, vec![0.0; 3]], vec![0.0; 2], 1.0);
        let s = extract_seeds(&w, &v, 4, 2).unwrap();
        let terms: Vec<_> = s.classes[0].iter().map(|s| s.term.as_str()).collect();
        assert_eq!(terms, ["alpha", "mid"]);
    }

    #[test]
    fn zero_matrix_gives_empty_lists_with_warnings() {
        let v = vocab(&["a", "b"]);
        let s = extract_seeds(&WeightMatrix::<f64>::zeros(2, 2), &v, 4, 2).unwrap();
        assert!(s.classes.iter().all(Vec::is_empty));
        assert_eq!(s.warnings.len(), 2);
    }

    #[test]
    fn extraction_errors_and_floor() {
        let v = vocab(&["a", "b"]);
        let w = WeightMatrix::<f64>::zeros(2, 2);
        assert!(extract_seeds(&w, &v, 4, 3).is_err());
        assert!(extract_seeds(&w, &vocab(&["a"]), 4, 2).is_err());
        let s = extract_seeds(&w, &v, 5, 2).unwrap();
        assert_eq!(s.per_class, 2);
        assert!(s.warnings.iter().any(|m| m.contains("not divisible")));
    }

    #[test]
    fn translation_rules() {
        let mut dict = BilingualDictionary::new();
        dict.insert("wonderful", "magnifique");
        dict.insert("shares", "comparte");
        dict.insert("shares", "acciones");
        let seeds = seed_set(&[
            ("wonderful", vec![0.9, -0.2]),
            ("shares", vec![0.4, 0.1]),
            ("😀", vec![0.3, 0.0]),
        ]);
        let t = translate_seeds(&seeds, &dict);
        assert_eq!(t.entries[0].targets, ["magnifique"]);
        assert_eq!(t.entries[0].weights, vec![0.9, -0.2]);
        assert_eq!(t.entries[0].provenance, Provenance::Dictionary);
        assert_eq!(t.entries[1].targets, ["acciones", "comparte"]);
        assert_eq!(t.entries[1].weights, vec![0.4, 0.1]);
        assert_eq!(t.entries[2].targets, ["😀"]);
        assert_eq!(t.entries[2].provenance, Provenance::Identity);
        assert_eq!(t.n_pairs(), 4);
    }

    #[test]
    fn teacher_copies_and_accumulates() {
        let v = vocab(&["x", "y"]);
        let tset = TranslatedSeedSet {
            n_classes: 2,
            entries: vec![
                TranslatedSeed {
                    source: "s1".into(),
                    targets: vec!["x".into()],
                    weights: vec![1.0, 0.0],
                    provenance: Provenance::Dictionary,
                },
                TranslatedSeed {
                    source: "s2".into(),
                    targets: vec!["x".into(), "nowhere".into()],
                    weights: vec![0.5, 0.0],
                    provenance: Provenance::Dictionary,
                },
            ],
        };
        let (z, stats) = build_teacher_matrix(&tset, &v);
        assert_eq!(z.column(v.get("x").unwrap()).unwrap(), &[1.5, 0.0]);
        assert!(z.column(v.get("y").unwrap()).is_none());
        assert_eq!(stats, TransferStats { transferred: 2, dropped: 1 });
        assert_eq!(z.n_seed_columns(), 1);
    }

    #[test]
    fn single_pair_is_direct_copy() {
        let v = vocab(&["parfait"]);
        let tset = TranslatedSeedSet {
            n_classes: 2,
            entries: vec![TranslatedSeed {
                source: "perfect".into(),
                targets: vec!["parfait".into()],
                weights: vec![0.8, -0.1],
                provenance: Provenance::Dictionary,
            }],
        };
        let (z, _) = build_teacher_matrix(&tset, &v);
        assert_eq!(z.column(0).unwrap(), &[0.8, -0.1]);
    }

    #[test]
    fn tsv_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let seeds = seed_set(&[("wonderful", vec![0.9, -0.2]), ("emoji", vec![0.3, 0.0])]);
        let mut dict = BilingualDictionary::new();
        dict.insert("wonderful", "magnifique");
        dict.insert("wonderful", "merveilleux");
        let t = translate_seeds(&seeds, &dict);
        let path = dir.path().join("t.tsv");
        t.write_tsv(&path).unwrap();
        assert_eq!(TranslatedSeedSet::read_tsv(&path, &seeds).unwrap(), t);

        std::fs::write(&path, "source\ttarget\tprovenance\nunknown\tx\tdictionary\n").unwrap();
        assert!(TranslatedSeedSet::read_tsv(&path, &seeds).is_err());
        std::fs::write(&path, "wonderful\tx\n").unwrap();
        assert!(TranslatedSeedSet::read_tsv(&path, &seeds).is_err());
        std::fs::write(&path, "wonderful\tsuperbe\tdictionary\n").unwrap();
        let edited = TranslatedSeedSet::read_tsv(&path, &seeds).unwrap();
        assert_eq!(edited.entries[0].targets, ["superbe"]);
        assert_eq!(edited.entries[0].weights, vec![0.9, -0.2]);
    }
}
