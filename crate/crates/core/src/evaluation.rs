//! Accuracy, macro-F1 and multi-seed aggregation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus_io::LabeledCorpus;
use crate::scalar::{argmax, Scalar};
use crate::student::StudentModel;
use crate::teacher::Teacher;
use crate::vectorizer::transform_tfidf;
use crate::{Error, Result};

/// Random seeds used for five-run averages.
pub const DEFAULT_SEEDS: [u64; 5] = [7, 20, 42, 127, 1993];

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{a} predictions for {b} gold labels")));
    }
    if a == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(())
}

/// Fraction of predictions equal to the gold label. `None` predictions (no
/// decision) always count as mistakes.
pub fn accuracy(preds: &[Option<usize>], gold: &[usize]) -> Result<f64> {
    check_lengths(preds.len(), gold.len())?;
    let hits = preds
        .iter()
        .zip(gold)
        .filter(|(p, g)| **p == Some(**g))
        .count();
    Ok(hits as f64 / gold.len() as f64)
}

/// `counts[gold][pred]`; `None` predictions are not entered.
pub fn confusion_matrix(preds: &[Option<usize>], gold: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; n_classes]; n_classes];
    for (p, &g) in preds.iter().zip(gold) {
        if let Some(p) = p {
            m[g][*p] += 1;
        }
    }
    m
}

/// Unweighted mean over classes of `2PR / (P + R)`, with a class scoring 0
/// when `P + R = 0` (including classes that are never predicted nor gold).
pub fn macro_f1(preds: &[Option<usize>], gold: &[usize], n_classes: usize) -> Result<f64> {
    check_lengths(preds.len(), gold.len())?;
    let mut tp = vec![0usize; n_classes];
    let mut predicted = vec![0usize; n_classes];
    let mut actual = vec![0usize; n_classes];
    for (p, &g) in preds.iter().zip(gold) {
        actual[g] += 1;
        if let Some(p) = *p {
            predicted[p] += 1;
            if p == g {
                tp[g] += 1;
            }
        }
    }
    let total: f64 = (0..n_classes)
        .map(|k| {
            let precision = if predicted[k] > 0 { tp[k] as f64 / predicted[k] as f64 } else { 0.0 };
            let recall = if actual[k] > 0 { tp[k] as f64 / actual[k] as f64 } else { 0.0 };
            if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            }
        })
        .sum();
    Ok(total / n_classes as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub n: usize,
}

impl Metrics {
    pub fn compute(preds: &[Option<usize>], gold: &[usize], n_classes: usize) -> Result<Self> {
        Ok(Self {
            accuracy: accuracy(preds, gold)?,
            macro_f1: macro_f1(preds, gold, n_classes)?,
            n: gold.len(),
        })
    }
}

/// Teacher predictions on `test`, with `None` for documents without seed
/// words: those count as mistakes whatever the uniform distribution says.
pub fn teacher_predictions<T: Scalar>(teacher: &Teacher<T>, test: &LabeledCorpus) -> Vec<Option<usize>> {
    test.docs
        .iter()
        .map(|d| teacher.covers(d).then(|| argmax(&teacher.predict(d))))
        .collect()
}

pub fn evaluate_teacher<T: Scalar>(teacher: &Teacher<T>, test: &LabeledCorpus) -> Result<Metrics> {
    Metrics::compute(&teacher_predictions(teacher, test), &test.labels(), teacher.n_classes())
}

pub fn student_predictions<T: Scalar>(model: &StudentModel<T>, test: &LabeledCorpus) -> Vec<Option<usize>> {
    let x = transform_tfidf::<T>(&test.docs, model.vocab());
    (0..x.n_rows())
        .map(|i| Some(argmax(&model.predict_row(&x, i))))
        .collect()
}

pub fn evaluate_student<T: Scalar>(model: &StudentModel<T>, test: &LabeledCorpus) -> Result<Metrics> {
    Metrics::compute(&student_predictions(model, test), &test.labels(), model.n_classes())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary<R> {
    pub seeds: Vec<u64>,
    pub runs: Vec<R>,
    pub stats: BTreeMap<String, MeanStd>,
}

/// Runs `run` once per seed (in parallel) and aggregates every named metric
/// returned by `metrics`.
pub fn multi_seed_run<R, F, M>(seeds: &[u64], run: F, metrics: M) -> Result<SeedSummary<R>>
where
    R: Send,
    F: Fn(u64) -> Result<R> + Sync,
    M: Fn(&R) -> BTreeMap<String, f64>,
{
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    let runs: Vec<R> = seeds.par_iter().map(|&s| run(s)).collect::<Result<_>>()?;
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &runs {
        for (name, v) in metrics(r) {
            columns.entry(name).or_default().push(v);
        }
    }
    let stats = columns
        .into_iter()
        .map(|(name, values)| (name, MeanStd::of(&values)))
        .collect();
    Ok(SeedSummary {
        seeds: seeds.to_vec(),
        runs,
        stats,
    })
}
