//! Softmax-regression student trained on soft labels.
//!
//! The training objective is the distillation loss
//!
//! ```text
//! J(theta, b) = sum_j H(q_j, softmax(theta h_j + b)) + lambda * ||theta||_2^2
//! ```
//!
//! over pseudo-labeled documents `(h_j, q_j)`; the intercept is not penalized.

use serde::{Deserialize, Serialize};

use crate::corpus_io::{Artifact, Document};
use crate::scalar::{log_sum_exp, softmax_in_place, Scalar};
use crate::teacher::PseudoLabeledSet;
use crate::vectorizer::{transform_tfidf, DocTermMatrix, Vocabulary};
use crate::{Error, Result};

/// What a student sees of the documents it is trained on or asked about.
#[derive(Debug, Clone, Copy)]
pub struct StudentInputs<'a, T> {
    pub docs: &'a [Document],
    pub features: &'a DocTermMatrix<T>,
}

/// Anything that can produce a class distribution for a document.
pub trait StudentPredictor<T: Scalar> {
    fn predict(&self, inputs: &StudentInputs<'_, T>, row: usize) -> Vec<T>;
}

/// Trains a student from pseudo-labels. Implementations only need the
/// documents and/or their feature rows, so other model families can be
/// dropped into the co-training loop.
pub trait StudentTrainer<T: Scalar> {
    type Model: StudentPredictor<T>;

    /// Returns the model and its final training loss.
    fn train(
        &self,
        inputs: &StudentInputs<'_, T>,
        labels: &PseudoLabeledSet<T>,
    ) -> Result<(Self::Model, T)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudentOptions {
    pub lambda_l2: f64,
    /// Stop when the relative decrease of the loss falls below this.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for StudentOptions {
    fn default() -> Self {
        Self {
            lambda_l2: 1.0,
            rel_tol: 1e-6,
            max_iter: 500,
        }
    }
}

/// Linear softmax student over a tf-idf n-gram vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "StudentRepr<T>", into = "StudentRepr<T>")]
pub struct StudentModel<T> {
    n_classes: usize,
    /// Row-major `K x |V|`.
    weights: Vec<T>,
    bias: Vec<T>,
    vocab: Vocabulary,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct StudentRepr<T> {
    n_classes: usize,
    bias: Vec<T>,
    entries: Vec<(usize, usize, T)>,
    vocab: Vocabulary,
}

impl<T: Scalar> TryFrom<StudentRepr<T>> for StudentModel<T> {
    type Error = Error;

    fn try_from(r: StudentRepr<T>) -> Result<Self> {
        let n = r.vocab.len();
        if r.bias.len() != r.n_classes {
            return Err(Error::Artifact("bias length differs from class count".into()));
        }
        let mut weights = vec![T::zero(); r.n_classes * n];
        for (k, c, v) in r.entries {
            if k >= r.n_classes || c >= n {
                return Err(Error::Artifact(format!("student entry ({k}, {c}) out of range")));
            }
            weights[k * n + c] = v;
        }
        Ok(Self {
            n_classes: r.n_classes,
            weights,
            bias: r.bias,
            vocab: r.vocab,
        })
    }
}

impl<T: Scalar> From<StudentModel<T>> for StudentRepr<T> {
    fn from(m: StudentModel<T>) -> Self {
        let n = m.vocab.len();
        let entries = m
            .weights
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != T::zero())
            .map(|(i, &v)| (i / n, i % n, v))
            .collect();
        Self {
            n_classes: m.n_classes,
            bias: m.bias,
            entries,
            vocab: m.vocab,
        }
    }
}

impl<T: Scalar> Artifact for StudentModel<T> {
    const KIND: &'static str = "student-model";
}

impl<T: Scalar> StudentModel<T> {
    pub fn zeros(n_classes: usize, vocab: Vocabulary) -> Self {
        Self {
            n_classes,
            weights: vec![T::zero(); n_classes * vocab.len()],
            bias: vec![T::zero(); n_classes],
            vocab,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn weight(&self, k: usize, c: usize) -> T {
        self.weights[k * self.vocab.len() + c]
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn weight_norm(&self) -> T {
        self.weights.iter().map(|w| *w * *w).sum::<T>().sqrt()
    }

    pub fn predict_row(&self, x: &DocTermMatrix<T>, i: usize) -> Vec<T> {
        let mut r = logits(&self.weights, &self.bias, self.vocab.len(), x, i);
        softmax_in_place(&mut r);
        r
    }

    /// Vectorizes `doc` with the model's vocabulary and predicts.
    pub fn predict_doc(&self, doc: &Document) -> Vec<T> {
        let x = transform_tfidf::<T>(std::slice::from_ref(doc), &self.vocab);
        self.predict_row(&x, 0)
    }
}

impl<T: Scalar> StudentPredictor<T> for StudentModel<T> {
    fn predict(&self, inputs: &StudentInputs<'_, T>, row: usize) -> Vec<T> {
        self.predict_row(inputs.features, row)
    }
}

fn logits<T: Scalar>(
    weights: &[T],
    bias: &[T],
    n_features: usize,
    x: &DocTermMatrix<T>,
    i: usize,
) -> Vec<T> {
    let (cols, vals) = x.row(i);
    bias.iter()
        .enumerate()
        .map(|(k, &b)| {
            let w = &weights[k * n_features..(k + 1) * n_features];
            b + cols.iter().zip(vals).map(|(&c, &v)| w[c] * v).sum::<T>()
        })
        .collect()
}

/// The distillation objective over a fixed set of feature rows and targets.
/// Parameters are flattened as `K x |V|` weights followed by `K` biases.
#[derive(Debug, Clone)]
pub struct DistillationProblem<'a, T> {
    x: &'a DocTermMatrix<T>,
    rows: Vec<usize>,
    targets: Vec<Vec<T>>,
    n_classes: usize,
    lambda: T,
}

impl<'a, T: Scalar> DistillationProblem<'a, T> {
    pub fn new(
        x: &'a DocTermMatrix<T>,
        rows: Vec<usize>,
        targets: Vec<Vec<T>>,
        n_classes: usize,
        lambda: T,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if rows.len() != targets.len() {
            return Err(Error::Dimension(format!(
                "{} rows but {} targets",
                rows.len(),
                targets.len()
            )));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= x.n_rows()) {
            return Err(Error::Dimension(format!("row {bad} out of range")));
        }
        if targets.iter().any(|q| q.len() != n_classes) {
            return Err(Error::Dimension("target length differs from class count".into()));
        }
        Ok(Self {
            x,
            rows,
            targets,
            n_classes,
            lambda,
        })
    }

    pub fn n_params(&self) -> usize {
        self.n_classes * (self.x.n_cols() + 1)
    }

    fn split<'p>(&self, params: &'p [T]) -> (&'p [T], &'p [T]) {
        params.split_at(self.n_classes * self.x.n_cols())
    }

    pub fn loss(&self, params: &[T]) -> T {
        let (w, b) = self.split(params);
        let n = self.x.n_cols();
        let data: T = self
            .rows
            .iter()
            .zip(&self.targets)
            .map(|(&i, q)| {
                let z = logits(w, b, n, self.x, i);
                let lse = log_sum_exp(&z);
                q.iter().zip(&z).map(|(&qk, &zk)| qk * (lse - zk)).sum::<T>()
            })
            .sum();
        data + self.lambda * w.iter().map(|v| *v * *v).sum::<T>()
    }

    pub fn loss_and_gradient(&self, params: &[T]) -> (T, Vec<T>) {
        let (w, b) = self.split(params);
        let n = self.x.n_cols();
        let k_count = self.n_classes;
        let mut grad = vec![T::zero(); params.len()];
        let mut data = T::zero();
        for (&i, q) in self.rows.iter().zip(&self.targets) {
            let z = logits(w, b, n, self.x, i);
            let lse = log_sum_exp(&z);
            let q_sum: T = q.iter().copied().sum();
            data += q.iter().zip(&z).map(|(&qk, &zk)| qk * (lse - zk)).sum::<T>();
            let (cols, vals) = self.x.row(i);
            for k in 0..k_count {
                let r = (z[k] - lse).exp();
                let resid = r * q_sum - q[k];
                if resid == T::zero() {
                    continue;
                }
                let gk = &mut grad[k * n..(k + 1) * n];
                for (&c, &v) in cols.iter().zip(vals) {
                    gk[c] += resid * v;
                }
                grad[k_count * n + k] += resid;
            }
        }
        let two = T::of(2.0);
        for (g, &v) in grad[..k_count * n].iter_mut().zip(w) {
            *g += two * self.lambda * v;
        }
        (data + self.lambda * w.iter().map(|v| *v * *v).sum::<T>(), grad)
    }

    /// Minimizes the objective by gradient descent from `params`. Each step
    /// starts from a Barzilai-Borwein step length and backtracks until the
    /// Armijo condition holds. Returns the final loss and iteration count.
    pub fn minimize(&self, params: &mut [T], opts: &StudentOptions) -> (T, usize) {
        let c1 = T::of(1e-4);
        let rel_tol = T::of(opts.rel_tol);
        let (mut loss, mut grad) = self.loss_and_gradient(params);
        let mut step = T::one();
        let mut prev: Option<(Vec<T>, Vec<T>)> = None;
        let mut trial = vec![T::zero(); params.len()];
        for iter in 1..=opts.max_iter {
            let g2: T = grad.iter().map(|g| *g * *g).sum();
            if g2 == T::zero() {
                return (loss, iter - 1);
            }
            if let Some((p_old, g_old)) = &prev {
                let (mut sy, mut ss) = (T::zero(), T::zero());
                for i in 0..params.len() {
                    let s = params[i] - p_old[i];
                    let y = grad[i] - g_old[i];
                    sy += s * y;
                    ss += s * s;
                }
                if sy > T::zero() {
                    step = ss / sy;
                }
            }
            let mut accepted = None;
            for _ in 0..60 {
                for i in 0..params.len() {
                    trial[i] = params[i] - step * grad[i];
                }
                let l = self.loss(&trial);
                if l <= loss - c1 * step * g2 {
                    accepted = Some(l);
                    break;
                }
                step *= T::of(0.5);
            }
            let Some(new_loss) = accepted else {
                return (loss, iter);
            };
            prev = Some((params.to_vec(), grad));
            params.copy_from_slice(&trial);
            let (l, g) = self.loss_and_gradient(params);
            debug_assert!((l - new_loss).abs() <= T::of(1e-6) * (T::one() + l.abs()));
            grad = g;
            let old = loss;
            loss = l;
            if (old - loss).abs() <= rel_tol * old.abs().max(T::tiny()) {
                return (loss, iter);
            }
        }
        (loss, opts.max_iter)
    }
}

/// Trains a fresh student (all-zero start) on `labels`, whose rows index
/// `features`.
pub fn train_student<T: Scalar>(
    labels: &PseudoLabeledSet<T>,
    features: &DocTermMatrix<T>,
    vocab: &Vocabulary,
    n_classes: usize,
    opts: &StudentOptions,
) -> Result<(StudentModel<T>, T)> {
    if labels.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if features.n_cols() != vocab.len() {
        return Err(Error::Dimension(format!(
            "features have {} columns, vocabulary has {} terms",
            features.n_cols(),
            vocab.len()
        )));
    }
    let problem = DistillationProblem::new(
        features,
        labels.rows(),
        labels.entries.iter().map(|e| e.q.clone()).collect(),
        n_classes,
        T::of(opts.lambda_l2),
    )?;
    let mut params = vec![T::zero(); problem.n_params()];
    let (loss, iters) = problem.minimize(&mut params, opts);
    log::debug!("student trained on {} docs in {iters} iterations, loss {loss}", labels.len());
    let bias = params.split_off(n_classes * vocab.len());
    Ok((
        StudentModel {
            n_classes,
            weights: params,
            bias,
            vocab: vocab.clone(),
        },
        loss,
    ))
}

/// The default student: L2-regularized softmax regression on tf-idf
/// features.
#[derive(Debug, Clone)]
pub struct LogRegTrainer {
    pub vocab: Vocabulary,
    pub n_classes: usize,
    pub options: StudentOptions,
}

impl<T: Scalar> StudentTrainer<T> for LogRegTrainer {
    type Model = StudentModel<T>;

    fn train(
        &self,
        inputs: &StudentInputs<'_, T>,
        labels: &PseudoLabeledSet<T>,
    ) -> Result<(StudentModel<T>, T)> {
        train_student(labels, inputs.features, &self.vocab, self.n_classes, &self.options)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teacher::{Labeler, PseudoLabel};
    use crate::vectorizer::fit_vocabulary;

    fn pset(targets: &[Vec<f64>]) -> PseudoLabeledSet<f64> {
        PseudoLabeledSet {
            entries: targets
                .iter()
                .enumerate()
                .map(|(row, q)| PseudoLabel {
                    row,
                    id: row.to_string(),
                    q: q.clone(),
                    labeler: Labeler::Teacher,
                })
                .collect(),
        }
    }

    fn toy_vocab(n: usize) -> Vocabulary {
        let doc = Document::new("v", (0..n).map(|i| format!("t{i:02}")).collect(), None);
        fit_vocabulary([&doc], (1, 1), 1).unwrap()
    }

    #[test]
    fn separable_hard_labels_are_recovered() {
        let x = DocTermMatrix::from_dense(&[
            vec![1.0, 0.0, 0.3],
            vec![0.9, 0.1, 0.0],
            vec![0.0, 1.0, 0.3],
            vec![0.1, 0.8, 0.0],
        ]);
        let labels = pset(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]]);
        let (m, _) = train_student(&labels, &x, &toy_vocab(3), 2, &StudentOptions::default()).unwrap();
        for (i, want) in [0, 0, 1, 1].into_iter().enumerate() {
            assert_eq!(crate::scalar::argmax(&m.predict_row(&x, i)), want);
        }
    }

    #[test]
    fn uniform_targets_give_zero_weights() {
        let x = DocTermMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8]]);
        let labels = pset(&vec![vec![0.5, 0.5]; 3]);
        let (m, _) = train_student(&labels, &x, &toy_vocab(2), 2, &StudentOptions::default()).unwrap();
        assert!(m.weight_norm() < 1e-3);
        let p = m.predict_row(&x, 2);
        assert!((p[0] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn empty_set_is_an_error() {
        let x = DocTermMatrix::<f64>::from_dense(&[vec![1.0]]);
        let err = train_student(&pset(&[]), &x, &toy_vocab(1), 2, &StudentOptions::default());
        assert!(matches!(err, Err(Error::EmptyTrainingSet)));
    }

    #[test]
    fn prediction_rows_sum_to_one() {
        let x = DocTermMatrix::from_dense(&[vec![1.0, 0.0], vec![0.2, 0.9]]);
        let labels = pset(&[vec![0.7, 0.2, 0.1], vec![0.1, 0.1, 0.8]]);
        let (m, _) = train_student(&labels, &x, &toy_vocab(2), 3, &StudentOptions::default()).unwrap();
        for i in 0..2 {
            let s: f64 = m.predict_row(&x, i).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = DocTermMatrix::from_dense(&[
            vec![0.5, 0.0, 0.2, 0.0, 0.8],
            vec![0.0, 0.9, 0.0, 0.1, 0.0],
            vec![0.3, 0.3, 0.3, 0.3, 0.3],
            vec![0.0, 0.0, 1.0, 0.0, 0.0],
            vec![0.7, 0.0, 0.0, 0.7, 0.0],
            vec![0.1, 0.2, 0.3, 0.4, 0.5],
        ]);
        let targets = vec![
            vec![0.8, 0.1, 0.1],
            vec![0.2, 0.5, 0.3],
            vec![1.0, 0.0, 0.0],
            vec![0.3, 0.3, 0.4],
            vec![0.0, 0.1, 0.9],
            vec![0.25, 0.5, 0.25],
        ];
        let p = DistillationProblem::new(&x, (0..6).collect(), targets, 3, 0.3).unwrap();
        let params: Vec<f64> = (0..p.n_params()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0).collect();
        let (_, g) = p.loss_and_gradient(&params);
        let h = 1e-6;
        for i in 0..params.len() {
            let mut a = params.clone();
            let mut b = params.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (p.loss(&a) - p.loss(&b)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * fd.abs().max(1.0), "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn student_round_trips_bit_exactly() {
        let x = DocTermMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let labels = pset(&[vec![0.9, 0.1], vec![0.3, 0.7]]);
        let (m, _) = train_student(&labels, &x, &toy_vocab(2), 2, &StudentOptions::default()).unwrap();
        let back = StudentModel::<f64>::from_bytes(&m.to_bytes().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
