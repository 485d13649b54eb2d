//! One-vs-rest L1-regularized logistic regression.
//!
//! Each class `k` solves
//!
//! ```text
//! min_{w, b}  sum_i ln(1 + exp(-y_i (w . x_i + b)))  +  lambda * ||w||_1
//! ```
//!
//! with `y_i = +1` for documents of class `k` and `-1` otherwise. Larger
//! `lambda` gives sparser weights. The solver is cyclic coordinate descent:
//! every coordinate takes a soft-thresholded Newton step followed by an
//! Armijo backtracking search on the exact objective, so no update ever
//! increases it. The intercept is a coordinate too, without penalty.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus_io::Artifact;
use crate::scalar::{log1p_exp, sigmoid, softmax_in_place, Scalar};
use crate::vectorizer::DocTermMatrix;
use crate::{Error, Result};

/// Sparse `K x |V|` class-by-term weights plus per-class intercepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    bound = "T: Scalar",
    try_from = "WeightMatrixRepr<T>",
    into = "WeightMatrixRepr<T>"
)]
pub struct WeightMatrix<T> {
    n_cols: usize,
    /// Per class, `(column, weight)` with strictly increasing columns and no zeros.
    rows: Vec<Vec<(usize, T)>>,
    bias: Vec<T>,
    lambda: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct WeightMatrixRepr<T> {
    n_classes: usize,
    n_cols: usize,
    lambda: f64,
    bias: Vec<T>,
    /// `(class, column, value)` triplets.
    entries: Vec<(usize, usize, T)>,
}

impl<T: Scalar> TryFrom<WeightMatrixRepr<T>> for WeightMatrix<T> {
    type Error = Error;

    fn try_from(r: WeightMatrixRepr<T>) -> Result<Self> {
        if r.bias.len() != r.n_classes {
            return Err(Error::Artifact("bias length differs from class count".into()));
        }
        let mut rows = vec![Vec::new(); r.n_classes];
        for (k, c, v) in r.entries {
            if k >= r.n_classes || c >= r.n_cols {
                return Err(Error::Artifact(format!("weight entry ({k}, {c}) out of range")));
            }
            rows[k].push((c, v));
        }
        for row in &mut rows {
            row.sort_by_key(|&(c, _)| c);
        }
        Ok(Self {
            n_cols: r.n_cols,
            rows,
            bias: r.bias,
            lambda: r.lambda,
        })
    }
}

impl<T: Scalar> From<WeightMatrix<T>> for WeightMatrixRepr<T> {
    fn from(w: WeightMatrix<T>) -> Self {
        let entries = w
            .rows
            .iter()
            .enumerate()
            .flat_map(|(k, row)| row.iter().map(move |&(c, v)| (k, c, v)))
            .collect();
        Self {
            n_classes: w.rows.len(),
            n_cols: w.n_cols,
            lambda: w.lambda,
            bias: w.bias,
            entries,
        }
    }
}

impl<T: Scalar> Artifact for WeightMatrix<T> {
    const KIND: &'static str = "weight-matrix";
}

impl<T: Scalar> WeightMatrix<T> {
    pub fn zeros(n_classes: usize, n_cols: usize) -> Self {
        Self {
            n_cols,
            rows: vec![Vec::new(); n_classes],
            bias: vec![T::zero(); n_classes],
            lambda: 0.0,
        }
    }

    /// From dense per-class rows; zeros are dropped.
    pub fn from_dense(rows: &[Vec<T>], bias: Vec<T>, lambda: f64) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let rows = rows.iter().map(|r| sparsify(r)).collect();
        Self {
            n_cols,
            rows,
            bias,
            lambda,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    /// Nonzero `(column, weight)` pairs of class `k`.
    pub fn row(&self, k: usize) -> &[(usize, T)] {
        &self.rows[k]
    }

    pub fn get(&self, k: usize, c: usize) -> T {
        let row = &self.rows[k];
        row.binary_search_by_key(&c, |&(j, _)| j)
            .map_or(T::zero(), |p| row[p].1)
    }

    /// The K weights of term column `c`.
    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.n_classes()).map(|k| self.get(k, c)).collect()
    }

    pub fn dense_row(&self, k: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_cols];
        for &(c, v) in &self.rows[k] {
            out[c] = v;
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn l1_norm(&self) -> T {
        self.rows.iter().flatten().map(|(_, v)| v.abs()).sum()
    }

    /// Number of strictly positive weights per class.
    pub fn positive_per_class(&self) -> Vec<usize> {
        self.rows
            .iter()
            .map(|r| r.iter().filter(|(_, v)| *v > T::zero()).count())
            .collect()
    }

    /// Class logits `W x_i + b` for row `i` of `x`.
    pub fn logits(&self, x: &DocTermMatrix<T>, i: usize) -> Vec<T> {
        let (cols, vals) = x.row(i);
        self.rows
            .iter()
            .zip(&self.bias)
            .map(|(row, &b)| b + sparse_dot(row, cols, vals))
            .collect()
    }
}

fn sparsify<T: Scalar>(dense: &[T]) -> Vec<(usize, T)> {
    dense
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != T::zero())
        .map(|(c, v)| (c, *v))
        .collect()
}

/// Dot product of two sorted sparse vectors.
fn sparse_dot<T: Scalar>(a: &[(usize, T)], cols: &[usize], vals: &[T]) -> T {
    let (mut i, mut j) = (0, 0);
    let mut acc = T::zero();
    while i < a.len() && j < cols.len() {
        match a[i].0.cmp(&cols[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * vals[j];
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// Row-stochastic class probabilities `softmax(W x_i + b)` for every row.
pub fn predict_proba<T: Scalar>(w: &WeightMatrix<T>, x: &DocTermMatrix<T>) -> Result<Vec<Vec<T>>> {
    if w.n_cols() != x.n_cols() {
        return Err(Error::Dimension(format!(
            "weights have {} columns, features have {}",
            w.n_cols(),
            x.n_cols()
        )));
    }
    Ok((0..x.n_rows())
        .map(|i| {
            let mut p = w.logits(x, i);
            softmax_in_place(&mut p);
            p
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop once the largest coordinate change of an epoch falls below this.
    pub tol: f64,
    pub max_epochs: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_epochs: 1000,
        }
    }
}

const ARMIJO_SIGMA: f64 = 0.01;
const MAX_BACKTRACKS: usize = 30;

/// One binary L1 logistic problem in column-major form.
#[derive(Debug, Clone)]
pub struct BinaryL1Problem<'a, T: Clone> {
    columns: Cow<'a, [Vec<(usize, T)>]>,
    /// Labels in {-1, +1}.
    signs: Vec<T>,
    lambda: T,
}

/// Current iterate of a [`BinaryL1Problem`], with cached margins
/// `w . x_i + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryState<T> {
    pub weights: Vec<T>,
    pub bias: T,
    margins: Vec<T>,
}

impl<'a, T: Scalar> BinaryL1Problem<'a, T> {
    pub fn new(columns: impl Into<Cow<'a, [Vec<(usize, T)>]>>, signs: Vec<T>, lambda: T) -> Self {
        Self {
            columns: columns.into(),
            signs,
            lambda,
        }
    }

    pub fn from_matrix(x: &DocTermMatrix<T>, positive: &[bool], lambda: T) -> Self {
        let signs = positive
            .iter()
            .map(|&p| if p { T::one() } else { -T::one() })
            .collect();
        Self::new(x.to_columns(), signs, lambda)
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn n_samples(&self) -> usize {
        self.signs.len()
    }

    pub fn state(&self, weights: Vec<T>, bias: T) -> BinaryState<T> {
        let mut margins = vec![bias; self.n_samples()];
        for (col, &w) in self.columns.iter().zip(&weights) {
            if w != T::zero() {
                for &(i, x) in col {
                    margins[i] += w * x;
                }
            }
        }
        BinaryState {
            weights,
            bias,
            margins,
        }
    }

    /// Logistic part of the objective.
    pub fn smooth_loss(&self, state: &BinaryState<T>) -> T {
        state
            .margins
            .iter()
            .zip(&self.signs)
            .map(|(&m, &y)| log1p_exp(-y * m))
            .sum()
    }

    pub fn objective(&self, state: &BinaryState<T>) -> T {
        self.smooth_loss(state) + self.lambda * state.weights.iter().map(|w| w.abs()).sum::<T>()
    }

    /// Gradient of the logistic part with respect to `(weights, bias)`;
    /// the bias derivative is the last entry.
    pub fn smooth_gradient(&self, state: &BinaryState<T>) -> Vec<T> {
        let resid: Vec<T> = state
            .margins
            .iter()
            .zip(&self.signs)
            .map(|(&m, &y)| -y * sigmoid(-y * m))
            .collect();
        let mut g: Vec<T> = self
            .columns
            .iter()
            .map(|col| col.iter().map(|&(i, x)| x * resid[i]).sum())
            .collect();
        g.push(resid.iter().copied().sum());
        g
    }

    /// One cyclic pass over the bias and every feature. Returns the largest
    /// absolute coordinate change.
    pub fn epoch(&self, state: &mut BinaryState<T>) -> T {
        let mut max_change = self.update_bias(state);
        for j in 0..self.columns.len() {
            let change = self.update_coordinate(state, j);
            if change > max_change {
                max_change = change;
            }
        }
        max_change
    }

    fn update_bias(&self, state: &mut BinaryState<T>) -> T {
        let (mut g, mut h) = (T::zero(), T::zero());
        for (&m, &y) in state.margins.iter().zip(&self.signs) {
            let s = sigmoid(-y * m);
            g -= y * s;
            h += s * (T::one() - s);
        }
        if h <= T::zero() || g == T::zero() {
            return T::zero();
        }
        let d = -g / h;
        let decrease = g * d;
        let sigma = T::of(ARMIJO_SIGMA);
        let mut alpha = T::one();
        for _ in 0..MAX_BACKTRACKS {
            let step = alpha * d;
            let delta: T = state
                .margins
                .iter()
                .zip(&self.signs)
                .map(|(&m, &y)| log1p_exp(-y * (m + step)) - log1p_exp(-y * m))
                .sum();
            if delta <= sigma * alpha * decrease {
                state.bias += step;
                for m in state.margins.iter_mut() {
                    *m += step;
                }
                return step.abs();
            }
            alpha *= T::of(0.5);
        }
        T::zero()
    }

    fn update_coordinate(&self, state: &mut BinaryState<T>, j: usize) -> T {
        let col = &self.columns[j];
        if col.is_empty() {
            // A feature that never occurs only pays the penalty.
            let w = state.weights[j];
            state.weights[j] = T::zero();
            return w.abs();
        }
        let w = state.weights[j];
        let lambda = self.lambda;
        let (mut g, mut h) = (T::zero(), T::zero());
        for &(i, x) in col {
            let y = self.signs[i];
            let s = sigmoid(-y * state.margins[i]);
            g -= y * s * x;
            h += s * (T::one() - s) * x * x;
        }
        if w == T::zero() && g.abs() <= lambda {
            return T::zero();
        }
        let h = h.max(T::of(1e-12));
        let d = if g + lambda <= h * w {
            -(g + lambda) / h
        } else if g - lambda >= h * w {
            -(g - lambda) / h
        } else {
            -w
        };
        if d == T::zero() {
            return T::zero();
        }
        let predicted = g * d + lambda * ((w + d).abs() - w.abs());
        let sigma = T::of(ARMIJO_SIGMA);
        let mut alpha = T::one();
        for _ in 0..MAX_BACKTRACKS {
            let step = alpha * d;
            let mut delta = lambda * ((w + step).abs() - w.abs());
            for &(i, x) in col {
                let y = self.signs[i];
                let m = state.margins[i];
                delta += log1p_exp(-y * (m + step * x)) - log1p_exp(-y * m);
            }
            if delta <= sigma * alpha * predicted {
                state.weights[j] = w + step;
                for &(i, x) in col {
                    state.margins[i] += step * x;
                }
                return step.abs();
            }
            alpha *= T::of(0.5);
        }
        T::zero()
    }

    /// Runs epochs until the largest change drops below `opts.tol`.
    /// Returns the number of epochs performed.
    pub fn solve(&self, state: &mut BinaryState<T>, opts: &SolverOptions) -> usize {
        let tol = T::of(opts.tol);
        for epoch in 1..=opts.max_epochs {
            if self.epoch(state) < tol {
                return epoch;
            }
        }
        opts.max_epochs
    }
}

/// Fits `n_classes` one-vs-rest L1 logistic regressions at strength `lambda`,
/// optionally starting from `warm_start`.
pub fn fit_l1_ovr<T: Scalar>(
    x: &DocTermMatrix<T>,
    y: &[usize],
    n_classes: usize,
    lambda: f64,
    warm_start: Option<&WeightMatrix<T>>,
    opts: &SolverOptions,
) -> Result<WeightMatrix<T>> {
    let columns = x.to_columns();
    fit_l1_ovr_columns(&columns, x.n_rows(), y, n_classes, lambda, warm_start, opts)
}

fn fit_l1_ovr_columns<T: Scalar>(
    columns: &[Vec<(usize, T)>],
    n_rows: usize,
    y: &[usize],
    n_classes: usize,
    lambda: f64,
    warm_start: Option<&WeightMatrix<T>>,
    opts: &SolverOptions,
) -> Result<WeightMatrix<T>> {
    check_inputs(n_rows, y, n_classes, lambda)?;
    if let Some(w) = warm_start {
        if w.n_classes() != n_classes || w.n_cols() != columns.len() {
            return Err(Error::Dimension(format!(
                "warm start is {}x{}, problem is {}x{}",
                w.n_classes(),
                w.n_cols(),
                n_classes,
                columns.len()
            )));
        }
    }
    let fitted: Vec<(Vec<(usize, T)>, T)> = (0..n_classes)
        .into_par_iter()
        .map(|k| {
            let signs = y
                .iter()
                .map(|&l| if l == k { T::one() } else { -T::one() })
                .collect();
            let problem = BinaryL1Problem::new(columns, signs, T::of(lambda));
            let (w0, b0) = match warm_start {
                Some(w) => (w.dense_row(k), w.bias[k]),
                None => (vec![T::zero(); columns.len()], T::zero()),
            };
            let mut state = problem.state(w0, b0);
            problem.solve(&mut state, opts);
            (sparsify(&state.weights), state.bias)
        })
        .collect();
    let (rows, bias) = fitted.into_iter().unzip();
    Ok(WeightMatrix {
        n_cols: columns.len(),
        rows,
        bias,
        lambda,
    })
}

fn check_inputs(
    n_rows: usize,
    y: &[usize],
    n_classes: usize,
    lambda: f64,
) -> Result<()> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::NegativeLambda(lambda));
    }
    if y.len() != n_rows {
        return Err(Error::Dimension(format!(
            "{} labels for {} rows",
            y.len(),
            n_rows
        )));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= n_classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} outside [0, {n_classes})"
        )));
    }
    let mut seen = vec![false; n_classes];
    for &l in y {
        seen[l] = true;
    }
    let distinct = seen.iter().filter(|&&s| s).count();
    if distinct < 2 {
        return Err(Error::TooFewClasses(distinct));
    }
    Ok(())
}

/// `steps` values evenly spaced on a log scale from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..steps)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (steps - 1) as f64))
                .collect()
        }
    }
}

/// Log-spaced lambda grid description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self {
            min: 0.1,
            max: 1e7,
            steps: 50,
        }
    }
}

impl LambdaGrid {
    pub fn values(&self) -> Vec<f64> {
        log_grid(self.min, self.max, self.steps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint<T> {
    pub lambda: f64,
    pub weights: WeightMatrix<T>,
    pub positive_per_class: Vec<usize>,
}

impl<T> PathPoint<T> {
    /// Total number of positive weights.
    pub fn positive_nnz(&self) -> usize {
        self.positive_per_class.iter().sum()
    }
}

/// Solutions along a lambda grid, ordered from the largest (sparsest)
/// lambda to the smallest.
#[derive(Debug, Clone, PartialEq)]
pub struct RegPath<T> {
    pub points: Vec<PathPoint<T>>,
}

/// Fits every lambda of `grid`, largest first, each fit warm-started from
/// the previous (sparser) solution.
pub fn regularization_path<T: Scalar>(
    x: &DocTermMatrix<T>,
    y: &[usize],
    n_classes: usize,
    grid: &[f64],
    opts: &SolverOptions,
) -> Result<RegPath<T>> {
    regularization_path_until(x, y, n_classes, grid, opts, |_| false)
}

/// Like [`regularization_path`], but stops after the first point for which
/// `stop` returns true.
pub fn regularization_path_until<T: Scalar>(
    x: &DocTermMatrix<T>,
    y: &[usize],
    n_classes: usize,
    grid: &[f64],
    opts: &SolverOptions,
    mut stop: impl FnMut(&PathPoint<T>) -> bool,
) -> Result<RegPath<T>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    if let Some(&bad) = grid.iter().find(|l| l.is_nan() || **l < 0.0) {
        return Err(Error::NegativeLambda(bad));
    }
    let mut lambdas = grid.to_vec();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    lambdas.dedup();
    let columns = x.to_columns();
    let mut points: Vec<PathPoint<T>> = Vec::with_capacity(lambdas.len());
    for lambda in lambdas {
        let warm = points.last().map(|p| &p.weights);
        let weights =
            fit_l1_ovr_columns(&columns, x.n_rows(), y, n_classes, lambda, warm, opts)?;
        log::debug!(
            "lambda {lambda:.4e}: {} nonzero weights",
            weights.nnz()
        );
        let point = PathPoint {
            lambda,
            positive_per_class: weights.positive_per_class(),
            weights,
        };
        let done = stop(&point);
        points.push(point);
        if done {
            break;
        }
    }
    Ok(RegPath { points })
}

/// Outcome of [`select_lambda`].
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection<T> {
    pub lambda: f64,
    pub weights: WeightMatrix<T>,
    /// True when no grid point had enough positive weights per class and the
    /// smallest lambda was returned instead.
    pub fallback: bool,
}

/// Seeds each class must be able to contribute for a budget of `budget`.
pub fn seeds_per_class(budget: usize, n_classes: usize) -> Result<usize> {
    if budget < n_classes {
        return Err(Error::BudgetTooSmall {
            budget,
            classes: n_classes,
        });
    }
    Ok(budget / n_classes)
}

/// Whether a path point has at least `per_class` positive weights in every
/// class.
pub fn admits<T>(point: &PathPoint<T>, per_class: usize) -> bool {
    point.positive_per_class.iter().all(|&n| n >= per_class)
}

/// Picks the largest lambda on the path whose solution yields
/// `floor(budget / K)` positive-weight terms in every class. Falls back to the
/// smallest lambda, with `fallback` set, when no point qualifies.
pub fn select_lambda<T: Scalar>(path: &RegPath<T>, budget: usize) -> Result<LambdaSelection<T>> {
    let first = path
        .points
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty regularization path".into()))?;
    let per_class = seeds_per_class(budget, first.weights.n_classes())?;
    let best = path
        .points
        .iter()
        .filter(|p| admits(p, per_class))
        .max_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(match best {
        Some(p) => LambdaSelection {
            lambda: p.lambda,
            weights: p.weights.clone(),
            fallback: false,
        },
        None => {
            let smallest = path
                .points
                .iter()
                .min_by(|a, b| a.lambda.total_cmp(&b.lambda))
                .expect("non-empty path");
            log::warn!(
                "no lambda on the grid yields {per_class} positive weights per class; \
                 using the smallest lambda {:.4e}",
                smallest.lambda
            );
            LambdaSelection {
                lambda: smallest.lambda,
                weights: smallest.weights.clone(),
                fallback: true,
            }
        }
    })
}
