//! Reference implementations used as test oracles. They work on dense
//! matrices and share no code with the library.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rows: usize, cols: usize, density: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| if rng.gen_bool(density) { rng.gen_range(0.05..1.5) } else { 0.0 })
                .collect()
        })
        .collect()
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `sum_i log(1 + exp(-y_i (w.x_i + b))) + lambda |w|_1`, labels in {-1, +1}.
pub fn l1_logistic_objective(x: &[Vec<f64>], y: &[f64], w: &[f64], b: f64, lambda: f64) -> f64 {
    let data: f64 = x
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let m: f64 = row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b;
            softplus(-yi * m)
        })
        .sum();
    data + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
}

/// FISTA on the L1 logistic objective with a fixed 1/L step. Returns the
/// weights, bias and objective value.
pub fn fista_l1_logistic(x: &[Vec<f64>], y: &[f64], lambda: f64, iters: usize) -> (Vec<f64>, f64, f64) {
    let d = x[0].len();
    // Lipschitz bound of the smooth part: 0.25 * ||[X 1]||_F^2.
    let lip = 0.25 * x.iter().map(|r| 1.0 + r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>();
    let step = 1.0 / lip;
    let mut theta = vec![0.0; d + 1];
    let mut z = theta.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let mut grad = vec![0.0; d + 1];
        for (row, &yi) in x.iter().zip(y) {
            let m: f64 = row.iter().zip(&z).map(|(a, c)| a * c).sum::<f64>() + z[d];
            let r = -yi / (1.0 + (yi * m).exp());
            for j in 0..d {
                grad[j] += r * row[j];
            }
            grad[d] += r;
        }
        let mut next = vec![0.0; d + 1];
        for j in 0..d {
            let v = z[j] - step * grad[j];
            next[j] = v.signum() * (v.abs() - step * lambda).max(0.0);
        }
        next[d] = z[d] - step * grad[d];
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        for j in 0..=d {
            z[j] = next[j] + (t - 1.0) / t_next * (next[j] - theta[j]);
        }
        theta = next;
        t = t_next;
    }
    let b = theta.pop().unwrap();
    let obj = l1_logistic_objective(x, y, &theta, b, lambda);
    (theta, b, obj)
}

/// `sum_i sum_k -q_ik log softmax(W x_i + b)_k + lambda ||W||^2` with `W`
/// flattened row-major (`K x d`) followed by the `K` biases.
pub fn distillation_loss(x: &[Vec<f64>], q: &[Vec<f64>], params: &[f64], k: usize, lambda: f64) -> f64 {
    let d = x[0].len();
    let (w, b) = params.split_at(k * d);
    let mut total = 0.0;
    for (row, qi) in x.iter().zip(q) {
        let z: Vec<f64> = (0..k)
            .map(|c| (0..d).map(|j| w[c * d + j] * row[j]).sum::<f64>() + b[c])
            .collect();
        let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + z.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        total += qi.iter().zip(&z).map(|(qk, zk)| qk * (lse - zk)).sum::<f64>();
    }
    total + lambda * w.iter().map(|v| v * v).sum::<f64>()
}

/// Central finite differences of `f` at `x`.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Row-stochastic random targets.
pub fn random_distributions(rows: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows)
        .map(|_| {
            let v: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

/// Gradient of [`distillation_loss`], written out densely.
pub fn distillation_gradient(x: &[Vec<f64>], q: &[Vec<f64>], params: &[f64], k: usize, lambda: f64) -> Vec<f64> {
    let d = x[0].len();
    let (w, b) = params.split_at(k * d);
    let mut g = vec![0.0; params.len()];
    for (row, qi) in x.iter().zip(q) {
        let z: Vec<f64> = (0..k)
            .map(|c| (0..d).map(|j| w[c * d + j] * row[j]).sum::<f64>() + b[c])
            .collect();
        let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - mx).exp()).collect();
        let s: f64 = e.iter().sum();
        let qs: f64 = qi.iter().sum();
        for c in 0..k {
            let r = e[c] / s * qs - qi[c];
            for j in 0..d {
                g[c * d + j] += r * row[j];
            }
            g[k * d + c] += r;
        }
    }
    for (gi, wi) in g.iter_mut().zip(w) {
        *gi += 2.0 * lambda * wi;
    }
    g
}

/// Plain gradient descent with a fixed step on the distillation loss.
pub fn gd_distillation(x: &[Vec<f64>], q: &[Vec<f64>], k: usize, lambda: f64, iters: usize) -> f64 {
    let d = x[0].len();
    // Smoothness bound: each row contributes at most ||(x_i, 1)||^2 / 2 per
    // class block, plus the ridge term.
    let lip = x.iter().map(|r| 1.0 + r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / 2.0 + 2.0 * lambda;
    let mut p = vec![0.0; k * (d + 1)];
    for _ in 0..iters {
        let g = distillation_gradient(x, q, &p, k, lambda);
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi -= gi / lip;
        }
    }
    distillation_loss(x, q, &p, k, lambda)
}
