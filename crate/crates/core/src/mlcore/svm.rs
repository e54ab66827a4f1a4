//! RBF support vector machine trained by sequential minimal optimization.
//!
//! The solver follows the maximal-violating-pair scheme with second-order
//! working-set selection. Kernel rows are computed on demand and kept in a
//! bounded cache.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAU: f64 = 1e-12;
const CACHE_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub sigma: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            sigma: 0.4,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

impl SvmParams {
    pub fn new(c: f64, sigma: f64) -> Self {
        SvmParams {
            c,
            sigma,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!("C must be positive, got {}", self.c)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 || self.max_iter == 0 {
            return Err(Error::invalid("tol and max_iter must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i` of each support vector, in `(0, C]`.
    pub alphas: Vec<f64>,
    /// `+1` for class 1, `-1` for class 0.
    pub signs: Vec<f64>,
    pub bias: f64,
    pub sigma: f64,
    pub c: f64,
    pub iterations: usize,
}

pub fn rbf(u: &[f64], v: &[f64], sigma: f64) -> f64 {
    let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

struct KernelRows<'a> {
    x: &'a [&'a [f64]],
    sigma: f64,
    rows: Vec<Option<Arc<Vec<f64>>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    fn new(x: &'a [&'a [f64]], sigma: f64) -> Self {
        let n = x.len();
        KernelRows {
            x,
            sigma,
            rows: vec![None; n],
            order: VecDeque::new(),
            capacity: (CACHE_BYTES / (8 * n.max(1))).max(2),
        }
    }

    fn row(&mut self, i: usize) -> Arc<Vec<f64>> {
        if let Some(r) = &self.rows[i] {
            return Arc::clone(r);
        }
        let xi = self.x[i];
        let r = Arc::new(self.x.iter().map(|xj| rbf(xi, xj, self.sigma)).collect());
        if self.order.len() == self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.rows[old] = None;
            }
        }
        self.order.push_back(i);
        self.rows[i] = Some(Arc::clone(&r));
        r
    }
}

/// Trains on rows `x` with binary labels `y` (0 or 1).
pub fn svm_train(x: &[&[f64]], y: &[u8], params: &SvmParams) -> Result<SvmModel> {
    params.validate()?;
    let n = x.len();
    if n != y.len() {
        return Err(Error::Shape(format!("{n} rows but {} labels", y.len())));
    }
    if let Some(r) = x.iter().find(|r| r.len() != x[0].len()) {
        return Err(Error::Shape(format!(
            "rows of {} and {} features",
            x[0].len(),
            r.len()
        )));
    }
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(Error::invalid("SVM training needs both classes"));
    }
    if let Some(l) = y.iter().find(|&&l| l > 1) {
        return Err(Error::invalid(format!("label {l} is not binary")));
    }
    let c = params.c;
    let s: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let mut alpha = vec![0.0; n];
    // gradient of the dual objective: G = Q alpha - 1
    let mut grad = vec![-1.0; n];
    let mut kernel = KernelRows::new(x, params.sigma);

    let up = |a: f64, s: f64| (s > 0.0 && a < c) || (s < 0.0 && a > 0.0);
    let low = |a: f64, s: f64| (s > 0.0 && a > 0.0) || (s < 0.0 && a < c);

    let mut iterations = 0;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(alpha[t], s[t]) && -s[t] * grad[t] > gmax {
                gmax = -s[t] * grad[t];
                i = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        let ki = if i == usize::MAX {
            None
        } else {
            Some(kernel.row(i))
        };
        for t in 0..n {
            if !low(alpha[t], s[t]) {
                continue;
            }
            let v = -s[t] * grad[t];
            gmin = gmin.min(v);
            if let Some(ki) = &ki {
                let b = gmax - v;
                if b > 0.0 {
                    let a = (2.0 - 2.0 * ki[t]).max(TAU);
                    let obj = -(b * b) / a;
                    if obj < best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        if gmax - gmin < params.tol || i == usize::MAX || j == usize::MAX {
            break;
        }
        if iterations == params.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                gap: gmax - gmin,
            });
        }
        iterations += 1;

        let ki = ki.expect("i selected");
        let kj = kernel.row(j);
        let (ai, aj) = (alpha[i], alpha[j]);
        if s[i] != s[j] {
            let quad = (2.0 - 2.0 * ki[j]).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (2.0 - 2.0 * ki[j]).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += s[t] * (s[i] * ki[t] * di + s[j] * kj[t] * dj);
        }
    }

    // bias from free vectors, else the midpoint of the feasible interval
    let (mut sum, mut free) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = s[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            sum += yg;
            free += 1;
        } else if (alpha[t] >= c) == (s[t] > 0.0) {
            lb = lb.max(yg);
        } else {
            ub = ub.min(yg);
        }
    }
    let rho = if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    };

    let mut model = SvmModel {
        support_vectors: Vec::new(),
        alphas: Vec::new(),
        signs: Vec::new(),
        bias: -rho,
        sigma: params.sigma,
        c,
        iterations,
    };
    for t in 0..n {
        if alpha[t] > 0.0 {
            model.support_vectors.push(x[t].to_vec());
            model.alphas.push(alpha[t]);
            model.signs.push(s[t]);
        }
    }
    Ok(model)
}

impl SvmModel {
    pub fn decision(&self, q: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.alphas)
            .zip(&self.signs)
            .map(|((sv, a), s)| a * s * rbf(sv, q, self.sigma))
            .sum::<f64>()
            + self.bias
    }

    /// `sum_i alpha_i y_i`, zero at a feasible dual point.
    pub fn dual_balance(&self) -> f64 {
        self.alphas.iter().zip(&self.signs).map(|(a, s)| a * s).sum()
    }
}

/// Class 1 when the decision value is non-negative.
pub fn svm_predict(model: &SvmModel, q: &[f64]) -> u8 {
    u8::from(model.decision(q) >= 0.0)
}

/// Exhaustive search over `cs x sigmas` by validation accuracy. Ties go to the
/// smaller C, then the larger sigma.
pub fn grid_search(
    train: &[&[f64]],
    train_y: &[u8],
    valid: &[&[f64]],
    valid_y: &[u8],
    cs: &[f64],
    sigmas: &[f64],
) -> Result<(SvmParams, f64)> {
    if cs.is_empty() || sigmas.is_empty() {
        return Err(Error::invalid("empty parameter grid"));
    }
    if valid.is_empty() || valid.len() != valid_y.len() {
        return Err(Error::invalid("validation set is empty or mislabeled"));
    }
    let mut grid: Vec<(f64, f64)> = cs
        .iter()
        .flat_map(|&c| sigmas.iter().map(move |&s| (c, s)))
        .collect();
    grid.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    grid.dedup();
    let mut best: Option<(SvmParams, f64)> = None;
    for (c, sigma) in grid {
        let params = SvmParams::new(c, sigma);
        let model = svm_train(train, train_y, &params)?;
        let correct = valid
            .iter()
            .zip(valid_y)
            .filter(|(q, &l)| svm_predict(&model, q) == l)
            .count();
        let acc = correct as f64 / valid.len() as f64;
        if best.as_ref().is_none_or(|(_, b)| acc > *b) {
            best = Some((params, acc));
        }
    }
    Ok(best.expect("grid is non-empty"))
}
