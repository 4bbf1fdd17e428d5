//! One-vs-all linear SVM.
//!
//! Each binary problem is solved in the dual with sequential minimal
//! optimisation, so the bias stays an explicit unregularised term. Training
//! stops once the primal-dual gap is within `tol * (1 + |primal|)`.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{contract, precondition, Result};

const TAU: f64 = 1e-12;
/// Above this many samples kernel rows are computed on demand instead of
/// holding the full Gram matrix.
const FULL_GRAM_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub c: f64,
    pub tol: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-4,
            max_epochs: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(precondition(format!("SVM C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0) {
            return Err(precondition(format!("SVM tol must be positive, got {}", self.tol)));
        }
        if self.max_epochs == 0 {
            return Err(precondition("SVM max_epochs must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainDiagnostics {
    /// Dual objective `1/2 a'Qa - sum(a)` at every epoch boundary.
    pub dual_objective: Vec<f64>,
    pub primal: f64,
    pub gap: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryLinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    /// Set when the training labels were all identical.
    pub degenerate: bool,
    pub diagnostics: TrainDiagnostics,
}

impl BinaryLinearModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiClassModel {
    pub classes: Vec<String>,
    pub models: Vec<BinaryLinearModel>,
    pub dimension: usize,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_matrix(x: &[Vec<f64>]) -> Result<usize> {
    let d = x
        .first()
        .map(|r| r.len())
        .ok_or_else(|| precondition("training needs at least one sample"))?;
    if x.iter().any(|r| r.len() != d) {
        return Err(contract("training rows differ in dimension"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(contract("training features must be finite"));
    }
    Ok(d)
}

enum Gram<'a> {
    Full(Vec<f64>),
    OnDemand(&'a [Vec<f64>]),
}

impl<'a> Gram<'a> {
    fn new(x: &'a [Vec<f64>]) -> Self {
        let n = x.len();
        if n > FULL_GRAM_LIMIT {
            return Gram::OnDemand(x);
        }
        let mut g = vec![0.0; n * n];
        g.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = dot(&x[i], &x[j]);
            }
        });
        Gram::Full(g)
    }

    fn n(&self) -> usize {
        match self {
            Gram::Full(g) => (g.len() as f64).sqrt().round() as usize,
            Gram::OnDemand(x) => x.len(),
        }
    }

    fn row<'b>(&'b self, i: usize, buf: &'b mut Vec<f64>) -> &'b [f64] {
        match self {
            Gram::Full(g) => {
                let n = self.n();
                &g[i * n..(i + 1) * n]
            }
            Gram::OnDemand(x) => {
                buf.clear();
                buf.extend(x.iter().map(|r| dot(&x[i], r)));
                buf
            }
        }
    }

    fn diag(&self, i: usize) -> f64 {
        match self {
            Gram::Full(g) => g[i * self.n() + i],
            Gram::OnDemand(x) => dot(&x[i], &x[i]),
        }
    }
}

fn primal(x: &[Vec<f64>], y: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    let hinge: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| (1.0 - yi * (dot(w, xi) + b)).max(0.0))
        .sum();
    0.5 * dot(w, w) + c * hinge
}

/// Bias minimising the hinge term for fixed `w`, nearest to `prefer`.
///
/// Each sample contributes a breakpoint at `y - score`; the slope of the
/// summed hinge rises by one at every breakpoint starting from `-n_pos`, so the
/// minimisers form the interval between the `n_pos`-th and next breakpoint.
fn best_bias(scores: &[f64], y: &[f64], prefer: f64) -> f64 {
    let mut points: Vec<f64> = scores.iter().zip(y).map(|(&s, &yi)| yi - s).collect();
    points.sort_by(f64::total_cmp);
    let n_pos = y.iter().filter(|&&v| v > 0.0).count();
    let lo = points[n_pos - 1];
    let hi = points[n_pos];
    prefer.clamp(lo, hi)
}

struct Solution {
    alpha: Vec<f64>,
    rho: f64,
    history: Vec<f64>,
    iterations: usize,
}

fn dual_value(alpha: &[f64], grad: &[f64]) -> f64 {
    0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
}

struct Solver<'g, 'x> {
    gram: &'g Gram<'x>,
    y: Vec<f64>,
    c: f64,
    alpha: Vec<f64>,
    grad: Vec<f64>,
    history: Vec<f64>,
    iterations: usize,
}

impl Solver<'_, '_> {
    fn up(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] < self.c) || (self.y[t] < 0.0 && self.alpha[t] > 0.0)
    }

    fn low(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] > 0.0) || (self.y[t] < 0.0 && self.alpha[t] < self.c)
    }

    /// Runs SMO until the maximal KKT violation is below `eps` or the
    /// iteration budget is spent. Returns false when out of budget.
    fn run(&mut self, eps: f64, budget: usize) -> bool {
        let n = self.y.len();
        let gram = self.gram;
        let mut buf_i = Vec::new();
        let mut buf_j = Vec::new();
        loop {
            let mut gmax = f64::NEG_INFINITY;
            let mut i = usize::MAX;
            for t in 0..n {
                if self.up(t) {
                    let v = -self.y[t] * self.grad[t];
                    if v > gmax {
                        gmax = v;
                        i = t;
                    }
                }
            }
            let mut gmin = f64::INFINITY;
            for t in 0..n {
                if self.low(t) {
                    gmin = gmin.min(-self.y[t] * self.grad[t]);
                }
            }
            if i == usize::MAX || gmax - gmin < eps {
                return true;
            }
            if self.iterations >= budget {
                return false;
            }
            let ki = gram.row(i, &mut buf_i).to_vec();
            let kii = ki[i];
            let mut j = usize::MAX;
            let mut best = f64::INFINITY;
            for t in 0..n {
                if !self.low(t) {
                    continue;
                }
                let b = gmax + self.y[t] * self.grad[t];
                if b > 0.0 {
                    let mut a = kii + gram.diag(t) - 2.0 * ki[t];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let obj = -(b * b) / a;
                    if obj < best {
                        best = obj;
                        j = t;
                    }
                }
            }
            if j == usize::MAX {
                return true;
            }
            let kj = gram.row(j, &mut buf_j);
            self.step(i, j, &ki, kj);
            self.iterations += 1;
            if self.iterations % n == 0 {
                self.history.push(dual_value(&self.alpha, &self.grad));
            }
        }
    }

    fn step(&mut self, i: usize, j: usize, ki: &[f64], kj: &[f64]) {
        let (yi, yj, c) = (self.y[i], self.y[j], self.c);
        let qij = yi * yj * ki[j];
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if yi != yj {
            let mut quad = ki[i] + kj[j] + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = ki[i] + kj[j] - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..self.y.len() {
            self.grad[t] += self.y[t] * (yi * ki[t] * di + yj * kj[t] * dj);
        }
    }

    fn rho(&self) -> f64 {
        let mut free_sum = 0.0;
        let mut free = 0usize;
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        for t in 0..self.y.len() {
            let yg = self.y[t] * self.grad[t];
            if self.alpha[t] > 0.0 && self.alpha[t] < self.c {
                free += 1;
                free_sum += yg;
            } else {
                let at_upper = self.alpha[t] >= self.c;
                if (self.y[t] > 0.0) == at_upper {
                    lb = lb.max(yg);
                } else {
                    ub = ub.min(yg);
                }
            }
        }
        if free > 0 {
            free_sum / free as f64
        } else {
            (ub + lb) / 2.0
        }
    }
}

fn solve(gram: &Gram<'_>, y: &[f64], c: f64, eps: f64, budget: usize, state: Option<Solution>) -> (Solution, bool) {
    let n = y.len();
    let mut solver = Solver {
        gram,
        y: y.to_vec(),
        c,
        alpha: vec![0.0; n],
        grad: vec![-1.0; n],
        history: vec![0.0],
        iterations: 0,
    };
    if let Some(s) = state {
        solver.alpha = s.alpha;
        solver.history = s.history;
        solver.iterations = s.iterations;
        let mut buf = Vec::new();
        solver.grad = vec![-1.0; n];
        for t in 0..n {
            if solver.alpha[t] != 0.0 {
                let kt = gram.row(t, &mut buf).to_vec();
                for s in 0..n {
                    solver.grad[s] += y[s] * y[t] * kt[s] * solver.alpha[t];
                }
            }
        }
    }
    let done = solver.run(eps, budget);
    let rho = solver.rho();
    if solver.iterations % n != 0 {
        solver.history.push(dual_value(&solver.alpha, &solver.grad));
    }
    (
        Solution {
            alpha: solver.alpha,
            rho,
            history: solver.history,
            iterations: solver.iterations,
        },
        done,
    )
}

fn train_with_gram(x: &[Vec<f64>], y: &[f64], gram: &Gram<'_>, config: &TrainConfig) -> BinaryLinearModel {
    let n = x.len();
    let d = x[0].len();
    let first = y[0];
    if y.iter().all(|&v| v == first) {
        return BinaryLinearModel {
            weights: vec![0.0; d],
            bias: first,
            c: config.c,
            degenerate: true,
            diagnostics: TrainDiagnostics::default(),
        };
    }
    let budget = config.max_epochs.saturating_mul(n);
    let mut eps = config.tol;
    let mut state = None;
    loop {
        let (sol, done) = solve(gram, y, config.c, eps, budget, state);
        let mut w = vec![0.0; d];
        for (t, &a) in sol.alpha.iter().enumerate() {
            if a != 0.0 {
                for (wj, xj) in w.iter_mut().zip(&x[t]) {
                    *wj += a * y[t] * xj;
                }
            }
        }
        let scores: Vec<f64> = x.iter().map(|xi| dot(&w, xi)).collect();
        let bias = best_bias(&scores, y, -sol.rho);
        let p = primal(x, y, &w, bias, config.c);
        let dual = -*sol.history.last().unwrap();
        let gap = p - dual;
        if gap <= config.tol * (1.0 + p.abs()) || !done || eps < 1e-12 {
            return BinaryLinearModel {
                weights: w,
                bias,
                c: config.c,
                degenerate: false,
                diagnostics: TrainDiagnostics {
                    dual_objective: sol.history.clone(),
                    primal: p,
                    gap,
                    iterations: sol.iterations,
                },
            };
        }
        eps /= 10.0;
        state = Some(sol);
    }
}

fn labels_to_signs(y: &[i8]) -> Result<Vec<f64>> {
    y.iter()
        .map(|&v| match v {
            1 => Ok(1.0),
            -1 => Ok(-1.0),
            other => Err(contract(format!("binary labels must be +1 or -1, got {other}"))),
        })
        .collect()
}

/// Minimises `1/2 |w|^2 + C sum hinge(y (w.x + b))`.
pub fn train_binary(x: &[Vec<f64>], y: &[i8], config: &TrainConfig) -> Result<BinaryLinearModel> {
    config.validate()?;
    check_matrix(x)?;
    if x.len() != y.len() {
        return Err(contract(format!("{} samples but {} labels", x.len(), y.len())));
    }
    let signs = labels_to_signs(y)?;
    let gram = Gram::new(x);
    Ok(train_with_gram(x, &signs, &gram, config))
}

/// One binary model per class in sorted label order.
pub fn train_ova<S: AsRef<str> + Sync>(x: &[Vec<f64>], labels: &[S], config: &TrainConfig) -> Result<MultiClassModel> {
    config.validate()?;
    let d = check_matrix(x)?;
    if x.len() != labels.len() {
        return Err(contract(format!("{} samples but {} labels", x.len(), labels.len())));
    }
    let classes: Vec<String> = labels
        .iter()
        .map(|l| l.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.len() < 2 {
        return Err(precondition(format!(
            "one-vs-all needs at least 2 classes, got {}",
            classes.len()
        )));
    }
    let gram = Gram::new(x);
    let models = classes
        .par_iter()
        .map(|class| {
            let y: Vec<f64> = labels
                .iter()
                .map(|l| if l.as_ref() == class { 1.0 } else { -1.0 })
                .collect();
            train_with_gram(x, &y, &gram, config)
        })
        .collect();
    Ok(MultiClassModel {
        classes,
        models,
        dimension: d,
    })
}

impl MultiClassModel {
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dimension {
            return Err(contract(format!(
                "sample of dimension {} against a model of dimension {}",
                x.len(),
                self.dimension
            )));
        }
        Ok(self.models.iter().map(|m| m.decision(x)).collect())
    }
}

/// Highest-scoring class; exact ties go to the earlier class.
pub fn predict<'m>(model: &'m MultiClassModel, x: &[f64]) -> Result<&'m str> {
    let scores = model.scores(x)?;
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    Ok(&model.classes[best])
}
