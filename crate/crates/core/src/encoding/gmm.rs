use rayon::prelude::*;

use super::{kmeans_train, FeatureMatrix, KMeansConfig};
use crate::error::{contract, precondition, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const MIN_WEIGHT: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Absolute variance floor; `None` uses 1e-6 times the mean per-dimension
    /// data variance.
    pub var_floor: Option<f64>,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-5,
            var_floor: None,
        }
    }
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    k: usize,
    dimension: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    pub var_floor: f64,
    /// Mean log-likelihood per sample, one value per E-step.
    pub log_likelihood: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(
        k: usize,
        dimension: usize,
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
    ) -> Result<Self> {
        if k == 0 || dimension == 0 {
            return Err(contract("mixture needs K >= 1 and D >= 1"));
        }
        if weights.len() != k || means.len() != k * dimension || variances.len() != k * dimension {
            return Err(contract("mixture parameter lengths disagree with K and D"));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w > 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(contract("mixture weights must be positive and sum to 1"));
        }
        if means.iter().any(|m| !m.is_finite()) || variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(contract("mixture means must be finite and variances positive"));
        }
        let var_floor = variances.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Self {
            k,
            dimension,
            weights,
            means,
            variances,
            var_floor,
            log_likelihood: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dimension..(k + 1) * self.dimension]
    }

    pub fn variance(&self, k: usize) -> &[f64] {
        &self.variances[k * self.dimension..(k + 1) * self.dimension]
    }

    fn log_norms(&self) -> Vec<f64> {
        (0..self.k)
            .map(|k| {
                let log_det: f64 = self.variance(k).iter().map(|v| v.ln()).sum();
                self.weights[k].ln() - 0.5 * (self.dimension as f64 * LN_2PI + log_det)
            })
            .collect()
    }

    /// Writes posterior responsibilities for `x` into `out` and returns
    /// `log p(x)`.
    pub(crate) fn posteriors_with(&self, x: &[f32], log_norms: &[f64], out: &mut [f64]) -> f64 {
        let d = self.dimension;
        for k in 0..self.k {
            let mean = &self.means[k * d..(k + 1) * d];
            let var = &self.variances[k * d..(k + 1) * d];
            let mut q = 0.0;
            for j in 0..d {
                let r = x[j] as f64 - mean[j];
                q += r * r / var[j];
            }
            out[k] = log_norms[k] - 0.5 * q;
        }
        let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in out.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in out.iter_mut() {
            *v /= sum;
        }
        debug_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        max + sum.ln()
    }

    /// Responsibilities of every component for `x`.
    pub fn posteriors(&self, x: &[f32]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        self.posteriors_with(x, &self.log_norms(), &mut out);
        out
    }

    pub(crate) fn cached_log_norms(&self) -> Vec<f64> {
        self.log_norms()
    }

    pub fn log_density(&self, x: &[f32]) -> f64 {
        let mut out = vec![0.0; self.k];
        self.posteriors_with(x, &self.log_norms(), &mut out)
    }
}

struct Stats {
    ll: f64,
    nk: Vec<f64>,
    sx: Vec<f64>,
    sxx: Vec<f64>,
}

fn e_step(gmm: &GaussianMixture, features: &FeatureMatrix) -> Stats {
    let k = gmm.k;
    let d = gmm.dimension;
    let norms = gmm.log_norms();
    // Fixed chunking keeps the reduction order independent of thread count.
    const CHUNK: usize = 1024;
    let partial: Vec<Stats> = (0..features.rows().div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut s = Stats {
                ll: 0.0,
                nk: vec![0.0; k],
                sx: vec![0.0; k * d],
                sxx: vec![0.0; k * d],
            };
            let mut post = vec![0.0; k];
            let end = ((c + 1) * CHUNK).min(features.rows());
            for i in c * CHUNK..end {
                let x = features.row(i);
                s.ll += gmm.posteriors_with(x, &norms, &mut post);
                for (kk, &g) in post.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    s.nk[kk] += g;
                    for j in 0..d {
                        let v = x[j] as f64;
                        s.sx[kk * d + j] += g * v;
                        s.sxx[kk * d + j] += g * v * v;
                    }
                }
            }
            s
        })
        .collect();
    let mut total = Stats {
        ll: 0.0,
        nk: vec![0.0; k],
        sx: vec![0.0; k * d],
        sxx: vec![0.0; k * d],
    };
    for p in partial {
        total.ll += p.ll;
        total.nk.iter_mut().zip(&p.nk).for_each(|(a, b)| *a += b);
        total.sx.iter_mut().zip(&p.sx).for_each(|(a, b)| *a += b);
        total.sxx.iter_mut().zip(&p.sxx).for_each(|(a, b)| *a += b);
    }
    total
}

fn m_step(gmm: &mut GaussianMixture, stats: &Stats, m: usize) {
    let d = gmm.dimension;
    for k in 0..gmm.k {
        let nk = stats.nk[k];
        if nk <= 0.0 {
            // A component that lost all mass keeps its shape and a vanishing weight.
            gmm.weights[k] = MIN_WEIGHT;
            continue;
        }
        gmm.weights[k] = (nk / m as f64).max(MIN_WEIGHT);
        for j in 0..d {
            let mean = stats.sx[k * d + j] / nk;
            let var = stats.sxx[k * d + j] / nk - mean * mean;
            gmm.means[k * d + j] = mean;
            gmm.variances[k * d + j] = var.max(gmm.var_floor);
        }
    }
    let total: f64 = gmm.weights.iter().sum();
    gmm.weights.iter_mut().for_each(|w| *w /= total);
}

fn data_variance(features: &FeatureMatrix) -> f64 {
    let m = features.rows() as f64;
    let d = features.cols();
    let mut mean = vec![0.0f64; d];
    for i in 0..features.rows() {
        for (a, &x) in mean.iter_mut().zip(features.row(i)) {
            *a += x as f64;
        }
    }
    mean.iter_mut().for_each(|a| *a /= m);
    let mut var = 0.0;
    for i in 0..features.rows() {
        for (mu, &x) in mean.iter().zip(features.row(i)) {
            let r = x as f64 - mu;
            var += r * r;
        }
    }
    var / (m * d as f64)
}

/// EM for a diagonal mixture, initialised from k-means with the same seed.
pub fn gmm_train(
    features: &FeatureMatrix,
    k: usize,
    seed: u64,
    config: GmmConfig,
) -> Result<GaussianMixture> {
    let m = features.rows();
    let d = features.cols();
    if k == 0 || m < k {
        return Err(precondition(format!(
            "mixture fitting needs 1 <= K <= M, got K = {k}, M = {m}"
        )));
    }
    if config.max_iter == 0 || !(config.tol >= 0.0) {
        return Err(precondition("EM needs max_iter >= 1 and tol >= 0"));
    }
    let floor = match config.var_floor {
        Some(f) if f > 0.0 => f,
        Some(_) => return Err(precondition("variance floor must be positive")),
        None => (1e-6 * data_variance(features)).max(1e-12),
    };

    let book = kmeans_train(features, k, seed, KMeansConfig::default())?;
    let mut counts = vec![0usize; k];
    let mut sq = vec![0.0f64; k * d];
    for i in 0..m {
        let x = features.row(i);
        let c = book.assign(x);
        counts[c] += 1;
        for (j, &v) in x.iter().enumerate() {
            let r = v as f64 - book.center(c)[j];
            sq[c * d + j] += r * r;
        }
    }
    let weights: Vec<f64> = counts
        .iter()
        .map(|&c| (c as f64 / m as f64).max(MIN_WEIGHT))
        .collect();
    let wsum: f64 = weights.iter().sum();
    let weights = weights.into_iter().map(|w| w / wsum).collect();
    let variances = (0..k * d)
        .map(|i| {
            let c = counts[i / d];
            if c == 0 { floor.max(1.0) } else { (sq[i] / c as f64).max(floor) }
        })
        .collect();
    let mut gmm = GaussianMixture::new(k, d, weights, book.centers().to_vec(), variances)?;
    gmm.var_floor = floor;

    let mut history: Vec<f64> = Vec::new();
    loop {
        let stats = e_step(&gmm, features);
        let ll = stats.ll / m as f64;
        let converged = history
            .last()
            .is_some_and(|&prev| (ll - prev) <= config.tol * prev.abs().max(f64::MIN_POSITIVE));
        history.push(ll);
        if converged || history.len() > config.max_iter {
            break;
        }
        m_step(&mut gmm, &stats, m);
    }
    gmm.log_likelihood = history;
    Ok(gmm)
}
