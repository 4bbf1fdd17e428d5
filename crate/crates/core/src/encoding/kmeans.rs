use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{nearest_center, squared_distance, FeatureMatrix};
use crate::error::{contract, precondition, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-4,
        }
    }
}

/// K centres learned by k-means.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    dimension: usize,
    centers: Vec<f64>,
    pub seed: u64,
    pub inertia: f64,
    /// Inertia after every assignment step.
    pub history: Vec<f64>,
}

impl Codebook {
    pub fn from_centers(k: usize, dimension: usize, centers: Vec<f64>, seed: u64) -> Result<Self> {
        if k == 0 || dimension == 0 || centers.len() != k * dimension {
            return Err(contract(format!(
                "codebook {k}x{dimension} with {} values",
                centers.len()
            )));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(contract("codebook centres must be finite"));
        }
        Ok(Self {
            k,
            dimension,
            centers,
            seed,
            inertia: f64::NAN,
            history: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn center(&self, k: usize) -> &[f64] {
        &self.centers[k * self.dimension..(k + 1) * self.dimension]
    }

    /// Nearest centre, ties to the lowest index.
    pub fn assign(&self, x: &[f32]) -> usize {
        nearest_center(x, &self.centers, self.dimension).0
    }

    pub(crate) fn check_dimension(&self, dimension: usize) -> Result<()> {
        if dimension != self.dimension {
            return Err(contract(format!(
                "features of dimension {dimension} against a codebook of dimension {}",
                self.dimension
            )));
        }
        Ok(())
    }
}

fn plus_plus(features: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let m = features.rows();
    let d = features.cols();
    let mut centers: Vec<f64> = Vec::with_capacity(k * d);
    let mut chosen = vec![false; m];
    let first = rng.random_range(0..m);
    chosen[first] = true;
    centers.extend(features.row(first).iter().map(|&v| v as f64));
    let mut dist: Vec<f64> = (0..m)
        .map(|i| squared_distance(features.row(i), &centers[..d]))
        .collect();
    for _ in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in dist.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| dist.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            chosen.iter().position(|&c| !c).unwrap()
        };
        chosen[pick] = true;
        let start = centers.len();
        centers.extend(features.row(pick).iter().map(|&v| v as f64));
        let c = &centers[start..];
        dist.par_iter_mut().enumerate().for_each(|(i, di)| {
            *di = di.min(squared_distance(features.row(i), c));
        });
    }
    centers
}

fn assign_all(features: &FeatureMatrix, centers: &[f64]) -> Vec<(usize, f64)> {
    let d = features.cols();
    (0..features.rows())
        .into_par_iter()
        .map(|i| nearest_center(features.row(i), centers, d))
        .collect()
}

/// k-means++ seeding followed by Lloyd iterations.
///
/// Stops when the relative inertia improvement drops below `tol` or after
/// `max_iter` assignment steps. A centre left without points is moved onto the
/// point farthest from its own centre.
pub fn kmeans_train(
    features: &FeatureMatrix,
    k: usize,
    seed: u64,
    config: KMeansConfig,
) -> Result<Codebook> {
    let m = features.rows();
    let d = features.cols();
    if k == 0 || m < k {
        return Err(precondition(format!(
            "k-means needs 1 <= K <= M, got K = {k}, M = {m}"
        )));
    }
    if config.max_iter == 0 || !(config.tol >= 0.0) {
        return Err(precondition("k-means needs max_iter >= 1 and tol >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus(features, k, &mut rng);
    let mut history = Vec::new();
    loop {
        let assignment = assign_all(features, &centers);
        let inertia: f64 = assignment.iter().map(|a| a.1).sum();
        let converged = match history.last() {
            Some(&prev) => prev <= 0.0 || (prev - inertia) / prev < config.tol,
            None => inertia == 0.0,
        };
        history.push(inertia);
        if converged || history.len() >= config.max_iter {
            break;
        }

        let mut sums = vec![0.0f64; k * d];
        let mut counts = vec![0usize; k];
        for (i, &(c, _)) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (s, &x) in sums[c * d..(c + 1) * d].iter_mut().zip(features.row(i)) {
                *s += x as f64;
            }
        }
        let mut taken = vec![false; m];
        for c in 0..k {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                for (dst, s) in centers[c * d..(c + 1) * d].iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                    *dst = s / n;
                }
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = assignment
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !taken[*i])
                    .fold(None::<(usize, f64)>, |best, (i, a)| match best {
                        Some((_, bd)) if bd >= a.1 => best,
                        _ => Some((i, a.1)),
                    })
                    .map(|(i, _)| i)
                    .expect("M >= K leaves a free point");
                taken[far] = true;
                for (dst, &x) in centers[c * d..(c + 1) * d].iter_mut().zip(features.row(far)) {
                    *dst = x as f64;
                }
            }
        }
    }
    let mut book = Codebook::from_centers(k, d, centers, seed)?;
    book.inertia = *history.last().unwrap();
    book.history = history;
    Ok(book)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn matrix(points: &[Vec<f32>]) -> FeatureMatrix {
        FeatureMatrix::from_rows(points).unwrap()
    }

    #[test]
    fn two_obvious_clusters() {
        let f = matrix(&[vec![0.0], vec![1.0], vec![10.0], vec![11.0]]);
        let book = kmeans_train(&f, 2, 5, KMeansConfig::default()).unwrap();
        let mut c = book.centers().to_vec();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.5, 10.5]);
        assert_eq!(book.inertia, 1.0);
    }

    #[test]
    fn k_equals_m_is_exact() {
        let pts: Vec<Vec<f32>> = (0..6).map(|i| vec![i as f32, (i * i) as f32]).collect();
        let book = kmeans_train(&matrix(&pts), 6, 1, KMeansConfig::default()).unwrap();
        assert_eq!(book.inertia, 0.0);
        let mut got: Vec<(i64, i64)> = (0..6)
            .map(|k| (book.center(k)[0] as i64, book.center(k)[1] as i64))
            .collect();
        got.sort();
        let want: Vec<(i64, i64)> = (0..6).map(|i| (i, i * i)).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn duplicate_points_do_not_break_seeding() {
        let pts = vec![vec![1.0f32, 1.0]; 5];
        let book = kmeans_train(&matrix(&pts), 3, 0, KMeansConfig::default()).unwrap();
        assert_eq!(book.inertia, 0.0);
    }

    #[test]
    fn too_few_points() {
        let f = matrix(&[vec![0.0]]);
        assert!(kmeans_train(&f, 2, 0, KMeansConfig::default()).is_err());
    }

    #[test]
    fn deterministic_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = Normal::new(0.0f32, 1.0).unwrap();
        let pts: Vec<Vec<f32>> = (0..300).map(|_| (0..3).map(|_| n.sample(&mut rng)).collect()).collect();
        let f = matrix(&pts);
        let a = kmeans_train(&f, 7, 3, KMeansConfig::default()).unwrap();
        let b = kmeans_train(&f, 7, 3, KMeansConfig::default()).unwrap();
        assert_eq!(a, b);
        for w in a.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
}
