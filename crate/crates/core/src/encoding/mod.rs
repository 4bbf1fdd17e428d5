//! Codebook learning and image-level encoders.

mod bow;
mod gmm;
mod ifv;
mod kmeans;
mod matrix;
mod rcc;

pub use bow::{bow_counts, bow_encode};
pub use gmm::{gmm_train, GaussianMixture, GmmConfig};
pub use ifv::{ifv_encode, ifv_statistics};
pub use kmeans::{kmeans_train, Codebook, KMeansConfig};
pub use matrix::FeatureMatrix;
pub use rcc::{pair_index, rcc_counts, rcc_dimension, rcc_encode, RccCounts, RccParams};

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    Bow,
    Ifv,
    Rcc,
    LbpHist,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::Bow => "bow",
            EncoderKind::Ifv => "ifv",
            EncoderKind::Rcc => "rcc",
            EncoderKind::LbpHist => "lbp-hist",
        })
    }
}

/// Fixed-length image representation handed to the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedVector {
    pub encoder: EncoderKind,
    pub values: Vec<f64>,
    pub normalization: &'static str,
}

impl EncodedVector {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    /// Wraps an already normalised texture histogram, Hellinger-mapped.
    pub fn from_histogram(histogram: &[f64]) -> Self {
        Self {
            encoder: EncoderKind::LbpHist,
            values: histogram.iter().map(|v| v.max(0.0).sqrt()).collect(),
            normalization: "l1+sqrt",
        }
    }
}

/// L1 normalisation followed by an elementwise square root. Zero counts give
/// a zero vector.
pub fn hellinger(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts
        .iter()
        .map(|&c| (c as f64 / total as f64).sqrt())
        .collect()
}

#[inline]
pub(crate) fn squared_distance(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &c)| {
            let d = x as f64 - c;
            d * d
        })
        .sum()
}

/// Index of the closest row of `centers` (row-major, `dim` columns); ties go
/// to the lowest index.
pub(crate) fn nearest_center(x: &[f32], centers: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.chunks_exact(dim).enumerate() {
        let d = squared_distance(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}
