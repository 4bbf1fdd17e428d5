use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::descriptor::DescriptorSet;
use crate::error::{contract, Result};

/// Row-major training matrix of local features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if cols == 0 || data.len() != rows * cols {
            return Err(contract(format!(
                "feature matrix {rows}x{cols} with {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(contract("feature matrix entries must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.as_ref().len() != cols {
                return Err(contract("feature rows differ in length"));
            }
            data.extend_from_slice(r.as_ref());
        }
        Self::new(rows.len(), cols, data)
    }

    /// Stacks descriptor sets; when `cap` is given and exceeded, keeps a
    /// seeded uniform subsample of rows in their original order.
    pub fn stack(sets: &[&DescriptorSet], cap: Option<usize>, seed: u64) -> Result<Self> {
        let cols = sets
            .first()
            .map(|s| s.dimension())
            .ok_or_else(|| contract("no descriptor sets to stack"))?;
        if sets.iter().any(|s| s.dimension() != cols) {
            return Err(contract("descriptor sets differ in dimension"));
        }
        let total: usize = sets.iter().map(|s| s.len()).sum();
        let rows: Vec<&[f32]> = sets.iter().flat_map(|s| s.rows()).collect();
        let keep: Vec<usize> = match cap {
            Some(cap) if total > cap => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut idx = sample(&mut rng, total, cap).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..total).collect(),
        };
        let mut data = Vec::with_capacity(keep.len() * cols);
        for i in keep.iter() {
            data.extend_from_slice(rows[*i]);
        }
        Self::new(keep.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}
