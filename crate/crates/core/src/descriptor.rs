use crate::error::{contract, Result};

/// N local feature vectors with the lattice position and scale each was
/// sampled at. Image-level descriptors (texture histograms) are stored as a
/// single row at position (0, 0).
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    dimension: usize,
    vectors: Vec<f32>,
    positions: Vec<(u32, u32)>,
    scale_index: Vec<u32>,
}

impl DescriptorSet {
    pub fn empty(dimension: usize) -> Self {
        Self {
            dimension,
            vectors: Vec::new(),
            positions: Vec::new(),
            scale_index: Vec::new(),
        }
    }

    pub fn new(
        dimension: usize,
        vectors: Vec<f32>,
        positions: Vec<(u32, u32)>,
        scale_index: Vec<u32>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(contract("descriptor dimension must be positive"));
        }
        let n = positions.len();
        if scale_index.len() != n || vectors.len() != n * dimension {
            return Err(contract(format!(
                "descriptor set of dimension {dimension}: {} values, {n} positions, {} scales",
                vectors.len(),
                scale_index.len()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(contract("descriptor entries must be finite"));
        }
        Ok(Self {
            dimension,
            vectors,
            positions,
            scale_index,
        })
    }

    /// A one-row set holding an image-level vector.
    pub fn global(values: &[f64]) -> Self {
        let vectors = values.iter().map(|&v| v as f32).collect();
        Self::new(values.len(), vectors, vec![(0, 0)], vec![0]).expect("finite histogram")
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.vectors.chunks_exact(self.dimension)
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn positions(&self) -> &[(u32, u32)] {
        &self.positions
    }

    pub fn scale_index(&self) -> &[u32] {
        &self.scale_index
    }

    pub(crate) fn push(&mut self, row: &[f32], position: (u32, u32), scale: u32) {
        debug_assert_eq!(row.len(), self.dimension);
        self.vectors.extend_from_slice(row);
        self.positions.push(position);
        self.scale_index.push(scale);
    }
}
