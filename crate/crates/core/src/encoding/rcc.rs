use std::collections::BTreeMap;

use super::{hellinger, Codebook, EncodedVector, EncoderKind};
use crate::descriptor::DescriptorSet;
use crate::error::{precondition, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RccParams {
    pub cell_size: u32,
    pub radius: f64,
}

impl Default for RccParams {
    fn default() -> Self {
        Self {
            cell_size: 32,
            radius: 16.0,
        }
    }
}

pub fn rcc_dimension(k: usize) -> usize {
    k + k * (k + 1) / 2
}

/// Position of the unordered word pair `(a, b)` in the upper triangle.
#[inline]
pub fn pair_index(a: usize, b: usize, k: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * k - (a * a - a) / 2 + (b - a)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RccCounts {
    pub unary: Vec<u64>,
    pub pairs: Vec<u64>,
}

/// Word histogram plus counts of co-occurring word pairs. Two distinct
/// features co-occur when they fall in the same grid cell and lie within
/// `radius` of each other.
pub fn rcc_counts(features: &DescriptorSet, codebook: &Codebook, params: RccParams) -> Result<RccCounts> {
    if params.cell_size == 0 || !(params.radius >= 0.0) {
        return Err(precondition("RCC needs a positive cell size and a non-negative radius"));
    }
    let k = codebook.k();
    let mut unary = vec![0u64; k];
    let mut pairs = vec![0u64; k * (k + 1) / 2];
    if features.is_empty() {
        return Ok(RccCounts { unary, pairs });
    }
    codebook.check_dimension(features.dimension())?;
    let words: Vec<usize> = features.rows().map(|r| codebook.assign(r)).collect();
    let mut cells: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for (i, &(x, y)) in features.positions().iter().enumerate() {
        unary[words[i]] += 1;
        cells
            .entry((x / params.cell_size, y / params.cell_size))
            .or_default()
            .push(i);
    }
    let r2 = params.radius * params.radius;
    let pos = features.positions();
    for members in cells.values() {
        for (n, &i) in members.iter().enumerate() {
            for &j in &members[n + 1..] {
                let dx = pos[i].0 as f64 - pos[j].0 as f64;
                let dy = pos[i].1 as f64 - pos[j].1 as f64;
                if dx * dx + dy * dy <= r2 {
                    pairs[pair_index(words[i], words[j], k)] += 1;
                }
            }
        }
    }
    Ok(RccCounts { unary, pairs })
}

pub fn rcc_encode(features: &DescriptorSet, codebook: &Codebook, params: RccParams) -> Result<EncodedVector> {
    let counts = rcc_counts(features, codebook, params)?;
    let mut values = hellinger(&counts.unary);
    values.extend(hellinger(&counts.pairs));
    Ok(EncodedVector {
        encoder: EncoderKind::Rcc,
        values,
        normalization: "blockwise l1+sqrt",
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_index_enumerates_triangle() {
        for k in [1usize, 2, 5, 9] {
            let mut next = 0;
            for a in 0..k {
                for b in a..k {
                    assert_eq!(pair_index(a, b, k), next);
                    assert_eq!(pair_index(b, a, k), next);
                    next += 1;
                }
            }
            assert_eq!(next, k * (k + 1) / 2);
        }
        assert_eq!(rcc_dimension(64), 2144);
    }

    #[test]
    fn single_word_mass() {
        let book = Codebook::from_centers(3, 1, vec![0.0, 5.0, 10.0], 0).unwrap();
        let f = DescriptorSet::new(1, vec![5.0; 4], vec![(0, 0), (4, 0), (0, 4), (40, 40)], vec![0; 4]).unwrap();
        let c = rcc_counts(&f, &book, RccParams::default()).unwrap();
        assert_eq!(c.unary, vec![0, 4, 0]);
        assert_eq!(c.pairs[pair_index(1, 1, 3)], 3);
        assert_eq!(c.pairs.iter().sum::<u64>(), 3);
        let e = rcc_encode(&f, &book, RccParams::default()).unwrap();
        assert_eq!(e.dimension(), rcc_dimension(3));
        assert_eq!(e.values[3 + pair_index(1, 1, 3)], 1.0);
    }
}
