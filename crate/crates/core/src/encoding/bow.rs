use super::{hellinger, Codebook, EncodedVector, EncoderKind};
use crate::descriptor::DescriptorSet;
use crate::error::Result;

/// Hard-assignment word counts.
pub fn bow_counts(features: &DescriptorSet, codebook: &Codebook) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; codebook.k()];
    if features.is_empty() {
        return Ok(counts);
    }
    codebook.check_dimension(features.dimension())?;
    for row in features.rows() {
        counts[codebook.assign(row)] += 1;
    }
    Ok(counts)
}

pub fn bow_encode(features: &DescriptorSet, codebook: &Codebook) -> Result<EncodedVector> {
    Ok(EncodedVector {
        encoder: EncoderKind::Bow,
        values: hellinger(&bow_counts(features, codebook)?),
        normalization: "l1+sqrt",
    })
}
