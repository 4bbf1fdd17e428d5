use super::{EncodedVector, EncoderKind, GaussianMixture};
use crate::descriptor::DescriptorSet;
use crate::error::{contract, Result};

/// Unnormalised Fisher vector: mean gradients for all components, then
/// variance gradients, each `K * D` long.
pub fn ifv_statistics(features: &DescriptorSet, gmm: &GaussianMixture) -> Result<Vec<f64>> {
    let k = gmm.k();
    let d = gmm.dimension();
    let mut out = vec![0.0; 2 * k * d];
    if features.is_empty() {
        return Ok(out);
    }
    if features.dimension() != d {
        return Err(contract(format!(
            "features of dimension {} against a mixture of dimension {d}",
            features.dimension()
        )));
    }
    let norms = gmm.cached_log_norms();
    let stddev: Vec<f64> = gmm.variances().iter().map(|v| v.sqrt()).collect();
    let mut post = vec![0.0; k];
    let (first, second) = out.split_at_mut(k * d);
    for x in features.rows() {
        gmm.posteriors_with(x, &norms, &mut post);
        for (c, &g) in post.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let mean = gmm.mean(c);
            for j in 0..d {
                let z = (x[j] as f64 - mean[j]) / stddev[c * d + j];
                first[c * d + j] += g * z;
                second[c * d + j] += g * (z * z - 1.0);
            }
        }
    }
    let n = features.len() as f64;
    for c in 0..k {
        let w = gmm.weights()[c];
        let s1 = 1.0 / (n * w.sqrt());
        let s2 = 1.0 / (n * (2.0 * w).sqrt());
        first[c * d..(c + 1) * d].iter_mut().for_each(|v| *v *= s1);
        second[c * d..(c + 1) * d].iter_mut().for_each(|v| *v *= s2);
    }
    Ok(out)
}

/// Fisher vector with signed square root and L2 normalisation.
pub fn ifv_encode(features: &DescriptorSet, gmm: &GaussianMixture) -> Result<EncodedVector> {
    let mut values = ifv_statistics(features, gmm)?;
    for v in values.iter_mut() {
        *v = v.signum() * v.abs().sqrt();
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(EncodedVector {
        encoder: EncoderKind::Ifv,
        values,
        normalization: "signed-sqrt+l2",
    })
}
