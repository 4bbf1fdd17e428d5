//! Dense, upright SIFT descriptors.
//!
//! Each descriptor pools central-difference gradients of a square patch into
//! a 4x4 grid of 8-bin orientation histograms with trilinear interpolation
//! and a Gaussian window (sigma = half the patch side). The 128-vector is L2
//! normalised, clipped at 0.2 and renormalised.

use std::f32::consts::TAU;

use rayon::prelude::*;

use crate::descriptor::DescriptorSet;
use crate::error::Result;
use crate::imaging::{build_grid, patch_bounds, ForegroundMask, GrayImage};

pub const SIFT_DIMENSION: usize = 128;
pub const DEFAULT_STEP: u32 = 4;
pub const DEFAULT_PATCH_SIZES: [u32; 5] = [16, 24, 32, 40, 48];

const SPATIAL_BINS: usize = 4;
const ORIENTATION_BINS: usize = 8;
const CLIP: f32 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct SiftParams {
    pub step: u32,
    pub patch_sizes: Vec<u32>,
    pub coverage_threshold: f64,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            patch_sizes: DEFAULT_PATCH_SIZES.to_vec(),
            coverage_threshold: 0.5,
        }
    }
}

impl SiftParams {
    /// The first `count` default patch sizes (at most five).
    pub fn with_scale_count(step: u32, count: usize) -> Self {
        Self {
            step,
            patch_sizes: DEFAULT_PATCH_SIZES[..count.clamp(1, DEFAULT_PATCH_SIZES.len())].to_vec(),
            coverage_threshold: 0.5,
        }
    }
}

/// Per-pixel gradient magnitude and orientation in [0, 2pi).
struct GradientField {
    width: u32,
    magnitude: Vec<f32>,
    orientation: Vec<f32>,
}

impl GradientField {
    fn new(gray: &GrayImage) -> Self {
        let (w, h) = (gray.width(), gray.height());
        let mut magnitude = Vec::with_capacity(w as usize * h as usize);
        let mut orientation = Vec::with_capacity(w as usize * h as usize);
        for y in 0..h {
            for x in 0..w {
                let (gx, gy) = central_difference(gray, x, y);
                magnitude.push((gx * gx + gy * gy).sqrt());
                let mut theta = gy.atan2(gx);
                if theta < 0.0 {
                    theta += TAU;
                }
                if theta >= TAU {
                    theta = 0.0;
                }
                orientation.push(theta);
            }
        }
        Self {
            width: w,
            magnitude,
            orientation,
        }
    }

    #[inline]
    fn at(&self, x: u32, y: u32) -> (f32, f32) {
        let i = y as usize * self.width as usize + x as usize;
        (self.magnitude[i], self.orientation[i])
    }
}

/// Central differences with replicated borders.
#[inline]
pub(crate) fn central_difference(gray: &GrayImage, x: u32, y: u32) -> (f32, f32) {
    let (w, h) = (gray.width(), gray.height());
    let xl = x.saturating_sub(1);
    let xr = (x + 1).min(w - 1);
    let yu = y.saturating_sub(1);
    let yd = (y + 1).min(h - 1);
    let gx = (gray.get(xr, y) - gray.get(xl, y)) * 0.5;
    let gy = (gray.get(x, yd) - gray.get(x, yu)) * 0.5;
    (gx, gy)
}

fn describe(field: &GradientField, gray: &GrayImage, x: u32, y: u32, size: u32) -> [f32; 128] {
    let mut hist = [0f32; SIFT_DIMENSION];
    let (x0, y0, x1, y1) = patch_bounds(gray.width(), gray.height(), x, y, size);
    let left = x as f32 - (size / 2) as f32;
    let top = y as f32 - (size / 2) as f32;
    let bin_width = size as f32 / SPATIAL_BINS as f32;
    let centre_x = left + size as f32 * 0.5;
    let centre_y = top + size as f32 * 0.5;
    let sigma = size as f32 * 0.5;
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
    let per_radian = ORIENTATION_BINS as f32 / TAU;

    for py in y0..y1 {
        let cy = py as f32 + 0.5;
        let v = (cy - top) / bin_width - 0.5;
        let dy = cy - centre_y;
        for px in x0..x1 {
            let (mag, theta) = field.at(px, py);
            if mag == 0.0 {
                continue;
            }
            let cx = px as f32 + 0.5;
            let u = (cx - left) / bin_width - 0.5;
            let dx = cx - centre_x;
            let weight = mag * (-(dx * dx + dy * dy) * inv_two_sigma_sq).exp();
            let o = theta * per_radian;

            let (u0, fu) = (u.floor(), u - u.floor());
            let (v0, fv) = (v.floor(), v - v.floor());
            let (o0, fo) = (o.floor(), o - o.floor());
            for (bv, wv) in [(v0 as i32, 1.0 - fv), (v0 as i32 + 1, fv)] {
                if !(0..SPATIAL_BINS as i32).contains(&bv) || wv == 0.0 {
                    continue;
                }
                for (bu, wu) in [(u0 as i32, 1.0 - fu), (u0 as i32 + 1, fu)] {
                    if !(0..SPATIAL_BINS as i32).contains(&bu) || wu == 0.0 {
                        continue;
                    }
                    for (bo, wo) in [(o0 as i32, 1.0 - fo), (o0 as i32 + 1, fo)] {
                        if wo == 0.0 {
                            continue;
                        }
                        let bo = bo.rem_euclid(ORIENTATION_BINS as i32) as usize;
                        let idx = (bv as usize * SPATIAL_BINS + bu as usize) * ORIENTATION_BINS + bo;
                        hist[idx] += weight * wv * wu * wo;
                    }
                }
            }
        }
    }
    normalize_clip(&mut hist);
    hist
}

/// L2 normalise, clip at 0.2, renormalise. All-zero input stays zero.
pub(crate) fn normalize_clip(hist: &mut [f32]) {
    let norm = hist.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm == 0.0 {
        return;
    }
    for v in hist.iter_mut() {
        *v = (*v / norm).min(CLIP);
    }
    let norm = hist.iter().map(|v| v * v).sum::<f32>().sqrt();
    for v in hist.iter_mut() {
        *v /= norm;
    }
}

/// SIFT descriptor of the `patch_size` square centred on `center`.
pub fn sift_at(gray: &GrayImage, center: (u32, u32), patch_size: u32) -> [f32; 128] {
    let field = GradientField::new(gray);
    describe(&field, gray, center.0, center.1, patch_size.max(1))
}

/// Dense multi-scale SIFT over the foreground sampling grid. Rows are ordered
/// by `y`, then `x`, then scale.
pub fn dense_sift(
    gray: &GrayImage,
    mask: &ForegroundMask,
    params: &SiftParams,
) -> Result<DescriptorSet> {
    mask.ensure_matches(gray.width(), gray.height())?;
    let grid = build_grid(
        mask,
        params.step,
        &params.patch_sizes,
        params.coverage_threshold,
    )?;
    let mut set = DescriptorSet::empty(SIFT_DIMENSION);
    if grid.keypoints.is_empty() {
        return Ok(set);
    }
    let field = GradientField::new(gray);
    let rows: Vec<[f32; 128]> = grid
        .keypoints
        .par_iter()
        .map(|k| describe(&field, gray, k.x, k.y, grid.scales[k.scale as usize]))
        .collect();
    for (k, row) in grid.keypoints.iter().zip(&rows) {
        set.push(row, (k.x, k.y), k.scale);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Straight-line reference of the pooling formula, one pixel at a time.
    fn reference(gray: &GrayImage, x: u32, y: u32, size: u32) -> Vec<f32> {
        let mut h = vec![0f32; 128];
        let half = (size / 2) as i64;
        let left = x as f32 - half as f32;
        let top = y as f32 - half as f32;
        let bw = size as f32 / 4.0;
        let sigma = size as f32 / 2.0;
        for py in (y as i64 - half)..(y as i64 - half + size as i64) {
            for px in (x as i64 - half)..(x as i64 - half + size as i64) {
                if px < 0 || py < 0 || px >= gray.width() as i64 || py >= gray.height() as i64 {
                    continue;
                }
                let (px, py) = (px as u32, py as u32);
                let at = |xx: i64, yy: i64| {
                    let xx = xx.clamp(0, gray.width() as i64 - 1) as u32;
                    let yy = yy.clamp(0, gray.height() as i64 - 1) as u32;
                    gray.get(xx, yy)
                };
                let gx = (at(px as i64 + 1, py as i64) - at(px as i64 - 1, py as i64)) / 2.0;
                let gy = (at(px as i64, py as i64 + 1) - at(px as i64, py as i64 - 1)) / 2.0;
                let m = (gx * gx + gy * gy).sqrt();
                if m == 0.0 {
                    continue;
                }
                let mut th = gy.atan2(gx);
                if th < 0.0 {
                    th += TAU;
                }
                let o = th / TAU * 8.0;
                let u = (px as f32 + 0.5 - left) / bw - 0.5;
                let v = (py as f32 + 0.5 - top) / bw - 0.5;
                let dx = px as f32 + 0.5 - (left + size as f32 / 2.0);
                let dy = py as f32 + 0.5 - (top + size as f32 / 2.0);
                let g = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                for bv in 0..4i32 {
                    let wv = (1.0 - (v - bv as f32).abs()).max(0.0);
                    for bu in 0..4i32 {
                        let wu = (1.0 - (u - bu as f32).abs()).max(0.0);
                        for bo in 0..8i32 {
                            let mut d = (o - bo as f32).abs();
                            d = d.min(8.0 - d);
                            let wo = (1.0 - d).max(0.0);
                            h[((bv * 4 + bu) * 8 + bo) as usize] += m * g * wv * wu * wo;
                        }
                    }
                }
            }
        }
        let n: f32 = h.iter().map(|v| v * v).sum::<f32>().sqrt();
        if n == 0.0 {
            return h;
        }
        for v in h.iter_mut() {
            *v = (*v / n).min(0.2);
        }
        let n: f32 = h.iter().map(|v| v * v).sum::<f32>().sqrt();
        h.iter().map(|v| v / n).collect()
    }

    #[test]
    fn constant_patch_is_zero() {
        let g = GrayImage::from_fn(32, 32, |_, _| 0.37);
        let d = sift_at(&g, (16, 16), 16);
        assert_eq!(d.len(), 128);
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_step_edge_uses_horizontal_bins() {
        let g = GrayImage::from_fn(40, 40, |x, _| if x < 20 { 0.2 } else { 0.8 });
        let d = sift_at(&g, (20, 20), 16);
        let r = reference(&g, 20, 20, 16);
        for (i, (&a, &b)) in d.iter().zip(&r).enumerate() {
            assert!((a - b).abs() < 1e-5, "bin {i}: {a} vs {b}");
            if i % 8 != 0 && i % 8 != 4 {
                assert_eq!(a, 0.0, "bin {i} should be empty");
            }
        }
        assert!(d.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn matches_reference_on_random_patches() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let g = GrayImage::from_fn(30, 30, |_, _| rng.random::<f32>());
            let (x, y) = (rng.random_range(0..30), rng.random_range(0..30));
            let size = [8, 12, 16][rng.random_range(0..3)];
            let d = sift_at(&g, (x, y), size);
            let r = reference(&g, x, y, size);
            for (a, b) in d.iter().zip(&r) {
                assert!((a - b).abs() < 1e-4, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn dense_counts_and_empty_mask() {
        let g = GrayImage::from_fn(32, 32, |x, y| ((x * 7 + y * 3) % 11) as f32 / 11.0);
        let full = ForegroundMask::full(32, 32);
        let params = SiftParams {
            step: 4,
            patch_sizes: vec![16],
            coverage_threshold: 0.5,
        };
        assert_eq!(dense_sift(&g, &full, &params).unwrap().len(), 64);

        let empty = ForegroundMask::new(32, 32, vec![false; 1024]).unwrap();
        let set = dense_sift(&g, &empty, &SiftParams::default()).unwrap();
        assert!(set.is_empty());
        assert_eq!(set.dimension(), 128);
    }

    #[test]
    fn row_order_and_scale_permutation() {
        let g = GrayImage::from_fn(24, 24, |x, y| ((x * x + 3 * y) % 17) as f32 / 17.0);
        let mask = ForegroundMask::from_fn(24, 24, |x, y| x + y > 6);
        let a = dense_sift(
            &g,
            &mask,
            &SiftParams {
                step: 3,
                patch_sizes: vec![8, 12],
                coverage_threshold: 0.5,
            },
        )
        .unwrap();
        let b = dense_sift(
            &g,
            &mask,
            &SiftParams {
                step: 3,
                patch_sizes: vec![12, 8],
                coverage_threshold: 0.5,
            },
        )
        .unwrap();
        assert_eq!(a, b);
        let keys: Vec<_> = a
            .positions()
            .iter()
            .zip(a.scale_index())
            .map(|(&(x, y), &s)| (y, x, s))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn entries_bounded_and_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = GrayImage::from_fn(40, 40, |_, _| rng.random::<f32>());
        let set = dense_sift(&g, &ForegroundMask::full(40, 40), &SiftParams::with_scale_count(5, 2))
            .unwrap();
        for row in set.rows() {
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let n: f32 = row.iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((n - 1.0).abs() < 1e-5 || n == 0.0);
        }
    }

    #[test]
    fn non_dyadic_gain_changes_descriptors_only_by_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = GrayImage::from_fn(32, 32, |_, _| rng.random::<f32>() * 0.3);
        let scaled = g.map(|v| v * 3.0 + 0.1);
        let p = SiftParams::with_scale_count(4, 2);
        let mask = ForegroundMask::full(32, 32);
        let a = dense_sift(&g, &mask, &p).unwrap();
        let b = dense_sift(&scaled, &mask, &p).unwrap();
        for (x, y) in a.vectors().iter().zip(b.vectors()) {
            assert!((x - y).abs() < 1e-4);
        }
    }
}
