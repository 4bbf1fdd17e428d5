//! Naive reference implementations shared by the integration tests and the
//! acceptance suite. Each one follows the textbook definition directly and
//! shares no code with the library beyond its image containers.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vistim_core::imaging::{ForegroundMask, GrayImage, RasterImage};
use vistim_core::texture::MappingKind;

// ---------------------------------------------------------------- images

pub fn random_rgb(rng: &mut impl Rng, w: u32, h: u32) -> RasterImage {
    match rng.random_range(0..3) {
        0 => RasterImage::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()]),
        // few gray levels so neighbours tie with the centre
        1 => {
            let levels = [0u8, 64, 128, 255];
            RasterImage::from_fn(w, h, |_, _| {
                let v = levels[rng.random_range(0..levels.len())];
                [v, v, v]
            })
        }
        _ => {
            let (fx, fy) = (rng.random_range(0.05..0.6f64), rng.random_range(0.05..0.6f64));
            RasterImage::from_fn(w, h, |x, y| {
                let v = 127.5 + 120.0 * (fx * x as f64).sin() * (fy * y as f64).cos();
                let v = v as u8;
                [v, v.saturating_add(rng.random_range(0..3)), v]
            })
        }
    }
}

pub fn random_mask(rng: &mut impl Rng, w: u32, h: u32) -> ForegroundMask {
    match rng.random_range(0..3) {
        0 => ForegroundMask::full(w, h),
        1 => {
            let (cx, cy) = (rng.random_range(0..w) as f64, rng.random_range(0..h) as f64);
            let r = rng.random_range(4.0..w as f64);
            ForegroundMask::from_fn(w, h, |x, y| {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                dx * dx + dy * dy <= r * r
            })
        }
        _ => ForegroundMask::from_fn(w, h, |_, _| rng.random_bool(0.7)),
    }
}

/// Gray image whose values are multiples of 1/256, so that power-of-two
/// gains and dyadic offsets are exact in `f32`.
pub fn dyadic_gray(rng: &mut impl Rng, w: u32, h: u32) -> GrayImage {
    let smooth = rng.random_bool(0.5);
    let (fx, fy) = (rng.random_range(0.05..0.5f64), rng.random_range(0.05..0.5f64));
    GrayImage::from_fn(w, h, |x, y| {
        let level = if smooth {
            (128.0 + 100.0 * (fx * x as f64).sin() * (fy * y as f64).cos()).round() as u32
        } else {
            rng.random_range(0..256u32)
        };
        level as f32 / 256.0
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- LBP

fn bit(code: u32, i: u32) -> u32 {
    (code >> i) & 1
}

pub fn uniformity(code: u32, p: u32) -> u32 {
    (0..p).filter(|&i| bit(code, i) != bit(code, (i + 1) % p)).count() as u32
}

pub fn smallest_rotation(code: u32, p: u32) -> u32 {
    let bits: Vec<u32> = (0..p).map(|i| bit(code, i)).collect();
    (0..p)
        .map(|r| (0..p).fold(0u32, |acc, i| acc | bits[((i + r) % p) as usize] << i))
        .min()
        .unwrap()
}

/// Code-to-bin table built from the definitions: uniform codes in ascending
/// order then one shared bin; rotation classes in order of their smallest
/// member; popcount of uniform codes then one shared bin.
pub fn naive_mapping(p: u32, kind: MappingKind) -> (Vec<u32>, usize) {
    let n = 1u32 << p;
    match kind {
        MappingKind::Uniform => {
            let uniform: Vec<u32> = (0..n).filter(|&c| uniformity(c, p) <= 2).collect();
            let other = uniform.len() as u32;
            let table = (0..n)
                .map(|c| uniform.binary_search(&c).map(|i| i as u32).unwrap_or(other))
                .collect();
            (table, uniform.len() + 1)
        }
        MappingKind::RotationInvariant => {
            let reps: Vec<u32> = (0..n)
                .map(|c| smallest_rotation(c, p))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let table = (0..n)
                .map(|c| reps.binary_search(&smallest_rotation(c, p)).unwrap() as u32)
                .collect();
            (table, reps.len())
        }
        MappingKind::RotationInvariantUniform => {
            let table = (0..n)
                .map(|c| if uniformity(c, p) <= 2 { c.count_ones() } else { p + 1 })
                .collect();
            (table, p as usize + 2)
        }
    }
}

pub fn cached_mapping(p: u32, kind: MappingKind) -> &'static (Vec<u32>, usize) {
    static CACHE: [OnceLock<(Vec<u32>, usize)>; 6] = [const { OnceLock::new() }; 6];
    let slot = match kind {
        MappingKind::Uniform => 0,
        MappingKind::RotationInvariant => 1,
        MappingKind::RotationInvariantUniform => 2,
    } + if p == 16 { 3 } else { 0 };
    assert!(p == 8 || p == 16);
    CACHE[slot].get_or_init(|| naive_mapping(p, kind))
}

/// Neighbour `k` at `(x + R cos a, y - R sin a)`, `a = 2 pi k / P`, sampled
/// bilinearly on differences from the centre and thresholded at zero.
pub fn naive_code(g: &GrayImage, x: u32, y: u32, p: u32, r: u32) -> u32 {
    let c = g.get(x, y);
    let mut code = 0;
    for k in 0..p {
        let a = 2.0 * std::f64::consts::PI * k as f64 / p as f64;
        let mut sx = r as f64 * a.cos();
        let mut sy = -(r as f64) * a.sin();
        if (sx - sx.round()).abs() < 1e-9 {
            sx = sx.round();
        }
        if (sy - sy.round()).abs() < 1e-9 {
            sy = sy.round();
        }
        let (ix, iy) = (sx.floor(), sy.floor());
        let (tx, ty) = ((sx - ix) as f32, (sy - iy) as f32);
        let px = (x as i64 + ix as i64) as u32;
        let py = (y as i64 + iy as i64) as u32;
        let px1 = px + (tx != 0.0) as u32;
        let py1 = py + (ty != 0.0) as u32;
        let v00 = g.get(px, py) - c;
        let v10 = g.get(px1, py) - c;
        let v01 = g.get(px, py1) - c;
        let v11 = g.get(px1, py1) - c;
        let upper = v00 + tx * (v10 - v00);
        let lower = v01 + tx * (v11 - v01);
        if upper + ty * (lower - upper) >= 0.0 {
            code |= 1 << k;
        }
    }
    code
}

fn inside(g: &GrayImage, x: i64, y: i64, r: i64) -> bool {
    x - r >= 0 && y - r >= 0 && x + r < g.width() as i64 && y + r < g.height() as i64
}

fn l1(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect()
}

pub fn naive_histogram(g: &GrayImage, m: &ForegroundMask, p: u32, r: u32, kind: MappingKind) -> Vec<f64> {
    let (table, bins) = cached_mapping(p, kind);
    let mut counts = vec![0u64; *bins];
    for y in 0..g.height() {
        for x in 0..g.width() {
            if m.get(x, y) && inside(g, x as i64, y as i64, r as i64) {
                counts[table[naive_code(g, x, y, p, r) as usize] as usize] += 1;
            }
        }
    }
    l1(&counts)
}

pub fn naive_mslbp(g: &GrayImage, m: &ForegroundMask) -> Vec<f64> {
    let mut out = naive_histogram(g, m, 8, 1, MappingKind::Uniform);
    out.extend(naive_histogram(g, m, 16, 2, MappingKind::Uniform));
    out
}

pub fn naive_prico(g: &GrayImage, m: &ForegroundMask, offsets: &[u32]) -> Vec<f64> {
    let (u2, _) = cached_mapping(8, MappingKind::Uniform);
    let (riu2, _) = cached_mapping(8, MappingKind::RotationInvariantUniform);
    let mut out = Vec::new();
    for &d in offsets {
        let mut counts = vec![0u64; 59 * 10];
        for y in 0..g.height() {
            for x in 0..g.width() {
                if !m.get(x, y) || !inside(g, x as i64, y as i64, 1) {
                    continue;
                }
                let gx = (g.get(x + 1, y) - g.get(x - 1, y)) * 0.5;
                let gy = (g.get(x, y + 1) - g.get(x, y - 1)) * 0.5;
                let theta = if (gx * gx + gy * gy).sqrt() < 1e-6 {
                    0.0
                } else {
                    (gy as f64).atan2(gx as f64)
                };
                let qx = x as i64 + (d as f64 * theta.cos()).round() as i64;
                let qy = y as i64 + (d as f64 * theta.sin()).round() as i64;
                if !inside(g, qx, qy, 1) {
                    continue;
                }
                let outer = u2[naive_code(g, qx as u32, qy as u32, 8, 1) as usize];
                let inner = riu2[naive_code(g, x, y, 8, 1) as usize];
                counts[(outer * 10 + inner) as usize] += 1;
            }
        }
        out.extend(l1(&counts));
    }
    out
}

// ---------------------------------------------------------------- SIFT

/// Double-precision SIFT of the `size` square centred on `(x, y)`.
pub fn reference_sift(g: &GrayImage, x: u32, y: u32, size: u32) -> Vec<f64> {
    let (w, h) = (g.width() as i64, g.height() as i64);
    let px = |x: i64, y: i64| g.get(x.clamp(0, w - 1) as u32, y.clamp(0, h - 1) as u32) as f64;
    let left = x as f64 - (size / 2) as f64;
    let top = y as f64 - (size / 2) as f64;
    let cell = size as f64 / 4.0;
    let sigma = size as f64 / 2.0;
    let mut hist = vec![0.0f64; 128];
    for yy in 0..h {
        for xx in 0..w {
            let (cx, cy) = (xx as f64 + 0.5, yy as f64 + 0.5);
            if cx < left || cy < top || cx > left + size as f64 || cy > top + size as f64 {
                continue;
            }
            let gx = (px(xx + 1, yy) - px(xx - 1, yy)) / 2.0;
            let gy = (px(xx, yy + 1) - px(xx, yy - 1)) / 2.0;
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let theta = gy.atan2(gx).rem_euclid(2.0 * std::f64::consts::PI);
            let dx = cx - (left + sigma);
            let dy = cy - (top + sigma);
            let weight = mag * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            let u = (cx - left) / cell - 0.5;
            let v = (cy - top) / cell - 0.5;
            let o = theta / (2.0 * std::f64::consts::PI) * 8.0;
            for bv in 0..4i64 {
                let wv = 1.0 - (v - bv as f64).abs();
                if wv <= 0.0 {
                    continue;
                }
                for bu in 0..4i64 {
                    let wu = 1.0 - (u - bu as f64).abs();
                    if wu <= 0.0 {
                        continue;
                    }
                    for bo in 0..8i64 {
                        let mut dist = (o - bo as f64).abs();
                        dist = dist.min(8.0 - dist);
                        let wo = 1.0 - dist;
                        if wo > 0.0 {
                            hist[((bv * 4 + bu) * 8 + bo) as usize] += weight * wv * wu * wo;
                        }
                    }
                }
            }
        }
    }
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return hist;
    }
    hist.iter_mut().for_each(|v| *v = (*v / norm).min(0.2));
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    hist.iter_mut().for_each(|v| *v /= norm);
    hist
}

// ---------------------------------------------------------------- encoders

fn sq_dist(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &c)| (x as f64 - c).powi(2)).sum()
}

/// Nearest centre by exhaustive search; ties to the lower index.
pub fn nearest(x: &[f32], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    for k in 1..centers.len() {
        if sq_dist(x, &centers[k]) < sq_dist(x, &centers[best]) {
            best = k;
        }
    }
    best
}

pub fn brute_bow(rows: &[Vec<f32>], centers: &[Vec<f64>]) -> Vec<u64> {
    let mut counts = vec![0u64; centers.len()];
    for r in rows {
        counts[nearest(r, centers)] += 1;
    }
    counts
}

/// Word histogram plus a dense K x K symmetric pair table folded onto
/// `a <= b`, built from every ordered pair of distinct features.
pub fn brute_rcc(
    rows: &[Vec<f32>],
    positions: &[(u32, u32)],
    centers: &[Vec<f64>],
    cell: u32,
    radius: f64,
) -> (Vec<u64>, Vec<Vec<u64>>) {
    let k = centers.len();
    let words: Vec<usize> = rows.iter().map(|r| nearest(r, centers)).collect();
    let unary = brute_bow(rows, centers);
    let mut pairs = vec![vec![0u64; k]; k];
    for i in 0..rows.len() {
        for j in 0..rows.len() {
            if i == j {
                continue;
            }
            let (a, b) = (positions[i], positions[j]);
            let same_cell = a.0 / cell == b.0 / cell && a.1 / cell == b.1 / cell;
            let dx = a.0 as f64 - b.0 as f64;
            let dy = a.1 as f64 - b.1 as f64;
            if same_cell && (dx * dx + dy * dy).sqrt() <= radius {
                let (lo, hi) = (words[i].min(words[j]), words[i].max(words[j]));
                pairs[lo][hi] += 1;
            }
        }
    }
    // every unordered pair was visited twice
    for row in pairs.iter_mut() {
        for v in row.iter_mut() {
            *v /= 2;
        }
    }
    (unary, pairs)
}

pub fn inertia(points: &[Vec<f64>], centers: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .map(|p| {
            centers
                .iter()
                .map(|c| p.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Best inertia over `restarts` runs of Lloyd's algorithm from uniformly
/// drawn distinct points.
pub fn restart_kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let d = points[0].len();
    let mut best = f64::INFINITY;
    for _ in 0..restarts {
        let picks = rand::seq::index::sample(&mut rng, points.len(), k);
        let mut centers: Vec<Vec<f64>> = picks.iter().map(|i| points[i].clone()).collect();
        for _ in 0..200 {
            let mut sums = vec![vec![0.0; d]; k];
            let mut counts = vec![0usize; k];
            for p in points {
                let c = (0..k)
                    .min_by(|&a, &b| {
                        let da: f64 = p.iter().zip(&centers[a]).map(|(x, y)| (x - y).powi(2)).sum();
                        let db: f64 = p.iter().zip(&centers[b]).map(|(x, y)| (x - y).powi(2)).sum();
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                counts[c] += 1;
                sums[c].iter_mut().zip(p).for_each(|(s, v)| *s += v);
            }
            let mut moved = false;
            for c in 0..k {
                if counts[c] > 0 {
                    let next: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
                    moved |= next != centers[c];
                    centers[c] = next;
                }
            }
            if !moved {
                break;
            }
        }
        best = best.min(inertia(points, &centers));
    }
    best
}

// ---------------------------------------------------------------- SVM

/// `1/2 |w|^2 + C sum max(0, 1 - y (w.x + b))`.
pub fn primal(x: &[Vec<f64>], y: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    let reg: f64 = w.iter().map(|v| v * v).sum::<f64>() / 2.0;
    let loss: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| {
            let f: f64 = xi.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
            (1.0 - yi * f).max(0.0)
        })
        .sum();
    reg + c * loss
}

/// Projection onto `{0 <= a <= C, y.a = 0}` by bisection on the multiplier.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> { v.iter().zip(y).map(|(&vi, &yi)| (vi - mu * yi).clamp(0.0, c)).collect() };
    let residual = |a: &[f64]| -> f64 { a.iter().zip(y).map(|(ai, yi)| ai * yi).sum() };
    let (mut lo, mut hi) = (-1e6, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // the residual is non-increasing in mu
        if residual(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient on the dual, then the bias that minimises
/// the primal for the recovered `w` (a one-dimensional convex problem solved
/// by scanning the hinge breakpoints).
pub fn reference_svm(x: &[Vec<f64>], y: &[f64], c: f64, iterations: usize) -> (Vec<f64>, f64) {
    let n = x.len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| y[i] * y[j] * x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum::<f64>())
                .collect()
        })
        .collect();
    let lipschitz: f64 = (0..n).map(|i| q[i].iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lipschitz.max(1e-12);
    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    for _ in 0..iterations {
        let grad: Vec<f64> = (0..n).map(|i| q[i].iter().zip(&z).map(|(qij, zj)| qij * zj).sum::<f64>() - 1.0).collect();
        let v: Vec<f64> = z.iter().zip(&grad).map(|(zi, gi)| zi - step * gi).collect();
        let next = project(&v, y, c);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = next
            .iter()
            .zip(&a)
            .map(|(n1, a0)| n1 + (t - 1.0) / t_next * (n1 - a0))
            .collect();
        a = next;
        t = t_next;
    }
    let d = x[0].len();
    let mut w = vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            w[j] += a[i] * y[i] * x[i][j];
        }
    }
    let mut candidates: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| yi - xi.iter().zip(&w).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    candidates.push(0.0);
    let b = candidates
        .iter()
        .copied()
        .min_by(|&b1, &b2| primal(x, y, &w, b1, c).partial_cmp(&primal(x, y, &w, b2, c)).unwrap())
        .unwrap();
    (w, b)
}
