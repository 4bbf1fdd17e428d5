//! Local binary pattern texture histograms.
//!
//! Neighbour `k` of a `(P, R)` pattern is sampled at
//! `(x + R cos(2 pi k / P), y - R sin(2 pi k / P))` with bilinear
//! interpolation; bit `k` is set when the neighbour is at least as bright as
//! the centre. Only foreground pixels whose whole circle lies inside the image
//! contribute.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use crate::error::{precondition, Error, Result};
use crate::imaging::{ForegroundMask, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MappingKind {
    /// Uniform patterns (at most two circular transitions) keep their own bin.
    Uniform,
    /// Codes are identified with their minimal circular rotation.
    RotationInvariant,
    /// Uniform codes map to their popcount, everything else to one bin.
    RotationInvariantUniform,
}

impl MappingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MappingKind::Uniform => "u2",
            MappingKind::RotationInvariant => "ri",
            MappingKind::RotationInvariantUniform => "riu2",
        }
    }
}

impl FromStr for MappingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u2" => Ok(MappingKind::Uniform),
            "ri" => Ok(MappingKind::RotationInvariant),
            "riu2" => Ok(MappingKind::RotationInvariantUniform),
            other => Err(Error::Parse(format!("unknown LBP mapping `{other}`"))),
        }
    }
}

/// One of the six base LBP configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LbpSpec {
    pub neighbors: u32,
    pub radius: u32,
    pub mapping: MappingKind,
}

impl LbpSpec {
    pub fn new(neighbors: u32, radius: u32, mapping: MappingKind) -> Result<Self> {
        if !matches!((neighbors, radius), (8, 1) | (16, 2)) {
            return Err(precondition(format!(
                "LBP (P, R) must be (8, 1) or (16, 2), got ({neighbors}, {radius})"
            )));
        }
        Ok(Self {
            neighbors,
            radius,
            mapping,
        })
    }

    pub fn bins(&self) -> usize {
        mapping_table(self.neighbors, self.mapping).bins
    }

    pub fn all() -> [LbpSpec; 6] {
        let mut out = [LbpSpec {
            neighbors: 8,
            radius: 1,
            mapping: MappingKind::Uniform,
        }; 6];
        let mut i = 0;
        for (p, r) in [(8, 1), (16, 2)] {
            for m in [
                MappingKind::Uniform,
                MappingKind::RotationInvariant,
                MappingKind::RotationInvariantUniform,
            ] {
                out[i] = LbpSpec {
                    neighbors: p,
                    radius: r,
                    mapping: m,
                };
                i += 1;
            }
        }
        out
    }
}

impl fmt::Display for LbpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lbp-{}-{}-{}",
            self.mapping.as_str(),
            self.neighbors,
            self.radius
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingTable {
    pub neighbors: u32,
    pub kind: MappingKind,
    pub bins: usize,
    pub code_to_bin: Vec<u32>,
}

fn transitions(code: u32, p: u32) -> u32 {
    let rotated = ((code >> 1) | ((code & 1) << (p - 1))) & ((1 << p) - 1);
    (code ^ rotated).count_ones()
}

fn min_rotation(code: u32, p: u32) -> u32 {
    let full = (1u32 << p) - 1;
    let mut best = code;
    let mut c = code;
    for _ in 1..p {
        c = ((c >> 1) | ((c & 1) << (p - 1))) & full;
        best = best.min(c);
    }
    best
}

pub fn build_mapping(neighbors: u32, kind: MappingKind) -> Result<MappingTable> {
    if !(1..=16).contains(&neighbors) {
        return Err(precondition("LBP mappings are built for 1..=16 neighbours"));
    }
    let p = neighbors;
    let n = 1usize << p;
    let mut code_to_bin = vec![0u32; n];
    let bins = match kind {
        MappingKind::Uniform => {
            let mut next = 0u32;
            let mut nonuniform = Vec::new();
            for (code, bin) in code_to_bin.iter_mut().enumerate() {
                if transitions(code as u32, p) <= 2 {
                    *bin = next;
                    next += 1;
                } else {
                    nonuniform.push(code);
                }
            }
            for code in nonuniform {
                code_to_bin[code] = next;
            }
            next as usize + 1
        }
        MappingKind::RotationInvariant => {
            let mut bin_of_rep = vec![u32::MAX; n];
            let mut next = 0u32;
            for (code, bin) in code_to_bin.iter_mut().enumerate() {
                let rep = min_rotation(code as u32, p) as usize;
                if bin_of_rep[rep] == u32::MAX {
                    bin_of_rep[rep] = next;
                    next += 1;
                }
                *bin = bin_of_rep[rep];
            }
            next as usize
        }
        MappingKind::RotationInvariantUniform => {
            for (code, bin) in code_to_bin.iter_mut().enumerate() {
                *bin = if transitions(code as u32, p) <= 2 {
                    (code as u32).count_ones()
                } else {
                    p + 1
                };
            }
            p as usize + 2
        }
    };
    Ok(MappingTable {
        neighbors: p,
        kind,
        bins,
        code_to_bin,
    })
}

/// Cached mapping for the standard 8- and 16-neighbour patterns.
pub fn mapping_table(neighbors: u32, kind: MappingKind) -> &'static MappingTable {
    static TABLES: [OnceLock<MappingTable>; 6] = [const { OnceLock::new() }; 6];
    let slot = match (neighbors, kind) {
        (8, MappingKind::Uniform) => 0,
        (8, MappingKind::RotationInvariant) => 1,
        (8, MappingKind::RotationInvariantUniform) => 2,
        (16, MappingKind::Uniform) => 3,
        (16, MappingKind::RotationInvariant) => 4,
        (16, MappingKind::RotationInvariantUniform) => 5,
        _ => panic!("no cached mapping for {neighbors} neighbours"),
    };
    TABLES[slot].get_or_init(|| build_mapping(neighbors, kind).expect("valid neighbour count"))
}

/// Precomputed bilinear sampling of one circle neighbour.
#[derive(Debug, Clone, Copy)]
struct Sample {
    dx: i32,
    dy: i32,
    fx: f32,
    fy: f32,
}

fn snap(v: f64) -> f64 {
    if (v - v.round()).abs() < 1e-9 {
        v.round()
    } else {
        v
    }
}

fn circle(neighbors: u32, radius: u32) -> Vec<Sample> {
    (0..neighbors)
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / neighbors as f64;
            let sx = snap(radius as f64 * angle.cos());
            let sy = snap(-(radius as f64) * angle.sin());
            Sample {
                dx: sx.floor() as i32,
                dy: sy.floor() as i32,
                fx: (sx - sx.floor()) as f32,
                fy: (sy - sy.floor()) as f32,
            }
        })
        .collect()
}

fn circle_cached(neighbors: u32, radius: u32) -> &'static [Sample] {
    static C8: OnceLock<Vec<Sample>> = OnceLock::new();
    static C16: OnceLock<Vec<Sample>> = OnceLock::new();
    match (neighbors, radius) {
        (8, 1) => C8.get_or_init(|| circle(8, 1)),
        (16, 2) => C16.get_or_init(|| circle(16, 2)),
        _ => panic!("no cached circle for ({neighbors}, {radius})"),
    }
}

/// Interpolated neighbour minus centre. Working on differences keeps the
/// sign exact under a constant luminance shift.
#[inline]
fn relative_sample(gray: &GrayImage, x: u32, y: u32, centre: f32, s: &Sample) -> f32 {
    let x0 = (x as i32 + s.dx) as u32;
    let y0 = (y as i32 + s.dy) as u32;
    let x1 = if s.fx == 0.0 { x0 } else { x0 + 1 };
    let y1 = if s.fy == 0.0 { y0 } else { y0 + 1 };
    let a = gray.get(x0, y0) - centre;
    let b = gray.get(x1, y0) - centre;
    let c = gray.get(x0, y1) - centre;
    let d = gray.get(x1, y1) - centre;
    let top = a + s.fx * (b - a);
    let bottom = c + s.fx * (d - c);
    top + s.fy * (bottom - top)
}

#[inline]
fn code_with(gray: &GrayImage, x: u32, y: u32, samples: &[Sample]) -> u32 {
    let centre = gray.get(x, y);
    let mut code = 0u32;
    for (k, s) in samples.iter().enumerate() {
        if relative_sample(gray, x, y, centre, s) >= 0.0 {
            code |= 1 << k;
        }
    }
    code
}

/// Whether the radius-`radius` circle around `(x, y)` lies inside the image.
#[inline]
pub fn has_full_neighborhood(gray: &GrayImage, x: u32, y: u32, radius: u32) -> bool {
    x >= radius && y >= radius && x + radius < gray.width() && y + radius < gray.height()
}

/// Raw LBP code in `[0, 2^P)`. The circle must lie inside the image.
pub fn lbp_code(gray: &GrayImage, center: (u32, u32), neighbors: u32, radius: u32) -> Result<u32> {
    if !(1..=31).contains(&neighbors) || radius == 0 {
        return Err(precondition("LBP needs 1..=31 neighbours and a positive radius"));
    }
    if !has_full_neighborhood(gray, center.0, center.1, radius) {
        return Err(precondition(format!(
            "pixel {:?} is closer than {radius} pixels to the border",
            center
        )));
    }
    let samples = match (neighbors, radius) {
        (8, 1) | (16, 2) => circle_cached(neighbors, radius).to_vec(),
        _ => circle(neighbors, radius),
    };
    Ok(code_with(gray, center.0, center.1, &samples))
}

fn normalize_counts(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// L1-normalised histogram of mapped codes over valid foreground pixels; all
/// zeros when no pixel qualifies.
pub fn lbp_histogram(gray: &GrayImage, mask: &ForegroundMask, spec: LbpSpec) -> Result<Vec<f64>> {
    mask.ensure_matches(gray.width(), gray.height())?;
    let table = mapping_table(spec.neighbors, spec.mapping);
    let samples = circle_cached(spec.neighbors, spec.radius);
    let r = spec.radius;
    let mut counts = vec![0u64; table.bins];
    if gray.width() > 2 * r && gray.height() > 2 * r {
        for y in r..gray.height() - r {
            for x in r..gray.width() - r {
                if mask.get(x, y) {
                    let code = code_with(gray, x, y, samples);
                    counts[table.code_to_bin[code as usize] as usize] += 1;
                }
            }
        }
    }
    Ok(normalize_counts(&counts))
}

pub const MSLBP_DIMENSION: usize = 59 + 243;

/// Uniform (8, 1) and (16, 2) histograms, concatenated.
pub fn mslbp(gray: &GrayImage, mask: &ForegroundMask) -> Result<Vec<f64>> {
    let mut out = lbp_histogram(gray, mask, LbpSpec::new(8, 1, MappingKind::Uniform)?)?;
    out.extend(lbp_histogram(
        gray,
        mask,
        LbpSpec::new(16, 2, MappingKind::Uniform)?,
    )?);
    Ok(out)
}

pub const DEFAULT_PRICO_OFFSETS: [u32; 2] = [2, 4];
const PRICO_INNER_BINS: usize = 10;
pub const PRICO_BINS_PER_OFFSET: usize = 59 * PRICO_INNER_BINS;
const GRADIENT_EPSILON: f32 = 1e-6;

/// Gradient-steered co-occurrence of (8, 1) patterns.
///
/// For every valid foreground pixel `p`, the gradient direction `theta`
/// (zero on flat pixels) selects a partner `q = p + d (cos theta, sin theta)`
/// rounded to the nearest pixel. The joint bin pairs the uniform bin of the
/// code at `q` with the rotation-invariant uniform bin of the code at `p`.
/// Each offset yields an L1-normalised 590-bin histogram.
pub fn prico_lbp(gray: &GrayImage, mask: &ForegroundMask, offsets: &[u32]) -> Result<Vec<f64>> {
    mask.ensure_matches(gray.width(), gray.height())?;
    if offsets.is_empty() {
        return Err(precondition("at least one co-occurrence offset is required"));
    }
    let u2 = mapping_table(8, MappingKind::Uniform);
    let riu2 = mapping_table(8, MappingKind::RotationInvariantUniform);
    let samples = circle_cached(8, 1);
    let mut counts = vec![vec![0u64; PRICO_BINS_PER_OFFSET]; offsets.len()];
    let (w, h) = (gray.width(), gray.height());
    if w > 2 && h > 2 {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                if !mask.get(x, y) {
                    continue;
                }
                let inner = riu2.code_to_bin[code_with(gray, x, y, samples) as usize] as usize;
                let gx = (gray.get(x + 1, y) - gray.get(x - 1, y)) * 0.5;
                let gy = (gray.get(x, y + 1) - gray.get(x, y - 1)) * 0.5;
                let theta = if (gx * gx + gy * gy).sqrt() < GRADIENT_EPSILON {
                    0.0
                } else {
                    (gy as f64).atan2(gx as f64)
                };
                let (c, s) = (theta.cos(), theta.sin());
                for (hist, &d) in counts.iter_mut().zip(offsets) {
                    let qx = x as i64 + (d as f64 * c).round() as i64;
                    let qy = y as i64 + (d as f64 * s).round() as i64;
                    if qx < 1 || qy < 1 || qx >= w as i64 - 1 || qy >= h as i64 - 1 {
                        continue;
                    }
                    let outer = u2.code_to_bin
                        [code_with(gray, qx as u32, qy as u32, samples) as usize]
                        as usize;
                    hist[outer * PRICO_INNER_BINS + inner] += 1;
                }
            }
        }
    }
    Ok(counts.iter().flat_map(|c| normalize_counts(c)).collect())
}
