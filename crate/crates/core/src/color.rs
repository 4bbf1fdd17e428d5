//! Dense color features: mean patch RGB, optionally mapped to the 11 basic
//! color terms through a [`ColorNameTable`].

use std::fmt::Write as _;
use std::path::Path;

use crate::descriptor::DescriptorSet;
use crate::error::{precondition, Error, Result};
use crate::imaging::{build_grid, patch_bounds, ForegroundMask, RasterImage};

pub const COLOR_NAME_COUNT: usize = 11;
pub const DEFAULT_STEP: u32 = 5;
pub const DEFAULT_PATCH_SIZES: [u32; 2] = [8, 16];
pub const DEFAULT_BINS_PER_CHANNEL: usize = 32;

/// Column order of every table row.
pub const COLOR_NAMES: [&str; COLOR_NAME_COUNT] = [
    "black", "blue", "brown", "grey", "green", "orange", "pink", "purple", "red", "white", "yellow",
];

/// Prototype sRGB triples of the built-in table, in [`COLOR_NAMES`] order.
const PROTOTYPES: [[f64; 3]; COLOR_NAME_COUNT] = [
    [0.0, 0.0, 0.0],
    [0.0, 0.0, 255.0],
    [139.0, 69.0, 19.0],
    [128.0, 128.0, 128.0],
    [0.0, 128.0, 0.0],
    [255.0, 165.0, 0.0],
    [255.0, 192.0, 203.0],
    [128.0, 0.0, 128.0],
    [255.0, 0.0, 0.0],
    [255.0, 255.0, 255.0],
    [255.0, 255.0, 0.0],
];
const PROTOTYPE_TAU: f64 = 60.0;

/// Quantised RGB cube to color-name distribution lookup. Row index is
/// `r_bin + bins * g_bin + bins^2 * b_bin`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorNameTable {
    bins_per_channel: usize,
    table: Vec<[f64; COLOR_NAME_COUNT]>,
}

impl ColorNameTable {
    pub fn new(bins_per_channel: usize, table: Vec<[f64; COLOR_NAME_COUNT]>) -> Result<Self> {
        if bins_per_channel == 0 || bins_per_channel > 256 {
            return Err(precondition("bins per channel must be in 1..=256"));
        }
        let rows = bins_per_channel.pow(3);
        if table.len() != rows {
            return Err(precondition(format!(
                "color-name table has {} rows, expected {rows}",
                table.len()
            )));
        }
        for (i, row) in table.iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(precondition(format!("row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(precondition(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(Self {
            bins_per_channel,
            table,
        })
    }

    /// Analytic table: softmax of `-d^2 / (2 tau^2)` over Euclidean RGB
    /// distances from each bin centre to the 11 prototypes.
    pub fn fallback(bins_per_channel: usize) -> Self {
        let width = 256.0 / bins_per_channel as f64;
        let centre = |b: usize| (b as f64 + 0.5) * width - 0.5;
        let mut table = Vec::with_capacity(bins_per_channel.pow(3));
        for bb in 0..bins_per_channel {
            for gb in 0..bins_per_channel {
                for rb in 0..bins_per_channel {
                    table.push(prototype_distribution([centre(rb), centre(gb), centre(bb)]));
                }
            }
        }
        Self::new(bins_per_channel, table).expect("softmax rows are distributions")
    }

    pub fn bins_per_channel(&self) -> usize {
        self.bins_per_channel
    }

    pub fn rows(&self) -> &[[f64; COLOR_NAME_COUNT]] {
        &self.table
    }

    #[inline]
    fn bin(&self, channel: f64) -> usize {
        let b = (channel.clamp(0.0, 255.0) * self.bins_per_channel as f64 / 256.0) as usize;
        b.min(self.bins_per_channel - 1)
    }

    /// Distribution for a (possibly fractional) RGB triple in [0, 255].
    pub fn lookup(&self, rgb: [f64; 3]) -> &[f64; COLOR_NAME_COUNT] {
        let n = self.bins_per_channel;
        let idx = self.bin(rgb[0]) + n * self.bin(rgb[1]) + n * n * self.bin(rgb[2]);
        &self.table[idx]
    }

    /// Parses the text format: a `CN <bins>` header followed by `bins^3`
    /// lines of 11 whitespace-separated probabilities.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty color-name table".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("CN") {
            return Err(Error::Parse(format!("bad color-name header `{header}`")));
        }
        let bins: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad color-name header `{header}`")))?;
        let mut table = Vec::with_capacity(bins.pow(3));
        for (i, line) in lines.enumerate() {
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("row {i}: {e}")))?;
            let row: [f64; COLOR_NAME_COUNT] = values.try_into().map_err(|v: Vec<f64>| {
                Error::Parse(format!("row {i}: expected 11 values, found {}", v.len()))
            })?;
            table.push(row);
        }
        Self::new(bins, table).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("CN {}\n", self.bins_per_channel);
        for row in &self.table {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                write!(out, "{v}").expect("write to string");
            }
            out.push('\n');
        }
        out
    }
}

fn prototype_distribution(rgb: [f64; 3]) -> [f64; COLOR_NAME_COUNT] {
    let mut logits = [0f64; COLOR_NAME_COUNT];
    for (l, p) in logits.iter_mut().zip(PROTOTYPES.iter()) {
        let d2: f64 = rgb.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
        *l = -d2 / (2.0 * PROTOTYPE_TAU * PROTOTYPE_TAU);
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.map(|l| (l - max).exp());
    let sum: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= sum;
    }
    // Absorb rounding so the row sums to 1 within 1e-12.
    let residual = 1.0 - out.iter().sum::<f64>();
    let argmax = (0..COLOR_NAME_COUNT)
        .max_by(|&a, &b| out[a].total_cmp(&out[b]))
        .expect("non-empty");
    out[argmax] += residual;
    out
}

pub fn rgb_to_cn(rgb: [u8; 3], table: &ColorNameTable) -> [f64; COLOR_NAME_COUNT] {
    *table.lookup([rgb[0] as f64, rgb[1] as f64, rgb[2] as f64])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorMode {
    Rgb,
    ColorNames,
}

impl ColorMode {
    pub fn dimension(self) -> usize {
        match self {
            ColorMode::Rgb => 3,
            ColorMode::ColorNames => COLOR_NAME_COUNT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorParams {
    pub step: u32,
    pub patch_sizes: Vec<u32>,
    pub coverage_threshold: f64,
}

impl Default for ColorParams {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            patch_sizes: DEFAULT_PATCH_SIZES.to_vec(),
            coverage_threshold: 0.5,
        }
    }
}

/// Mean RGB of the foreground pixels inside the clipped patch. Falls back to
/// all patch pixels when the patch holds no foreground.
pub fn patch_mean(
    image: &RasterImage,
    mask: &ForegroundMask,
    center: (u32, u32),
    size: u32,
) -> [f64; 3] {
    let (x0, y0, x1, y1) = patch_bounds(image.width(), image.height(), center.0, center.1, size);
    let mut fg = [0u64; 3];
    let mut all = [0u64; 3];
    let (mut n_fg, mut n_all) = (0u64, 0u64);
    for y in y0..y1 {
        for x in x0..x1 {
            let p = image.pixel(x, y);
            for c in 0..3 {
                all[c] += p[c] as u64;
            }
            n_all += 1;
            if mask.get(x, y) {
                for c in 0..3 {
                    fg[c] += p[c] as u64;
                }
                n_fg += 1;
            }
        }
    }
    let (sum, n) = if n_fg > 0 { (fg, n_fg) } else { (all, n_all) };
    sum.map(|s| s as f64 / n as f64)
}

/// Dense RGB or color-name features over the foreground sampling grid.
pub fn dense_color(
    image: &RasterImage,
    mask: &ForegroundMask,
    mode: ColorMode,
    params: &ColorParams,
    table: &ColorNameTable,
) -> Result<DescriptorSet> {
    mask.ensure_matches(image.width(), image.height())?;
    let grid = build_grid(
        mask,
        params.step,
        &params.patch_sizes,
        params.coverage_threshold,
    )?;
    let mut set = DescriptorSet::empty(mode.dimension());
    let mut row = Vec::with_capacity(mode.dimension());
    for k in &grid.keypoints {
        let mean = patch_mean(image, mask, (k.x, k.y), grid.scales[k.scale as usize]);
        row.clear();
        match mode {
            ColorMode::Rgb => row.extend(mean.iter().map(|&c| (c / 255.0) as f32)),
            ColorMode::ColorNames => row.extend(table.lookup(mean).iter().map(|&p| p as f32)),
        }
        set.push(&row, (k.x, k.y), k.scale);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argmax(v: &[f64]) -> usize {
        (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
    }

    #[test]
    fn fallback_table_invariants() {
        let t = ColorNameTable::fallback(DEFAULT_BINS_PER_CHANNEL);
        assert_eq!(t.rows().len(), 32 * 32 * 32);
        for row in t.rows() {
            assert!(row.iter().all(|&p| p >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn black_and_white_prototypes() {
        let t = ColorNameTable::fallback(32);
        assert_eq!(COLOR_NAMES[argmax(&rgb_to_cn([0, 0, 0], &t))], "black");
        assert_eq!(COLOR_NAMES[argmax(&rgb_to_cn([255, 255, 255], &t))], "white");
        // Independent evaluation at the bin centres (3.5 and 251.5).
        let black = prototype_distribution([3.5; 3]);
        assert_eq!(rgb_to_cn([0, 0, 0], &t), black);
        assert_eq!(COLOR_NAMES[argmax(&prototype_distribution([251.5; 3]))], "white");
    }

    #[test]
    fn table_text_round_trip() {
        let t = ColorNameTable::fallback(4);
        let parsed = ColorNameTable::parse(&t.to_text()).unwrap();
        assert_eq!(parsed, t);
    }

    #[test]
    fn malformed_tables_rejected() {
        assert!(ColorNameTable::parse("").is_err());
        assert!(ColorNameTable::parse("XX 1\n").is_err());
        assert!(ColorNameTable::parse("CN 1\n0.5 0.5\n").is_err());
        assert!(ColorNameTable::parse("CN 1\n1 1 0 0 0 0 0 0 0 0 0\n").is_err());
        assert!(ColorNameTable::parse("CN 1\n1 0 0 0 0 0 0 0 0 0 0\n").is_ok());
    }

    #[test]
    fn constant_red_rgb_mode() {
        let img = RasterImage::filled(30, 30, [255, 0, 0]);
        let mask = ForegroundMask::full(30, 30);
        let t = ColorNameTable::fallback(8);
        let set = dense_color(&img, &mask, ColorMode::Rgb, &ColorParams::default(), &t).unwrap();
        assert_eq!(set.dimension(), 3);
        assert!(!set.is_empty());
        assert!(set.rows().all(|r| r == [1.0, 0.0, 0.0]));
        let cn = dense_color(&img, &mask, ColorMode::ColorNames, &ColorParams::default(), &t)
            .unwrap();
        assert_eq!(cn.dimension(), 11);
        for r in cn.rows() {
            assert!((r.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn two_tone_patch_mean_matches_brute_force() {
        let img = RasterImage::from_fn(40, 20, |x, _| if x < 20 { [10, 20, 30] } else { [200, 100, 50] });
        let mask = ForegroundMask::full(40, 20);
        let params = ColorParams {
            step: 5,
            patch_sizes: vec![8],
            coverage_threshold: 0.5,
        };
        let t = ColorNameTable::fallback(8);
        let set = dense_color(&img, &mask, ColorMode::Rgb, &params, &t).unwrap();
        for (i, &(x, y)) in set.positions().iter().enumerate() {
            let (x0, y0, x1, y1) = patch_bounds(40, 20, x, y, 8);
            let mut sum = [0f64; 3];
            let mut n = 0.0;
            for py in y0..y1 {
                for px in x0..x1 {
                    let p = img.pixel(px, py);
                    for c in 0..3 {
                        sum[c] += p[c] as f64;
                    }
                    n += 1.0;
                }
            }
            let expect: Vec<f32> = sum.iter().map(|s| (s / n / 255.0) as f32).collect();
            assert_eq!(set.row(i), &expect[..]);
            if x1 <= 20 {
                assert_eq!(set.row(i), [10.0 / 255.0, 20.0 / 255.0, 30.0 / 255.0].map(|v: f64| v as f32));
            }
        }
    }

    #[test]
    fn background_pixels_do_not_enter_patch_mean() {
        let img = RasterImage::from_fn(16, 16, |x, _| if x < 8 { [0, 255, 0] } else { [9, 9, 9] });
        let mask = ForegroundMask::from_fn(16, 16, |x, _| x < 8);
        let m = patch_mean(&img, &mask, (8, 8), 8);
        assert_eq!(m, [0.0, 255.0, 0.0]);
    }

    #[test]
    fn rgb_mode_equivariant_under_channel_permutation() {
        let img = RasterImage::from_fn(24, 24, |x, y| [(x * 9) as u8, (y * 7) as u8, ((x + y) * 3) as u8]);
        let perm = RasterImage::from_fn(24, 24, |x, y| {
            let p = img.pixel(x, y);
            [p[2], p[0], p[1]]
        });
        let mask = ForegroundMask::from_fn(24, 24, |x, y| x * y > 20);
        let t = ColorNameTable::fallback(4);
        let a = dense_color(&img, &mask, ColorMode::Rgb, &ColorParams::default(), &t).unwrap();
        let b = dense_color(&perm, &mask, ColorMode::Rgb, &ColorParams::default(), &t).unwrap();
        assert_eq!(a.len(), b.len());
        for (ra, rb) in a.rows().zip(b.rows()) {
            assert_eq!([ra[2], ra[0], ra[1]], [rb[0], rb[1], rb[2]]);
        }
    }
}
