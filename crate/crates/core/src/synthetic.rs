//! Generated stimulus-isolation datasets.
//!
//! Every image carries three attributes: a silhouette, a two-color palette
//! and a period-2 luminance texture. One attribute decides the category, the
//! other two are drawn at random. The attributes are constructed so that each
//! reaches only its own descriptor family:
//!
//! * all garment colors share one luma and the background is one luma level
//!   brighter, so gradients see the silhouette outline and nothing else;
//! * the texture is added equally to all channels of garment and background
//!   alike, so central differences cancel it and interior patch means are
//!   unchanged;
//! * the smallest non-zero neighbour difference of every tile exceeds the
//!   background step, so LBP codes on the garment do not depend on the outline.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::evaluation::{DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::imaging::{save_image, save_mask, ForegroundMask, RasterImage};
use crate::pipeline::DescriptorDefaults;
use crate::sift::SiftParams;

pub const CLASS_COUNT: usize = 8;
pub const GARMENT_LUMA: i32 = 110;
pub const BACKGROUND_STEP: i32 = 1;
const MAX_GAIN: i32 = 2;

/// Zero-mean 2x2 tiles; `TILES[k][row][col]`.
pub const TILES: [[[i32; 2]; 2]; CLASS_COUNT] = [
    [[-12, 12], [12, -12]],
    [[-12, 12], [-3, 3]],
    [[-12, -12], [12, 12]],
    [[-8, -8], [4, 12]],
    [[-12, -4], [8, 8]],
    [[-12, -10], [12, 10]],
    [[-12, -10], [11, 11]],
    [[-11, 5], [5, 1]],
];

const MAX_AMPLITUDE: i32 = 12 * MAX_GAIN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Category = silhouette.
    Shape,
    /// Category = palette.
    Palette,
    /// Category = texture.
    Texture,
}

impl Variant {
    pub fn all() -> [Variant; 3] {
        [Variant::Shape, Variant::Palette, Variant::Texture]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Shape => "shape",
            Variant::Palette => "palette",
            Variant::Texture => "texture",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shape" => Ok(Variant::Shape),
            "palette" => Ok(Variant::Palette),
            "texture" => Ok(Variant::Texture),
            other => Err(Error::Parse(format!("unknown synthetic variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub per_class: usize,
    pub size: u32,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            per_class: 40,
            size: 128,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticImage {
    pub image: RasterImage,
    pub mask: ForegroundMask,
    pub label: String,
    pub shape: usize,
    pub palette: usize,
    pub texture: usize,
}

pub fn class_label(class: usize) -> String {
    format!("season{class}")
}

/// Whether normalised coordinates `(u, v)` fall inside silhouette `shape`.
fn inside(shape: usize, u: f64, v: f64) -> bool {
    match shape {
        0 => u.abs() <= 0.6 && v.abs() <= 1.0,
        1 => (u / 0.8).powi(2) + v * v <= 1.0,
        2 => v.abs() <= 1.0 && u.abs() <= 0.45 * (v + 1.0),
        3 => v.abs() <= 1.0 && u.abs() <= 0.45 * (1.0 - v),
        4 => u.abs() / 0.8 + v.abs() <= 1.0,
        5 => (u.abs() <= 0.3 && v.abs() <= 1.0) || (v.abs() <= 0.3 && u.abs() <= 0.9),
        6 => {
            let r2 = u * u + v * v;
            (0.45 * 0.45..=1.0).contains(&r2)
        }
        7 => v.abs() <= 1.0 && u.abs() <= 0.9 * v.abs() + 0.08,
        _ => unreachable!("silhouette index out of range"),
    }
}

/// Integer colors with luma sum exactly `1000 * luma` whose channels leave
/// room for the texture amplitude, grouped into eight 45-degree hue sectors.
pub fn isoluminant_palettes(luma: i32) -> [Vec<[u8; 3]>; CLASS_COUNT] {
    let (lo, hi) = (MAX_AMPLITUDE, 255 - MAX_AMPLITUDE);
    let mut sectors: [Vec<[u8; 3]>; CLASS_COUNT] = Default::default();
    for r in lo..=hi {
        for b in lo..=hi {
            let rest = 1000 * luma - 299 * r - 114 * b;
            if rest % 587 != 0 {
                continue;
            }
            let g = rest / 587;
            if !(lo..=hi).contains(&g) {
                continue;
            }
            let (rf, gf, bf) = (r as f64, g as f64, b as f64);
            let max = rf.max(gf).max(bf);
            let min = rf.min(gf).min(bf);
            if (max - min) / max < 0.45 {
                continue;
            }
            let hue = if max == rf {
                60.0 * ((gf - bf) / (max - min)).rem_euclid(6.0)
            } else if max == gf {
                60.0 * ((bf - rf) / (max - min) + 2.0)
            } else {
                60.0 * ((rf - gf) / (max - min) + 4.0)
            };
            let sector = ((hue + 22.5) / 45.0).floor() as usize % CLASS_COUNT;
            sectors[sector].push([r as u8, g as u8, b as u8]);
        }
    }
    sectors
}

/// Hue sectors of the two garment regions for palette class `k`.
pub fn palette_hues(k: usize) -> (usize, usize) {
    (k, (k + 3) % CLASS_COUNT)
}

struct Scene {
    shape: usize,
    palette: usize,
    texture: usize,
}

fn render(scene: &Scene, size: u32, palettes: &[Vec<[u8; 3]>; CLASS_COUNT], rng: &mut ChaCha8Rng) -> (RasterImage, ForegroundMask) {
    let half = 0.3125 * size as f64;
    let scale = rng.random_range(0.85..=1.0);
    let c = size as f64 / 2.0;
    let (cx, cy) = (c + rng.random_range(-4.0..=4.0), c + rng.random_range(-4.0..=4.0));
    let split = rng.random_range(0.35..=0.65);
    let (h1, h2) = palette_hues(scene.palette);
    let pick = |rng: &mut ChaCha8Rng, h: usize| palettes[h][rng.random_range(0..palettes[h].len())];
    let colors = [pick(rng, h1), pick(rng, h2)];
    let gain = rng.random_range(1..=MAX_GAIN);
    let (px, py) = (rng.random_range(0..2u32), rng.random_range(0..2u32));
    let tile = TILES[scene.texture];

    let mask = ForegroundMask::from_fn(size, size, |x, y| {
        inside(scene.shape, (x as f64 - cx) / (half * scale), (y as f64 - cy) / (half * scale))
    });
    let split_row = cy + half * scale * (2.0 * split - 1.0);
    let background = GARMENT_LUMA + BACKGROUND_STEP;
    let image = RasterImage::from_fn(size, size, |x, y| {
        let t = gain * tile[((y + py) % 2) as usize][((x + px) % 2) as usize];
        let base = if !mask.get(x, y) {
            [background; 3]
        } else {
            let c = colors[usize::from(y as f64 >= split_row)];
            [c[0] as i32, c[1] as i32, c[2] as i32]
        };
        base.map(|v| (v + t) as u8)
    });
    (image, mask)
}

/// `per_class` images for each of the eight categories, in category order.
pub fn generate(variant: Variant, config: &SyntheticConfig) -> Vec<SyntheticImage> {
    let palettes = isoluminant_palettes(GARMENT_LUMA);
    let salt = match variant {
        Variant::Shape => 1,
        Variant::Palette => 2,
        Variant::Texture => 3,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(salt);
    let mut out = Vec::with_capacity(CLASS_COUNT * config.per_class);
    for class in 0..CLASS_COUNT {
        for _ in 0..config.per_class {
            let draw = |fixed: bool, rng: &mut ChaCha8Rng| if fixed { class } else { rng.random_range(0..CLASS_COUNT) };
            let scene = Scene {
                shape: draw(variant == Variant::Shape, &mut rng),
                palette: draw(variant == Variant::Palette, &mut rng),
                texture: draw(variant == Variant::Texture, &mut rng),
            };
            let (image, mask) = render(&scene, config.size, &palettes, &mut rng);
            out.push(SyntheticImage {
                image,
                mask,
                label: class_label(class),
                shape: scene.shape,
                palette: scene.palette,
                texture: scene.texture,
            });
        }
    }
    out
}

/// Writes PNG images, masks and a `manifest.tsv` into `dir`.
pub fn write_dataset(dir: &Path, images: &[SyntheticImage]) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        let image = format!("img{i:04}.png");
        let mask = format!("img{i:04}_mask.png");
        save_image(&img.image, dir.join(&image))?;
        save_mask(&img.mask, dir.join(&mask))?;
        let metadata = [
            ("shape".to_string(), img.shape.to_string()),
            ("palette".to_string(), img.palette.to_string()),
            ("texture".to_string(), img.texture.to_string()),
        ]
        .into_iter()
        .collect();
        entries.push(ManifestEntry {
            image: image.into(),
            mask: mask.into(),
            label: img.label.clone(),
            metadata,
        });
    }
    let manifest = DatasetManifest::new("synthetic", entries)?;
    let path = dir.join("manifest.tsv");
    std::fs::write(&path, manifest.to_text()).map_err(|e| Error::io(&path, e))?;
    DatasetManifest::load(&path)
}

/// Extraction settings sized for the generated 128-pixel images.
pub fn descriptor_defaults() -> DescriptorDefaults {
    DescriptorDefaults {
        sift: SiftParams {
            step: 4,
            patch_sizes: vec![16, 24, 32],
            coverage_threshold: 0.5,
        },
        ..DescriptorDefaults::default()
    }
}

/// One representative identifier per descriptor family: style, color,
/// texture.
pub const REPRESENTATIVES: [&str; 3] = ["sift-bow-64", "cn-bow-64", "mslbp"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{luma, to_grayscale};
    use crate::texture::lbp_code;

    #[test]
    fn palettes_are_isoluminant_and_populated() {
        let p = isoluminant_palettes(GARMENT_LUMA);
        for sector in &p {
            assert!(sector.len() >= 2, "{p:?}");
            for c in sector {
                assert_eq!(299 * c[0] as i32 + 587 * c[1] as i32 + 114 * c[2] as i32, 1000 * GARMENT_LUMA);
            }
        }
    }

    #[test]
    fn tiles_are_zero_mean() {
        for t in TILES {
            assert_eq!(t[0][0] + t[0][1] + t[1][0] + t[1][1], 0);
        }
    }

    #[test]
    fn margins_and_labels() {
        let cfg = SyntheticConfig { per_class: 3, ..SyntheticConfig::default() };
        for v in Variant::all() {
            let imgs = generate(v, &cfg);
            assert_eq!(imgs.len(), 24);
            for (i, img) in imgs.iter().enumerate() {
                let class = i / 3;
                let attr = match v {
                    Variant::Shape => img.shape,
                    Variant::Palette => img.palette,
                    Variant::Texture => img.texture,
                };
                assert_eq!(attr, class);
                assert_eq!(img.label, class_label(class));
                let b = crate::imaging::foreground_bounds(&img.mask).unwrap();
                assert!(b.0 >= 16 && b.1 >= 16 && b.2 <= 111 && b.3 <= 111, "{b:?}");
            }
        }
        assert_eq!(generate(Variant::Shape, &cfg), generate(Variant::Shape, &cfg));
    }

    #[test]
    fn garment_luma_is_constant_up_to_texture() {
        let imgs = generate(Variant::Palette, &SyntheticConfig { per_class: 1, ..SyntheticConfig::default() });
        for img in &imgs {
            let tile = TILES[img.texture];
            let texture_values: Vec<i32> = tile.iter().flatten().flat_map(|&t| [t, 2 * t]).collect();
            for y in 0..128 {
                for x in 0..128 {
                    let p = img.image.pixel(x, y);
                    let sum = 299 * p[0] as i32 + 587 * p[1] as i32 + 114 * p[2] as i32;
                    let offset = if img.mask.get(x, y) { GARMENT_LUMA } else { GARMENT_LUMA + BACKGROUND_STEP };
                    assert_eq!(sum % 1000, 0);
                    assert!(texture_values.contains(&(sum / 1000 - offset)));
                    assert!((luma(p) * 255.0 - (sum as f32 / 1000.0)).abs() < 1e-3);
                }
            }
        }
    }

    /// Codes on the garment equal those of the bare texture, whatever the
    /// outline.
    #[test]
    fn lbp_codes_ignore_the_outline() {
        let imgs = generate(Variant::Shape, &SyntheticConfig { per_class: 2, ..SyntheticConfig::default() });
        for img in &imgs {
            let gray = to_grayscale(&img.image);
            // Texture-only reference: the same pixels with the background step removed.
            let bare = crate::imaging::GrayImage::from_fn(128, 128, |x, y| {
                if img.mask.get(x, y) {
                    gray.get(x, y)
                } else {
                    let p = img.image.pixel(x, y);
                    let s = 299 * p[0] as i32 + 587 * p[1] as i32 + 114 * p[2] as i32 - 1000 * BACKGROUND_STEP;
                    s as f32 / 255_000.0
                }
            });
            for y in 2..126 {
                for x in 2..126 {
                    if img.mask.get(x, y) {
                        for (p, r) in [(8, 1), (16, 2)] {
                            assert_eq!(lbp_code(&gray, (x, y), p, r).unwrap(), lbp_code(&bare, (x, y), p, r).unwrap());
                        }
                    }
                }
            }
        }
    }
}
