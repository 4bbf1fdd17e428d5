//! Raster images, foreground masks and dense sampling grids.
//!
//! Images are 8-bit RGB. Luminance is computed from integer channel sums so
//! that two pixels with the same weighted sum map to bitwise-identical gray
//! values.

use std::path::Path;

use image::imageops::{self, FilterType};

use crate::error::{precondition, Error, Result};

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(precondition("image dimensions must be positive"));
        }
        if data.len() != width as usize * height as usize * 3 {
            return Err(precondition(format!(
                "rgb buffer has {} bytes, expected {}",
                data.len(),
                width as usize * height as usize * 3
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self::new(width, height, data).expect("positive dimensions")
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data).expect("positive dimensions")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn to_rgb_buffer(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length checked at construction")
    }

    fn from_rgb_buffer(buf: image::RgbImage) -> Self {
        let (w, h) = buf.dimensions();
        Self::new(w, h, buf.into_raw()).expect("decoded image has positive dimensions")
    }
}

/// Row-major luminance in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(precondition("image dimensions must be positive"));
        }
        if data.len() != width as usize * height as usize {
            return Err(precondition(format!(
                "gray buffer has {} values, expected {}",
                data.len(),
                width as usize * height as usize
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f32) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data).expect("positive dimensions")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Applies `f` to every value. Values are not re-clamped to [0, 1].
    pub fn map(&self, f: impl Fn(f32) -> f32) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Binary foreground annotation, `true` marks the subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForegroundMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl ForegroundMask {
    pub fn new(width: u32, height: u32, data: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(precondition("mask dimensions must be positive"));
        }
        if data.len() != width as usize * height as usize {
            return Err(precondition(format!(
                "mask buffer has {} flags, expected {}",
                data.len(),
                width as usize * height as usize
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self::new(width, height, vec![true; width as usize * height as usize])
            .expect("positive dimensions")
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data).expect("positive dimensions")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&f| f).count()
    }

    pub fn ensure_nonempty(&self) -> Result<()> {
        if self.foreground_count() == 0 {
            Err(precondition("mask has no foreground pixels"))
        } else {
            Ok(())
        }
    }

    pub fn ensure_matches(&self, width: u32, height: u32) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(precondition(format!(
                "mask is {}x{} but image is {}x{}",
                self.width, self.height, width, height
            )));
        }
        Ok(())
    }

    /// Summed-area table with one row/column of zero padding.
    fn integral(&self) -> Vec<u32> {
        let (w, h) = (self.width as usize, self.height as usize);
        let mut table = vec![0u32; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += self.data[y * w + x] as u32;
                table[(y + 1) * (w + 1) + x + 1] = table[y * (w + 1) + x + 1] + row;
            }
        }
        table
    }

    fn to_luma_buffer(&self) -> image::GrayImage {
        let raw = self.data.iter().map(|&f| if f { 255 } else { 0 }).collect();
        image::GrayImage::from_raw(self.width, self.height, raw).expect("length checked")
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn decode(bytes: &[u8], path: &Path) -> Result<image::DynamicImage> {
    image::load_from_memory(bytes).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })
}

/// Decodes an in-memory PNG or JPEG. `path` is only used for error messages.
pub fn decode_image(bytes: &[u8], path: &Path) -> Result<RasterImage> {
    Ok(RasterImage::from_rgb_buffer(decode(bytes, path)?.to_rgb8()))
}

/// Decodes a single-channel mask; any nonzero value is foreground.
pub fn decode_mask(bytes: &[u8], path: &Path) -> Result<ForegroundMask> {
    let luma = decode(bytes, path)?.to_luma8();
    let (w, h) = luma.dimensions();
    ForegroundMask::new(w, h, luma.into_raw().into_iter().map(|v| v != 0).collect())
}

pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    decode_image(&read_bytes(path)?, path)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<ForegroundMask> {
    let path = path.as_ref();
    decode_mask(&read_bytes(path)?, path)
}

pub fn save_image(image: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    image
        .to_rgb_buffer()
        .save(path)
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn save_mask(mask: &ForegroundMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    mask.to_luma_buffer()
        .save(path)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Luminance `(0.299 R + 0.587 G + 0.114 B) / 255`, evaluated as an exact
/// integer sum before the single division.
#[inline]
pub fn luma(rgb: [u8; 3]) -> f32 {
    let sum = 299 * rgb[0] as u32 + 587 * rgb[1] as u32 + 114 * rgb[2] as u32;
    sum as f32 / 255_000.0
}

pub fn to_grayscale(image: &RasterImage) -> GrayImage {
    let data = image
        .data
        .chunks_exact(3)
        .map(|p| luma([p[0], p[1], p[2]]))
        .collect();
    GrayImage {
        width: image.width,
        height: image.height,
        data,
    }
}

/// Scales image and mask to `target_height` rows, preserving aspect ratio.
/// The image is resampled bilinearly, the mask by nearest neighbour.
pub fn resize_to_height(
    image: &RasterImage,
    mask: &ForegroundMask,
    target_height: u32,
) -> Result<(RasterImage, ForegroundMask)> {
    if target_height == 0 {
        return Err(precondition("target height must be at least 1"));
    }
    mask.ensure_matches(image.width, image.height)?;
    let scaled = image.width as f64 * target_height as f64 / image.height as f64;
    let target_width = (scaled.round() as u32).max(1);
    if target_width == image.width && target_height == image.height {
        return Ok((image.clone(), mask.clone()));
    }
    let rgb = imageops::resize(
        &image.to_rgb_buffer(),
        target_width,
        target_height,
        FilterType::Triangle,
    );
    let luma = imageops::resize(
        &mask.to_luma_buffer(),
        target_width,
        target_height,
        FilterType::Nearest,
    );
    let mask = ForegroundMask::new(
        target_width,
        target_height,
        luma.into_raw().into_iter().map(|v| v >= 128).collect(),
    )?;
    Ok((RasterImage::from_rgb_buffer(rgb), mask))
}

/// Inclusive bounding box `(x0, y0, x1, y1)` of the foreground.
pub fn foreground_bounds(mask: &ForegroundMask) -> Option<(u32, u32, u32, u32)> {
    let mut bounds: Option<(u32, u32, u32, u32)> = None;
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                bounds = Some(match bounds {
                    None => (x, y, x, y),
                    Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                });
            }
        }
    }
    bounds
}

/// Crops image and mask to the tight bounding box of the foreground.
pub fn crop_to_mask(
    image: &RasterImage,
    mask: &ForegroundMask,
) -> Result<(RasterImage, ForegroundMask)> {
    mask.ensure_matches(image.width, image.height)?;
    let (x0, y0, x1, y1) =
        foreground_bounds(mask).ok_or_else(|| precondition("cannot crop to an empty mask"))?;
    let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
    let cropped = RasterImage::from_fn(w, h, |x, y| image.pixel(x0 + x, y0 + y));
    let cropped_mask = ForegroundMask::from_fn(w, h, |x, y| mask.get(x0 + x, y0 + y));
    Ok((cropped, cropped_mask))
}

/// A dense sampling location; `scale` indexes [`SamplingGrid::scales`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Keypoint {
    pub x: u32,
    pub y: u32,
    pub scale: u32,
}

/// Clipped pixel window `[x0, x1) x [y0, y1)` of a square patch of side
/// `size` centred on `(x, y)`.
#[inline]
pub fn patch_bounds(width: u32, height: u32, x: u32, y: u32, size: u32) -> (u32, u32, u32, u32) {
    let half = (size / 2) as i64;
    let x0 = (x as i64 - half).max(0) as u32;
    let y0 = (y as i64 - half).max(0) as u32;
    let x1 = ((x as i64 - half + size as i64).min(width as i64)) as u32;
    let y1 = ((y as i64 - half + size as i64).min(height as i64)) as u32;
    (x0, y0, x1, y1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingGrid {
    pub step: u32,
    /// Patch side lengths, strictly increasing.
    pub scales: Vec<u32>,
    /// Row-major by `y`, then `x`, then scale.
    pub keypoints: Vec<Keypoint>,
}

/// Sorts and deduplicates patch sizes, rejecting empty lists and zero sizes.
pub fn normalize_scales(scales: &[u32]) -> Result<Vec<u32>> {
    let mut sorted = scales.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.is_empty() {
        return Err(precondition("at least one patch size is required"));
    }
    if sorted[0] == 0 {
        return Err(precondition("patch sizes must be positive"));
    }
    Ok(sorted)
}

/// Lattice points `(i * step, j * step)` whose patch at a given scale has
/// foreground coverage of at least `coverage_threshold`. Coverage is measured
/// over the patch clipped to the image.
pub fn build_grid(
    mask: &ForegroundMask,
    step: u32,
    scales: &[u32],
    coverage_threshold: f64,
) -> Result<SamplingGrid> {
    if step == 0 {
        return Err(precondition("sampling step must be at least 1"));
    }
    let scales = normalize_scales(scales)?;
    let integral = mask.integral();
    let stride = mask.width as usize + 1;
    let count = |x0: u32, y0: u32, x1: u32, y1: u32| -> u32 {
        let (x0, y0, x1, y1) = (x0 as usize, y0 as usize, x1 as usize, y1 as usize);
        integral[y1 * stride + x1] + integral[y0 * stride + x0]
            - integral[y0 * stride + x1]
            - integral[y1 * stride + x0]
    };
    let mut keypoints = Vec::new();
    for y in (0..mask.height).step_by(step as usize) {
        for x in (0..mask.width).step_by(step as usize) {
            for (s, &size) in scales.iter().enumerate() {
                let (x0, y0, x1, y1) = patch_bounds(mask.width, mask.height, x, y, size);
                let area = (x1 - x0) as f64 * (y1 - y0) as f64;
                let fg = count(x0, y0, x1, y1) as f64;
                if fg >= coverage_threshold * area && fg > 0.0 {
                    keypoints.push(Keypoint {
                        x,
                        y,
                        scale: s as u32,
                    });
                }
            }
        }
    }
    Ok(SamplingGrid {
        step,
        scales,
        keypoints,
    })
}
