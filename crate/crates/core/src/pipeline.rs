//! Descriptor and encoder specifications addressed by short identifiers such
//! as `sift-bow-256`, `cn-rcc-64`, `lbp-riu2-16-2`, `mslbp` or `pricolbp`.

use std::fmt;
use std::str::FromStr;

use crate::color::{dense_color, ColorMode, ColorNameTable, ColorParams};
use crate::descriptor::DescriptorSet;
use crate::error::{precondition, Error, Result};
use crate::imaging::{crop_to_mask, resize_to_height, to_grayscale, ForegroundMask, RasterImage};
use crate::sift::{dense_sift, SiftParams};
use crate::texture::{lbp_histogram, mslbp, prico_lbp, LbpSpec, MappingKind, DEFAULT_PRICO_OFFSETS};

/// The visual attribute a descriptor family responds to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stimulus {
    Style,
    Color,
    Texture,
}

impl Stimulus {
    pub fn as_str(self) -> &'static str {
        match self {
            Stimulus::Style => "style",
            Stimulus::Color => "color",
            Stimulus::Texture => "texture",
        }
    }
}

impl fmt::Display for Stimulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Geometry normalisation applied before extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Preprocess {
    pub crop: bool,
    pub target_height: Option<u32>,
}

impl Preprocess {
    /// Crop to the foreground, then scale to 800 rows.
    pub fn canonical() -> Self {
        Self {
            crop: true,
            target_height: Some(800),
        }
    }

    pub fn apply(&self, image: &RasterImage, mask: &ForegroundMask) -> Result<(RasterImage, ForegroundMask)> {
        mask.ensure_matches(image.width(), image.height())?;
        let (mut image, mut mask) = (image.clone(), mask.clone());
        if self.crop {
            (image, mask) = crop_to_mask(&image, &mask)?;
        }
        if let Some(h) = self.target_height {
            (image, mask) = resize_to_height(&image, &mask, h)?;
        }
        Ok((image, mask))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DescriptorSpec {
    Sift(SiftParams),
    Color { mode: ColorMode, params: ColorParams },
    Lbp(LbpSpec),
    Mslbp,
    PriCoLbp { offsets: Vec<u32> },
}

impl DescriptorSpec {
    pub fn stimulus(&self) -> Stimulus {
        match self {
            DescriptorSpec::Sift(_) => Stimulus::Style,
            DescriptorSpec::Color { .. } => Stimulus::Color,
            _ => Stimulus::Texture,
        }
    }

    /// Local descriptors yield many rows per image and need an encoder;
    /// texture histograms are already image-level.
    pub fn is_local(&self) -> bool {
        matches!(self, DescriptorSpec::Sift(_) | DescriptorSpec::Color { .. })
    }

    pub fn name(&self) -> String {
        match self {
            DescriptorSpec::Sift(_) => "sift".into(),
            DescriptorSpec::Color { mode: ColorMode::Rgb, .. } => "rgb".into(),
            DescriptorSpec::Color { mode: ColorMode::ColorNames, .. } => "cn".into(),
            DescriptorSpec::Lbp(spec) => spec.to_string(),
            DescriptorSpec::Mslbp => "mslbp".into(),
            DescriptorSpec::PriCoLbp { .. } => "pricolbp".into(),
        }
    }

    /// Identifier including every extraction parameter, used for caching.
    pub fn cache_key(&self) -> String {
        let join = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        match self {
            DescriptorSpec::Sift(p) => format!(
                "sift;step={};sizes={};coverage={}",
                p.step,
                join(&p.patch_sizes),
                p.coverage_threshold
            ),
            DescriptorSpec::Color { params, .. } => format!(
                "{};step={};sizes={};coverage={}",
                self.name(),
                params.step,
                join(&params.patch_sizes),
                params.coverage_threshold
            ),
            DescriptorSpec::PriCoLbp { offsets } => format!("pricolbp;offsets={}", join(offsets)),
            other => other.name(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_grid = |step: u32, sizes: &[u32], t: f64| -> Result<()> {
            if step == 0 {
                return Err(precondition("sampling step must be at least 1"));
            }
            crate::imaging::normalize_scales(sizes)?;
            if !(0.0..=1.0).contains(&t) {
                return Err(precondition(format!("coverage threshold {t} outside [0, 1]")));
            }
            Ok(())
        };
        match self {
            DescriptorSpec::Sift(p) => check_grid(p.step, &p.patch_sizes, p.coverage_threshold),
            DescriptorSpec::Color { params, .. } => {
                check_grid(params.step, &params.patch_sizes, params.coverage_threshold)
            }
            DescriptorSpec::PriCoLbp { offsets } if offsets.is_empty() || offsets.contains(&0) => {
                Err(precondition("co-occurrence offsets must be positive and non-empty"))
            }
            _ => Ok(()),
        }
    }

    /// Extracts from an already preprocessed image.
    pub fn extract(&self, image: &RasterImage, mask: &ForegroundMask, table: &ColorNameTable) -> Result<DescriptorSet> {
        match self {
            DescriptorSpec::Sift(p) => dense_sift(&to_grayscale(image), mask, p),
            DescriptorSpec::Color { mode, params } => dense_color(image, mask, *mode, params, table),
            DescriptorSpec::Lbp(spec) => Ok(DescriptorSet::global(&lbp_histogram(&to_grayscale(image), mask, *spec)?)),
            DescriptorSpec::Mslbp => Ok(DescriptorSet::global(&mslbp(&to_grayscale(image), mask)?)),
            DescriptorSpec::PriCoLbp { offsets } => {
                Ok(DescriptorSet::global(&prico_lbp(&to_grayscale(image), mask, offsets)?))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderSpec {
    Bow { k: usize },
    Ifv { k: usize },
    Rcc { k: usize },
    Histogram,
}

impl EncoderSpec {
    pub fn centers(&self) -> Option<usize> {
        match *self {
            EncoderSpec::Bow { k } | EncoderSpec::Ifv { k } | EncoderSpec::Rcc { k } => Some(k),
            EncoderSpec::Histogram => None,
        }
    }
}

/// Extraction parameters that identifiers do not carry.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorDefaults {
    pub sift: SiftParams,
    pub color: ColorParams,
    pub prico_offsets: Vec<u32>,
}

impl Default for DescriptorDefaults {
    fn default() -> Self {
        Self {
            sift: SiftParams::default(),
            color: ColorParams::default(),
            prico_offsets: DEFAULT_PRICO_OFFSETS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub descriptor: DescriptorSpec,
    pub encoder: EncoderSpec,
}

impl PipelineSpec {
    pub fn parse(id: &str, defaults: &DescriptorDefaults) -> Result<Self> {
        let bad = || Error::Parse(format!("unknown descriptor identifier `{id}`"));
        let parts: Vec<&str> = id.trim().split('-').collect();
        let spec = match parts.as_slice() {
            ["mslbp"] => Self {
                descriptor: DescriptorSpec::Mslbp,
                encoder: EncoderSpec::Histogram,
            },
            ["pricolbp"] => Self {
                descriptor: DescriptorSpec::PriCoLbp {
                    offsets: defaults.prico_offsets.clone(),
                },
                encoder: EncoderSpec::Histogram,
            },
            ["lbp", mapping, p, r] => {
                let mapping = MappingKind::from_str(mapping)?;
                let p = p.parse().map_err(|_| bad())?;
                let r = r.parse().map_err(|_| bad())?;
                Self {
                    descriptor: DescriptorSpec::Lbp(LbpSpec::new(p, r, mapping).map_err(|_| bad())?),
                    encoder: EncoderSpec::Histogram,
                }
            }
            [desc, enc, k] => {
                let descriptor = match *desc {
                    "sift" => DescriptorSpec::Sift(defaults.sift.clone()),
                    "cn" => DescriptorSpec::Color {
                        mode: ColorMode::ColorNames,
                        params: defaults.color.clone(),
                    },
                    "rgb" => DescriptorSpec::Color {
                        mode: ColorMode::Rgb,
                        params: defaults.color.clone(),
                    },
                    _ => return Err(bad()),
                };
                let k: usize = k.parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(Error::Parse(format!("`{id}`: the number of centres must be positive")));
                }
                let encoder = match *enc {
                    "bow" => EncoderSpec::Bow { k },
                    "ifv" => EncoderSpec::Ifv { k },
                    "rcc" => EncoderSpec::Rcc { k },
                    _ => return Err(bad()),
                };
                Self { descriptor, encoder }
            }
            _ => return Err(bad()),
        };
        spec.descriptor.validate()?;
        Ok(spec)
    }

    pub fn id(&self) -> String {
        match self.encoder {
            EncoderSpec::Bow { k } => format!("{}-bow-{k}", self.descriptor.name()),
            EncoderSpec::Ifv { k } => format!("{}-ifv-{k}", self.descriptor.name()),
            EncoderSpec::Rcc { k } => format!("{}-rcc-{k}", self.descriptor.name()),
            EncoderSpec::Histogram => self.descriptor.name(),
        }
    }

    pub fn stimulus(&self) -> Stimulus {
        self.descriptor.stimulus()
    }
}

/// Stimulus a descriptor identifier measures.
pub fn stimulus_of(id: &str) -> Result<Stimulus> {
    Ok(PipelineSpec::parse(id, &DescriptorDefaults::default())?.stimulus())
}
