//! Experiment configuration: a TOML file of namespaced keys, overridable from
//! the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vistim_core::classifier::TrainConfig;
use vistim_core::color::ColorParams;
use vistim_core::encoding::{GmmConfig, KMeansConfig, RccParams};
use vistim_core::evaluation::{default_fractions, FitConfig, SplitProtocol, SplitSpec, SweepConfig};
use vistim_core::pipeline::{DescriptorDefaults, PipelineSpec, Preprocess};
use vistim_core::sift::SiftParams;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub pipelines: Vec<String>,
    pub color_table: Option<PathBuf>,
    pub preprocess: PreprocessSection,
    pub sift: SiftSection,
    pub color: ColorSection,
    pub pricolbp: PricoSection,
    pub encoder: EncoderSection,
    pub svm: SvmSection,
    pub split: SplitSection,
    pub rank: RankSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub crop: bool,
    /// Target height in pixels; 0 keeps the original size.
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiftSection {
    pub step: u32,
    pub patch_sizes: Vec<u32>,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColorSection {
    pub step: u32,
    pub patch_sizes: Vec<u32>,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PricoSection {
    pub offsets: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub sample_cap: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub gmm_max_iter: usize,
    pub gmm_tol: f64,
    pub rcc_cell: u32,
    pub rcc_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSection {
    pub c: f64,
    pub tol: f64,
    pub max_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub fractions: Vec<f64>,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSection {
    pub fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("manifest.tsv"),
            out: PathBuf::from("out"),
            seed: 0,
            jobs: 0,
            pipelines: vec!["sift-bow-256".into(), "cn-rcc-256".into(), "mslbp".into()],
            color_table: None,
            preprocess: PreprocessSection::default(),
            sift: SiftSection::default(),
            color: ColorSection::default(),
            pricolbp: PricoSection::default(),
            encoder: EncoderSection::default(),
            svm: SvmSection::default(),
            split: SplitSection::default(),
            rank: RankSection::default(),
        }
    }
}

impl Default for PreprocessSection {
    fn default() -> Self {
        let p = Preprocess::canonical();
        Self {
            crop: p.crop,
            height: p.target_height.unwrap_or(0),
        }
    }
}

impl Default for SiftSection {
    fn default() -> Self {
        let p = SiftParams::default();
        Self {
            step: p.step,
            patch_sizes: p.patch_sizes,
            coverage: p.coverage_threshold,
        }
    }
}

impl Default for ColorSection {
    fn default() -> Self {
        let p = ColorParams::default();
        Self {
            step: p.step,
            patch_sizes: p.patch_sizes,
            coverage: p.coverage_threshold,
        }
    }
}

impl Default for PricoSection {
    fn default() -> Self {
        Self {
            offsets: DescriptorDefaults::default().prico_offsets,
        }
    }
}

impl Default for EncoderSection {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            sample_cap: fit.sample_cap,
            kmeans_max_iter: fit.kmeans.max_iter,
            kmeans_tol: fit.kmeans.tol,
            gmm_max_iter: fit.gmm.max_iter,
            gmm_tol: fit.gmm.tol,
            rcc_cell: fit.rcc.cell_size,
            rcc_radius: fit.rcc.radius,
        }
    }
}

impl Default for SvmSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            c: t.c,
            tol: t.tol,
            max_epochs: t.max_epochs,
        }
    }
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            fractions: default_fractions(),
            repeats: 30,
        }
    }
}

impl Default for RankSection {
    fn default() -> Self {
        Self { fraction: 0.5 }
    }
}

/// Values given on the command line; `None` keeps the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| invalid(format!("configuration: {e}")))
    }

    /// Reads a configuration file. Relative paths inside it are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read configuration {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.manifest = base.join(&cfg.manifest);
        cfg.out = base.join(&cfg.out);
        cfg.color_table = cfg.color_table.map(|p| base.join(p));
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(j) = o.jobs {
            self.jobs = j;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
    }

    pub fn preprocess(&self) -> Preprocess {
        Preprocess {
            crop: self.preprocess.crop,
            target_height: (self.preprocess.height > 0).then_some(self.preprocess.height),
        }
    }

    pub fn defaults(&self) -> DescriptorDefaults {
        DescriptorDefaults {
            sift: SiftParams {
                step: self.sift.step,
                patch_sizes: self.sift.patch_sizes.clone(),
                coverage_threshold: self.sift.coverage,
            },
            color: ColorParams {
                step: self.color.step,
                patch_sizes: self.color.patch_sizes.clone(),
                coverage_threshold: self.color.coverage,
            },
            prico_offsets: self.pricolbp.offsets.clone(),
        }
    }

    pub fn fit(&self) -> FitConfig {
        let e = &self.encoder;
        FitConfig {
            svm: TrainConfig {
                c: self.svm.c,
                tol: self.svm.tol,
                max_epochs: self.svm.max_epochs,
                seed: self.seed,
            },
            kmeans: KMeansConfig {
                max_iter: e.kmeans_max_iter,
                tol: e.kmeans_tol,
            },
            gmm: GmmConfig {
                max_iter: e.gmm_max_iter,
                tol: e.gmm_tol,
                var_floor: None,
            },
            rcc: RccParams {
                cell_size: e.rcc_cell,
                radius: e.rcc_radius,
            },
            sample_cap: e.sample_cap,
        }
    }

    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            fractions: self.split.fractions.clone(),
            repeats: self.split.repeats,
            seed: self.seed,
        }
    }

    pub fn pipeline_specs(&self) -> Result<Vec<PipelineSpec>, CliError> {
        let defaults = self.defaults();
        self.pipelines
            .iter()
            .map(|id| PipelineSpec::parse(id, &defaults).map_err(|e| invalid(format!("pipeline `{id}`: {e}"))))
            .collect()
    }

    /// Rejects every setting a later stage would refuse, without touching
    /// any data file.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.pipelines.is_empty() {
            return Err(invalid("`pipelines` lists no pipeline"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for spec in self.pipeline_specs()? {
            spec.descriptor
                .validate()
                .map_err(|e| invalid(format!("pipeline `{}`: {e}", spec.id())))?;
            if !seen.insert(spec.id()) {
                return Err(invalid(format!("pipeline `{}` is listed twice", spec.id())));
            }
        }
        self.fit().svm.validate().map_err(|e| invalid(e.to_string()))?;
        let e = &self.encoder;
        if e.sample_cap == 0 {
            return Err(invalid("encoder.sample_cap must be positive"));
        }
        if e.kmeans_max_iter == 0 || e.gmm_max_iter == 0 {
            return Err(invalid("encoder iteration limits must be positive"));
        }
        if !(e.kmeans_tol >= 0.0) || !(e.gmm_tol >= 0.0) {
            return Err(invalid("encoder tolerances must be non-negative"));
        }
        if e.rcc_cell == 0 || !(e.rcc_radius >= 0.0) {
            return Err(invalid("encoder.rcc_cell must be positive and encoder.rcc_radius non-negative"));
        }
        if self.split.fractions.is_empty() {
            return Err(invalid("split.fractions is empty"));
        }
        for &f in &self.split.fractions {
            SplitSpec {
                protocol: SplitProtocol::Fraction(f),
                seed: self.seed,
                repeats: self.split.repeats,
            }
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        }
        if !(self.rank.fraction > 0.0 && self.rank.fraction < 1.0) {
            return Err(invalid(format!("rank.fraction {} outside (0, 1)", self.rank.fraction)));
        }
        if !self.manifest.is_file() {
            return Err(invalid(format!("manifest {} does not exist", self.manifest.display())));
        }
        if let Some(t) = &self.color_table {
            if !t.is_file() {
                return Err(invalid(format!("color table {} does not exist", t.display())));
            }
        }
        Ok(())
    }
}
