//! `extract`, `run`, `rank` and `synth`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use vistim_core::color::{ColorNameTable, DEFAULT_BINS_PER_CHANNEL};
use vistim_core::evaluation::{
    cell_seed, fraction_sweep, make_split, rank_stimuli, ranking_csv, read_summary_csv, runs_csv, summary_csv,
    write_text, DatasetManifest, EvaluationReport, FeaturePipeline, ManifestEntry, RankEntry, SplitProtocol,
    SplitSpec,
};
use vistim_core::imaging::{decode_image, decode_mask};
use vistim_core::pipeline::{DescriptorSpec, PipelineSpec, Preprocess};
use vistim_core::synthetic::{self, SyntheticConfig, Variant};
use vistim_core::DescriptorSet;

use crate::cache;
use crate::config::ExperimentConfig;
use crate::model_file;
use crate::plot::accuracy_svg;
use crate::CliError;

fn data(msg: impl Into<String>) -> CliError {
    CliError::Data(msg.into())
}

fn internal(msg: impl Into<String>) -> CliError {
    CliError::Internal(msg.into())
}

/// Validated configuration plus the loaded manifest and colour table.
pub struct Context {
    pub config: ExperimentConfig,
    pub manifest: DatasetManifest,
    pub table: ColorNameTable,
    table_digest: String,
}

impl Context {
    pub fn prepare(config: ExperimentConfig) -> Result<Self, CliError> {
        config.validate()?;
        let manifest = DatasetManifest::load(&config.manifest).map_err(CliError::from)?;
        if manifest.entries.is_empty() {
            return Err(data(format!("manifest {} lists no images", config.manifest.display())));
        }
        let table = match &config.color_table {
            Some(p) => ColorNameTable::load(p).map_err(CliError::from)?,
            None => ColorNameTable::fallback(DEFAULT_BINS_PER_CHANNEL),
        };
        let table_digest = hex::encode(Sha256::digest(table.to_text().as_bytes()));
        Ok(Self {
            config,
            manifest,
            table,
            table_digest,
        })
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.config.out.join("cache")
    }

    /// Everything the extracted features depend on besides the pixels.
    fn descriptor_key(&self, spec: &DescriptorSpec, pre: &Preprocess) -> String {
        let mut key = format!(
            "{};crop={};height={}",
            spec.cache_key(),
            pre.crop,
            pre.target_height.unwrap_or(0)
        );
        if matches!(spec, DescriptorSpec::Color { .. }) {
            let _ = write!(key, ";table={}", self.table_digest);
        }
        key
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtractSummary {
    pub written: usize,
    pub reused: usize,
    /// (image path, descriptor, message)
    pub failures: Vec<(PathBuf, String, String)>,
}

enum Outcome {
    Reused(DescriptorSet),
    Written(DescriptorSet),
}

fn extract_entry(ctx: &Context, entry: &ManifestEntry, spec: &DescriptorSpec) -> Result<Outcome, String> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    let image_bytes = read(&entry.image)?;
    let mask_bytes = read(&entry.mask)?;
    let pre = ctx.config.preprocess();
    let key = cache::content_key(&image_bytes, &mask_bytes, &ctx.descriptor_key(spec, &pre));
    let path = cache::cache_path(&ctx.cache_dir(), &key);
    let id = spec.cache_key();
    if let Ok(hit) = cache::read(&path) {
        if hit.id == id {
            return Ok(Outcome::Reused(hit.set));
        }
    }
    let image = decode_image(&image_bytes, &entry.image).map_err(|e| e.to_string())?;
    let mask = decode_mask(&mask_bytes, &entry.mask).map_err(|e| e.to_string())?;
    let (image, mask) = pre.apply(&image, &mask).map_err(|e| e.to_string())?;
    let set = spec.extract(&image, &mask, &ctx.table).map_err(|e| e.to_string())?;
    cache::write(&path, &id, &set).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(Outcome::Written(set))
}

/// Features of every manifest entry for one descriptor, from the cache when
/// possible. Failed entries are `None` and listed in the summary.
pub fn features_for(ctx: &Context, spec: &DescriptorSpec) -> (Vec<Option<DescriptorSet>>, ExtractSummary) {
    let outcomes: Vec<Result<Outcome, String>> = ctx
        .manifest
        .entries
        .par_iter()
        .map(|e| extract_entry(ctx, e, spec))
        .collect();
    let mut summary = ExtractSummary::default();
    let sets = outcomes
        .into_iter()
        .zip(&ctx.manifest.entries)
        .map(|(o, e)| match o {
            Ok(Outcome::Reused(s)) => {
                summary.reused += 1;
                Some(s)
            }
            Ok(Outcome::Written(s)) => {
                summary.written += 1;
                Some(s)
            }
            Err(msg) => {
                summary.failures.push((e.image.clone(), spec.name(), msg));
                None
            }
        })
        .collect();
    (sets, summary)
}

fn unique_descriptors(specs: &[PipelineSpec]) -> Vec<DescriptorSpec> {
    let mut seen = BTreeMap::new();
    for s in specs {
        seen.entry(s.descriptor.cache_key()).or_insert_with(|| s.descriptor.clone());
    }
    seen.into_values().collect()
}

pub fn cmd_extract(config: ExperimentConfig) -> Result<ExtractSummary, CliError> {
    let ctx = Context::prepare(config)?;
    let specs = ctx.config.pipeline_specs()?;
    let mut total = ExtractSummary::default();
    for spec in unique_descriptors(&specs) {
        let (_, s) = features_for(&ctx, &spec);
        eprintln!(
            "extract {}: {} written, {} cached, {} failed",
            spec.name(),
            s.written,
            s.reused,
            s.failures.len()
        );
        total.written += s.written;
        total.reused += s.reused;
        total.failures.extend(s.failures);
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub reports: Vec<EvaluationReport>,
    pub runs_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub confusion_csv: Vec<PathBuf>,
    pub svg: PathBuf,
    pub models: Vec<PathBuf>,
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    write_text(path, contents).map_err(|e| internal(e.to_string()))
}

pub fn cmd_run(config: ExperimentConfig) -> Result<RunOutputs, CliError> {
    let ctx = Context::prepare(config)?;
    let cfg = &ctx.config;
    let specs = ctx.config.pipeline_specs()?;
    let labels = ctx.manifest.labels();
    let sweep = cfg.sweep();
    let fit = cfg.fit();
    let reference = sweep
        .fractions
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 0.5).abs().total_cmp(&(b.1 - 0.5).abs()))
        .map(|(i, &f)| (i, f))
        .expect("validated fractions");
    let mut features: BTreeMap<String, Vec<DescriptorSet>> = BTreeMap::new();
    for spec in unique_descriptors(&specs) {
        let (sets, s) = features_for(&ctx, &spec);
        if !s.failures.is_empty() {
            let list: Vec<String> = s
                .failures
                .iter()
                .map(|(p, _, m)| format!("  {}: {m}", p.display()))
                .collect();
            return Err(data(format!(
                "{} of {} entries failed for {}:\n{}",
                s.failures.len(),
                sets.len(),
                spec.name(),
                list.join("\n")
            )));
        }
        features.insert(spec.cache_key(), sets.into_iter().map(Option::unwrap).collect());
    }
    let mut reports = Vec::new();
    let mut models = Vec::new();
    for spec in &specs {
        let pipeline = FeaturePipeline {
            spec: spec.clone(),
            features: &features[&spec.descriptor.cache_key()],
            labels: &labels,
            fit: fit.clone(),
        };
        eprintln!("run {}: {} cells", spec.id(), sweep.fractions.len() * sweep.repeats);
        let report = fraction_sweep(&ctx.manifest, &pipeline, &sweep)?;
        let split = make_split(
            &ctx.manifest,
            &SplitSpec {
                protocol: SplitProtocol::Fraction(reference.1),
                seed: sweep.seed,
                repeats: sweep.repeats,
            },
            0,
        )?;
        let fitted = pipeline.fit(&split.train, cell_seed(sweep.seed, reference.0, 0))?;
        let path = cfg.out.join("models").join(format!("{}.model", spec.id()));
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| internal(e.to_string()))?;
        std::fs::write(&path, model_file::encode(&fitted)).map_err(|e| internal(format!("{}: {e}", path.display())))?;
        models.push(path);
        reports.push(report);
    }
    let runs_path = cfg.out.join("runs.csv");
    let summary_path = cfg.out.join("summary.csv");
    let svg_path = cfg.out.join("accuracy.svg");
    write(&runs_path, &runs_csv(&reports)?)?;
    write(&summary_path, &summary_csv(&reports)?)?;
    write(&svg_path, &accuracy_svg(&reports))?;
    let mut confusion_csv = Vec::new();
    for r in &reports {
        if let Some(cm) = r.reference_confusion() {
            let p = cfg.out.join("confusion").join(format!("{}.csv", r.descriptor));
            write(&p, &cm.to_csv()?)?;
            confusion_csv.push(p);
        }
    }
    print!("{}", summary_table(&reports));
    Ok(RunOutputs {
        reports,
        runs_csv: runs_path,
        summary_csv: summary_path,
        confusion_csv,
        svg: svg_path,
        models,
    })
}

fn summary_table(reports: &[EvaluationReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<20} {:>8} {:>8} {:>8}", "descriptor", "fraction", "mean", "std");
    for r in reports {
        for f in &r.summary {
            let _ = writeln!(s, "{:<20} {:>8.2} {:>8.4} {:>8.4}", r.descriptor, f.fraction, f.mean, f.std);
        }
    }
    s
}

pub fn ranking_table(ranking: &[RankEntry]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<5} {:<10} {:<20} {:>8}", "rank", "stimulus", "descriptor", "mean");
    for (i, e) in ranking.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:<5} {:<10} {:<20} {:>8.4}{}",
            i + 1,
            e.stimulus,
            e.descriptor,
            e.mean,
            if e.tied { " (tied)" } else { "" }
        );
    }
    s
}

/// Ranks stimuli from summary CSVs and writes `ranking.csv` into `out`.
pub fn cmd_rank(paths: &[PathBuf], fraction: f64, out: &Path) -> Result<Vec<RankEntry>, CliError> {
    if paths.is_empty() {
        return Err(CliError::Validation("rank needs at least one summary CSV".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CliError::Validation(format!("fraction {fraction} outside (0, 1)")));
    }
    let mut reports = Vec::new();
    for p in paths {
        let file = std::fs::File::open(p).map_err(|e| data(format!("{}: {e}", p.display())))?;
        let parsed = read_summary_csv(file).map_err(|e| data(format!("{}: {e}", p.display())))?;
        if parsed.is_empty() {
            return Err(data(format!("{}: no summary rows", p.display())));
        }
        for r in &parsed {
            if r.mean_at(fraction).is_none() {
                return Err(data(format!(
                    "{}: descriptor {} has no row for fraction {fraction}",
                    p.display(),
                    r.descriptor
                )));
            }
        }
        reports.extend(parsed);
    }
    let ranking = rank_stimuli(&reports, fraction)?;
    write(&out.join("ranking.csv"), &ranking_csv(&ranking, fraction)?)?;
    print!("{}", ranking_table(&ranking));
    Ok(ranking)
}

/// Writes a generated dataset and a matching configuration into `dir`.
pub fn cmd_synth(variant: Variant, config: &SyntheticConfig, dir: &Path) -> Result<PathBuf, CliError> {
    if config.per_class < 2 || config.size < 32 {
        return Err(CliError::Validation(
            "synthetic datasets need at least 2 images per class and 32-pixel images".into(),
        ));
    }
    let images = synthetic::generate(variant, config);
    synthetic::write_dataset(dir, &images)?;
    let defaults = synthetic::descriptor_defaults();
    let mut exp = ExperimentConfig {
        manifest: "manifest.tsv".into(),
        out: "out".into(),
        seed: config.seed,
        pipelines: synthetic::REPRESENTATIVES.iter().map(|s| s.to_string()).collect(),
        ..Default::default()
    };
    exp.preprocess.crop = false;
    exp.preprocess.height = 0;
    exp.sift.step = defaults.sift.step;
    exp.sift.patch_sizes = defaults.sift.patch_sizes;
    exp.encoder.sample_cap = 10_000;
    exp.split.repeats = 10;
    let path = dir.join("experiment.toml");
    write(&path, &exp.to_toml())?;
    Ok(path)
}
