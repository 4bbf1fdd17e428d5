//! Dataset manifests, split protocols, accuracy bookkeeping and the training
//! fraction sweep.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classifier::{predict, train_ova, MultiClassModel, TrainConfig};
use crate::color::ColorNameTable;
use crate::descriptor::DescriptorSet;
use crate::encoding::{
    bow_encode, gmm_train, ifv_encode, kmeans_train, rcc_encode, Codebook, EncodedVector, FeatureMatrix,
    GaussianMixture, GmmConfig, KMeansConfig, RccParams,
};
use crate::error::{contract, precondition, Error, Result};
use crate::pipeline::{stimulus_of, EncoderSpec, PipelineSpec, Preprocess, Stimulus};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub mask: PathBuf,
    pub label: String,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub name: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, entries: Vec<ManifestEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if e.image.as_os_str().is_empty() || e.mask.as_os_str().is_empty() || e.label.is_empty() {
                return Err(Error::Parse(format!("manifest entry {} has an empty field", i + 1)));
            }
        }
        if entries.is_empty() {
            return Err(Error::Parse("manifest has no entries".into()));
        }
        Ok(Self {
            name: name.into(),
            entries,
        })
    }

    /// Parses tab-separated records: image, mask, label, then optional
    /// `key=value` pairs. Blank lines and `#` comments are skipped; relative
    /// paths are resolved against `base`.
    pub fn parse(text: &str, name: &str, base: Option<&Path>) -> Result<Self> {
        let resolve = |p: &str| -> PathBuf {
            let path = PathBuf::from(p);
            match base {
                Some(b) if path.is_relative() => b.join(path),
                _ => path,
            }
        };
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 3 {
                return Err(Error::Parse(format!(
                    "manifest line {}: expected image, mask and label separated by tabs",
                    n + 1
                )));
            }
            let mut metadata = BTreeMap::new();
            for kv in &fields[3..] {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("manifest line {}: `{kv}` is not key=value", n + 1)))?;
                metadata.insert(k.to_string(), v.to_string());
            }
            entries.push(ManifestEntry {
                image: resolve(fields[0]),
                mask: resolve(fields[1]),
                label: fields[2].to_string(),
                metadata,
            });
        }
        Self::new(name, entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::parse(&text, &name, path.parent())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}", e.image.display(), e.mask.display(), e.label));
            for (k, v) in &e.metadata {
                out.push_str(&format!("\t{k}={v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.label.clone()).collect()
    }

    /// Entry indices per category, categories sorted.
    pub fn categories(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            map.entry(e.label.as_str()).or_default().push(i);
        }
        map
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitProtocol {
    FixedCounts { train: usize, test: usize },
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub protocol: SplitProtocol,
    pub seed: u64,
    pub repeats: usize,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        match self.protocol {
            SplitProtocol::FixedCounts { train, test } if train == 0 || test == 0 => {
                return Err(precondition("fixed split counts must be at least 1"))
            }
            SplitProtocol::Fraction(f) if !(f > 0.0 && f < 1.0) => {
                return Err(precondition(format!("training fraction {f} outside (0, 1)")))
            }
            _ => {}
        }
        if self.repeats == 0 {
            return Err(precondition("repeats must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Training count for a category of `size` entries: `fraction * size`
/// rounded half up and clamped to `[1, size - 1]`.
pub fn fraction_count(fraction: f64, size: usize) -> usize {
    let raw = (fraction * size as f64 + 0.5 + 1e-9).floor() as usize;
    raw.clamp(1, size.saturating_sub(1).max(1))
}

/// Category-stratified split drawn from the stream `(seed, run_index)`.
/// Categories are visited in sorted order.
pub fn make_split(manifest: &DatasetManifest, spec: &SplitSpec, run_index: usize) -> Result<Split> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(run_index as u64);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (category, members) in manifest.categories() {
        let n = members.len();
        let (n_train, n_test) = match spec.protocol {
            SplitProtocol::FixedCounts { train, test } => (train, test),
            SplitProtocol::Fraction(f) => {
                let t = fraction_count(f, n);
                (t, n.saturating_sub(t))
            }
        };
        if n < 2 || n_train + n_test > n {
            return Err(Error::Protocol {
                category: category.to_string(),
                message: format!("{n} entries cannot provide {n_train} training and {n_test} test entries"),
            });
        }
        let drawn = sample(&mut rng, n, n_train + n_test).into_vec();
        train.extend(drawn[..n_train].iter().map(|&k| members[k]));
        test.extend(drawn[n_train..].iter().map(|&k| members[k]));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Correct predictions and total count.
pub fn tally<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], truth: &[T]) -> Result<(usize, usize)> {
    if predictions.len() != truth.len() {
        return Err(contract(format!(
            "{} predictions for {} ground-truth labels",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(precondition("accuracy needs at least one sample"));
    }
    let tp = predictions.iter().zip(truth).filter(|(p, t)| p.as_ref() == t.as_ref()).count();
    Ok((tp, truth.len()))
}

/// `TP / TT`.
pub fn accuracy<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], truth: &[T]) -> Result<f64> {
    let (tp, tt) = tally(predictions, truth)?;
    Ok(tp as f64 / tt as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    /// Row = truth, column = prediction.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn diagonal(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Rows scaled to sum to one; empty rows stay zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["truth\\prediction".to_string()];
        header.extend(self.classes.iter().cloned());
        w.write_record(&header).map_err(csv_error)?;
        for (c, row) in self.classes.iter().zip(&self.counts) {
            let mut rec = vec![c.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec).map_err(csv_error)?;
        }
        into_string(w)
    }
}

pub fn confusion<S: AsRef<str>, T: AsRef<str>>(
    predictions: &[S],
    truth: &[T],
    classes: &[String],
) -> Result<ConfusionMatrix> {
    if predictions.len() != truth.len() {
        return Err(contract("predictions and truth differ in length"));
    }
    let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let find = |l: &str| {
        index
            .get(l)
            .copied()
            .ok_or_else(|| contract(format!("label `{l}` is not one of the confusion classes")))
    };
    let mut counts = vec![vec![0u64; classes.len()]; classes.len()];
    for (p, t) in predictions.iter().zip(truth) {
        counts[find(t.as_ref())?][find(p.as_ref())?] += 1;
    }
    Ok(ConfusionMatrix {
        classes: classes.to_vec(),
        counts,
    })
}

/// A complete train-then-predict procedure over manifest indices.
pub trait Pipeline: Sync {
    fn id(&self) -> String;
    fn stimulus(&self) -> Stimulus;
    /// Predicted labels for `test`, fitted on `train` only.
    fn fit_predict(&self, train: &[usize], test: &[usize], seed: u64) -> Result<Vec<String>>;
}

/// Hands out training rows and refuses anything outside the training split.
pub struct TrainingGuard {
    members: BTreeSet<usize>,
}

impl TrainingGuard {
    /// Panics if the two index lists overlap.
    pub fn new(train: &[usize], test: &[usize]) -> Self {
        let members: BTreeSet<usize> = train.iter().copied().collect();
        assert!(
            test.iter().all(|t| !members.contains(t)),
            "train and test indices overlap"
        );
        Self { members }
    }

    pub fn take<'a, T>(&self, items: &'a [T], index: usize) -> &'a T {
        assert!(
            self.members.contains(&index),
            "entry {index} is not in the training split"
        );
        &items[index]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub svm: TrainConfig,
    pub kmeans: KMeansConfig,
    pub gmm: GmmConfig,
    pub rcc: RccParams,
    /// Upper bound on local features used to fit a codebook or mixture.
    pub sample_cap: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            svm: TrainConfig::default(),
            kmeans: KMeansConfig::default(),
            gmm: GmmConfig::default(),
            rcc: RccParams::default(),
            sample_cap: 200_000,
        }
    }
}

/// Descriptor, encoder and SVM over precomputed per-entry descriptor sets.
pub struct FeaturePipeline<'a> {
    pub spec: PipelineSpec,
    pub features: &'a [DescriptorSet],
    pub labels: &'a [String],
    pub fit: FitConfig,
}

/// Fitted encoder state.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderState {
    Bow(Codebook),
    Rcc(Codebook, RccParams),
    Ifv(GaussianMixture),
    Histogram,
}

impl EncoderState {
    pub fn encode(&self, set: &DescriptorSet) -> Result<EncodedVector> {
        match self {
            EncoderState::Bow(book) => bow_encode(set, book),
            EncoderState::Rcc(book, params) => rcc_encode(set, book, *params),
            EncoderState::Ifv(gmm) => ifv_encode(set, gmm),
            EncoderState::Histogram => {
                if set.len() != 1 {
                    return Err(contract("histogram descriptors must hold exactly one row"));
                }
                let row: Vec<f64> = set.row(0).iter().map(|&v| v as f64).collect();
                Ok(EncodedVector::from_histogram(&row))
            }
        }
    }
}

/// Encoder plus one-vs-all model, fitted on one training split.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedPipeline {
    pub id: String,
    pub encoder: EncoderState,
    pub model: MultiClassModel,
}

impl FittedPipeline {
    pub fn predict(&self, set: &DescriptorSet) -> Result<String> {
        let e = self.encoder.encode(set)?;
        predict(&self.model, &e.values).map(str::to_string)
    }
}

impl FeaturePipeline<'_> {
    fn fit_encoder(&self, train_sets: &[&DescriptorSet], seed: u64) -> Result<EncoderState> {
        let fit = &self.fit;
        let matrix = || -> Result<FeatureMatrix> {
            let nonempty: Vec<&DescriptorSet> = train_sets.iter().copied().filter(|s| !s.is_empty()).collect();
            if nonempty.is_empty() {
                return Err(precondition("no training image produced local features"));
            }
            FeatureMatrix::stack(&nonempty, Some(fit.sample_cap), seed)
        };
        Ok(match self.spec.encoder {
            EncoderSpec::Bow { k } => EncoderState::Bow(kmeans_train(&matrix()?, k, seed, fit.kmeans)?),
            EncoderSpec::Rcc { k } => EncoderState::Rcc(kmeans_train(&matrix()?, k, seed, fit.kmeans)?, fit.rcc),
            EncoderSpec::Ifv { k } => EncoderState::Ifv(gmm_train(&matrix()?, k, seed, fit.gmm)?),
            EncoderSpec::Histogram => EncoderState::Histogram,
        })
    }

    /// Fits the encoder and classifier on the `train` entries only.
    pub fn fit(&self, train: &[usize], seed: u64) -> Result<FittedPipeline> {
        let guard = TrainingGuard::new(train, &[]);
        self.fit_guarded(&guard, train, seed)
    }

    fn fit_guarded(&self, guard: &TrainingGuard, train: &[usize], seed: u64) -> Result<FittedPipeline> {
        let train_sets: Vec<&DescriptorSet> = train.iter().map(|&i| guard.take(self.features, i)).collect();
        let encoder = self.fit_encoder(&train_sets, seed)?;
        let x_train: Vec<Vec<f64>> = train_sets
            .par_iter()
            .map(|s| encoder.encode(s).map(|e| e.values))
            .collect::<Result<_>>()?;
        let y_train: Vec<&str> = train.iter().map(|&i| guard.take(self.labels, i).as_str()).collect();
        let svm = TrainConfig { seed, ..self.fit.svm };
        let model = train_ova(&x_train, &y_train, &svm)?;
        Ok(FittedPipeline {
            id: self.spec.id(),
            encoder,
            model,
        })
    }
}

impl Pipeline for FeaturePipeline<'_> {
    fn id(&self) -> String {
        self.spec.id()
    }

    fn stimulus(&self) -> Stimulus {
        self.spec.stimulus()
    }

    fn fit_predict(&self, train: &[usize], test: &[usize], seed: u64) -> Result<Vec<String>> {
        let guard = TrainingGuard::new(train, test);
        let fitted = self.fit_guarded(&guard, train, seed)?;
        test.par_iter().map(|&i| fitted.predict(&self.features[i])).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub fractions: Vec<f64>,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            fractions: default_fractions(),
            repeats: 30,
            seed: 0,
        }
    }
}

/// 0.1, 0.2, ..., 0.9.
pub fn default_fractions() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub fraction: f64,
    pub run: usize,
    pub seed: u64,
    pub tp: usize,
    pub tt: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FractionSummary {
    pub fraction: f64,
    pub mean: f64,
    /// Sample standard deviation over runs (zero for a single run).
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub descriptor: String,
    pub stimulus: Stimulus,
    pub runs: Vec<RunRecord>,
    pub summary: Vec<FractionSummary>,
    /// One confusion matrix per run, aligned with `runs`.
    pub confusions: Vec<ConfusionMatrix>,
}

impl EvaluationReport {
    /// Confusion matrix of the first run at the fraction closest to 0.5.
    pub fn reference_confusion(&self) -> Option<&ConfusionMatrix> {
        let target = self
            .runs
            .iter()
            .map(|r| r.fraction)
            .min_by(|a, b| (a - 0.5).abs().total_cmp(&(b - 0.5).abs()))?;
        self.runs
            .iter()
            .position(|r| r.fraction == target)
            .and_then(|i| self.confusions.get(i))
    }

    pub fn mean_at(&self, fraction: f64) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| (s.fraction - fraction).abs() < 1e-9)
            .map(|s| s.mean)
    }
}

/// Seed of one sweep cell, mixed from the sweep seed, fraction index and run.
pub fn cell_seed(seed: u64, fraction_index: usize, run: usize) -> u64 {
    let mut z = seed
        ^ (fraction_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (run as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn summarize(fraction: f64, accs: &[f64]) -> FractionSummary {
    let n = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / n;
    let std = if accs.len() > 1 {
        (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    FractionSummary { fraction, mean, std }
}

/// Splits, fits and scores every (fraction, run) cell. Cells are independent
/// and keyed, so results do not depend on execution order.
pub fn fraction_sweep(manifest: &DatasetManifest, pipeline: &dyn Pipeline, config: &SweepConfig) -> Result<EvaluationReport> {
    if config.fractions.is_empty() {
        return Err(precondition("the sweep needs at least one fraction"));
    }
    let classes: Vec<String> = manifest.categories().keys().map(|s| s.to_string()).collect();
    let cells: Vec<(usize, usize)> = (0..config.fractions.len())
        .flat_map(|f| (0..config.repeats).map(move |r| (f, r)))
        .collect();
    for &f in &config.fractions {
        SplitSpec {
            protocol: SplitProtocol::Fraction(f),
            seed: config.seed,
            repeats: config.repeats,
        }
        .validate()?;
    }
    let outcomes: Vec<Result<(RunRecord, ConfusionMatrix)>> = cells
        .par_iter()
        .map(|&(fi, run)| {
            let fraction = config.fractions[fi];
            let wrap = |e: Error| Error::Cell {
                fraction,
                run,
                source: Box::new(e),
            };
            let spec = SplitSpec {
                protocol: SplitProtocol::Fraction(fraction),
                seed: config.seed,
                repeats: config.repeats,
            };
            let split = make_split(manifest, &spec, run).map_err(wrap)?;
            let seed = cell_seed(config.seed, fi, run);
            let predictions = pipeline.fit_predict(&split.train, &split.test, seed).map_err(wrap)?;
            let truth: Vec<&str> = split.test.iter().map(|&i| manifest.entries[i].label.as_str()).collect();
            let (tp, tt) = tally(&predictions, &truth).map_err(wrap)?;
            let cm = confusion(&predictions, &truth, &classes).map_err(wrap)?;
            Ok((
                RunRecord {
                    fraction,
                    run,
                    seed,
                    tp,
                    tt,
                    accuracy: tp as f64 / tt as f64,
                },
                cm,
            ))
        })
        .collect();
    let mut runs = Vec::with_capacity(cells.len());
    let mut confusions = Vec::with_capacity(cells.len());
    for o in outcomes {
        let (r, c) = o?;
        runs.push(r);
        confusions.push(c);
    }
    let summary = config
        .fractions
        .iter()
        .map(|&f| {
            let accs: Vec<f64> = runs.iter().filter(|r| r.fraction == f).map(|r| r.accuracy).collect();
            summarize(f, &accs)
        })
        .collect();
    Ok(EvaluationReport {
        descriptor: pipeline.id(),
        stimulus: pipeline.stimulus(),
        runs,
        summary,
        confusions,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub stimulus: String,
    /// Best descriptor of this stimulus at the reference fraction.
    pub descriptor: String,
    pub mean: f64,
    /// Set when another stimulus has exactly the same mean.
    pub tied: bool,
}

/// Orders stimuli by the best mean accuracy any of their descriptors reaches
/// at `reference_fraction`. Equal means are ordered alphabetically and flagged.
pub fn rank_stimuli(reports: &[EvaluationReport], reference_fraction: f64) -> Result<Vec<RankEntry>> {
    let mut best: BTreeMap<&str, (f64, &str)> = BTreeMap::new();
    for r in reports {
        let mean = r.mean_at(reference_fraction).ok_or_else(|| {
            contract(format!(
                "report `{}` has no summary at fraction {reference_fraction}",
                r.descriptor
            ))
        })?;
        let entry = best.entry(r.stimulus.as_str()).or_insert((mean, r.descriptor.as_str()));
        if mean > entry.0 || (mean == entry.0 && r.descriptor.as_str() < entry.1) {
            *entry = (mean, r.descriptor.as_str());
        }
    }
    let mut out: Vec<RankEntry> = best
        .into_iter()
        .map(|(s, (mean, d))| RankEntry {
            stimulus: s.to_string(),
            descriptor: d.to_string(),
            mean,
            tied: false,
        })
        .collect();
    out.sort_by(|a, b| b.mean.total_cmp(&a.mean).then_with(|| a.stimulus.cmp(&b.stimulus)));
    for i in 0..out.len() {
        let tied = (i > 0 && out[i - 1].mean == out[i].mean) || (i + 1 < out.len() && out[i + 1].mean == out[i].mean);
        out[i].tied = tied;
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Parse(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

pub const RUNS_HEADER: [&str; 7] = ["descriptor", "fraction", "run", "seed", "TP", "TT", "accuracy"];
pub const SUMMARY_HEADER: [&str; 4] = ["descriptor", "fraction", "mean", "std"];

pub fn runs_csv(reports: &[EvaluationReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RUNS_HEADER).map_err(csv_error)?;
    for rep in reports {
        for r in &rep.runs {
            w.write_record([
                rep.descriptor.clone(),
                r.fraction.to_string(),
                r.run.to_string(),
                r.seed.to_string(),
                r.tp.to_string(),
                r.tt.to_string(),
                r.accuracy.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    into_string(w)
}

pub fn summary_csv(reports: &[EvaluationReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).map_err(csv_error)?;
    for rep in reports {
        for s in &rep.summary {
            w.write_record([
                rep.descriptor.clone(),
                s.fraction.to_string(),
                s.mean.to_string(),
                s.std.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    into_string(w)
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    rec.get(i)
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::Parse(format!("row {line}: column {} is missing or malformed", i + 1)))
}

fn check_header(r: &mut csv::Reader<impl Read>, want: &[&str]) -> Result<()> {
    let header = r.headers().map_err(csv_error)?;
    if header.iter().collect::<Vec<_>>() != want {
        return Err(Error::Parse(format!("expected header `{}`", want.join(","))));
    }
    Ok(())
}

/// Reads a summary CSV back into summary-only reports, one per descriptor in
/// order of first appearance.
pub fn read_summary_csv(reader: impl Read) -> Result<Vec<EvaluationReport>> {
    let mut r = csv::Reader::from_reader(reader);
    check_header(&mut r, &SUMMARY_HEADER)?;
    let mut reports: Vec<EvaluationReport> = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let descriptor = rec.get(0).unwrap_or_default().to_string();
        let row = FractionSummary {
            fraction: parse_field(&rec, 1, n + 2)?,
            mean: parse_field(&rec, 2, n + 2)?,
            std: parse_field(&rec, 3, n + 2)?,
        };
        match reports.iter_mut().find(|rep| rep.descriptor == descriptor) {
            Some(rep) => rep.summary.push(row),
            None => reports.push(EvaluationReport {
                stimulus: stimulus_of(&descriptor)?,
                descriptor,
                runs: Vec::new(),
                summary: vec![row],
                confusions: Vec::new(),
            }),
        }
    }
    Ok(reports)
}

pub fn read_runs_csv(reader: impl Read) -> Result<Vec<(String, RunRecord)>> {
    let mut r = csv::Reader::from_reader(reader);
    check_header(&mut r, &RUNS_HEADER)?;
    let mut out = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        out.push((
            rec.get(0).unwrap_or_default().to_string(),
            RunRecord {
                fraction: parse_field(&rec, 1, n + 2)?,
                run: parse_field(&rec, 2, n + 2)?,
                seed: parse_field(&rec, 3, n + 2)?,
                tp: parse_field(&rec, 4, n + 2)?,
                tt: parse_field(&rec, 5, n + 2)?,
                accuracy: parse_field(&rec, 6, n + 2)?,
            },
        ));
    }
    Ok(out)
}

pub fn ranking_csv(ranking: &[RankEntry], reference_fraction: f64) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", "stimulus", "descriptor", "fraction", "mean", "tied"])
        .map_err(csv_error)?;
    for (i, e) in ranking.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            e.stimulus.clone(),
            e.descriptor.clone(),
            reference_fraction.to_string(),
            e.mean.to_string(),
            e.tied.to_string(),
        ])
        .map_err(csv_error)?;
    }
    into_string(w)
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Loads every manifest entry, preprocesses it and extracts descriptors.
/// Entries that fail are returned with their error instead of aborting.
pub fn extract_all(
    manifest: &DatasetManifest,
    spec: &PipelineSpec,
    preprocess: &Preprocess,
    table: &ColorNameTable,
) -> Vec<Result<DescriptorSet>> {
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let image = crate::imaging::load_image(&e.image)?;
            let mask = crate::imaging::load_mask(&e.mask)?;
            let (image, mask) = preprocess.apply(&image, &mask)?;
            spec.descriptor.extract(&image, &mask, table)
        })
        .collect()
}
