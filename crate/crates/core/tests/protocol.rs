use vistim_core::color::ColorNameTable;
use vistim_core::evaluation::{
    fraction_sweep, rank_stimuli, runs_csv, summary_csv, DatasetManifest, FeaturePipeline, FitConfig, ManifestEntry,
    SweepConfig,
};
use vistim_core::pipeline::PipelineSpec;
use vistim_core::synthetic::{descriptor_defaults, generate, SyntheticConfig, Variant};
use vistim_core::DescriptorSet;

fn dataset(per_class: usize) -> (DatasetManifest, Vec<DescriptorSet>) {
    let images = generate(
        Variant::Texture,
        &SyntheticConfig {
            per_class,
            size: 64,
            seed: 5,
        },
    );
    let spec = PipelineSpec::parse("mslbp", &descriptor_defaults()).unwrap();
    let table = ColorNameTable::fallback(32);
    let features = images
        .iter()
        .map(|s| spec.descriptor.extract(&s.image, &s.mask, &table).unwrap())
        .collect();
    let entries = images
        .iter()
        .enumerate()
        .map(|(i, s)| ManifestEntry {
            image: format!("{i}.png").into(),
            mask: format!("{i}_mask.png").into(),
            label: s.label.clone(),
            metadata: Default::default(),
        })
        .collect();
    (DatasetManifest::new("synthetic", entries).unwrap(), features)
}

#[test]
fn sweep_is_reproducible_and_consistent() {
    let (manifest, features) = dataset(25);
    assert_eq!(manifest.entries.len(), 200);
    let labels = manifest.labels();
    let pipeline = FeaturePipeline {
        spec: PipelineSpec::parse("mslbp", &descriptor_defaults()).unwrap(),
        features: &features,
        labels: &labels,
        fit: FitConfig::default(),
    };
    let config = SweepConfig {
        repeats: 3,
        seed: 42,
        ..Default::default()
    };
    let a = fraction_sweep(&manifest, &pipeline, &config).unwrap();
    let b = fraction_sweep(&manifest, &pipeline, &config).unwrap();
    assert_eq!(a.runs.len(), 27);
    assert_eq!(runs_csv(&[a.clone()]).unwrap(), runs_csv(&[b.clone()]).unwrap());
    assert_eq!(summary_csv(&[a.clone()]).unwrap(), summary_csv(&[b]).unwrap());
    for (run, cm) in a.runs.iter().zip(&a.confusions) {
        assert_eq!(cm.diagonal() as usize, run.tp);
        assert_eq!(cm.total() as usize, run.tt);
        assert_eq!(cm.diagonal() as f64 / cm.total() as f64, run.accuracy);
    }
    for s in &a.summary {
        let accs: Vec<f64> = a.runs.iter().filter(|r| r.fraction == s.fraction).map(|r| r.accuracy).collect();
        assert_eq!(s.mean, accs.iter().sum::<f64>() / accs.len() as f64);
    }
    let ranking = rank_stimuli(&[a], 0.5).unwrap();
    assert_eq!(ranking.len(), 1);
    assert_eq!(ranking[0].stimulus, "texture");
}

#[test]
fn different_seeds_give_different_splits() {
    let (manifest, features) = dataset(5);
    let labels = manifest.labels();
    let pipeline = FeaturePipeline {
        spec: PipelineSpec::parse("mslbp", &descriptor_defaults()).unwrap(),
        features: &features,
        labels: &labels,
        fit: FitConfig::default(),
    };
    let run = |seed| {
        let cfg = SweepConfig {
            fractions: vec![0.4],
            repeats: 4,
            seed,
        };
        fraction_sweep(&manifest, &pipeline, &cfg).unwrap().runs
    };
    let seeds = |runs: Vec<vistim_core::evaluation::RunRecord>| runs.iter().map(|r| r.seed).collect::<Vec<_>>();
    assert_ne!(seeds(run(1)), seeds(run(2)));
}
