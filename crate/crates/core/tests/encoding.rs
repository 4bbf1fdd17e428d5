mod oracles;

use oracles::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use vistim_core::encoding::{
    bow_counts, gmm_train, ifv_encode, ifv_statistics, kmeans_train, pair_index, rcc_counts, rcc_dimension,
    rcc_encode, Codebook, FeatureMatrix, GaussianMixture, GmmConfig, KMeansConfig, RccParams,
};
use vistim_core::DescriptorSet;

struct Config {
    rows: Vec<Vec<f32>>,
    positions: Vec<(u32, u32)>,
    centers: Vec<Vec<f64>>,
    cell: u32,
    radius: f64,
}

fn random_config(rng: &mut impl Rng) -> Config {
    let d = rng.random_range(1..6);
    let k = rng.random_range(1..9);
    let n = rng.random_range(0..120);
    let rows = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0f32)).collect()).collect();
    let positions = (0..n).map(|_| (rng.random_range(0..96), rng.random_range(0..96))).collect();
    let mut centers: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    if k > 2 && rng.random_bool(0.3) {
        // duplicated centre: ties resolve to the lower index
        centers[k - 1] = centers[0].clone();
    }
    Config {
        rows,
        positions,
        centers,
        cell: rng.random_range(4..48),
        radius: rng.random_range(0.0..40.0),
    }
}

fn descriptor_set(c: &Config) -> DescriptorSet {
    let d = c.centers[0].len();
    DescriptorSet::new(
        d,
        c.rows.iter().flatten().copied().collect(),
        c.positions.clone(),
        vec![0; c.rows.len()],
    )
    .unwrap()
}

fn codebook(c: &Config) -> Codebook {
    let d = c.centers[0].len();
    Codebook::from_centers(c.centers.len(), d, c.centers.iter().flatten().copied().collect(), 0).unwrap()
}

#[test]
fn bow_and_rcc_counts_match_brute_force() {
    let mut rng = rng(3);
    for _ in 0..50 {
        let c = random_config(&mut rng);
        let set = descriptor_set(&c);
        let cb = codebook(&c);
        let k = c.centers.len();
        assert_eq!(bow_counts(&set, &cb).unwrap(), brute_bow(&c.rows, &c.centers));
        let params = RccParams {
            cell_size: c.cell,
            radius: c.radius,
        };
        let got = rcc_counts(&set, &cb, params).unwrap();
        let (unary, pairs) = brute_rcc(&c.rows, &c.positions, &c.centers, c.cell, c.radius);
        assert_eq!(got.unary, unary);
        for a in 0..k {
            for b in a..k {
                assert_eq!(got.pairs[pair_index(a, b, k)], pairs[a][b], "pair ({a}, {b})");
            }
        }
        let encoded = rcc_encode(&set, &cb, params).unwrap();
        assert_eq!(encoded.dimension(), rcc_dimension(k));
    }
}

#[test]
fn pair_index_enumerates_upper_triangle() {
    for k in 1..12 {
        let mut seen = Vec::new();
        for a in 0..k {
            for b in a..k {
                seen.push(pair_index(a, b, k));
                assert_eq!(pair_index(a, b, k), pair_index(b, a, k));
            }
        }
        assert_eq!(seen, (0..k * (k + 1) / 2).collect::<Vec<_>>());
    }
}

fn blobs(rng: &mut impl Rng, n: usize, d: usize, k: usize, spread: f64) -> Vec<Vec<f32>> {
    let centres: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
    let noise = Normal::new(0.0, spread).unwrap();
    (0..n)
        .map(|i| centres[i % k].iter().map(|c| (c + noise.sample(rng)) as f32).collect())
        .collect()
}

fn sample_mixture(gmm: &GaussianMixture, n: usize, rng: &mut impl Rng) -> Vec<f32> {
    let d = gmm.dimension();
    let mut out = Vec::with_capacity(n * d);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut comp = gmm.k() - 1;
        for (c, w) in gmm.weights().iter().enumerate() {
            acc += w;
            if u < acc {
                comp = c;
                break;
            }
        }
        for j in 0..d {
            let g = Normal::new(gmm.mean(comp)[j], gmm.variance(comp)[j].sqrt()).unwrap();
            out.push(g.sample(rng) as f32);
        }
    }
    out
}

#[test]
fn fisher_vector_of_model_samples_is_near_zero() {
    let mut rng = rng(21);
    let data = blobs(&mut rng, 3000, 4, 3, 0.8);
    let gmm = gmm_train(&FeatureMatrix::from_rows(&data).unwrap(), 3, 7, GmmConfig::default()).unwrap();
    let samples = sample_mixture(&gmm, 10_000, &mut rng);
    let set = DescriptorSet::new(4, samples, vec![(0, 0); 10_000], vec![0; 10_000]).unwrap();
    let stats = ifv_statistics(&set, &gmm).unwrap();
    assert_eq!(stats.len(), 2 * 3 * 4);
    let linf = stats.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(linf < 0.05, "L-infinity {linf}");
    let encoded = ifv_encode(&set, &gmm).unwrap();
    let norm: f64 = encoded.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() < 1e-12);
}

fn monotone(values: &[f64], increasing: bool) -> bool {
    values.windows(2).all(|w| {
        let slack = 1e-10 * w[0].abs().max(1.0);
        if increasing {
            w[1] >= w[0] - slack
        } else {
            w[1] <= w[0] + slack
        }
    })
}

#[test]
fn optimizers_are_monotone() {
    let mut rng = rng(8);
    for trial in 0..20 {
        let d = rng.random_range(1..6);
        let k = rng.random_range(2..7);
        let spread = rng.random_range(0.3..3.0);
        let rows = blobs(&mut rng, 300, d, k, spread);
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let cb = kmeans_train(&m, k, trial, KMeansConfig { max_iter: 100, tol: 0.0 }).unwrap();
        assert!(monotone(&cb.history, false), "inertia {:?}", cb.history);
        let gmm = gmm_train(&m, k, trial, GmmConfig { max_iter: 60, tol: 0.0, var_floor: None }).unwrap();
        assert!(monotone(&gmm.log_likelihood, true), "log-likelihood {:?}", gmm.log_likelihood);
    }
}

#[test]
fn kmeans_is_close_to_restart_oracle() {
    let mut rng = rng(17);
    for trial in 0..5 {
        let k = rng.random_range(2..5);
        let rows = blobs(&mut rng, 40, 2, k + 1, 1.0);
        let points: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let cb = kmeans_train(&FeatureMatrix::from_rows(&rows).unwrap(), k, trial, KMeansConfig::default()).unwrap();
        let oracle = restart_kmeans(&points, k, 200, trial);
        assert!(cb.inertia <= oracle * 1.05 + 1e-9, "{} vs {}", cb.inertia, oracle);
    }
}
