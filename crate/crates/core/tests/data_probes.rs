use infomax_core::data::{
    analytic_gaussian_mi, sample_gaussian_pairs, sample_toy_images, train_probe, GaussianPairSpec, LabeledFeatures,
    ProbeKind, ProbeSpec, ToyImageSpec,
};
use infomax_core::dim::{DimConfig, DimHyperparams, DimModel, FeatureSource, ScorerKind};
use infomax_core::mi::EstimatorKind;
use infomax_core::nn::Module;
use infomax_core::{Rng, Tensor};

fn column(t: &Tensor, c: usize) -> Vec<f64> {
    let d = t.shape()[1];
    t.data().iter().skip(c).step_by(d).copied().collect()
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n
}

#[test]
fn gaussian_pairs_have_the_specified_covariance() {
    let spec = GaussianPairSpec::new(1, 0.6).unwrap();
    let (x, y) = sample_gaussian_pairs(&spec, &mut Rng::seed_from(0), 10_000).unwrap();
    let (x, y) = (x.data(), y.data());
    let frob = ((cov(x, x) - 1.0).powi(2) + (cov(y, y) - 1.0).powi(2) + 2.0 * (cov(x, y) - 0.6).powi(2)).sqrt();
    assert!(frob <= 0.05, "{frob}");
}

#[test]
fn dimensions_are_independent() {
    let spec = GaussianPairSpec::new(2, 0.9).unwrap();
    let (x, y) = spec.sample(&mut Rng::seed_from(0), 10_000).unwrap();
    assert!(cov(&column(&x, 0), &column(&x, 1)).abs() <= 0.05);
    assert!(cov(&column(&x, 0), &column(&y, 1)).abs() <= 0.05);
    assert!((cov(&column(&x, 1), &column(&y, 1)) - 0.9).abs() <= 0.05);
}

#[test]
fn uncorrelated_pairs_are_uncorrelated() {
    let spec = GaussianPairSpec::new(1, 0.0).unwrap();
    let (x, y) = spec.sample(&mut Rng::seed_from(1), 10_000).unwrap();
    assert!(cov(x.data(), y.data()).abs() <= 0.05);
    assert_eq!(spec.analytic_mi(), 0.0);
}

#[test]
fn analytic_gaussian_mi_examples() {
    assert!((analytic_gaussian_mi(1, 0.9) - 0.830366).abs() < 1e-6);
    assert!((analytic_gaussian_mi(4, 0.5) - 0.575364).abs() < 1e-6);
    assert!(GaussianPairSpec::new(1, 1.0).is_err());
    assert!(GaussianPairSpec::new(1, f64::NAN).is_err());
    assert!(GaussianPairSpec::new(0, 0.5).is_err());
}

#[test]
fn toy_labels_are_uniform() {
    let spec = ToyImageSpec::default();
    let (x, labels) = sample_toy_images(&spec, &mut Rng::seed_from(2), 8000).unwrap();
    assert_eq!(x.shape(), &[8000, 1, 16, 16]);
    let expected = 8000.0 / 8.0;
    let sd = (8000.0 * (1.0 / 8.0) * (7.0 / 8.0) as f64).sqrt();
    for c in 0..8 {
        let count = labels.iter().filter(|&&l| l == c).count() as f64;
        assert!((count - expected).abs() <= 3.0 * sd, "class {c}: {count}");
    }
}

#[test]
fn toy_sampling_is_seeded_and_validated() {
    let spec = ToyImageSpec::default();
    let a = sample_toy_images(&spec, &mut Rng::seed_from(3), 5).unwrap();
    let b = sample_toy_images(&spec, &mut Rng::seed_from(3), 5).unwrap();
    assert!(a.0.bit_eq(&b.0));
    assert_eq!(a.1, b.1);
    let bad = ToyImageSpec { grid: 3, ..spec };
    assert!(sample_toy_images(&bad, &mut Rng::seed_from(3), 5).is_err());
}

#[test]
fn patch_noise_is_constant_within_each_patch() {
    let spec = ToyImageSpec {
        pixel_noise: 0.0,
        ..ToyImageSpec::default()
    };
    let quiet = ToyImageSpec { patch_noise: 0.0, ..spec };
    let (noisy, _) = sample_toy_images(&spec, &mut Rng::seed_from(4), 1).unwrap();
    let (clean, _) = sample_toy_images(&quiet, &mut Rng::seed_from(4), 1).unwrap();
    let diff: Vec<f64> = noisy.data().iter().zip(clean.data()).map(|(a, b)| a - b).collect();
    for i in 0..16 {
        for j in 0..16 {
            let corner = diff[(i / 4 * 4) * 16 + j / 4 * 4];
            assert!((diff[i * 16 + j] - corner).abs() < 1e-12);
        }
    }
}

/// Linear probe on one quadrant of the raw pixels.
#[test]
fn a_single_quadrant_carries_the_label() {
    let spec = ToyImageSpec::default();
    let quadrant = |seed: u64, n: usize| {
        let (x, labels) = sample_toy_images(&spec, &mut Rng::seed_from(seed), n).unwrap();
        let data = x
            .data()
            .chunks(256)
            .flat_map(|img| (0..8).flat_map(move |i| img[i * 16..i * 16 + 8].to_vec()))
            .collect();
        LabeledFeatures::new(Tensor::new(&[n, 64], data).unwrap(), labels).unwrap()
    };
    let spec = ProbeSpec {
        epochs: 30,
        ..ProbeSpec::new(ProbeKind::Linear)
    };
    let r = train_probe(&quadrant(5, 2000), &quadrant(6, 1000), &spec, &Rng::seed_from(7)).unwrap();
    assert!(r.accuracy > 0.5, "{}", r.accuracy);
}

fn one_hot(labels: &[usize]) -> LabeledFeatures {
    let data = labels.iter().flat_map(|&l| (0..8).map(move |c| (c == l) as u8 as f64)).collect();
    LabeledFeatures::new(Tensor::new(&[labels.len(), 8], data).unwrap(), labels.to_vec()).unwrap()
}

fn labels(seed: u64, n: usize) -> Vec<usize> {
    let mut rng = Rng::seed_from(seed);
    (0..n).map(|_| rng.below(8)).collect()
}

#[test]
fn one_hot_features_are_perfectly_separable() {
    for kind in [ProbeKind::Linear, ProbeKind::mlp200()] {
        let spec = ProbeSpec {
            epochs: 20,
            ..ProbeSpec::new(kind)
        };
        let r = train_probe(&one_hot(&labels(8, 500)), &one_hot(&labels(9, 300)), &spec, &Rng::seed_from(10)).unwrap();
        assert_eq!(r.accuracy, 1.0, "{kind:?}");
        assert_eq!(r.epoch_accuracy.len(), 20);
    }
}

#[test]
fn noise_features_sit_at_chance() {
    let noise = |seed: u64, n: usize| {
        let mut rng = Rng::seed_from(seed);
        let x = Tensor::new(&[n, 16], (0..n * 16).map(|_| rng.normal()).collect()).unwrap();
        LabeledFeatures::new(x, labels(seed + 100, n)).unwrap()
    };
    let spec = ProbeSpec {
        epochs: 20,
        ..ProbeSpec::new(ProbeKind::Linear)
    };
    let r = train_probe(&noise(11, 2000), &noise(12, 2000), &spec, &Rng::seed_from(13)).unwrap();
    assert!((r.accuracy - 0.125).abs() <= 0.03, "{}", r.accuracy);
}

#[test]
fn probe_inputs_are_validated() {
    let x = Tensor::zeros(&[3, 2]).unwrap();
    assert!(LabeledFeatures::new(x.clone(), vec![0, 1]).is_err());
    let a = LabeledFeatures::new(x, vec![0, 1, 0]).unwrap();
    let b = LabeledFeatures::new(Tensor::zeros(&[3, 4]).unwrap(), vec![0, 1, 0]).unwrap();
    let spec = ProbeSpec::new(ProbeKind::Linear);
    assert!(train_probe(&a, &b, &spec, &Rng::seed_from(0)).is_err());
    assert!(train_probe(&a, &a, &ProbeSpec { epochs: 0, ..spec }, &Rng::seed_from(0)).is_err());
}

#[test]
fn probing_leaves_the_encoder_untouched() {
    let cfg = DimConfig::toy(DimHyperparams::dim_l(EstimatorKind::InfoNce, ScorerKind::EncodeDot));
    let mut model = DimModel::new(cfg, &Rng::seed_from(14)).unwrap();
    let snapshot = |m: &mut DimModel| -> Vec<Vec<u64>> {
        let mut v: Vec<Vec<u64>> = m.params_mut().into_iter().map(|p| p.data().iter().map(|x| x.to_bits()).collect()).collect();
        v.push(m.encoder.fc_norm.running_mean.data().iter().map(|x| x.to_bits()).collect());
        v
    };
    let before = snapshot(&mut model);
    let (x, y) = sample_toy_images(&ToyImageSpec::default(), &mut Rng::seed_from(15), 64).unwrap();
    let f = model.features(&x, FeatureSource::Global, 32).unwrap();
    let data = LabeledFeatures::new(f, y).unwrap();
    let spec = ProbeSpec {
        epochs: 2,
        ..ProbeSpec::new(ProbeKind::mlp200())
    };
    train_probe(&data, &data, &spec, &Rng::seed_from(16)).unwrap();
    assert_eq!(before, snapshot(&mut model));
}
