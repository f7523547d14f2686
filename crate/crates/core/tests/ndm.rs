use infomax_core::ndm::{ndm_estimate, shuffle_factors, NdmConfig, NdmResult};
use infomax_core::nn::AdamConfig;
use infomax_core::{Result, Rng, Tensor};
use proptest::prelude::*;

fn cfg() -> NdmConfig {
    NdmConfig {
        hidden: vec![128, 128],
        steps: 500,
        batch: 128,
        optimizer: AdamConfig::with_lr(1e-3),
        use_sigmoid_output: false,
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Pairs `(s(z), s(y))` with `y = ρz + √(1−ρ²)ε`, squashed into (0, 1) and
/// then mapped elementwise by `f`.
fn correlated(rho: f64, f: fn(f64) -> f64) -> impl FnMut(usize, &mut Rng) -> Result<Tensor> {
    move |n, r| {
        let data = (0..n)
            .flat_map(|_| {
                let z = r.normal();
                let y = rho * z + (1.0 - rho * rho).sqrt() * r.normal();
                [f(sigmoid(z)), f(sigmoid(y))]
            })
            .collect();
        Tensor::new(&[n, 2], data)
    }
}

fn run(stream: impl FnMut(usize, &mut Rng) -> Result<Tensor>, seed: u64) -> NdmResult {
    ndm_estimate(stream, &cfg(), &Rng::seed_from(seed)).unwrap()
}

/// Exact KL between the empirical joint of `[z, z]` binned into `bins` and
/// the product of its marginals, i.e. the entropy of the binned `z`.
fn binned_duplicate_kl(bins: usize, n: usize) -> f64 {
    let mut rng = Rng::seed_from(99);
    let mut joint = vec![0.0; bins * bins];
    for _ in 0..n {
        let z = rng.uniform();
        let b = ((z * bins as f64) as usize).min(bins - 1);
        joint[b * bins + b] += 1.0 / n as f64;
    }
    let marginal: Vec<f64> = (0..bins).map(|i| joint[i * bins..(i + 1) * bins].iter().sum()).collect();
    let mut kl = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let p = joint[i * bins + j];
            if p > 0.0 {
                kl += p * (p / (marginal[i] * marginal[j])).ln();
            }
        }
    }
    kl
}

proptest! {
    #[test]
    fn shuffling_preserves_column_multisets(b in 2usize..12, d in 1usize..5, seed in any::<u64>()) {
        let mut rng = Rng::seed_from(seed);
        let x = Tensor::new(&[b, d], (0..b * d).map(|_| rng.normal()).collect()).unwrap();
        let y = shuffle_factors(&x, &mut rng).unwrap();
        for c in 0..d {
            let mut a: Vec<f64> = (0..b).map(|r| x.data()[r * d + c]).collect();
            let mut s: Vec<f64> = (0..b).map(|r| y.data()[r * d + c]).collect();
            let sum_a: f64 = a.iter().sum();
            let sum_s: f64 = s.iter().sum();
            prop_assert!((sum_a - sum_s).abs() <= 1e-9);
            a.sort_by(f64::total_cmp);
            s.sort_by(f64::total_cmp);
            prop_assert_eq!(a, s);
        }
    }
}

#[test]
fn constant_columns_survive_shuffling() {
    let x = Tensor::new(&[4, 2], vec![1.0, 7.0, 2.0, 7.0, 3.0, 7.0, 4.0, 7.0]).unwrap();
    let y = shuffle_factors(&x, &mut Rng::seed_from(1)).unwrap();
    assert!((0..4).all(|r| y.data()[r * 2 + 1] == 7.0));
    assert!(shuffle_factors(&Tensor::zeros(&[1, 2]).unwrap(), &mut Rng::seed_from(1)).is_err());
    assert!(shuffle_factors(&Tensor::zeros(&[4]).unwrap(), &mut Rng::seed_from(1)).is_err());
}

#[test]
fn independent_uniforms_measure_near_zero() {
    let r = run(|n, r| Tensor::new(&[n, 8], (0..n * 8).map(|_| r.uniform()).collect()), 1);
    assert!(r.estimate <= 0.1, "{}", r.estimate);
    assert_eq!(r.estimate, r.raw.max(0.0));
    assert_eq!(r.curve.len(), 500);
}

#[test]
fn duplicated_factor_is_strongly_dependent() {
    let oracle = binned_duplicate_kl(16, 100_000);
    assert!((oracle - 16f64.ln()).abs() < 0.01, "{oracle}");
    let r = run(
        |n, r| {
            let data = (0..n)
                .flat_map(|_| {
                    let z = r.uniform();
                    [z, z]
                })
                .collect();
            Tensor::new(&[n, 2], data)
        },
        1,
    );
    assert!(r.estimate >= 1.0, "{}", r.estimate);
}

#[test]
fn dependence_sweep_is_strictly_increasing() {
    let values: Vec<f64> = [0.0, 0.5, 0.9, 0.99].iter().map(|&rho| run(correlated(rho, |v| v), 1).raw).collect();
    assert!(values.windows(2).all(|w| w[0] < w[1]), "{values:?}");
}

#[test]
fn cubing_each_factor_leaves_the_measure_unchanged() {
    for rho in [0.9, 0.99] {
        let plain = run(correlated(rho, |v| v), 2).raw;
        let cubed = run(correlated(rho, |v| v * v * v), 2).raw;
        assert!((plain - cubed).abs() <= 0.15, "rho {rho}: {plain} vs {cubed}");
    }
}

#[test]
fn fixed_seed_reproduces_the_estimate() {
    let small = NdmConfig {
        hidden: vec![16],
        steps: 20,
        batch: 32,
        ..cfg()
    };
    let go = || ndm_estimate(correlated(0.5, |v| v), &small, &Rng::seed_from(5)).unwrap().curve;
    let (a, b) = (go(), go());
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    let zero = NdmConfig { steps: 0, ..small };
    assert!(ndm_estimate(correlated(0.5, |v| v), &zero, &Rng::seed_from(5)).is_err());
}

#[test]
fn sigmoid_output_bounds_the_critic() {
    let c = NdmConfig {
        hidden: vec![16],
        steps: 30,
        batch: 32,
        use_sigmoid_output: true,
        ..cfg()
    };
    // with scores in (0, 1) the DV value cannot exceed 1
    let r = ndm_estimate(correlated(0.99, |v| v), &c, &Rng::seed_from(6)).unwrap();
    assert!(r.curve.iter().all(|&v| v < 1.0));
}
