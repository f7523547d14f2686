use criterion::{criterion_group, criterion_main, Criterion};
use infomax_core::data::{sample_gaussian_pairs, sample_toy_images, GaussianPairSpec, ToyImageSpec};
use infomax_core::dim::{dim_train_step, DimConfig, DimHyperparams, DimModel, ScorerKind};
use infomax_core::mi::{mine_fit, EstimatorKind, MineConfig};
use infomax_core::Rng;

fn dim_step(c: &mut Criterion) {
    let x = sample_toy_images(&ToyImageSpec::default(), &mut Rng::seed_from(1), 32).unwrap().0;
    let mut group = c.benchmark_group("dim_train_step_b32");
    group.sample_size(20);
    for (name, h) in [
        ("dim_l_dot", DimHyperparams::dim_l(EstimatorKind::InfoNce, ScorerKind::EncodeDot)),
        ("dim_l_concat", DimHyperparams::dim_l(EstimatorKind::Jsd, ScorerKind::ConcatConvolve)),
        ("dim_g", DimHyperparams::dim_g(EstimatorKind::InfoNce, ScorerKind::EncodeDot)),
    ] {
        let mut model = DimModel::new(DimConfig::toy(h), &Rng::seed_from(2)).unwrap();
        let mut opt = model.optimizers();
        let rng = Rng::seed_from(3);
        group.bench_function(name, |b| b.iter(|| dim_train_step(&mut model, &x, &mut opt, &rng).unwrap()));
    }
    group.finish();
}

fn mine(c: &mut Criterion) {
    let spec = GaussianPairSpec::new(1, 0.9).unwrap();
    let cfg = MineConfig {
        steps: 50,
        ..MineConfig::new(EstimatorKind::Dv)
    };
    let mut group = c.benchmark_group("mine");
    group.sample_size(10);
    group.bench_function("dv_50_steps", |b| {
        b.iter(|| mine_fit(|n, r: &mut Rng| sample_gaussian_pairs(&spec, r, n), &cfg, &Rng::seed_from(4)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, dim_step, mine);
criterion_main!(benches);
