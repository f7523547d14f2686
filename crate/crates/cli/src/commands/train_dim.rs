use infomax_core::data::{sample_toy_images, train_probe, LabeledFeatures, ProbeSpec, ToyImageSpec};
use infomax_core::dim::{
    dim_train_step, DimConfig, DimHyperparams, DimModel, EncoderConfig, FeatureSource, Occlusion, ScorerConfig,
};
use infomax_core::mi::{mine_fit, MineConfig};
use infomax_core::ndm::ndm_estimate;
use infomax_core::nn::{save_checkpoint, Module};
use infomax_core::tensor::write_dimt_file;
use infomax_core::{Rng, Tensor};

use super::ndm::{feature_stream, ndm_config};
use super::{adam, estimator, probe_kinds, sampling, toy_spec, write_labels};
use crate::config::{ConfigResult, ExperimentConfig};
use crate::output::{fmt_f64, RunDir};
use crate::CliResult;

const CHUNK: usize = 200;

/// Builds the model configuration from `[objective]`, `[model]` and
/// `[optimizer]`.
pub fn dim_config(cfg: &ExperimentConfig, spec: &ToyImageSpec) -> ConfigResult<DimConfig> {
    let hyper = DimHyperparams {
        alpha: cfg.get("objective", "alpha")?,
        beta: cfg.get("objective", "beta")?,
        gamma: cfg.get("objective", "gamma")?,
        estimator: estimator(cfg)?,
        scorer: cfg.get("objective", "scorer")?,
    };
    hyper.validate().map_err(|e| cfg.invalid("objective", "alpha", e))?;
    let occlusion = match cfg.raw("objective", "occlusion").trim() {
        "off" => Occlusion::Off,
        "identity" => Occlusion::Identity,
        _ => Occlusion::Blocks(cfg.get("objective", "occlusion")?),
    };
    let main = adam(cfg, 3e-3)?;
    let mut prior = main;
    prior.lr0 = cfg.lr("optimizer", "prior_lr0", 1e-3)?;
    let base = DimConfig::toy(hyper);
    Ok(DimConfig {
        encoder: EncoderConfig::toy_sized(spec.size),
        scorer: ScorerConfig {
            kind: hyper.scorer,
            concat_hidden: cfg.list("model", "concat_hidden")?,
            dot_width: cfg.get("model", "dot_width")?,
        },
        prior_hidden: cfg.list("model", "prior_hidden")?,
        prior_loss: cfg.get("objective", "prior_loss")?,
        sampling: sampling(cfg)?,
        occlusion,
        abs_coord_weight: cfg.get("objective", "abs_coord")?,
        rel_coord_weight: cfg.get("objective", "rel_coord")?,
        coord_hidden: cfg.list("model", "coord_hidden")?,
        optimizer: main,
        prior_optimizer: prior,
        ..base
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt_f64)
}

/// Trains on fresh toy batches, then evaluates frozen features.
///
/// Streams: model init `split(0)`, training batches `split(1)`, step
/// randomness `split(2)`, probe data `split(3)`, evaluation fits `split(4)`.
pub fn run(cfg: &ExperimentConfig, seed: u64, dir: &mut RunDir) -> CliResult<()> {
    let spec = toy_spec(cfg)?;
    let dc = dim_config(cfg, &spec)?;
    let steps: usize = cfg.get("optimizer", "steps")?;
    let batch: usize = cfg.get("optimizer", "batch")?;
    if batch < 2 {
        return Err(cfg.invalid("optimizer", "batch", "needs at least two samples").into());
    }
    let source: FeatureSource = cfg.get("eval", "feature_source")?;
    let probes = probe_kinds(cfg)?;
    let epochs: usize = cfg.get("eval", "probe_epochs")?;
    let n_train: usize = cfg.get("eval", "probe_train")?;
    let n_test: usize = cfg.get("eval", "probe_test")?;
    let nc = ndm_config(cfg)?;
    let root = Rng::seed_from(seed);

    let mut model = DimModel::new(dc, &root.split(0))?;
    let mut baseline = model.clone();
    let mut opt_state = model.optimizers();
    let mut batches = root.split(1);
    let step_rng = root.split(2);
    let mut metrics = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (x, _) = sample_toy_images(&spec, &mut batches, batch)?;
        let m = dim_train_step(&mut model, &x, &mut opt_state, &step_rng)?;
        metrics.push(vec![
            m.step.to_string(),
            opt(m.global_loss),
            opt(m.local_loss),
            opt(m.prior_d_loss),
            opt(m.prior_e_loss),
            fmt_f64(m.lr),
            opt(m.abs_coord_loss),
            opt(m.rel_coord_loss),
            fmt_f64(m.total),
        ]);
    }
    dir.write_csv(
        "metrics.csv",
        &[
            "step",
            "global_loss",
            "local_loss",
            "prior_d_loss",
            "prior_e_loss",
            "lr",
            "abs_coord_loss",
            "rel_coord_loss",
            "total",
        ],
        &metrics,
    )?;

    if cfg.get("eval", "checkpoint")? {
        let ckpt = dir.path("checkpoint");
        save_checkpoint(&ckpt, &model.state(""))?;
        let mut names: Vec<String> = std::fs::read_dir(&ckpt)?
            .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
            .collect::<std::io::Result<_>>()?;
        names.sort();
        for n in names {
            dir.track(format!("checkpoint/{n}"));
        }
    }

    let mut data_rng = root.split(3);
    let (xtr, ytr) = sample_toy_images(&spec, &mut data_rng, n_train)?;
    let (xte, yte) = sample_toy_images(&spec, &mut data_rng, n_test)?;
    baseline.encoder.calibrate_norms(&xtr, CHUNK)?;
    let ftr = model.features(&xtr, source, CHUNK)?;
    let fte = model.features(&xte, source, CHUNK)?;

    if !probes.is_empty() {
        let btr = baseline.features(&xtr, source, CHUNK)?;
        let bte = baseline.features(&xte, source, CHUNK)?;
        let train = LabeledFeatures::new(ftr.clone(), ytr.clone())?;
        let test = LabeledFeatures::new(fte.clone(), yte.clone())?;
        let btrain = LabeledFeatures::new(btr, ytr.clone())?;
        let btest = LabeledFeatures::new(bte, yte.clone())?;
        let mut rows = Vec::new();
        for (i, (name, kind)) in probes.into_iter().enumerate() {
            let ps = ProbeSpec { epochs, ..ProbeSpec::new(kind) };
            let prng = root.split(4).split(i as u64);
            let trained = train_probe(&train, &test, &ps, &prng)?;
            let random = train_probe(&btrain, &btest, &ps, &prng)?;
            rows.push(vec![
                name,
                cfg.raw("eval", "feature_source").to_string(),
                fmt_f64(trained.accuracy),
                fmt_f64(random.accuracy),
            ]);
        }
        dir.write_csv("probes.csv", &["probe", "source", "trained", "random_encoder"], &rows)?;
    }

    let mut evals = Vec::new();
    if cfg.get("eval", "ndm")? {
        let r = ndm_estimate(feature_stream(ftr.clone()), &nc, &root.split(5))?;
        evals.push(vec!["ndm".into(), fmt_f64(r.estimate), fmt_f64(r.raw)]);
    }
    if cfg.get("eval", "mine")? {
        let kind = estimator(cfg)?;
        let mc = MineConfig {
            kind,
            hidden: cfg.list("model", "critic_hidden")?,
            batch,
            steps: cfg.get("eval", "mine_steps")?,
            optimizer: adam(cfg, 1e-3)?,
            sampling: sampling(cfg)?,
        };
        let n = xtr.shape()[0];
        let pixels = xtr.reshape(&[n, xtr.numel() / n])?;
        let feats = ftr.clone();
        let stream = move |b: usize, r: &mut Rng| {
            let rows: Vec<usize> = (0..b).map(|_| r.below(n)).collect();
            Ok((pixels.index_select(0, &rows)?, feats.index_select(0, &rows)?))
        };
        let fit = mine_fit(stream, &mc, &root.split(6))?;
        let mi = fit.estimate + kind.mi_offset(fit.k);
        evals.push(vec![format!("mine_{}", kind.name()), fmt_f64(mi), fmt_f64(fit.estimate)]);
    }
    if !evals.is_empty() {
        dir.write_csv("feature_mi.csv", &["measure", "estimate", "raw"], &evals)?;
    }

    if cfg.get("eval", "export_features")? {
        export(dir, "train", &ftr, &ytr)?;
        export(dir, "test", &fte, &yte)?;
    }
    Ok(())
}

fn export(dir: &mut RunDir, split: &str, features: &Tensor, labels: &[usize]) -> CliResult<()> {
    let f = format!("features_{split}.dimt");
    let l = format!("labels_{split}.csv");
    write_dimt_file(features, dir.path(&f))?;
    write_labels(&dir.path(&l), labels)?;
    dir.track(f);
    dir.track(l);
    Ok(())
}
