pub mod estimate_mi;
pub mod gradcheck;
pub mod jsd_kl;
pub mod ndm;
pub mod negsweep;
pub mod probe;
pub mod train_dim;

use std::path::Path;

use infomax_core::data::{LabeledFeatures, ProbeKind, ToyImageSpec};
use infomax_core::mi::{EstimatorKind, NegativeSamplingConfig, NegativeSource};
use infomax_core::nn::{AdamConfig, LrSchedule};
use infomax_core::tensor::read_dimt_file;
use infomax_core::Tensor;

use crate::config::{ConfigError, ConfigResult, ExperimentConfig};
use crate::{CliError, CliResult};

pub(crate) fn estimator(cfg: &ExperimentConfig) -> ConfigResult<EstimatorKind> {
    cfg.get("objective", "estimator")
}

/// `[optimizer]` settings with `fallback_lr` standing in for `lr0 = default`.
pub(crate) fn adam(cfg: &ExperimentConfig, fallback_lr: f64) -> ConfigResult<AdamConfig> {
    let schedule = match cfg.raw("optimizer", "schedule").trim() {
        "constant" => LrSchedule::Constant,
        other => {
            let parts: Vec<&str> = other.split(':').collect();
            match parts.as_slice() {
                ["exp", rate, interval] => LrSchedule::ExponentialDecay {
                    rate: rate.parse().map_err(|_| cfg.invalid("optimizer", "schedule", "bad decay rate"))?,
                    interval: interval
                        .parse()
                        .map_err(|_| cfg.invalid("optimizer", "schedule", "bad decay interval"))?,
                },
                _ => {
                    return Err(cfg.invalid("optimizer", "schedule", "expected constant or exp:<rate>:<interval>"))
                }
            }
        }
    };
    Ok(AdamConfig {
        lr0: cfg.lr("optimizer", "lr0", fallback_lr)?,
        beta1: cfg.get("optimizer", "beta1")?,
        schedule,
        ..AdamConfig::default()
    })
}

pub(crate) fn sampling(cfg: &ExperimentConfig) -> ConfigResult<NegativeSamplingConfig> {
    let negatives = match cfg.raw("objective", "negatives").trim() {
        "all" => None,
        _ => Some(cfg.get("objective", "negatives")?),
    };
    let source = match cfg.raw("objective", "negative_source").trim() {
        "within" => NegativeSource::WithinBatch,
        "cross" => NegativeSource::CrossBatch,
        _ => return Err(cfg.invalid("objective", "negative_source", "expected within or cross")),
    };
    Ok(NegativeSamplingConfig {
        negatives,
        exclude_positive: cfg.get("objective", "exclude_positive")?,
        source,
    })
}

pub(crate) fn toy_spec(cfg: &ExperimentConfig) -> ConfigResult<ToyImageSpec> {
    let spec = ToyImageSpec {
        size: cfg.get("data", "image_size")?,
        n_classes: cfg.get("data", "n_classes")?,
        grid: cfg.get("data", "grid")?,
        patch_noise: cfg.get("data", "patch_noise")?,
        pixel_noise: cfg.get("data", "pixel_noise")?,
    };
    spec.validate().map_err(|e| cfg.invalid("data", "image_size", e))?;
    Ok(spec)
}

pub(crate) fn probe_kinds(cfg: &ExperimentConfig) -> ConfigResult<Vec<(String, ProbeKind)>> {
    let hidden = cfg.get("model", "probe_hidden")?;
    let dropout: f64 = cfg.get("model", "probe_dropout")?;
    if !(0.0..1.0).contains(&dropout) {
        return Err(cfg.invalid("model", "probe_dropout", "must lie in [0, 1)"));
    }
    cfg.list::<String>("eval", "probes")?
        .into_iter()
        .map(|name| match name.as_str() {
            "linear" => Ok((name, ProbeKind::Linear)),
            "mlp" | "mlp200" => Ok((name, ProbeKind::Mlp { hidden, dropout })),
            _ => Err(cfg.invalid("eval", "probes", format!("unknown probe {name:?}"))),
        })
        .collect()
}

/// Labels file: a `label` header then one class index per line.
pub(crate) fn read_labels(path: &Path) -> CliResult<Vec<usize>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            rec.get(0)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| CliError::Failed(format!("bad label line in {}", path.display())))
        })
        .collect()
}

pub(crate) fn write_labels(path: &Path, labels: &[usize]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(["label"])?;
    for l in labels {
        w.write_record([l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_features(path: &Path) -> CliResult<Tensor> {
    let t = read_dimt_file(path)?;
    if t.rank() != 2 {
        return Err(CliError::Failed(format!(
            "{} holds shape {:?}, expected [N, D]",
            path.display(),
            t.shape()
        )));
    }
    Ok(t)
}

pub(crate) fn labeled(features: &Path, labels: &Path) -> CliResult<LabeledFeatures> {
    Ok(LabeledFeatures::new(read_features(features)?, read_labels(labels)?)?)
}

pub(crate) fn required(cfg: &ExperimentConfig, section: &str, key: &str) -> ConfigResult<std::path::PathBuf> {
    cfg.path(section, key)
        .ok_or_else(|| ConfigError::Value {
            key: format!("{section}.{key}"),
            value: String::new(),
            reason: "this subcommand needs a path".into(),
        })
}
