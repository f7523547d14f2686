use infomax_core::data::{train_probe, ProbeSpec};
use infomax_core::Rng;

use super::{adam, labeled, probe_kinds, required};
use crate::config::ExperimentConfig;
use crate::output::{fmt_f64, RunDir};
use crate::CliResult;

/// Probes saved features. `probe.csv`: probe, accuracy;
/// `probe_curve.csv`: probe, epoch, accuracy.
pub fn run(cfg: &ExperimentConfig, seed: u64, dir: &mut RunDir) -> CliResult<()> {
    let train = labeled(&required(cfg, "data", "features")?, &required(cfg, "data", "labels")?)?;
    let test = labeled(&required(cfg, "data", "test_features")?, &required(cfg, "data", "test_labels")?)?;
    let epochs = cfg.get("eval", "probe_epochs")?;
    let batch = cfg.get("optimizer", "batch")?;
    let optimizer = adam(cfg, 1e-2)?;
    let root = Rng::seed_from(seed);
    let mut summary = Vec::new();
    let mut curve = Vec::new();
    for (i, (name, kind)) in probe_kinds(cfg)?.into_iter().enumerate() {
        let spec = ProbeSpec {
            kind,
            epochs,
            batch,
            optimizer,
        };
        let r = train_probe(&train, &test, &spec, &root.split(i as u64))?;
        summary.push(vec![name.clone(), fmt_f64(r.accuracy)]);
        for (e, a) in r.epoch_accuracy.iter().enumerate() {
            curve.push(vec![name.clone(), (e + 1).to_string(), fmt_f64(*a)]);
        }
    }
    dir.write_csv("probe.csv", &["probe", "accuracy"], &summary)?;
    dir.write_csv("probe_curve.csv", &["probe", "epoch", "accuracy"], &curve)?;
    Ok(())
}
