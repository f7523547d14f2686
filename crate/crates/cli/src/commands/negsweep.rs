use infomax_core::data::GaussianPairSpec;
use infomax_core::mi::{EstimatorKind, MineConfig, NegativeSamplingConfig};
use infomax_core::{Result, Rng};
use rayon::prelude::*;

use super::estimate_mi::{fit_gaussian, mine_config};
use crate::config::ExperimentConfig;
use crate::output::{fmt_f64, RunDir};
use crate::CliResult;

/// Every estimator at every negative count in `objective.negative_sweep`,
/// on Gaussian pairs at each `data.corr`. The batch grows to
/// `max(negatives) + 1` when needed so every count is available with the
/// positive excluded.
///
/// `negsweep.csv`: corr, negatives, estimator, k, raw, estimate, where
/// `estimate` is on the MI scale (`raw + ln k` for infoNCE).
pub fn run(cfg: &ExperimentConfig, seed: u64, dir: &mut RunDir) -> CliResult<()> {
    let dim: usize = cfg.get("data", "dim")?;
    let corrs: Vec<f64> = cfg.list("data", "corr")?;
    let counts: Vec<usize> = cfg.list("objective", "negative_sweep")?;
    if counts.is_empty() || counts.contains(&0) {
        return Err(cfg.invalid("objective", "negative_sweep", "needs positive counts").into());
    }
    let specs = corrs
        .iter()
        .map(|&c| GaussianPairSpec::new(dim, c).map_err(|e| cfg.invalid("data", "corr", e)))
        .collect::<Result<Vec<_>, _>>()?;
    let max = *counts.iter().max().expect("non-empty");
    let mut jobs: Vec<(usize, usize, EstimatorKind, MineConfig)> = Vec::new();
    for i in 0..specs.len() {
        for (n_idx, &n) in counts.iter().enumerate() {
            for kind in EstimatorKind::ALL {
                let mut mc = mine_config(cfg, kind)?;
                mc.batch = mc.batch.max(max + 1);
                mc.sampling = NegativeSamplingConfig {
                    negatives: Some(n),
                    ..mc.sampling
                };
                jobs.push((i, n_idx, kind, mc));
            }
        }
    }
    let root = Rng::seed_from(seed);
    let fits = jobs
        .par_iter()
        .enumerate()
        .map(|(j, (i, _, _, mc))| fit_gaussian(specs[*i], false, mc, &root.split(j as u64)))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<String>> = jobs
        .iter()
        .zip(&fits)
        .map(|((i, n_idx, kind, _), fit)| {
            vec![
                fmt_f64(specs[*i].corr),
                counts[*n_idx].to_string(),
                kind.to_string(),
                fit.k.to_string(),
                fmt_f64(fit.estimate),
                fmt_f64(fit.estimate + kind.mi_offset(fit.k)),
            ]
        })
        .collect();
    dir.write_csv("negsweep.csv", &["corr", "negatives", "estimator", "k", "raw", "estimate"], &rows)?;
    Ok(())
}
