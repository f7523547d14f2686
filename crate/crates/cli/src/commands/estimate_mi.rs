use infomax_core::data::{analytic_gaussian_mi, sample_gaussian_pairs, GaussianPairSpec};
use infomax_core::mi::{mine_fit, EstimatorKind, MineConfig, MineFit};
use infomax_core::{Result, Rng};
use rayon::prelude::*;

use super::{adam, sampling};
use crate::config::ExperimentConfig;
use crate::output::{fmt_f64, RunDir};
use crate::CliResult;

/// Trains a critic on Gaussian pairs of correlation `corr`. With `shuffled`
/// the partners are permuted within each batch, which removes all
/// dependence.
pub fn fit_gaussian(spec: GaussianPairSpec, shuffled: bool, cfg: &MineConfig, rng: &Rng) -> Result<MineFit> {
    let stream = |n: usize, r: &mut Rng| {
        let (x, y) = sample_gaussian_pairs(&spec, r, n)?;
        if shuffled {
            let perm = r.permutation(n);
            Ok((x, y.index_select(0, &perm)?))
        } else {
            Ok((x, y))
        }
    };
    mine_fit(stream, cfg, rng)
}

pub(crate) fn mine_config(cfg: &ExperimentConfig, kind: EstimatorKind) -> CliResult<MineConfig> {
    Ok(MineConfig {
        kind,
        hidden: cfg.list("model", "critic_hidden")?,
        batch: cfg.get("optimizer", "batch")?,
        steps: cfg.get("optimizer", "steps")?,
        optimizer: adam(cfg, 1e-3)?,
        sampling: sampling(cfg)?,
    })
}

/// `summary.csv` (one row per correlation) and `curves.csv` (every step of
/// every fit). Sweep point `i` and estimator `j` train on stream
/// `seed.split(i).split(j)`.
pub fn run(cfg: &ExperimentConfig, seed: u64, dir: &mut RunDir) -> CliResult<()> {
    let dim: usize = cfg.get("data", "dim")?;
    let corrs: Vec<f64> = cfg.list("data", "corr")?;
    let shuffled: bool = cfg.get("data", "shuffled")?;
    let specs = corrs
        .iter()
        .map(|&c| GaussianPairSpec::new(dim, c).map_err(|e| cfg.invalid("data", "corr", e)))
        .collect::<Result<Vec<_>, _>>()?;
    let configs = EstimatorKind::ALL
        .iter()
        .map(|&k| mine_config(cfg, k))
        .collect::<CliResult<Vec<_>>>()?;
    let root = Rng::seed_from(seed);
    let jobs: Vec<(usize, usize)> = (0..specs.len()).flat_map(|i| (0..configs.len()).map(move |j| (i, j))).collect();
    let fits = jobs
        .par_iter()
        .map(|&(i, j)| fit_gaussian(specs[i], shuffled, &configs[j], &root.split(i as u64).split(j as u64)))
        .collect::<Result<Vec<_>>>()?;

    let mut summary = Vec::new();
    let mut curves = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let row_fits = &fits[i * configs.len()..(i + 1) * configs.len()];
        let mut row = vec![fmt_f64(spec.corr), fmt_f64(analytic_gaussian_mi(dim, spec.corr))];
        row.extend(row_fits.iter().map(|f| fmt_f64(f.estimate)));
        let nce = &row_fits[2];
        row.push(fmt_f64(nce.estimate + EstimatorKind::InfoNce.mi_offset(nce.k)));
        summary.push(row);
        for (kind, fit) in EstimatorKind::ALL.iter().zip(row_fits) {
            for p in &fit.curve {
                curves.push(vec![
                    fmt_f64(spec.corr),
                    kind.to_string(),
                    p.step.to_string(),
                    fmt_f64(p.estimate),
                    fmt_f64(p.loss),
                    fmt_f64(p.lr),
                ]);
            }
        }
    }
    dir.write_csv(
        "summary.csv",
        &["corr", "analytic_mi", "dv", "jsd", "infonce", "infonce_plus_log_k"],
        &summary,
    )?;
    dir.write_csv("curves.csv", &["corr", "estimator", "step", "estimate", "loss", "lr"], &curves)?;
    Ok(())
}
