use infomax_core::ndm::{ndm_estimate, NdmConfig, NdmResult};
use infomax_core::{Result, Rng, Tensor};
use rayon::prelude::*;

use super::{adam, read_features};
use crate::config::ExperimentConfig;
use crate::output::{fmt_f64, RunDir};
use crate::CliResult;

/// Batches of `[z, ρz + √(1−ρ²)ε]` with independent standard normals.
pub fn dependence_stream(rho: f64) -> impl FnMut(usize, &mut Rng) -> Result<Tensor> {
    move |n, r| {
        let noise = (1.0 - rho * rho).sqrt();
        let data = (0..n)
            .flat_map(|_| {
                let z = r.normal();
                [z, rho * z + noise * r.normal()]
            })
            .collect();
        Tensor::new(&[n, 2], data)
    }
}

/// Batches of rows drawn uniformly with replacement from `features`.
pub fn feature_stream(features: Tensor) -> impl FnMut(usize, &mut Rng) -> Result<Tensor> {
    move |n, r| {
        let rows: Vec<usize> = (0..n).map(|_| r.below(features.shape()[0])).collect();
        features.index_select(0, &rows)
    }
}

pub(crate) fn ndm_config(cfg: &ExperimentConfig) -> CliResult<NdmConfig> {
    Ok(NdmConfig {
        hidden: cfg.list("model", "ndm_hidden")?,
        steps: cfg.get("eval", "ndm_steps")?,
        batch: cfg.get("eval", "ndm_batch")?,
        optimizer: adam(cfg, 1e-3)?,
        use_sigmoid_output: false,
    })
}

fn row(label: String, r: &NdmResult, steps: usize) -> Vec<String> {
    vec![label, fmt_f64(r.raw), fmt_f64(r.estimate), steps.to_string()]
}

/// `ndm.csv`: rho, ndm_raw, ndm_clamped, steps. With `data.features` set
/// the single row is labelled by the file stem; otherwise one row per
/// `data.rho`, sweep point `i` using stream `seed.split(i)`.
pub fn run(cfg: &ExperimentConfig, seed: u64, dir: &mut RunDir) -> CliResult<()> {
    let nc = ndm_config(cfg)?;
    let root = Rng::seed_from(seed);
    let rows = match cfg.path("data", "features") {
        Some(path) => {
            let features = read_features(&path)?;
            let label = path.file_stem().map_or("features".into(), |s| s.to_string_lossy().into_owned());
            let r = ndm_estimate(feature_stream(features), &nc, &root)?;
            vec![row(label, &r, nc.steps)]
        }
        None => {
            let rhos: Vec<f64> = cfg.list("data", "rho")?;
            if let Some(bad) = rhos.iter().find(|r| !(r.abs() < 1.0)) {
                return Err(cfg.invalid("data", "rho", format!("{bad} is outside (-1, 1)")).into());
            }
            let results = rhos
                .par_iter()
                .enumerate()
                .map(|(i, &rho)| ndm_estimate(dependence_stream(rho), &nc, &root.split(i as u64)))
                .collect::<Result<Vec<_>>>()?;
            rhos.iter().zip(&results).map(|(rho, r)| row(fmt_f64(*rho), r, nc.steps)).collect()
        }
    };
    dir.write_csv("ndm.csv", &["rho", "ndm_raw", "ndm_clamped", "steps"], &rows)?;
    Ok(())
}
