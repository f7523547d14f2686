//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! fails.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use infomax_cli::{run, ExperimentConfig, Subcommand};
use infomax_core::data::{sample_toy_images, ToyImageSpec};
use infomax_core::dim::{
    dim_train_step, global_mi_objective, local_mi_objective, DimConfig, DimEncoder, DimHyperparams, DimModel,
    EncoderConfig, Occlusion, Scorer, ScorerConfig, ScorerKind,
};
use infomax_core::gradsuite::gradient_suite;
use infomax_core::mi::{infonce_estimate, EstimatorKind, NegativeSamplingConfig, ScoreMatrix};
use infomax_core::ndm::{ndm_estimate, NdmConfig};
use infomax_core::nn::{AdamConfig, Mode, Module};
use infomax_core::stats::{ks_uniform, mean};
use infomax_core::structure::{
    abs_coord_loss, occluded_global_encode, rel_coord_loss, sample_occlusion_mask, CoordPredictor, CoordTask,
    OcclusionMask,
};
use infomax_core::tensor::read_dimt_file;
use infomax_core::{Result, Rng, Tensor};

type Outcome = std::result::Result<(bool, String), String>;

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Runs `cmd` with `overrides` into a fresh directory.
fn experiment(cmd: Subcommand, overrides: &[&str]) -> std::result::Result<tempfile::TempDir, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut all: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    all.push(format!("run.out_dir={}", dir.path().display()));
    let cfg = ExperimentConfig::load(None, &all).map_err(|e| e.to_string())?;
    run(cmd, &cfg).map_err(|e| e.to_string())?;
    Ok(dir)
}

/// CSV rows keyed by header name.
fn table(path: &Path) -> std::result::Result<Vec<BTreeMap<String, String>>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| e.to_string())?;
            Ok(header.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        })
        .collect()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> std::result::Result<f64, String> {
    row.get(key)
        .ok_or_else(|| format!("missing column {key}"))?
        .parse()
        .map_err(|e| format!("column {key}: {e}"))
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

fn c1() -> Outcome {
    let t = Instant::now();
    let cases = gradient_suite(20, 1e-4).map_err(|e| e.to_string())?;
    let elapsed = secs(t.elapsed());
    let failed: Vec<String> = cases.iter().filter(|c| !c.passed).map(|c| format!("{}#{}", c.name, c.seed)).collect();
    let worst = cases.iter().map(|c| c.max_rel_err).fold(0.0, f64::max);
    let ops = cases.iter().filter(|c| c.seed == 0).count();
    Ok((
        failed.is_empty() && elapsed < 60.0,
        format!(
            "{ops} checks x 20 seeds, worst rel err {worst:.2e}, failures {failed:?}, {elapsed:.1} s (limit 60 s)"
        ),
    ))
}

fn c2() -> Outcome {
    let t = Instant::now();
    let dir = experiment(Subcommand::EstimateMi, &["run.seed=1", "data.corr=0.3, 0.6, 0.9"])?;
    let elapsed = secs(t.elapsed());
    let rows = table(&dir.path().join("summary.csv"))?;
    let mut ok = elapsed < 180.0;
    let mut detail = Vec::new();
    let mut series: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for row in &rows {
        let truth = num(row, "analytic_mi")?;
        let dv = num(row, "dv")?;
        let nce = num(row, "infonce_plus_log_k")?;
        ok &= (dv - truth).abs() <= 0.15 && (nce - truth).abs() <= 0.15;
        detail.push(format!("{truth:.4}: dv {dv:.3} infonce {nce:.3}"));
        series.entry("dv").or_default().push(dv);
        series.entry("jsd").or_default().push(num(row, "jsd")?);
        series.entry("infonce").or_default().push(nce);
    }
    let monotone = series.values().all(|v| strictly_increasing(v));
    ok &= monotone && rows.len() == 3;
    Ok((ok, format!("{}; monotone {monotone}; {elapsed:.1} s (limit 180 s)", detail.join(", "))))
}

fn c3() -> Outcome {
    let t = Instant::now();
    let dir = experiment(Subcommand::EstimateMi, &["run.seed=2", "data.corr=0.9", "data.shuffled=true"])?;
    let elapsed = secs(t.elapsed());
    let rows = table(&dir.path().join("summary.csv"))?;
    let row = rows.first().ok_or("empty summary")?;
    let (dv, jsd, nce) = (num(row, "dv")?, num(row, "jsd")?, num(row, "infonce")?);
    let floor_nce = -(64f64.ln());
    let errs = [dv.abs(), (jsd + 2.0 * LN_2).abs(), (nce - floor_nce).abs()];
    let ok = errs.iter().all(|&e| e <= 0.05) && elapsed < 120.0;
    Ok((
        ok,
        format!(
            "dv {dv:.4} (0), jsd {jsd:.4} ({:.4}), infonce {nce:.4} ({floor_nce:.4}); max gap {:.4}; {elapsed:.1} s (limit 120 s)",
            -2.0 * LN_2,
            errs.iter().cloned().fold(0.0, f64::max)
        ),
    ))
}

fn c4() -> Outcome {
    let mut rng = Rng::seed_from(4);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let rows = 1 + rng.below(8);
        let k = 2 + rng.below(64);
        let scale = 50.0 * rng.uniform();
        let data = (0..rows * k).map(|_| scale * rng.normal()).collect();
        let t = Tensor::new(&[rows, k], data).map_err(|e| e.to_string())?;
        let sm = ScoreMatrix::new(t).map_err(|e| e.to_string())?;
        let v = infonce_estimate(&sm).and_then(|v| v.item()).map_err(|e| e.to_string())?;
        worst = worst.max(v - (k as f64).ln());
    }
    Ok((worst <= 1e-9, format!("max (estimate - ln K) over 10^4 matrices: {worst:.3e} (tolerance 1e-9)")))
}

fn c5() -> Outcome {
    let t = Instant::now();
    let dir = experiment(Subcommand::JsdKl, &["run.seed=5"])?;
    let elapsed = secs(t.elapsed());
    let rows = table(&dir.path().join("summary.csv"))?;
    let mut ok = rows.len() == 5 && elapsed < 120.0;
    let mut detail = Vec::new();
    for row in &rows {
        let rho = num(row, "spearman_rho")?;
        ok &= rho >= 0.9 && num(row, "draws")? == 1000.0;
        detail.push(format!("{}: {rho:.3}", row["size"]));
    }
    Ok((ok, format!("spearman {}; {elapsed:.1} s (limit 120 s)", detail.join(", "))))
}

fn c6() -> Outcome {
    let inner = || -> Result<f64> {
        let mut rng = Rng::seed_from(6);
        let mut enc = DimEncoder::new(EncoderConfig::toy_sized(4), &mut rng)?;
        let x = sample_toy_images(&ToyImageSpec { size: 4, grid: 2, ..Default::default() }, &mut rng, 8)?.0;
        let e = enc.encode(&x, Mode::Train)?;
        let cfg = NegativeSamplingConfig::default();
        let mut worst = 0.0f64;
        for kind in [ScorerKind::ConcatConvolve, ScorerKind::EncodeDot] {
            let mut scorer = Scorer::new(&ScorerConfig::toy(kind), 64, 64, &mut rng)?;
            for est in EstimatorKind::ALL {
                let g = global_mi_objective(&mut scorer, &e.local, &e.global, est, &cfg, &mut Rng::seed_from(1))?;
                let l = local_mi_objective(&mut scorer, &e.local, &e.global, est, &cfg, &mut Rng::seed_from(1))?;
                if g.1 != l.1 {
                    return Ok(f64::INFINITY);
                }
                worst = worst.max((g.0.item()? - l.0.item()?).abs());
            }
        }
        Ok(worst)
    };
    let worst = inner().map_err(|e| e.to_string())?;
    Ok((worst <= 1e-6, format!("max |local - global| at M=1 over 2 scorers x 3 estimators: {worst:.2e}")))
}

fn c7() -> Outcome {
    let t = Instant::now();
    let dir = experiment(Subcommand::Negsweep, &["run.seed=7", "data.corr=0.9"])?;
    let elapsed = secs(t.elapsed());
    let rows = table(&dir.path().join("negsweep.csv"))?;
    let pick = |est: &str| -> std::result::Result<Vec<(f64, f64)>, String> {
        rows.iter()
            .filter(|r| r["estimator"] == est)
            .map(|r| Ok((num(r, "negatives")?, num(r, "estimate")?)))
            .collect()
    };
    let nce = pick("infonce")?;
    let jsd = pick("jsd")?;
    let at = |v: &[(f64, f64)], n: f64| v.iter().find(|p| p.0 == n).map(|p| p.1);
    let (lo, hi) = (at(&nce, 1.0).ok_or("no n=1")?, at(&nce, 64.0).ok_or("no n=64")?);
    let jsd_vals: Vec<f64> = jsd.iter().map(|p| p.1).collect();
    let spread = jsd_vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - jsd_vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let ok = hi - lo >= 0.2 && spread <= 0.1 && jsd.len() == 4;
    Ok((
        ok,
        format!(
            "infonce {:?}; rise {:.3} (need >= 0.2); jsd spread {spread:.4} (need <= 0.1); {elapsed:.1} s",
            nce.iter().map(|p| format!("{}:{:.3}", p.0, p.1)).collect::<Vec<_>>(),
            hi - lo
        ),
    ))
}

fn c8() -> Outcome {
    let t = Instant::now();
    let dir = experiment(
        Subcommand::TrainDim,
        &[
            "run.seed=1",
            "objective.alpha=1",
            "objective.beta=0",
            "objective.gamma=1",
            "objective.prior_loss=non-saturating",
            "optimizer.beta1=0.5",
            "optimizer.lr0=5e-5",
            "optimizer.prior_lr0=4e-4",
            "optimizer.steps=3000",
            "optimizer.batch=32",
            "eval.probes=none",
            "eval.probe_test=2",
            "eval.export_features=true",
            "eval.checkpoint=false",
        ],
    )?;
    let elapsed = secs(t.elapsed());
    let f = read_dimt_file(dir.path().join("features_train.dimt")).map_err(|e| e.to_string())?;
    let (n, d) = (f.shape()[0], f.shape()[1]);
    let data = f.data();
    let (mut worst_ks, mut lo, mut hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for j in 0..d {
        let col: Vec<f64> = (0..n).map(|i| data[i * d + j]).collect();
        worst_ks = worst_ks.max(ks_uniform(&col));
        let m = mean(&col);
        lo = lo.min(m);
        hi = hi.max(m);
    }
    let ok = d == 64 && worst_ks <= 0.15 && lo >= 0.4 && hi <= 0.6 && elapsed < 180.0;
    Ok((
        ok,
        format!("{d} dims on {n} images: worst KS {worst_ks:.3} (<= 0.15), means in [{lo:.3}, {hi:.3}]; {elapsed:.1} s (limit 180 s)"),
    ))
}

fn c9() -> Outcome {
    let t = Instant::now();
    let mut gaps = Vec::new();
    let mut detail = Vec::new();
    for seed in 1..=3 {
        let s = format!("run.seed={seed}");
        let dir = experiment(
            Subcommand::TrainDim,
            &[&s, "optimizer.steps=1000", "optimizer.batch=32", "eval.probes=linear", "eval.checkpoint=false"],
        )?;
        let rows = table(&dir.path().join("probes.csv"))?;
        let row = rows.first().ok_or("no probe row")?;
        let (trained, random) = (num(row, "trained")?, num(row, "random_encoder")?);
        gaps.push(100.0 * (trained - random));
        detail.push(format!("seed {seed}: {trained:.3} vs {random:.3}"));
    }
    let elapsed = secs(t.elapsed());
    let gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    Ok((
        gap >= 15.0 && elapsed < 300.0,
        format!("{}; mean gap {gap:.1} points (need >= 15); {elapsed:.1} s (limit 300 s)", detail.join(", ")),
    ))
}

fn c10() -> Outcome {
    let t = Instant::now();
    let nc = NdmConfig {
        hidden: vec![128, 128],
        steps: 500,
        batch: 128,
        optimizer: AdamConfig::with_lr(1e-3),
        use_sigmoid_output: false,
    };
    let independent = |n: usize, r: &mut Rng| Tensor::new(&[n, 8], (0..n * 8).map(|_| r.uniform()).collect());
    let duplicated = |n: usize, r: &mut Rng| {
        Tensor::new(
            &[n, 2],
            (0..n)
                .flat_map(|_| {
                    let z = r.normal();
                    [z, z]
                })
                .collect(),
        )
    };
    let ind = ndm_estimate(independent, &nc, &Rng::seed_from(10)).map_err(|e| e.to_string())?.estimate;
    let dup = ndm_estimate(duplicated, &nc, &Rng::seed_from(11)).map_err(|e| e.to_string())?.estimate;
    let dir = experiment(Subcommand::Ndm, &["run.seed=12", "data.rho=0, 0.5, 0.9, 0.99"])?;
    let sweep: Vec<f64> = table(&dir.path().join("ndm.csv"))?
        .iter()
        .map(|r| num(r, "ndm_raw"))
        .collect::<std::result::Result<_, _>>()?;
    let elapsed = secs(t.elapsed());
    let ok = ind <= 0.1 && dup >= 1.0 && sweep.len() == 4 && strictly_increasing(&sweep) && elapsed < 120.0;
    Ok((
        ok,
        format!(
            "independent {ind:.3} (<= 0.1), duplicated {dup:.3} (>= 1.0), rho sweep {:?}; {elapsed:.1} s (limit 120 s)",
            sweep.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
        ),
    ))
}

fn occlusion_run(occlusion: Occlusion) -> Result<(Vec<u64>, Vec<Vec<u64>>)> {
    let mut cfg = DimConfig::toy(DimHyperparams::dim_lg(0.5, EstimatorKind::Jsd, ScorerKind::EncodeDot));
    cfg.occlusion = occlusion;
    let mut model = DimModel::new(cfg, &Rng::seed_from(13))?;
    let mut opt = model.optimizers();
    let mut data = Rng::seed_from(14);
    let mut losses = Vec::new();
    for _ in 0..3 {
        let x = sample_toy_images(&ToyImageSpec::default(), &mut data, 6)?.0;
        let m = dim_train_step(&mut model, &x, &mut opt, &Rng::seed_from(15))?;
        losses.extend([m.total.to_bits(), m.local_loss.unwrap_or(f64::NAN).to_bits()]);
    }
    let params = model.params_mut().into_iter().map(|p| p.to_vec().iter().map(|v| v.to_bits()).collect()).collect();
    Ok((losses, params))
}

fn c11() -> Outcome {
    let inner = || -> Result<(bool, String)> {
        let mut rng = Rng::seed_from(11);
        let mut enc = DimEncoder::new(EncoderConfig::toy(), &mut rng)?;
        let x = sample_toy_images(&ToyImageSpec::default(), &mut rng, 8)?.0;
        let e = enc.encode(&x, Mode::Train)?;
        let (_, m) = enc.local_shape();
        let mut abs = CoordPredictor::new(CoordTask::Absolute, 64, 64, m, &[512, 512], &mut rng)?;
        let mut rel = CoordPredictor::new(CoordTask::Relative, 64, 64, m, &[512, 512], &mut rng)?;
        let a = abs_coord_loss(&mut abs, &e.global, &e.local, Mode::Train)?.item()?;
        let r = rel_coord_loss(&mut rel, &e.global, &e.local, &mut rng, Mode::Train)?.item()?;
        let (ua, ur) = (2.0 * (m as f64).ln(), 2.0 * ((2 * m - 1) as f64).ln());
        let coords_ok = (a - ua).abs() <= 0.05 && (r - ur).abs() <= 0.05;

        let mut mask_failures = 0;
        let mut mrng = Rng::seed_from(12);
        for _ in 0..1000 {
            let mask = sample_occlusion_mask(&mut mrng, 16, 16, 4)?;
            let b = mask.block;
            let (mut visible, mut hidden) = (0, 0);
            for bi in 0..mask.height / b {
                for bj in 0..mask.width / b {
                    let px: Vec<f64> = (0..b * b)
                        .map(|k| mask.values[(bi * b + k / b) * mask.width + bj * b + k % b])
                        .collect();
                    visible += px.iter().all(|&v| v == 1.0) as usize;
                    hidden += px.iter().all(|&v| v == 0.0) as usize;
                }
            }
            if visible == 0 || hidden == 0 || visible + hidden != 16 {
                mask_failures += 1;
            }
        }

        let ones = vec![OcclusionMask::all_ones(16, 16, 4); 8];
        let plain = enc.clone().encode(&x, Mode::Train)?.global;
        let occluded = occluded_global_encode(&mut enc.clone(), &x, &ones, Mode::Train)?;
        let forward_identical = plain.bit_eq(&occluded);
        let training_identical = occlusion_run(Occlusion::Off)? == occlusion_run(Occlusion::Identity)?;
        Ok((
            coords_ok && mask_failures == 0 && forward_identical && training_identical,
            format!(
                "abs {a:.4} vs {ua:.4}, rel {r:.4} vs {ur:.4}; mask failures {mask_failures}/1000; \
                 all-ones forward bit-identical {forward_identical}, 3-step training bit-identical {training_identical}"
            ),
        ))
    };
    inner().map_err(|e| e.to_string())
}

/// Every CSV under `dir`, by relative path.
fn csvs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                let rel = p.strip_prefix(dir).unwrap_or(&p).to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap_or_default());
            }
        }
    }
    out
}

fn c12() -> Outcome {
    let small: &[(&str, &[&str])] = &[
        ("gradcheck", &["eval.cases=1"]),
        ("estimate-mi", &["optimizer.steps=20", "optimizer.batch=16"]),
        ("jsd-kl", &["data.draws=100"]),
        ("negsweep", &["optimizer.steps=10", "data.corr=0.9", "objective.negative_sweep=1, 4"]),
        ("ndm", &["eval.ndm_steps=20", "eval.ndm_batch=32"]),
        (
            "train-dim",
            &[
                "optimizer.steps=5",
                "optimizer.batch=8",
                "eval.probe_train=64",
                "eval.probe_test=32",
                "eval.probe_epochs=2",
                "eval.probes=linear, mlp",
                "eval.ndm=true",
                "eval.ndm_steps=10",
                "eval.mine=true",
                "eval.mine_steps=10",
                "eval.export_features=true",
            ],
        ),
    ];
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for (cmd, sets) in small {
        let mut outputs = Vec::new();
        for attempt in 0..2 {
            let out = root.path().join(format!("{cmd}-{attempt}"));
            let mut c = Command::new(env!("CARGO_BIN_EXE_infomax"));
            c.arg(cmd).arg("--seed").arg("3").arg("--out").arg(&out);
            for s in *sets {
                c.arg("--set").arg(s);
            }
            let status = c.output().map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{cmd} failed: {}", String::from_utf8_lossy(&status.stderr)));
            }
            outputs.push(csvs(&out));
        }
        compared += outputs[0].len();
        if outputs[0].is_empty() || outputs[0] != outputs[1] {
            mismatched.push(cmd.to_string());
        }
    }
    // The probe subcommand reads the features exported above.
    let exported = root.path().join("train-dim-0");
    let mut outputs = Vec::new();
    for attempt in 0..2 {
        let out = root.path().join(format!("probe-{attempt}"));
        let status = Command::new(env!("CARGO_BIN_EXE_infomax"))
            .args(["probe", "--seed", "3", "--set", "eval.probe_epochs=2"])
            .arg("--set")
            .arg(format!("data.features={}", exported.join("features_train.dimt").display()))
            .arg("--set")
            .arg(format!("data.labels={}", exported.join("labels_train.csv").display()))
            .arg("--set")
            .arg(format!("data.test_features={}", exported.join("features_test.dimt").display()))
            .arg("--set")
            .arg(format!("data.test_labels={}", exported.join("labels_test.csv").display()))
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("probe failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        outputs.push(csvs(&out));
    }
    compared += outputs[0].len();
    if outputs[0].is_empty() || outputs[0] != outputs[1] {
        mismatched.push("probe".into());
    }
    Ok((
        mismatched.is_empty(),
        format!("7 subcommands run twice, {compared} CSVs compared, mismatches {mismatched:?}"),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("gradient suite", c1),
        ("analytic MI recovery", c2),
        ("zero-MI floors", c3),
        ("infoNCE cap", c4),
        ("JSD/MI rank agreement", c5),
        ("one-location degeneracy", c6),
        ("negative-count sensitivity", c7),
        ("prior matching", c8),
        ("shared-information probe gap", c9),
        ("NDM sanity", c10),
        ("occlusion and coordinate losses", c11),
        ("determinism", c12),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (passed, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failures += !passed as usize;
        println!("{} {:>2} {name}: {detail}", if passed { "PASS" } else { "FAIL" }, i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
