use infomax_core::discrete::monotonicity_experiment;
use infomax_core::Rng;

use crate::config::ExperimentConfig;
use crate::output::{fmt_f64, RunDir};
use crate::CliResult;

/// `scatter.csv` (size, draw_index, mi_nats, jsd_nats) and `summary.csv`
/// (size, spearman_rho, draws). A size whose draws are all identical gets
/// `nan`.
pub fn run(cfg: &ExperimentConfig, seed: u64, dir: &mut RunDir) -> CliResult<()> {
    let sizes: Vec<usize> = cfg.list("data", "sizes")?;
    let draws: usize = cfg.get("data", "draws")?;
    let dropout: f64 = cfg.get("data", "dropout_rate")?;
    let (points, summaries) = monotonicity_experiment(&sizes, draws, dropout, &Rng::seed_from(seed))?;
    let scatter: Vec<Vec<String>> = points
        .iter()
        .map(|p| vec![p.size.to_string(), p.draw.to_string(), fmt_f64(p.mi), fmt_f64(p.jsd)])
        .collect();
    dir.write_csv("scatter.csv", &["size", "draw_index", "mi_nats", "jsd_nats"], &scatter)?;
    let summary: Vec<Vec<String>> = summaries
        .iter()
        .map(|s| vec![s.size.to_string(), fmt_f64(s.spearman.unwrap_or(f64::NAN)), s.draws.to_string()])
        .collect();
    dir.write_csv("summary.csv", &["size", "spearman_rho", "draws"], &summary)?;
    Ok(())
}
