use infomax_core::gradsuite::gradient_suite;

use crate::config::ExperimentConfig;
use crate::output::{fmt_f64, RunDir};
use crate::{CliError, CliResult};

/// `gradcheck.csv`: op, seed, max_rel_err, passed.
pub fn run(cfg: &ExperimentConfig, dir: &mut RunDir) -> CliResult<()> {
    let cases: u64 = cfg.get("eval", "cases")?;
    let tol: f64 = cfg.get("eval", "tol")?;
    let results = gradient_suite(cases, tol)?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|c| vec![c.name.to_string(), c.seed.to_string(), fmt_f64(c.max_rel_err), c.passed.to_string()])
        .collect();
    dir.write_csv("gradcheck.csv", &["op", "seed", "max_rel_err", "passed"], &rows)?;
    let failed = results.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} of {} gradient checks exceeded {tol}", results.len())));
    }
    Ok(())
}
