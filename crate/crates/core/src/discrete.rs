//! Exact information measures on finite joint distributions, in nats.

use rayon::prelude::*;

use crate::stats::spearman;
use crate::{Error, Result, Rng};

/// A joint distribution `p[x][y]` stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteJoint {
    n_x: usize,
    n_y: usize,
    p: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(n_x: usize, n_y: usize, p: Vec<f64>) -> Result<DiscreteJoint> {
        if n_x == 0 || n_y == 0 || p.len() != n_x * n_y {
            return Err(Error::invalid(format!(
                "joint of {} entries cannot be {n_x}x{n_y}",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("joint entries must be finite and nonnegative"));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("joint sums to {total}, not 1")));
        }
        Ok(DiscreteJoint { n_x, n_y, p })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DiscreteJoint> {
        let n_y = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_y) {
            return Err(Error::invalid("ragged joint rows"));
        }
        DiscreteJoint::new(rows.len(), n_y, rows.concat())
    }

    /// `p(x) p(y)` for the given marginals.
    pub fn product(px: &[f64], py: &[f64]) -> Result<DiscreteJoint> {
        let p = px.iter().flat_map(|a| py.iter().map(move |b| a * b)).collect();
        DiscreteJoint::new(px.len(), py.len(), p)
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn p(&self, x: usize, y: usize) -> f64 {
        self.p[x * self.n_y + y]
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        self.p.chunks(self.n_y).map(|r| r.iter().sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_y];
        for row in self.p.chunks(self.n_y) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// Relabels rows and columns: entry `(x, y)` moves to `(rows[x], cols[y])`.
    pub fn relabel(&self, rows: &[usize], cols: &[usize]) -> Result<DiscreteJoint> {
        if rows.len() != self.n_x || cols.len() != self.n_y {
            return Err(Error::invalid("relabel permutation sizes do not match the joint"));
        }
        let mut p = vec![f64::NAN; self.p.len()];
        for x in 0..self.n_x {
            for y in 0..self.n_y {
                p[rows[x] * self.n_y + cols[y]] = self.p(x, y);
            }
        }
        DiscreteJoint::new(self.n_x, self.n_y, p)
    }
}

/// Sum of `p ln(p / q)` with `0 ln 0 = 0`.
fn kl(p: impl Iterator<Item = (f64, f64)>) -> f64 {
    p.filter(|(p, _)| *p > 0.0).map(|(p, q)| p * (p / q).ln()).sum()
}

fn product_iter(j: &DiscreteJoint) -> impl Iterator<Item = f64> + '_ {
    let px = j.marginal_x();
    let py = j.marginal_y();
    (0..j.n_x).flat_map(move |x| {
        let a = px[x];
        py.clone().into_iter().map(move |b| a * b)
    })
}

/// `KL(p(x,y) ‖ p(x)p(y))`.
pub fn exact_mi(j: &DiscreteJoint) -> f64 {
    kl(j.p.iter().copied().zip(product_iter(j))).max(0.0)
}

/// Jensen-Shannon divergence between the joint and the product of marginals.
pub fn exact_jsd(j: &DiscreteJoint) -> f64 {
    let pairs: Vec<(f64, f64)> = j.p.iter().copied().zip(product_iter(j)).collect();
    let to_m = |(a, b): (f64, f64)| (a, 0.5 * (a + b));
    let joint_term = kl(pairs.iter().map(|&(a, b)| to_m((a, b))));
    let product_term = kl(pairs.iter().map(|&(a, b)| to_m((b, a))));
    (0.5 * joint_term + 0.5 * product_term).clamp(0.0, std::f64::consts::LN_2)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointSamplerConfig {
    pub n_x: usize,
    pub n_y: usize,
    pub dropout_rate: f64,
}

/// Draws a sparse random joint with uniform `p(x)`: each row is a softmax of
/// uniform logits in which dropped entries are `-inf`. Rows that lose every
/// entry are redrawn.
pub fn sample_random_joint(cfg: &JointSamplerConfig, rng: &mut Rng) -> Result<DiscreteJoint> {
    if cfg.n_x == 0 || cfg.n_y == 0 {
        return Err(Error::invalid("joint extents must be positive"));
    }
    if !(0.0..1.0).contains(&cfg.dropout_rate) {
        return Err(Error::invalid(format!(
            "dropout rate {} outside [0, 1)",
            cfg.dropout_rate
        )));
    }
    let mut p = Vec::with_capacity(cfg.n_x * cfg.n_y);
    let mut logits = vec![0.0; cfg.n_y];
    for _ in 0..cfg.n_x {
        loop {
            for l in logits.iter_mut() {
                let u = rng.uniform();
                *l = if rng.bernoulli(cfg.dropout_rate) { f64::NEG_INFINITY } else { u };
            }
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                continue;
            }
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            p.extend(logits.iter().map(|l| (l - m).exp() / z / cfg.n_x as f64));
            break;
        }
    }
    // Per-row normalisation leaves rounding error of order n_x · ulp.
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    DiscreteJoint::new(cfg.n_x, cfg.n_y, p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityPoint {
    pub size: usize,
    pub draw: usize,
    pub mi: f64,
    pub jsd: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicitySummary {
    pub size: usize,
    pub draws: usize,
    /// `None` when all draws had identical MI or JSD.
    pub spearman: Option<f64>,
}

impl MonotonicitySummary {
    pub fn degenerate(&self) -> bool {
        self.spearman.is_none()
    }
}

/// Draws `draws` square joints per size and records exact MI and JSD.
/// Draw `d` of size index `s` uses stream `s · draws + d` of `rng`, so the
/// result does not depend on thread scheduling.
pub fn monotonicity_experiment(
    sizes: &[usize],
    draws: usize,
    dropout_rate: f64,
    rng: &Rng,
) -> Result<(Vec<MonotonicityPoint>, Vec<MonotonicitySummary>)> {
    if draws < 2 {
        return Err(Error::invalid("need at least two draws per size"));
    }
    if let Some(s) = sizes.iter().find(|&&s| s < 2) {
        return Err(Error::invalid(format!("size {s} is below 2")));
    }
    let mut points = Vec::with_capacity(sizes.len() * draws);
    let mut summaries = Vec::with_capacity(sizes.len());
    for (si, &size) in sizes.iter().enumerate() {
        let cfg = JointSamplerConfig {
            n_x: size,
            n_y: size,
            dropout_rate,
        };
        let batch: Vec<MonotonicityPoint> = (0..draws)
            .into_par_iter()
            .map(|d| {
                let mut r = rng.split((si * draws + d) as u64);
                let j = sample_random_joint(&cfg, &mut r)?;
                Ok(MonotonicityPoint {
                    size,
                    draw: d,
                    mi: exact_mi(&j),
                    jsd: exact_jsd(&j),
                })
            })
            .collect::<Result<_>>()?;
        let mi: Vec<f64> = batch.iter().map(|p| p.mi).collect();
        let jsd: Vec<f64> = batch.iter().map(|p| p.jsd).collect();
        summaries.push(MonotonicitySummary {
            size,
            draws,
            spearman: spearman(&mi, &jsd),
        });
        points.extend(batch);
    }
    Ok((points, summaries))
}
