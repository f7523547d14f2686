//! Finite-difference checks of every differentiable op and both scorer
//! architectures over seeded random cases.

use crate::dim::{Scorer, ScorerConfig, ScorerKind};
use crate::nn::{cross_entropy, Module};
use crate::tensor::{grad_check, Padding, ReduceKind};
use crate::{Result, Rng, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteCase {
    pub name: &'static str,
    pub seed: u64,
    pub max_rel_err: f64,
    pub passed: bool,
}

type Objective = Box<dyn Fn(&[Tensor]) -> Result<Tensor>>;

fn randn(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.normal()).collect()).expect("shape and data agree")
}

/// Sum of `t` weighted elementwise by fixed random values.
fn project(t: &Tensor, seed: u64) -> Result<Tensor> {
    let w = randn(&mut Rng::seed_from(seed ^ 0xabcd), t.shape());
    t.mul(&w)?.sum()
}

fn op_cases(rng: &mut Rng, seed: u64) -> Vec<(&'static str, Vec<Vec<usize>>, Objective)> {
    let r = 2 + rng.below(3);
    let c = 2 + rng.below(4);
    let q = 1 + rng.below(3);
    let targets: Vec<usize> = (0..r).map(|_| rng.below(c)).collect();
    vec![
        ("add", vec![vec![r, c], vec![r, c]], Box::new(move |p| project(&p[0].add(&p[1])?, seed))),
        ("sub", vec![vec![r, c], vec![]], Box::new(move |p| project(&p[0].sub(&p[1])?, seed))),
        ("mul", vec![vec![r, c], vec![r, c]], Box::new(move |p| project(&p[0].mul(&p[1])?, seed))),
        ("neg", vec![vec![r, c]], Box::new(move |p| project(&p[0].neg()?, seed))),
        ("relu", vec![vec![r, c]], Box::new(move |p| project(&p[0].relu()?, seed))),
        ("softplus", vec![vec![r, c]], Box::new(move |p| project(&p[0].softplus()?, seed))),
        ("sigmoid", vec![vec![r, c]], Box::new(move |p| project(&p[0].sigmoid()?, seed))),
        ("exp", vec![vec![r, c]], Box::new(move |p| project(&p[0].exp()?, seed))),
        ("log", vec![vec![r, c]], Box::new(move |p| project(&p[0].exp()?.shift(0.5)?.log()?, seed))),
        ("scale_shift", vec![vec![r, c]], Box::new(move |p| project(&p[0].scale(-1.7)?.shift(0.3)?, seed))),
        ("matmul", vec![vec![r, c], vec![c, q]], Box::new(move |p| project(&p[0].matmul(&p[1])?, seed))),
        ("matmul_t", vec![vec![r, c], vec![q, c]], Box::new(move |p| project(&p[0].matmul_t(&p[1])?, seed))),
        ("transpose", vec![vec![r, c]], Box::new(move |p| project(&p[0].transpose()?, seed))),
        ("sum", vec![vec![r, c, q]], Box::new(move |p| project(&p[0].reduce(ReduceKind::Sum, Some(1))?, seed))),
        ("mean", vec![vec![r, c, q]], Box::new(move |p| project(&p[0].reduce(ReduceKind::Mean, Some(2))?, seed))),
        ("logsumexp", vec![vec![r, c, q]], Box::new(move |p| project(&p[0].reduce(ReduceKind::LogSumExp, Some(1))?, seed))),
        ("max", vec![vec![r, c]], Box::new(move |p| project(&p[0].reduce(ReduceKind::Max, Some(1))?, seed))),
        ("reshape", vec![vec![r, c]], Box::new(move |p| project(&p[0].reshape(&[c, r])?, seed))),
        ("permute", vec![vec![r, c, q]], Box::new(move |p| project(&p[0].permute(&[2, 0, 1])?, seed))),
        ("concat", vec![vec![r, c], vec![r, q]], Box::new(move |p| project(&Tensor::concat(&[&p[0], &p[1]], 1)?, seed))),
        ("gather", vec![vec![r, c]], Box::new(move |p| project(&p[0].gather(vec![0, 1, 1, r * c - 1], &[4])?, seed))),
        ("index_select", vec![vec![r, c]], Box::new(move |p| project(&p[0].index_select(0, &[r - 1, 0, r - 1])?, seed))),
        ("add_row", vec![vec![r, c], vec![c]], Box::new(move |p| project(&p[0].add_row(&p[1])?, seed))),
        ("add_channel", vec![vec![r, c, 2, 2], vec![c]], Box::new(move |p| project(&p[0].add_channel(&p[1])?, seed))),
        ("pair_add", vec![vec![r, c], vec![q, c]], Box::new(move |p| project(&p[0].pair_add(&p[1])?, seed))),
        (
            "batch_norm",
            vec![vec![r, c, 2, 2], vec![c], vec![c]],
            Box::new(move |p| project(&p[0].batch_norm(&p[1], &p[2], None, 1e-5)?.0, seed)),
        ),
        (
            "layer_norm",
            vec![vec![r, c + 1], vec![c + 1], vec![c + 1]],
            Box::new(move |p| project(&p[0].layer_norm_rows(&p[1], &p[2], 1e-5)?, seed)),
        ),
        (
            "conv2d",
            vec![vec![2, 2, 5, 5], vec![3, 2, 3, 3]],
            Box::new(move |p| project(&p[0].conv2d(&p[1], 1 + (seed as usize % 2), Padding::Same)?, seed)),
        ),
        ("cross_entropy", vec![vec![r, c]], Box::new(move |p| cross_entropy(&p[0], &targets))),
    ]
}

/// Gradients of a projected score matrix with respect to the scorer's
/// parameters and both inputs.
fn scorer_case(kind: ScorerKind, rng: &mut Rng, seed: u64, tol: f64) -> Result<SuiteCase> {
    let cfg = ScorerConfig {
        kind,
        concat_hidden: vec![6, 5],
        dot_width: 4,
    };
    let (g, c) = (2 + rng.below(3), 2 + rng.below(3));
    let scorer = Scorer::new(&cfg, g, c, rng)?;
    // Fresh random values everywhere: zero-initialised biases put units
    // exactly on a ReLU kink whenever an input row is all zeros.
    let mut params: Vec<Tensor> = scorer.clone().params_mut().into_iter().map(|p| randn(rng, p.shape())).collect();
    let n = params.len();
    params.push(randn(rng, &[3, g]));
    params.push(randn(rng, &[4, c]));
    let f = move |p: &[Tensor]| {
        let mut local = scorer.clone();
        for (dst, src) in local.params_mut().into_iter().zip(p) {
            *dst = src.clone();
        }
        project(&local.scores(&p[n], &p[n + 1])?, seed)
    };
    let report = grad_check(f, &params, 1e-5, tol)?;
    Ok(SuiteCase {
        name: match kind {
            ScorerKind::ConcatConvolve => "scorer_concat",
            ScorerKind::EncodeDot => "scorer_dot",
        },
        seed,
        max_rel_err: report.worst(),
        passed: report.passed,
    })
}

/// Runs every op and both scorers on `cases` seeds, comparing tape and
/// central-difference gradients at relative tolerance `tol`.
pub fn gradient_suite(cases: u64, tol: f64) -> Result<Vec<SuiteCase>> {
    let mut out = Vec::new();
    for seed in 0..cases {
        let mut rng = Rng::seed_from(100 + seed);
        for (name, shapes, f) in op_cases(&mut rng, seed) {
            let params: Vec<Tensor> = shapes
                .iter()
                .map(|s| if s.is_empty() { Tensor::scalar(rng.normal()) } else { randn(&mut rng, s) })
                .collect();
            let report = grad_check(f, &params, 1e-5, tol)?;
            out.push(SuiteCase {
                name,
                seed,
                max_rel_err: report.worst(),
                passed: report.passed,
            });
        }
        for kind in [ScorerKind::ConcatConvolve, ScorerKind::EncodeDot] {
            out.push(scorer_case(kind, &mut rng, seed, tol)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_seed_passes() {
        let cases = gradient_suite(1, 1e-4).unwrap();
        assert!(cases.iter().any(|c| c.name == "scorer_dot"));
        for c in &cases {
            assert!(c.passed, "{c:?}");
        }
    }
}
