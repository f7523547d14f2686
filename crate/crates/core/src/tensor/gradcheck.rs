//! Finite-difference verification of tape gradients.

use super::{Tape, Tensor};
use crate::{Error, Result};

/// Per-parameter maximum relative error between tape and central-difference
/// gradients, where the error of one element is
/// `|g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8)`.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: Vec<f64>,
    pub tol: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn compare(analytic: &[Vec<f64>], numeric: &[Vec<f64>], tol: f64) -> GradCheckReport {
        let max_rel_err: Vec<f64> = analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| {
                a.iter()
                    .zip(n)
                    .map(|(ga, gf)| (ga - gf).abs() / ga.abs().max(gf.abs()).max(1e-8))
                    .fold(0.0, f64::max)
            })
            .collect();
        let passed = max_rel_err.iter().all(|&e| e <= tol);
        GradCheckReport {
            max_rel_err,
            tol,
            passed,
        }
    }

    pub fn worst(&self) -> f64 {
        self.max_rel_err.iter().copied().fold(0.0, f64::max)
    }
}

fn scalar_value(root: &Tensor) -> Result<f64> {
    if root.numel() != 1 {
        return Err(Error::InvalidRoot(root.shape().to_vec()));
    }
    let v = root.data()[0];
    if !v.is_finite() {
        return Err(Error::NonFinite("grad_check objective"));
    }
    Ok(v)
}

/// Value of `f` and its tape gradient with respect to each parameter.
pub fn analytic_gradient<F>(f: &F, params: &[Tensor]) -> Result<(f64, Vec<Vec<f64>>)>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let tape = Tape::new();
    let leaves: Vec<Tensor> = params.iter().map(|p| tape.leaf(p)).collect();
    let root = f(&leaves)?;
    let value = scalar_value(&root)?;
    tape.backward(&root)?;
    let grads = leaves
        .iter()
        .map(|l| tape.grad(l).map(|g| g.to_vec()).unwrap_or_default())
        .collect();
    Ok((value, grads))
}

/// Central differences `(f(p + eps) - f(p - eps)) / 2 eps`, one element at a time.
pub fn numeric_gradient<F>(f: &F, params: &[Tensor], eps: f64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let mut work: Vec<Tensor> = params.iter().map(Tensor::detach).collect();
    let mut grads = Vec::with_capacity(params.len());
    for p in 0..work.len() {
        let mut g = vec![0.0; work[p].numel()];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = work[p].data()[i];
            work[p].data_mut()[i] = orig + eps;
            let plus = scalar_value(&f(&work)?)?;
            work[p].data_mut()[i] = orig - eps;
            let minus = scalar_value(&f(&work)?)?;
            work[p].data_mut()[i] = orig;
            *gi = (plus - minus) / (2.0 * eps);
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Compares tape gradients of the scalar function `f` against central
/// differences. `f` must be deterministic in its parameters.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let (_, analytic) = analytic_gradient(&f, params)?;
    let numeric = numeric_gradient(&f, params, eps)?;
    Ok(GradCheckReport::compare(&analytic, &numeric, tol))
}
