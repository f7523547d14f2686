use crate::{Error, Result, Rng, Tensor};

/// Pairs `(x, y)` of `dim` independent coordinates, each jointly Gaussian
/// with unit variances and correlation `corr`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianPairSpec {
    pub dim: usize,
    pub corr: f64,
}

impl GaussianPairSpec {
    pub fn new(dim: usize, corr: f64) -> Result<GaussianPairSpec> {
        if dim == 0 {
            return Err(Error::invalid("gaussian pairs need dim >= 1"));
        }
        if !(corr.abs() < 1.0) {
            return Err(Error::invalid(format!("correlation {corr} must lie in (-1, 1)")));
        }
        Ok(GaussianPairSpec { dim, corr })
    }

    /// `-(dim / 2) ln(1 - corr²)` nats.
    pub fn analytic_mi(&self) -> f64 {
        analytic_gaussian_mi(self.dim, self.corr)
    }

    pub fn sample(&self, rng: &mut Rng, n: usize) -> Result<(Tensor, Tensor)> {
        sample_gaussian_pairs(self, rng, n)
    }
}

pub fn analytic_gaussian_mi(dim: usize, corr: f64) -> f64 {
    -(dim as f64) / 2.0 * (1.0 - corr * corr).ln()
}

pub fn sample_gaussian_pairs(spec: &GaussianPairSpec, rng: &mut Rng, n: usize) -> Result<(Tensor, Tensor)> {
    let spec = GaussianPairSpec::new(spec.dim, spec.corr)?;
    let noise = (1.0 - spec.corr * spec.corr).sqrt();
    let mut x = Vec::with_capacity(n * spec.dim);
    let mut y = Vec::with_capacity(n * spec.dim);
    for _ in 0..n * spec.dim {
        let a = rng.normal();
        x.push(a);
        y.push(spec.corr * a + noise * rng.normal());
    }
    Ok((Tensor::new(&[n, spec.dim], x)?, Tensor::new(&[n, spec.dim], y)?))
}
