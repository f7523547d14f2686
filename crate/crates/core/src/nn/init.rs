use crate::{Error, Result, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitScheme {
    /// Normal with standard deviation `sqrt(2 / fan_in)`.
    He,
    /// Uniform on `±sqrt(6 / (fan_in + fan_out))`.
    Glorot,
    Uniform(f64, f64),
}

/// Fan-in and fan-out for `[out, in, ...receptive field]` shaped weights.
/// Vectors count their single extent as both.
fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (0, 0),
        [n] => (*n, *n),
        [out, inp, rest @ ..] => {
            let rf: usize = rest.iter().product();
            (inp * rf, out * rf)
        }
    }
}

pub fn init_params(shape: &[usize], scheme: InitScheme, rng: &mut Rng) -> Result<Tensor> {
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "extents must be positive".into(),
        });
    }
    let n: usize = shape.iter().product();
    let (fan_in, fan_out) = fans(shape);
    let data = match scheme {
        InitScheme::Uniform(a, b) => (0..n).map(|_| rng.uniform_range(a, b)).collect(),
        _ if fan_in == 0 => {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                reason: "zero fan-in".into(),
            })
        }
        InitScheme::He => {
            let std = (2.0 / fan_in as f64).sqrt();
            (0..n).map(|_| std * rng.normal()).collect()
        }
        InitScheme::Glorot => {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..n).map(|_| rng.uniform_range(-limit, limit)).collect()
        }
    };
    Tensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_zero_width_is_zero() {
        let t = init_params(&[3, 4], InitScheme::Uniform(0.0, 0.0), &mut Rng::seed_from(0)).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn he_std_matches_fan_in() {
        let t = init_params(&[1000, 1000], InitScheme::He, &mut Rng::seed_from(1)).unwrap();
        let n = t.numel() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let std = (t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let target = (2.0f64 / 1000.0).sqrt();
        assert!((std - target).abs() < 0.1 * target, "{std} vs {target}");
    }

    #[test]
    fn glorot_within_limit_and_deterministic() {
        let a = init_params(&[8, 4, 3, 3], InitScheme::Glorot, &mut Rng::seed_from(2)).unwrap();
        let b = init_params(&[8, 4, 3, 3], InitScheme::Glorot, &mut Rng::seed_from(2)).unwrap();
        assert!(a.bit_eq(&b));
        let limit = (6.0f64 / (36.0 + 72.0)).sqrt();
        assert!(a.data().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn zero_fan_in_rejected() {
        assert!(init_params(&[], InitScheme::He, &mut Rng::seed_from(3)).is_err());
        assert!(init_params(&[3, 0], InitScheme::He, &mut Rng::seed_from(3)).is_err());
    }
}
