use crate::tensor::ReduceKind;
use crate::{Error, Result, Rng, Tensor};

/// Mean categorical cross-entropy of `[N, K]` logits against class indices.
pub fn cross_entropy(logits: &Tensor, targets: &[usize]) -> Result<Tensor> {
    let (n, k) = match logits.shape() {
        &[n, k] => (n, k),
        s => {
            return Err(Error::InvalidShape {
                shape: s.to_vec(),
                reason: "cross_entropy expects [N, K] logits".into(),
            })
        }
    };
    if targets.len() != n {
        return Err(Error::invalid(format!("{} targets for {n} rows", targets.len())));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= k) {
        return Err(Error::invalid(format!("target class {t} out of range {k}")));
    }
    let picked = logits.gather(targets.iter().enumerate().map(|(i, &t)| i * k + t).collect(), &[n])?;
    logits.reduce(ReduceKind::LogSumExp, Some(1))?.sub(&picked)?.mean()
}

pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut d = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::invalid(format!("label {l} out of range {classes}")));
        }
        d[i * classes + l] = 1.0;
    }
    Tensor::new(&[labels.len(), classes], d)
}

/// Inverted-dropout mask: each entry is `0` with probability `rate`, else
/// `1 / (1 - rate)`.
pub fn dropout_mask(shape: &[usize], rate: f64, rng: &mut Rng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    let keep = 1.0 / (1.0 - rate);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| if rng.bernoulli(rate) { 0.0 } else { keep }).collect())
}
