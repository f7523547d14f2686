//! Neural dependency measure: a DV estimate of the KL divergence between a
//! representation's joint distribution and the product of its factors'
//! marginals.

use crate::nn::{self, Adam, AdamConfig, Mlp, Mode, Module};
use crate::stats::tail_mean;
use crate::{Error, Result, Rng, Tape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct NdmConfig {
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub batch: usize,
    pub optimizer: AdamConfig,
    /// Squash the critic output through a sigmoid.
    pub use_sigmoid_output: bool,
}

impl Default for NdmConfig {
    fn default() -> Self {
        NdmConfig {
            hidden: vec![512, 512],
            steps: 500,
            batch: 128,
            optimizer: AdamConfig::with_lr(1e-3),
            use_sigmoid_output: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NdmResult {
    /// `max(raw, 0)`.
    pub estimate: f64,
    /// Mean DV value over the final 10% of steps.
    pub raw: f64,
    pub curve: Vec<f64>,
}

/// Permutes every column of `[B, D]` independently.
pub fn shuffle_factors(batch: &Tensor, rng: &mut Rng) -> Result<Tensor> {
    if batch.rank() != 2 || batch.shape()[0] < 2 {
        return Err(Error::InvalidShape {
            shape: batch.shape().to_vec(),
            reason: "shuffling factors needs [B, D] with B >= 2".into(),
        });
    }
    let (b, d) = (batch.shape()[0], batch.shape()[1]);
    let src = batch.data();
    let mut out = vec![0.0; b * d];
    for c in 0..d {
        let perm = rng.permutation(b);
        for (r, &p) in perm.iter().enumerate() {
            out[r * d + c] = src[p * d + c];
        }
    }
    Tensor::new(&[b, d], out)
}

/// Trains a critic to separate batches from `stream` (real) and their
/// factor-shuffled copies (fake) with the DV objective.
pub fn ndm_estimate<S>(mut stream: S, cfg: &NdmConfig, rng: &Rng) -> Result<NdmResult>
where
    S: FnMut(usize, &mut Rng) -> Result<Tensor>,
{
    if cfg.steps == 0 {
        return Err(Error::invalid("ndm needs at least one step"));
    }
    let mut data_rng = rng.split(1);
    let mut shuffle_rng = rng.split(2);
    let first = stream(cfg.batch, &mut data_rng)?;
    let mut widths = vec![first.shape()[1]];
    widths.extend_from_slice(&cfg.hidden);
    widths.push(1);
    let mut critic = Mlp::new(&widths, false, &mut rng.split(0))?;
    let mut adam = Adam::new(cfg.optimizer);
    let mut curve = Vec::with_capacity(cfg.steps);
    let mut pending = Some(first);
    for step in 1..=cfg.steps {
        let real = match pending.take() {
            Some(t) => t,
            None => stream(cfg.batch, &mut data_rng)?,
        };
        if real.shape()[1] != widths[0] {
            return Err(Error::invalid("representation width changed between batches"));
        }
        let fake = shuffle_factors(&real, &mut shuffle_rng)?;
        let tape = Tape::new();
        nn::attach(critic.params_mut(), &tape);
        let result = (|| {
            let mut score = |x: &Tensor| -> Result<Tensor> {
                let s = critic.forward(x, Mode::Train)?;
                if cfg.use_sigmoid_output {
                    s.sigmoid()
                } else {
                    Ok(s)
                }
            };
            let t_real = score(&real)?;
            let t_fake = score(&fake)?;
            let n = t_fake.numel() as f64;
            let dv = t_real.mean()?.sub(&t_fake.logsumexp()?)?.shift(n.ln())?;
            tape.backward(&dv.neg()?)?;
            let mut params = critic.params_mut();
            let grads = nn::grads(&params, &tape)?;
            adam.step(&mut params, &grads)?;
            dv.item()
        })();
        nn::release(critic.params_mut());
        match result {
            Ok(v) if v.is_finite() => curve.push(v),
            Ok(_) | Err(Error::NonFinite(_)) | Err(Error::Diverged { .. }) => {
                return Err(Error::Diverged {
                    step,
                    reason: "non-finite NDM objective".into(),
                })
            }
            Err(e) => return Err(e),
        }
    }
    let raw = tail_mean(&curve, 0.1);
    Ok(NdmResult {
        estimate: raw.max(0.0),
        raw,
        curve,
    })
}
