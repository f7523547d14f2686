use std::str::FromStr;

use crate::nn::{Mlp, Mode, Module};
use crate::{Error, Result, Rng, Tensor};

/// How the encoder is trained against the prior discriminator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorLoss {
    /// Minimise `E[log(1 - D(E(x)))]`, the discriminator's own objective.
    Saturating,
    /// Minimise `-E[log D(E(x))]`.
    NonSaturating,
}

impl FromStr for PriorLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "saturating" => Ok(PriorLoss::Saturating),
            "non-saturating" | "nonsaturating" => Ok(PriorLoss::NonSaturating),
            other => Err(Error::invalid(format!("unknown prior loss {other:?}"))),
        }
    }
}

/// MLP mapping a global feature to the logit of "drawn from the prior".
#[derive(Clone, Debug)]
pub struct PriorDiscriminator {
    pub net: Mlp,
}

impl PriorDiscriminator {
    /// `hidden` is `[1000, 200]` in the reference architecture.
    pub fn new(dim: usize, hidden: &[usize], rng: &mut Rng) -> Result<PriorDiscriminator> {
        let mut widths = vec![dim];
        widths.extend_from_slice(hidden);
        widths.push(1);
        Ok(PriorDiscriminator {
            net: Mlp::new(&widths, false, rng)?,
        })
    }

    pub fn logits(&mut self, x: &Tensor) -> Result<Tensor> {
        let b = x.shape()[0];
        self.net.forward(x, Mode::Train)?.reshape(&[b])
    }
}

/// `n × dim` draws from Uniform[0, 1].
pub fn sample_prior(rng: &mut Rng, n: usize, dim: usize) -> Result<Tensor> {
    Tensor::new(&[n, dim], (0..n * dim).map(|_| rng.uniform()).collect())
}

/// Discriminator loss `-(E_prior[log D] + E_enc[log(1 - D)])` from logits.
pub fn discriminator_loss(real_logits: &Tensor, fake_logits: &Tensor) -> Result<Tensor> {
    real_logits.neg()?.softplus()?.mean()?.add(&fake_logits.softplus()?.mean()?)
}

/// Encoder loss from the logits of encoded samples.
pub fn encoder_prior_loss(fake_logits: &Tensor, variant: PriorLoss) -> Result<Tensor> {
    match variant {
        PriorLoss::Saturating => fake_logits.softplus()?.mean()?.neg(),
        PriorLoss::NonSaturating => fake_logits.neg()?.softplus()?.mean(),
    }
}

/// Both prior-matching losses. The discriminator loss sees `fake` detached
/// and the encoder loss sees the discriminator as constants, so each
/// gradient reaches only its own parameter set.
pub fn prior_match_losses(
    disc: &mut PriorDiscriminator,
    real: &Tensor,
    fake: &Tensor,
    variant: PriorLoss,
) -> Result<(Tensor, Tensor)> {
    let d_loss = discriminator_loss(&disc.logits(real)?, &disc.logits(&fake.detach())?)?;
    let mut frozen = disc.clone();
    for p in frozen.net.params_mut() {
        p.release();
    }
    let e_loss = encoder_prior_loss(&frozen.logits(fake)?, variant)?;
    Ok((d_loss, e_loss))
}
