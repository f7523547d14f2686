use super::encoder::{local_flat, local_rows};
use super::{Scorer, ScorerKind};
use crate::mi::{EstimatorKind, NegativeSamplingConfig, PairScores};
use crate::{Error, Result, Rng, Tensor};

/// Weights of the global, local and prior terms, and the MI estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DimHyperparams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub estimator: EstimatorKind,
    pub scorer: ScorerKind,
}

impl DimHyperparams {
    /// α = 1, β = 0, γ = 1.
    pub fn dim_g(estimator: EstimatorKind, scorer: ScorerKind) -> DimHyperparams {
        DimHyperparams {
            alpha: 1.0,
            beta: 0.0,
            gamma: 1.0,
            estimator,
            scorer,
        }
    }

    /// α = 0, β = 1, γ = 0.1.
    pub fn dim_l(estimator: EstimatorKind, scorer: ScorerKind) -> DimHyperparams {
        DimHyperparams {
            alpha: 0.0,
            beta: 1.0,
            gamma: 0.1,
            estimator,
            scorer,
        }
    }

    /// α = 0.5, β = 0.1; the prior weight has no published value and must be
    /// given.
    pub fn dim_lg(gamma: f64, estimator: EstimatorKind, scorer: ScorerKind) -> DimHyperparams {
        DimHyperparams {
            alpha: 0.5,
            beta: 0.1,
            gamma,
            estimator,
            scorer,
        }
    }

    pub fn preset(name: &str, gamma: Option<f64>, estimator: EstimatorKind, scorer: ScorerKind) -> Result<DimHyperparams> {
        match (name, gamma) {
            ("dim-g", _) => Ok(DimHyperparams::dim_g(estimator, scorer)),
            ("dim-l", _) => Ok(DimHyperparams::dim_l(estimator, scorer)),
            ("dim-lg", Some(g)) => Ok(DimHyperparams::dim_lg(g, estimator, scorer)),
            ("dim-lg", None) => Err(Error::invalid("preset dim-lg needs an explicit gamma")),
            (other, _) => Err(Error::invalid(format!("unknown preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.alpha, self.beta, self.gamma];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("alpha, beta and gamma must be finite and nonnegative"));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::invalid("alpha, beta and gamma cannot all be zero"));
        }
        Ok(())
    }
}

/// Negated estimate of I(C(x); E(x)) with the flattened local map as the
/// candidate feature. Returns the loss and the candidates per anchor.
pub fn global_mi_objective(
    scorer: &mut Scorer,
    local: &Tensor,
    global: &Tensor,
    kind: EstimatorKind,
    cfg: &NegativeSamplingConfig,
    rng: &mut Rng,
) -> Result<(Tensor, usize)> {
    let scores = PairScores::new(scorer.scores(global, &local_flat(local)?)?, 1)?;
    let (est, k) = scores.estimate(kind, cfg, rng)?;
    Ok((est.neg()?, k))
}

/// Negated estimate averaged over all `M²` locations; negatives pair a
/// global feature with every location of the other samples.
pub fn local_mi_objective(
    scorer: &mut Scorer,
    local: &Tensor,
    global: &Tensor,
    kind: EstimatorKind,
    cfg: &NegativeSamplingConfig,
    rng: &mut Rng,
) -> Result<(Tensor, usize)> {
    let s = local.shape();
    let locations = s[2] * s[3];
    let scores = PairScores::new(scorer.scores(global, &local_rows(local)?)?, locations)?;
    let (est, k) = scores.estimate(kind, cfg, rng)?;
    Ok((est.neg()?, k))
}

/// Loss terms entering the weighted sum; `None` when not computed.
#[derive(Clone, Debug, Default)]
pub struct DimLossParts {
    pub global: Option<Tensor>,
    pub local: Option<Tensor>,
    pub prior_encoder: Option<Tensor>,
}

/// `α·global + β·local + γ·prior`.
pub fn total_loss(h: &DimHyperparams, parts: &DimLossParts) -> Result<Tensor> {
    h.validate()?;
    let terms = [
        (h.alpha, &parts.global, "global"),
        (h.beta, &parts.local, "local"),
        (h.gamma, &parts.prior_encoder, "prior"),
    ];
    let mut total: Option<Tensor> = None;
    for (w, part, name) in terms {
        if w == 0.0 {
            continue;
        }
        let t = part
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("{name} term has weight {w} but was not computed")))?
            .scale(w)?;
        total = Some(match total {
            None => t,
            Some(acc) => acc.add(&t)?,
        });
    }
    Ok(total.expect("validated: some weight is nonzero"))
}
