use super::encoder::local_flat;
use super::objective::{global_mi_objective, local_mi_objective, total_loss, DimHyperparams, DimLossParts};
use super::prior::{discriminator_loss, encoder_prior_loss, sample_prior, PriorDiscriminator, PriorLoss};
use super::{DimEncoder, EncoderConfig, Scorer, ScorerConfig, ScorerKind};
use crate::mi::NegativeSamplingConfig;
use crate::nn::{self, join, Adam, AdamConfig, Mode, Module};
use crate::structure::{
    abs_coord_loss, occluded_global_encode, rel_coord_loss, sample_occlusion_mask, CoordPredictor, CoordTask,
    OcclusionMask,
};
use crate::{Error, Result, Rng, Tape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct DimConfig {
    pub encoder: EncoderConfig,
    pub hyper: DimHyperparams,
    /// Network widths; the scorer kind comes from `hyper`.
    pub scorer: ScorerConfig,
    pub prior_hidden: Vec<usize>,
    pub prior_loss: PriorLoss,
    pub sampling: NegativeSamplingConfig,
    pub occlusion: Occlusion,
    pub abs_coord_weight: f64,
    pub rel_coord_weight: f64,
    pub coord_hidden: Vec<usize>,
    pub optimizer: AdamConfig,
    pub prior_optimizer: AdamConfig,
}

impl DimConfig {
    /// The toy encoder with narrow scoring networks.
    pub fn toy(hyper: DimHyperparams) -> DimConfig {
        DimConfig {
            encoder: EncoderConfig::toy(),
            hyper,
            scorer: ScorerConfig::toy(hyper.scorer),
            prior_hidden: vec![1000, 200],
            prior_loss: PriorLoss::Saturating,
            sampling: NegativeSamplingConfig::default(),
            occlusion: Occlusion::Off,
            abs_coord_weight: 0.0,
            rel_coord_weight: 0.0,
            coord_hidden: vec![512, 512],
            optimizer: AdamConfig::with_lr(3e-3),
            prior_optimizer: AdamConfig::with_lr(1e-3),
        }
    }
}

/// Which input the scored global feature is computed from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Occlusion {
    /// The clean input.
    Off,
    /// All-ones masks, which leave the input untouched.
    Identity,
    /// Random masks tiled by blocks of this size.
    Blocks(usize),
}

/// Encoder plus every network trained alongside it.
#[derive(Clone, Debug)]
pub struct DimModel {
    pub config: DimConfig,
    pub encoder: DimEncoder,
    pub global_scorer: Option<Scorer>,
    pub local_scorer: Option<Scorer>,
    pub prior: PriorDiscriminator,
    pub abs_coord: Option<CoordPredictor>,
    pub rel_coord: Option<CoordPredictor>,
}

impl DimModel {
    /// Builds the networks each nonzero weight needs.
    pub fn new(config: DimConfig, rng: &Rng) -> Result<DimModel> {
        config.hyper.validate()?;
        let mut r = rng.split(0);
        let encoder = DimEncoder::new(config.encoder.clone(), &mut r)?;
        let (d, m) = encoder.local_shape();
        let g = config.encoder.out_dim;
        let scorer_cfg = ScorerConfig {
            kind: config.hyper.scorer,
            ..config.scorer.clone()
        };
        let h = &config.hyper;
        // The global discriminator is always the concatenating MLP; the
        // scorer kind selects the local architecture.
        let global_cfg = ScorerConfig {
            kind: ScorerKind::ConcatConvolve,
            ..config.scorer.clone()
        };
        let global_scorer = if h.alpha > 0.0 {
            Some(Scorer::new(&global_cfg, g, d * m * m, &mut rng.split(1))?)
        } else {
            None
        };
        let local_scorer = if h.beta > 0.0 {
            Some(Scorer::new(&scorer_cfg, g, d, &mut rng.split(2))?)
        } else {
            None
        };
        let prior = PriorDiscriminator::new(g, &config.prior_hidden, &mut rng.split(3))?;
        let coord = |task, weight: f64, stream| -> Result<Option<CoordPredictor>> {
            if weight > 0.0 {
                Ok(Some(CoordPredictor::new(task, g, d, m, &config.coord_hidden, &mut rng.split(stream))?))
            } else {
                Ok(None)
            }
        };
        let abs_coord = coord(CoordTask::Absolute, config.abs_coord_weight, 4)?;
        let rel_coord = coord(CoordTask::Relative, config.rel_coord_weight, 5)?;
        Ok(DimModel {
            config,
            encoder,
            global_scorer,
            local_scorer,
            prior,
            abs_coord,
            rel_coord,
        })
    }

    /// Encoder, scorers and coordinate predictors, in a fixed order.
    pub fn main_params(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoder.params_mut();
        for s in [&mut self.global_scorer, &mut self.local_scorer].into_iter().flatten() {
            out.extend(s.params_mut());
        }
        for c in [&mut self.abs_coord, &mut self.rel_coord].into_iter().flatten() {
            out.extend(c.params_mut());
        }
        out
    }

    pub fn optimizers(&self) -> DimOptimizers {
        DimOptimizers {
            main: Adam::new(self.config.optimizer),
            prior: Adam::new(self.config.prior_optimizer),
        }
    }

    /// Global features in evaluation mode, computed in chunks.
    pub fn features(&mut self, x: &Tensor, source: FeatureSource, chunk: usize) -> Result<Tensor> {
        let n = x.shape()[0];
        let mut parts = Vec::new();
        for start in (0..n).step_by(chunk.max(1)) {
            let idx: Vec<usize> = (start..(start + chunk.max(1)).min(n)).collect();
            let xb = x.index_select(0, &idx)?;
            let f = match source {
                FeatureSource::Global => self.encoder.encode(&xb, Mode::Eval)?.global,
                FeatureSource::Local => local_flat(&self.encoder.local(&xb, Mode::Eval)?)?,
                FeatureSource::Hidden => self.encoder.hidden(&xb, Mode::Eval)?,
            };
            parts.push(f.detach());
        }
        Tensor::concat(&parts.iter().collect::<Vec<_>>(), 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureSource {
    Global,
    Local,
    Hidden,
}

impl std::str::FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" | "global64" => Ok(FeatureSource::Global),
            "local" => Ok(FeatureSource::Local),
            "hidden" | "fc" => Ok(FeatureSource::Hidden),
            other => Err(Error::invalid(format!("unknown feature source {other:?}"))),
        }
    }
}

impl Module for DimModel {
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoder.params_mut();
        for s in [&mut self.global_scorer, &mut self.local_scorer].into_iter().flatten() {
            out.extend(s.params_mut());
        }
        for c in [&mut self.abs_coord, &mut self.rel_coord].into_iter().flatten() {
            out.extend(c.params_mut());
        }
        out.extend(self.prior.net.params_mut());
        out
    }

    fn state(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut out = self.encoder.state(&join(prefix, "encoder"));
        if let Some(s) = &self.global_scorer {
            out.extend(s.state(&join(prefix, "global_scorer")));
        }
        if let Some(s) = &self.local_scorer {
            out.extend(s.state(&join(prefix, "local_scorer")));
        }
        out.extend(self.prior.net.state(&join(prefix, "prior")));
        if let Some(c) = &self.abs_coord {
            out.extend(c.state(&join(prefix, "abs_coord")));
        }
        if let Some(c) = &self.rel_coord {
            out.extend(c.state(&join(prefix, "rel_coord")));
        }
        out
    }

    fn state_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        let mut out = self.encoder.state_mut(&join(prefix, "encoder"));
        if let Some(s) = &mut self.global_scorer {
            out.extend(s.state_mut(&join(prefix, "global_scorer")));
        }
        if let Some(s) = &mut self.local_scorer {
            out.extend(s.state_mut(&join(prefix, "local_scorer")));
        }
        out.extend(self.prior.net.state_mut(&join(prefix, "prior")));
        if let Some(c) = &mut self.abs_coord {
            out.extend(c.state_mut(&join(prefix, "abs_coord")));
        }
        if let Some(c) = &mut self.rel_coord {
            out.extend(c.state_mut(&join(prefix, "rel_coord")));
        }
        out
    }
}

/// Separate optimisers for the encoder side and the prior discriminator.
#[derive(Clone, Debug)]
pub struct DimOptimizers {
    pub main: Adam,
    pub prior: Adam,
}

/// Per-term losses of one step; `None` for terms that were not computed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub global_loss: Option<f64>,
    pub local_loss: Option<f64>,
    pub prior_d_loss: Option<f64>,
    pub prior_e_loss: Option<f64>,
    pub abs_coord_loss: Option<f64>,
    pub rel_coord_loss: Option<f64>,
    pub total: f64,
    pub lr: f64,
}

fn value(t: &Option<Tensor>) -> Result<Option<f64>> {
    t.as_ref().map(Tensor::item).transpose()
}

fn diverged(step: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(what) => Error::Diverged {
            step,
            reason: format!("non-finite value in {what}"),
        },
        other => other,
    }
}

/// One training step on batch `x`: a prior-discriminator update (when
/// γ > 0), then one joint update of the encoder, scorers and coordinate
/// predictors. Randomness for step `t` comes from `rng.split(t)`, with fixed
/// sub-streams per purpose, so enabling one feature never shifts another's
/// draws.
pub fn dim_train_step(model: &mut DimModel, x: &Tensor, opt: &mut DimOptimizers, rng: &Rng) -> Result<StepMetrics> {
    let step = opt.main.steps() as usize + 1;
    run_step(model, x, opt, rng, step).map_err(|e| diverged(step, e))
}

fn run_step(model: &mut DimModel, x: &Tensor, opt: &mut DimOptimizers, rng: &Rng, step: usize) -> Result<StepMetrics> {
    let h = model.config.hyper;
    h.validate()?;
    let base = rng.split(step as u64);
    let mut prior_rng = base.split(0);
    let mut neg_rng = base.split(1);
    let mut mask_rng = base.split(2);
    let mut coord_rng = base.split(3);
    let b = x.shape()[0];

    let tape = Tape::new();
    nn::attach(model.main_params(), &tape);
    let result = (|| {
        let enc = model.encoder.encode(x, Mode::Train)?;

        let mut prior_d = None;
        let mut prior_e = None;
        if h.gamma > 0.0 {
            let dim = enc.global.shape()[1];
            let real = sample_prior(&mut prior_rng, b, dim)?;
            let d_tape = Tape::new();
            nn::attach(model.prior.net.params_mut(), &d_tape);
            let d_step = (|| {
                let real_logits = model.prior.logits(&real)?;
                let fake_logits = model.prior.logits(&enc.global.detach())?;
                let d_loss = discriminator_loss(&real_logits, &fake_logits)?;
                d_tape.backward(&d_loss)?;
                let mut params = model.prior.net.params_mut();
                let grads = nn::grads(&params, &d_tape)?;
                opt.prior.step(&mut params, &grads)?;
                Ok::<_, Error>(d_loss)
            })();
            nn::release(model.prior.net.params_mut());
            prior_d = Some(d_step?.detach());
            let fake_logits = model.prior.logits(&enc.global)?;
            prior_e = Some(encoder_prior_loss(&fake_logits, model.config.prior_loss)?);
        }

        let (_, hgt, wid) = model.config.encoder.input;
        let masks: Vec<OcclusionMask> = match model.config.occlusion {
            Occlusion::Off => Vec::new(),
            Occlusion::Identity => vec![OcclusionMask::all_ones(hgt, wid, 1); b],
            Occlusion::Blocks(block) => (0..b)
                .map(|_| sample_occlusion_mask(&mut mask_rng, hgt, wid, block))
                .collect::<Result<_>>()?,
        };
        let scored_global = if masks.iter().all(OcclusionMask::is_all_ones) {
            enc.global.clone()
        } else {
            occluded_global_encode(&mut model.encoder, x, &masks, Mode::Train)?
        };

        let sampling = model.config.sampling;
        let global_loss = match (&mut model.global_scorer, h.alpha > 0.0) {
            (Some(s), true) => {
                Some(global_mi_objective(s, &enc.local, &scored_global, h.estimator, &sampling, &mut neg_rng)?.0)
            }
            _ => None,
        };
        let local_loss = match (&mut model.local_scorer, h.beta > 0.0) {
            (Some(s), true) => {
                Some(local_mi_objective(s, &enc.local, &scored_global, h.estimator, &sampling, &mut neg_rng)?.0)
            }
            _ => None,
        };
        let abs = match &mut model.abs_coord {
            Some(p) => Some(abs_coord_loss(p, &scored_global, &enc.local, Mode::Train)?),
            None => None,
        };
        let rel = match &mut model.rel_coord {
            Some(p) => Some(rel_coord_loss(p, &scored_global, &enc.local, &mut coord_rng, Mode::Train)?),
            None => None,
        };

        let parts = DimLossParts {
            global: global_loss.clone(),
            local: local_loss.clone(),
            prior_encoder: prior_e.clone(),
        };
        let mut total = total_loss(&h, &parts)?;
        for (w, term) in [(model.config.abs_coord_weight, &abs), (model.config.rel_coord_weight, &rel)] {
            if let Some(t) = term {
                total = total.add(&t.scale(w)?)?;
            }
        }
        let lr = opt.main.current_lr();
        tape.backward(&total)?;
        let mut params = model.main_params();
        let grads = nn::grads(&params, &tape)?;
        opt.main.step(&mut params, &grads)?;
        Ok(StepMetrics {
            step,
            global_loss: value(&global_loss)?,
            local_loss: value(&local_loss)?,
            prior_d_loss: value(&prior_d)?,
            prior_e_loss: value(&prior_e)?,
            abs_coord_loss: value(&abs)?,
            rel_coord_loss: value(&rel)?,
            total: total.item()?,
            lr,
        })
    })();
    nn::release(model.main_params());
    result
}
