use super::{EstimatorKind, NegativeSamplingConfig, NegativeSource, PairCritic, PairScores};
use crate::nn::{self, Adam, AdamConfig, Module};
use crate::stats::tail_mean;
use crate::{Error, Result, Rng, Tape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct MineConfig {
    pub kind: EstimatorKind,
    pub hidden: Vec<usize>,
    pub batch: usize,
    pub steps: usize,
    pub optimizer: AdamConfig,
    pub sampling: NegativeSamplingConfig,
}

impl MineConfig {
    pub fn new(kind: EstimatorKind) -> MineConfig {
        MineConfig {
            kind,
            hidden: vec![128],
            batch: 64,
            steps: 1000,
            optimizer: AdamConfig::with_lr(1e-3),
            sampling: NegativeSamplingConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub estimate: f64,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct MineFit {
    /// Mean estimate over the final 10% of steps.
    pub estimate: f64,
    /// Candidates per anchor, positive included.
    pub k: usize,
    pub curve: Vec<CurvePoint>,
}

/// Fits a pair critic by gradient ascent on the chosen estimator.
///
/// `stream(n, rng)` returns a fresh paired batch `(a, b)` of `n` rows each;
/// rows of `a` are anchors and rows of `b` their matched candidates.
pub fn mine_fit<S>(mut stream: S, cfg: &MineConfig, rng: &Rng) -> Result<MineFit>
where
    S: FnMut(usize, &mut Rng) -> Result<(Tensor, Tensor)>,
{
    if cfg.steps == 0 {
        return Err(Error::invalid("mine_fit needs at least one step"));
    }
    let mut data_rng = rng.split(1);
    let mut sample_rng = rng.split(2);
    let (a0, b0) = stream(cfg.batch, &mut data_rng)?;
    if a0.shape()[0] != b0.shape()[0] {
        return Err(Error::invalid("paired streams must have equal length"));
    }
    let mut critic = PairCritic::new(a0.shape()[1], b0.shape()[1], &cfg.hidden, &mut rng.split(0))?;
    let mut adam = Adam::new(cfg.optimizer);
    let mut curve = Vec::with_capacity(cfg.steps);
    let mut k = 0;
    let mut batch = Some((a0, b0));
    for step in 1..=cfg.steps {
        let (a, b) = match batch.take() {
            Some(ab) => ab,
            None => stream(cfg.batch, &mut data_rng)?,
        };
        let candidates = match cfg.sampling.source {
            NegativeSource::WithinBatch => b,
            NegativeSource::CrossBatch => {
                let (_, other) = stream(cfg.batch, &mut data_rng)?;
                Tensor::concat(&[&b, &other], 0)?
            }
        };
        let tape = Tape::new();
        nn::attach(critic.params_mut(), &tape);
        let lr = adam.current_lr();
        let result = (|| {
            let scores = PairScores::new(critic.scores(&a, &candidates)?, 1)?;
            let (est, kk) = scores.estimate(cfg.kind, &cfg.sampling, &mut sample_rng)?;
            k = kk;
            let loss = est.neg()?;
            tape.backward(&loss)?;
            let mut params = critic.params_mut();
            let grads = nn::grads(&params, &tape)?;
            adam.step(&mut params, &grads)?;
            Ok::<_, Error>(est.item()?)
        })();
        nn::release(critic.params_mut());
        let estimate = match result {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(Error::NonFinite(_)) | Err(Error::Diverged { .. }) => {
                return Err(Error::Diverged {
                    step,
                    reason: format!("non-finite {} objective", cfg.kind),
                })
            }
            Err(e) => return Err(e),
        };
        curve.push(CurvePoint {
            step,
            estimate,
            loss: -estimate,
            lr,
        });
    }
    let values: Vec<f64> = curve.iter().map(|p| p.estimate).collect();
    Ok(MineFit {
        estimate: tail_mean(&values, 0.1),
        k,
        curve,
    })
}
