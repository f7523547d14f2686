use crate::nn::{self, cross_entropy, dropout_mask, Adam, AdamConfig, InitScheme, Linear, Module};
use crate::stats::tail_mean;
use crate::{Error, Result, Rng, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProbeKind {
    /// Multinomial logistic regression.
    Linear,
    /// One ReLU hidden layer of `hidden` units with inverted dropout.
    Mlp { hidden: usize, dropout: f64 },
}

impl ProbeKind {
    pub fn mlp200() -> ProbeKind {
        ProbeKind::Mlp {
            hidden: 200,
            dropout: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeSpec {
    pub kind: ProbeKind,
    pub epochs: usize,
    pub batch: usize,
    pub optimizer: AdamConfig,
}

impl ProbeSpec {
    pub fn new(kind: ProbeKind) -> ProbeSpec {
        ProbeSpec {
            kind,
            epochs: 50,
            batch: 128,
            optimizer: AdamConfig::with_lr(1e-2),
        }
    }
}

/// Frozen features `[N, D]` with class labels.
#[derive(Clone, Debug)]
pub struct LabeledFeatures {
    pub features: Tensor,
    pub labels: Vec<usize>,
}

impl LabeledFeatures {
    pub fn new(features: Tensor, labels: Vec<usize>) -> Result<LabeledFeatures> {
        if features.rank() != 2 || features.shape()[0] != labels.len() {
            return Err(Error::invalid(format!(
                "{} labels for features of shape {:?}",
                labels.len(),
                features.shape()
            )));
        }
        Ok(LabeledFeatures {
            features: features.detach(),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.shape()[1]
    }
}

#[derive(Clone, Debug)]
pub struct ProbeResult {
    /// Test accuracy averaged over the final 10% of epochs.
    pub accuracy: f64,
    pub epoch_accuracy: Vec<f64>,
}

/// Column means and standard deviations of the training features; constant
/// columns get a unit scale.
fn standardiser(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.shape()[0], x.shape()[1]);
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for row in x.data().chunks(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    for row in x.data().chunks(d) {
        for ((s, v), m) in sd.iter_mut().zip(row).zip(&mean) {
            *s += (v - m).powi(2) / n as f64;
        }
    }
    for s in sd.iter_mut() {
        *s = if *s > 1e-12 { s.sqrt() } else { 1.0 };
    }
    (mean, sd)
}

fn standardise(x: &Tensor, mean: &[f64], sd: &[f64]) -> Result<Tensor> {
    let d = mean.len();
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| (v - mean[i % d]) / sd[i % d])
        .collect();
    Tensor::new(x.shape(), data)
}

struct Net {
    first: Linear,
    second: Option<Linear>,
    dropout: f64,
}

impl Net {
    fn forward(&self, x: &Tensor, train: bool, rng: &mut Rng) -> Result<Tensor> {
        let h = self.first.forward(x)?;
        let Some(second) = &self.second else {
            return Ok(h);
        };
        let mut h = h.relu()?;
        if train && self.dropout > 0.0 {
            h = h.mul(&dropout_mask(h.shape(), self.dropout, rng)?)?;
        }
        second.forward(&h)
    }
}

impl Module for Net {
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.first.params_mut();
        if let Some(s) = &mut self.second {
            out.extend(s.params_mut());
        }
        out
    }

    fn state(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut out = self.first.state(&nn::join(prefix, "first"));
        if let Some(s) = &self.second {
            out.extend(s.state(&nn::join(prefix, "second")));
        }
        out
    }

    fn state_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        let mut out = self.first.state_mut(&nn::join(prefix, "first"));
        if let Some(s) = &mut self.second {
            out.extend(s.state_mut(&nn::join(prefix, "second")));
        }
        out
    }
}

fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    let k = logits.shape()[1];
    let hits = logits
        .data()
        .chunks(k)
        .zip(labels)
        .filter(|(row, &y)| {
            let best = row
                .iter()
                .enumerate()
                .fold(0, |b, (i, v)| if *v > row[b] { i } else { b });
            best == y
        })
        .count();
    hits as f64 / labels.len() as f64
}

/// Trains a classifier on frozen features and reports test accuracy.
/// Features are standardised with training-set statistics.
pub fn train_probe(
    train: &LabeledFeatures,
    test: &LabeledFeatures,
    spec: &ProbeSpec,
    rng: &Rng,
) -> Result<ProbeResult> {
    if train.is_empty() || test.is_empty() || train.dim() != test.dim() {
        return Err(Error::invalid("probe needs non-empty train/test sets of equal width"));
    }
    if spec.epochs == 0 || spec.batch == 0 {
        return Err(Error::invalid("probe needs positive epochs and batch size"));
    }
    let classes = train.labels.iter().chain(&test.labels).max().copied().unwrap_or(0) + 1;
    let (mean, sd) = standardiser(&train.features);
    let xtr = standardise(&train.features, &mean, &sd)?;
    let xte = standardise(&test.features, &mean, &sd)?;
    let mut init_rng = rng.split(0);
    let mut order_rng = rng.split(1);
    let mut drop_rng = rng.split(2);
    let d = train.dim();
    let mut net = match spec.kind {
        ProbeKind::Linear => Net {
            first: Linear::new(d, classes, InitScheme::Glorot, &mut init_rng)?,
            second: None,
            dropout: 0.0,
        },
        ProbeKind::Mlp { hidden, dropout } => Net {
            first: Linear::new(d, hidden, InitScheme::He, &mut init_rng)?,
            second: Some(Linear::new(hidden, classes, InitScheme::Glorot, &mut init_rng)?),
            dropout,
        },
    };
    let mut adam = Adam::new(spec.optimizer);
    let mut epoch_accuracy = Vec::with_capacity(spec.epochs);
    for _ in 0..spec.epochs {
        let order = order_rng.permutation(train.len());
        for chunk in order.chunks(spec.batch) {
            let x = xtr.index_select(0, chunk)?;
            let y: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let tape = Tape::new();
            nn::attach(net.params_mut(), &tape);
            let loss = cross_entropy(&net.forward(&x, true, &mut drop_rng)?, &y)?;
            tape.backward(&loss)?;
            let mut params = net.params_mut();
            let grads = nn::grads(&params, &tape)?;
            adam.step(&mut params, &grads)?;
            nn::release(net.params_mut());
        }
        let logits = net.forward(&xte, false, &mut drop_rng)?;
        epoch_accuracy.push(accuracy(&logits, &test.labels));
    }
    Ok(ProbeResult {
        accuracy: tail_mean(&epoch_accuracy, 0.1),
        epoch_accuracy,
    })
}
