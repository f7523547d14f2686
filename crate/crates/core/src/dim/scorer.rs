use std::fmt;
use std::str::FromStr;

use crate::mi::PairCritic;
use crate::nn::{join, InitScheme, LayerNorm, Linear, Module};
use crate::{Error, Result, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScorerKind {
    ConcatConvolve,
    EncodeDot,
}

impl ScorerKind {
    pub fn name(self) -> &'static str {
        match self {
            ScorerKind::ConcatConvolve => "concat",
            ScorerKind::EncodeDot => "dot",
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" | "concat-convolve" => Ok(ScorerKind::ConcatConvolve),
            "dot" | "encode-dot" => Ok(ScorerKind::EncodeDot),
            other => Err(Error::invalid(format!("unknown scorer {other:?}"))),
        }
    }
}

/// Widths of the scoring networks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    /// Hidden widths of the concat MLP (a 1×1 conv net on local features).
    pub concat_hidden: Vec<usize>,
    /// Embedding width of the encode-and-dot networks.
    pub dot_width: usize,
}

impl ScorerConfig {
    /// Two 512-unit hidden layers, or 2048-d embeddings.
    pub fn full_size(kind: ScorerKind) -> ScorerConfig {
        ScorerConfig {
            kind,
            concat_hidden: vec![512, 512],
            dot_width: 2048,
        }
    }

    /// Narrower networks for the toy encoder.
    pub fn toy(kind: ScorerKind) -> ScorerConfig {
        ScorerConfig {
            kind,
            concat_hidden: vec![64, 64],
            dot_width: 128,
        }
    }
}

/// One hidden ReLU layer plus a linear shortcut, both of width `width`,
/// optionally followed by layer norm over the output features.
#[derive(Clone, Debug)]
pub struct Embedder {
    pub hidden: Linear,
    pub out: Linear,
    pub shortcut: Linear,
    pub norm: Option<LayerNorm>,
}

impl Embedder {
    pub fn new(input: usize, width: usize, normalise: bool, rng: &mut Rng) -> Result<Embedder> {
        Ok(Embedder {
            hidden: Linear::new(input, width, InitScheme::He, rng)?,
            out: Linear::new(width, width, InitScheme::Glorot, rng)?,
            shortcut: Linear::new(input, width, InitScheme::Glorot, rng)?,
            norm: if normalise { Some(LayerNorm::new(width)?) } else { None },
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.out.forward(&self.hidden.forward(x)?.relu()?)?.add(&self.shortcut.forward(x)?)?;
        match &self.norm {
            Some(n) => n.forward(&y),
            None => Ok(y),
        }
    }
}

impl Module for Embedder {
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.hidden.params_mut();
        out.extend(self.out.params_mut());
        out.extend(self.shortcut.params_mut());
        if let Some(n) = &mut self.norm {
            out.extend(n.params_mut());
        }
        out
    }

    fn state(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut out = self.hidden.state(&join(prefix, "hidden"));
        out.extend(self.out.state(&join(prefix, "out")));
        out.extend(self.shortcut.state(&join(prefix, "shortcut")));
        if let Some(n) = &self.norm {
            out.extend(n.state(&join(prefix, "norm")));
        }
        out
    }

    fn state_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        let mut out = self.hidden.state_mut(&join(prefix, "hidden"));
        out.extend(self.out.state_mut(&join(prefix, "out")));
        out.extend(self.shortcut.state_mut(&join(prefix, "shortcut")));
        if let Some(n) = &mut self.norm {
            out.extend(n.state_mut(&join(prefix, "norm")));
        }
        out
    }
}

/// Scores global features against candidate feature rows.
#[derive(Clone, Debug)]
pub enum Scorer {
    /// MLP on `[candidate; global]`.
    Concat(PairCritic),
    /// Dot product of a global embedding and a candidate embedding; the
    /// candidate side is layer-normalised.
    Dot { global: Embedder, candidate: Embedder },
}

impl Scorer {
    pub fn new(cfg: &ScorerConfig, global_dim: usize, candidate_dim: usize, rng: &mut Rng) -> Result<Scorer> {
        match cfg.kind {
            ScorerKind::ConcatConvolve => Ok(Scorer::Concat(PairCritic::new(
                global_dim,
                candidate_dim,
                &cfg.concat_hidden,
                rng,
            )?)),
            ScorerKind::EncodeDot => Ok(Scorer::Dot {
                global: Embedder::new(global_dim, cfg.dot_width, false, rng)?,
                candidate: Embedder::new(candidate_dim, cfg.dot_width, true, rng)?,
            }),
        }
    }

    pub fn kind(&self) -> ScorerKind {
        match self {
            Scorer::Concat(_) => ScorerKind::ConcatConvolve,
            Scorer::Dot { .. } => ScorerKind::EncodeDot,
        }
    }

    /// Scores `[B, N]` of globals `[B, g]` against candidates `[N, c]`.
    pub fn scores(&mut self, global: &Tensor, candidates: &Tensor) -> Result<Tensor> {
        match self {
            Scorer::Concat(critic) => critic.scores(global, candidates),
            Scorer::Dot { global: g, candidate } => g.forward(global)?.matmul_t(&candidate.forward(candidates)?),
        }
    }
}

impl Module for Scorer {
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Scorer::Concat(c) => c.params_mut(),
            Scorer::Dot { global, candidate } => {
                let mut out = global.params_mut();
                out.extend(candidate.params_mut());
                out
            }
        }
    }

    fn state(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        match self {
            Scorer::Concat(c) => c.state(prefix),
            Scorer::Dot { global, candidate } => {
                let mut out = global.state(&join(prefix, "global"));
                out.extend(candidate.state(&join(prefix, "candidate")));
                out
            }
        }
    }

    fn state_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        match self {
            Scorer::Concat(c) => c.state_mut(prefix),
            Scorer::Dot { global, candidate } => {
                let mut out = global.state_mut(&join(prefix, "global"));
                out.extend(candidate.state_mut(&join(prefix, "candidate")));
                out
            }
        }
    }
}
