use crate::nn::{init_params, join, InitScheme, Linear, Mlp, Mode, Module};
use crate::{Error, Result, Rng, Tensor};

/// MLP critic on the concatenation `[anchor; candidate]`, evaluated on every
/// anchor/candidate pair at once. The first layer is split into an anchor
/// part and a candidate part whose outputs are summed pairwise; only the
/// anchor part carries a bias.
#[derive(Clone, Debug)]
pub struct PairCritic {
    pub anchor: Linear,
    pub candidate: Linear,
    pub tail: Mlp,
}

impl PairCritic {
    /// `hidden` lists the hidden widths; the output is a single score.
    pub fn new(anchor_dim: usize, candidate_dim: usize, hidden: &[usize], rng: &mut Rng) -> Result<PairCritic> {
        let Some(&first) = hidden.first() else {
            return Err(Error::invalid("critic needs at least one hidden layer"));
        };
        // Initialised as one layer over the concatenated input, then split.
        let w = init_params(&[first, anchor_dim + candidate_dim], InitScheme::He, rng)?;
        let width = anchor_dim + candidate_dim;
        let split = |range: std::ops::Range<usize>| -> Result<Tensor> {
            let cols = range.len();
            let data = w.data().chunks(width).flat_map(|row| row[range.clone()].to_vec()).collect();
            Tensor::new(&[first, cols], data)
        };
        let anchor = Linear {
            weight: split(0..anchor_dim)?,
            bias: Tensor::zeros(&[first])?,
        };
        let candidate = Linear {
            weight: split(anchor_dim..width)?,
            bias: Tensor::zeros(&[first])?,
        };
        let mut widths = hidden.to_vec();
        widths.push(1);
        Ok(PairCritic {
            anchor,
            candidate,
            tail: Mlp::new(&widths, false, rng)?,
        })
    }

    /// Scores `[A, C]` for anchors `[A, da]` against candidates `[C, dc]`.
    pub fn scores(&mut self, anchors: &Tensor, candidates: &Tensor) -> Result<Tensor> {
        let a = self.anchor.forward(anchors)?;
        let c = candidates.matmul_t(&self.candidate.weight)?;
        let h = a.pair_add(&c)?.relu()?;
        let s = self.tail.forward(&h, Mode::Train)?;
        s.reshape(&[anchors.shape()[0], candidates.shape()[0]])
    }
}

impl Module for PairCritic {
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.anchor.weight, &mut self.anchor.bias, &mut self.candidate.weight];
        out.extend(self.tail.params_mut());
        out
    }

    fn state(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut out = self.anchor.state(&join(prefix, "anchor"));
        out.push((join(prefix, "candidate.weight"), &self.candidate.weight));
        out.extend(self.tail.state(&join(prefix, "tail")));
        out
    }

    fn state_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        let mut out = self.anchor.state_mut(&join(prefix, "anchor"));
        out.push((join(prefix, "candidate.weight"), &mut self.candidate.weight));
        out.extend(self.tail.state_mut(&join(prefix, "tail")));
        out
    }
}
