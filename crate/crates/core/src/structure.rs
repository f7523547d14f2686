//! Occluded-input global features and coordinate prediction.

use crate::dim::{local_rows, DimEncoder};
use crate::nn::{cross_entropy, join, Mlp, Mode, Module};
use crate::{Error, Result, Rng, Tensor};

/// Binary pixel mask (1 visible, 0 occluded) over an `h × w` image, built
/// from aligned `block × block` tiles.
#[derive(Clone, Debug, PartialEq)]
pub struct OcclusionMask {
    pub height: usize,
    pub width: usize,
    pub block: usize,
    pub values: Vec<f64>,
}

impl OcclusionMask {
    pub fn all_ones(height: usize, width: usize, block: usize) -> OcclusionMask {
        OcclusionMask {
            height,
            width,
            block,
            values: vec![1.0; height * width],
        }
    }

    pub fn is_all_ones(&self) -> bool {
        self.values.iter().all(|&v| v == 1.0)
    }

    fn block_values(&self, bi: usize, bj: usize) -> impl Iterator<Item = f64> + '_ {
        let b = self.block;
        (bi * b..(bi + 1) * b).flat_map(move |i| (bj * b..(bj + 1) * b).map(move |j| self.values[i * self.width + j]))
    }

    fn blocks(&self) -> impl Iterator<Item = (usize, usize)> {
        let (gh, gw) = (self.height / self.block, self.width / self.block);
        (0..gh).flat_map(move |i| (0..gw).map(move |j| (i, j)))
    }

    /// Aligned blocks whose every pixel is visible.
    pub fn visible_blocks(&self) -> usize {
        self.blocks().filter(|&(i, j)| self.block_values(i, j).all(|v| v == 1.0)).count()
    }

    /// Aligned blocks whose every pixel is occluded.
    pub fn occluded_blocks(&self) -> usize {
        self.blocks().filter(|&(i, j)| self.block_values(i, j).all(|v| v == 0.0)).count()
    }

    /// At least one block fully visible and one fully occluded.
    pub fn is_valid(&self) -> bool {
        self.visible_blocks() >= 1 && self.occluded_blocks() >= 1
    }
}

/// One uniformly chosen aligned block is occluded, a different one is left
/// visible, and every other block is occluded with probability ½.
pub fn sample_occlusion_mask(rng: &mut Rng, height: usize, width: usize, block: usize) -> Result<OcclusionMask> {
    if block == 0 || height % block != 0 || width % block != 0 {
        return Err(Error::invalid(format!(
            "{height}x{width} input is not tiled by {block}x{block} blocks"
        )));
    }
    let (gh, gw) = (height / block, width / block);
    let n = gh * gw;
    if n < 2 {
        return Err(Error::invalid("input too small for two disjoint occlusion blocks"));
    }
    let hidden = rng.below(n);
    let shown = (hidden + 1 + rng.below(n - 1)) % n;
    let occluded: Vec<bool> = (0..n)
        .map(|k| {
            let coin = rng.bernoulli(0.5);
            k == hidden || (k != shown && coin)
        })
        .collect();
    let mut values = vec![1.0; height * width];
    for i in 0..height {
        for j in 0..width {
            if occluded[(i / block) * gw + j / block] {
                values[i * width + j] = 0.0;
            }
        }
    }
    Ok(OcclusionMask {
        height,
        width,
        block,
        values,
    })
}

/// Applies one mask per sample to `[B, C, H, W]` inputs.
pub fn apply_masks(x: &Tensor, masks: &[OcclusionMask]) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 4 || masks.len() != s[0] || masks.iter().any(|m| m.height != s[2] || m.width != s[3]) {
        return Err(Error::ShapeMismatch {
            op: "apply_masks",
            lhs: s.to_vec(),
            rhs: vec![masks.len()],
        });
    }
    let per_channel = s[2] * s[3];
    let mut data = Vec::with_capacity(x.numel());
    for m in masks {
        for _ in 0..s[1] {
            data.extend_from_slice(&m.values);
        }
    }
    debug_assert_eq!(data.len(), s[0] * s[1] * per_channel);
    x.mul(&Tensor::new(s, data)?)
}

/// Global feature of the occluded input. Batch norm uses batch statistics
/// without touching the running averages in training modes.
pub fn occluded_global_encode(
    enc: &mut DimEncoder,
    x: &Tensor,
    masks: &[OcclusionMask],
    mode: Mode,
) -> Result<Tensor> {
    if let Some(bad) = masks.iter().position(|m| !m.is_all_ones() && !m.is_valid()) {
        return Err(Error::invalid(format!("occlusion mask {bad} violates the block constraints")));
    }
    let mode = if mode == Mode::Train { Mode::TrainFrozenStats } else { mode };
    let local = enc.local(&apply_masks(x, masks)?, mode)?;
    enc.head(&local, mode)
}

/// Absolute positions (`M` classes per axis) or relative offsets
/// (`2M - 1` classes per axis).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoordTask {
    Absolute,
    Relative,
}

/// MLP with batch-normalised ReLU hidden layers and two categorical heads,
/// one per axis. The heads start at zero, so initial predictions are
/// uniform.
#[derive(Clone, Debug)]
pub struct CoordPredictor {
    pub task: CoordTask,
    pub grid: usize,
    pub net: Mlp,
}

impl CoordPredictor {
    /// `hidden` is `[512, 512]` in the reference architecture.
    pub fn new(
        task: CoordTask,
        global_dim: usize,
        local_dim: usize,
        grid: usize,
        hidden: &[usize],
        rng: &mut Rng,
    ) -> Result<CoordPredictor> {
        let input = match task {
            CoordTask::Absolute => global_dim + local_dim,
            CoordTask::Relative => global_dim + 2 * local_dim,
        };
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(2 * Self::classes_for(task, grid));
        Ok(CoordPredictor {
            task,
            grid,
            net: Mlp::new(&widths, true, rng)?.zero_output()?,
        })
    }

    fn classes_for(task: CoordTask, grid: usize) -> usize {
        match task {
            CoordTask::Absolute => grid,
            CoordTask::Relative => 2 * grid - 1,
        }
    }

    /// Classes per head.
    pub fn classes(&self) -> usize {
        Self::classes_for(self.task, self.grid)
    }

    /// Loss of uniform predictions: `2 ln(classes)`.
    pub fn uniform_loss(&self) -> f64 {
        2.0 * (self.classes() as f64).ln()
    }

    /// Sum of the two cross-entropies for inputs `[N, in]` and per-axis
    /// class targets.
    pub fn loss(&mut self, inputs: &Tensor, rows: &[usize], cols: &[usize], mode: Mode) -> Result<Tensor> {
        let k = self.classes();
        if let Some(bad) = rows.iter().chain(cols).find(|&&c| c >= k) {
            return Err(Error::invalid(format!("coordinate class {bad} out of range 0..{k}")));
        }
        let logits = self.net.forward(inputs, mode)?;
        let row_logits = logits.index_select(1, &(0..k).collect::<Vec<_>>())?;
        let col_logits = logits.index_select(1, &(k..2 * k).collect::<Vec<_>>())?;
        cross_entropy(&row_logits, rows)?.add(&cross_entropy(&col_logits, cols)?)
    }
}

impl Module for CoordPredictor {
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.net.params_mut()
    }

    fn state(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        self.net.state(&join(prefix, "net"))
    }

    fn state_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        self.net.state_mut(&join(prefix, "net"))
    }
}

fn grid_of(local: &Tensor) -> Result<(usize, usize, usize)> {
    let s = local.shape();
    if s.len() != 4 || s[2] != s[3] {
        return Err(Error::InvalidShape {
            shape: s.to_vec(),
            reason: "local map must be [B, d, M, M]".into(),
        });
    }
    Ok((s[0], s[1], s[2]))
}

/// Absolute-coordinate loss marginalised over every location of each
/// sample's local map, conditioned on that sample's global feature.
pub fn abs_coord_loss(pred: &mut CoordPredictor, global: &Tensor, local: &Tensor, mode: Mode) -> Result<Tensor> {
    let (b, _, m) = grid_of(local)?;
    if pred.task != CoordTask::Absolute || pred.grid != m {
        return Err(Error::invalid("predictor does not match an absolute task on this grid"));
    }
    let l = m * m;
    let owner: Vec<usize> = (0..b * l).map(|r| r / l).collect();
    let inputs = Tensor::concat(&[&global.index_select(0, &owner)?, &local_rows(local)?], 1)?;
    let rows: Vec<usize> = (0..b * l).map(|r| (r % l) / m).collect();
    let cols: Vec<usize> = (0..b * l).map(|r| r % m).collect();
    pred.loss(&inputs, &rows, &cols, mode)
}

/// Relative-offset loss: one source location per sample, drawn uniformly,
/// marginalised over every target location. Offset `(i - i', j - j')` is
/// stored as class `(i - i' + M - 1, j - j' + M - 1)`.
pub fn rel_coord_loss(
    pred: &mut CoordPredictor,
    global: &Tensor,
    local: &Tensor,
    rng: &mut Rng,
    mode: Mode,
) -> Result<Tensor> {
    let (b, _, m) = grid_of(local)?;
    let sources: Vec<usize> = (0..b).map(|_| rng.below(m * m)).collect();
    rel_coord_loss_from(pred, global, local, &sources, mode)
}

/// As [`rel_coord_loss`] with the source location of each sample given.
pub fn rel_coord_loss_from(
    pred: &mut CoordPredictor,
    global: &Tensor,
    local: &Tensor,
    sources: &[usize],
    mode: Mode,
) -> Result<Tensor> {
    let (b, _, m) = grid_of(local)?;
    if pred.task != CoordTask::Relative || pred.grid != m {
        return Err(Error::invalid("predictor does not match a relative task on this grid"));
    }
    let l = m * m;
    if sources.len() != b || sources.iter().any(|&s| s >= l) {
        return Err(Error::invalid("one in-range source location per sample is required"));
    }
    let rows_all = local_rows(local)?;
    let owner: Vec<usize> = (0..b * l).map(|r| r / l).collect();
    let src_rows: Vec<usize> = owner.iter().map(|&o| o * l + sources[o]).collect();
    let inputs = Tensor::concat(
        &[
            &global.index_select(0, &owner)?,
            &rows_all.index_select(0, &src_rows)?,
            &rows_all,
        ],
        1,
    )?;
    let mut di = Vec::with_capacity(b * l);
    let mut dj = Vec::with_capacity(b * l);
    for r in 0..b * l {
        let (si, sj) = (sources[r / l] / m, sources[r / l] % m);
        let (ti, tj) = ((r % l) / m, r % m);
        di.push(si + m - 1 - ti);
        dj.push(sj + m - 1 - tj);
    }
    pred.loss(&inputs, &di, &dj, mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks_respect_constraints() {
        let mut rng = Rng::seed_from(1);
        for _ in 0..200 {
            assert!(sample_occlusion_mask(&mut rng, 16, 16, 4).unwrap().is_valid());
        }
        assert!(sample_occlusion_mask(&mut rng, 4, 4, 4).is_err());
    }
}
