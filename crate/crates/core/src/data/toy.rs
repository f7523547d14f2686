use std::f64::consts::PI;

use crate::{Error, Result, Rng, Tensor};

/// Single-channel images that mix the class templates with Gaussian
/// weights `z`, plus noise that is constant inside each patch of a
/// `grid × grid` partition, plus per-pixel noise. The label is `argmax z`.
/// The weights are visible everywhere; the patch noise is local to one
/// grid cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyImageSpec {
    pub size: usize,
    pub n_classes: usize,
    pub grid: usize,
    pub patch_noise: f64,
    pub pixel_noise: f64,
}

impl Default for ToyImageSpec {
    fn default() -> Self {
        ToyImageSpec {
            size: 16,
            n_classes: 8,
            grid: 4,
            patch_noise: 1.0,
            pixel_noise: 0.3,
        }
    }
}

const TEMPLATE_SEED: u64 = 0x7e4a_11c0;
const WAVES: usize = 3;

impl ToyImageSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.n_classes == 0 || self.grid == 0 || self.size % self.grid != 0 {
            return Err(Error::invalid(format!(
                "image size {} must be a positive multiple of grid {}",
                self.size, self.grid
            )));
        }
        if !(self.patch_noise >= 0.0 && self.pixel_noise >= 0.0) {
            return Err(Error::invalid("noise amplitudes must be nonnegative"));
        }
        Ok(())
    }

    pub fn patch(&self) -> usize {
        self.size / self.grid
    }

    /// The clean image of `class`, row-major `size × size`. Each template is a
    /// sum of a few plane waves with at most two cycles across the image, so
    /// every quadrant carries a distinct slice of it.
    pub fn template(&self, class: usize) -> Vec<f64> {
        let mut rng = Rng::seed_from(TEMPLATE_SEED).split(class as u64);
        let waves: Vec<(f64, f64, f64)> = (0..WAVES)
            .map(|_| {
                let fx = rng.uniform_range(-2.0, 2.0);
                let fy = rng.uniform_range(-2.0, 2.0);
                (fx, fy, rng.uniform_range(0.0, 2.0 * PI))
            })
            .collect();
        let n = self.size as f64;
        let mut out = Vec::with_capacity(self.size * self.size);
        for i in 0..self.size {
            for j in 0..self.size {
                let v: f64 = waves
                    .iter()
                    .map(|(fx, fy, ph)| (2.0 * PI * (fx * i as f64 + fy * j as f64) / n + ph).cos())
                    .sum();
                out.push(v / (WAVES as f64).sqrt());
            }
        }
        out
    }
}

/// Draws `n` images `[n, 1, size, size]` with uniform labels.
pub fn sample_toy_images(spec: &ToyImageSpec, rng: &mut Rng, n: usize) -> Result<(Tensor, Vec<usize>)> {
    spec.validate()?;
    let templates: Vec<Vec<f64>> = (0..spec.n_classes).map(|c| spec.template(c)).collect();
    let s = spec.size;
    let p = spec.patch();
    let mut data = Vec::with_capacity(n * s * s);
    let mut labels = Vec::with_capacity(n);
    let mut patch = vec![0.0; spec.grid * spec.grid];
    let mut z = vec![0.0; spec.n_classes];
    let norm = (spec.n_classes as f64).sqrt();
    for _ in 0..n {
        for v in z.iter_mut() {
            *v = rng.normal();
        }
        let c = z
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i);
        labels.push(c);
        for v in patch.iter_mut() {
            *v = spec.patch_noise * rng.normal();
        }
        for i in 0..s {
            for j in 0..s {
                let clean: f64 = z.iter().zip(&templates).map(|(w, t)| w * t[i * s + j]).sum::<f64>() / norm;
                let pn = patch[(i / p) * spec.grid + j / p];
                data.push(clean + pn + spec.pixel_noise * rng.normal());
            }
        }
    }
    Ok((Tensor::new(&[n, 1, s, s], data)?, labels))
}
