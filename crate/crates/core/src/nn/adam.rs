use crate::{Error, Result, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// `lr0 · rate^floor(step / interval)`.
    ExponentialDecay { rate: f64, interval: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule: LrSchedule,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr0: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            schedule: LrSchedule::Constant,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr0: f64) -> Self {
        AdamConfig {
            lr0,
            ..Default::default()
        }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.lr0,
            LrSchedule::ExponentialDecay { rate, interval } => {
                self.lr0 * rate.powi((step / interval.max(1)) as i32)
            }
        }
    }
}

/// Adam with bias correction. Moment buffers are created lazily on the
/// first step and bound to parameter position.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Adam {
        Adam {
            config,
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    /// Number of completed updates.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Learning rate the next update will use.
    pub fn current_lr(&self) -> f64 {
        self.config.lr_at(self.step + 1)
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::invalid(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            if !g.all_finite() {
                return Err(Error::Diverged {
                    step: self.step as usize + 1,
                    reason: "non-finite gradient".into(),
                });
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.numel()) {
            return Err(Error::invalid("parameter set changed between Adam steps"));
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let lr = self.config.lr_at(self.step);
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let dtype = p.dtype();
            let data = p.data_mut();
            for i in 0..data.len() {
                let gi = g.data()[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                data[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
            dtype.round(data);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_moves_by_lr() {
        let mut w = Tensor::new(&[1], vec![0.0]).unwrap();
        let g = Tensor::new(&[1], vec![1.0]).unwrap();
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        adam.step(&mut [&mut w], &[g]).unwrap();
        // m̂ = 1, v̂ = 1, so the update is lr / (1 + eps)
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((w.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut w = Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = w.clone();
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        for _ in 0..5 {
            adam.step(&mut [&mut w], &[Tensor::zeros(&[3]).unwrap()]).unwrap();
        }
        assert!(w.bit_eq(&before));
    }

    #[test]
    fn zero_lr_is_bit_identical() {
        let mut w = Tensor::new(&[2], vec![0.3, -7.0]).unwrap();
        let before = w.clone();
        let mut adam = Adam::new(AdamConfig::with_lr(0.0));
        adam.step(&mut [&mut w], &[Tensor::new(&[2], vec![5.0, -1.0]).unwrap()]).unwrap();
        assert!(w.bit_eq(&before));
    }

    #[test]
    fn decay_schedule() {
        let cfg = AdamConfig {
            schedule: LrSchedule::ExponentialDecay { rate: 0.5, interval: 100 },
            ..AdamConfig::with_lr(1.0)
        };
        assert_eq!(cfg.lr_at(200), 0.25);
        assert_eq!(cfg.lr_at(99), 1.0);
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut w = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
        let before = w.clone();
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        let bad = Tensor::from_parts(vec![2], crate::DType::F64, vec![1.0, f64::NAN]);
        assert!(matches!(adam.step(&mut [&mut w], &[bad]), Err(Error::Diverged { .. })));
        assert!(w.bit_eq(&before));
        assert_eq!(adam.steps(), 0);
    }
}
