use super::{init_params, join, InitScheme, Module};
use crate::tensor::Padding;
use crate::{Error, Result, Rng, Tensor};

/// How normalisation layers treat batch statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running statistics updated.
    Train,
    /// Batch statistics, running statistics left alone.
    TrainFrozenStats,
    /// Running statistics only.
    Eval,
}

impl Mode {
    pub fn is_train(self) -> bool {
        self != Mode::Eval
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(inputs: usize, outputs: usize, scheme: InitScheme, rng: &mut Rng) -> Result<Linear> {
        Ok(Linear {
            weight: init_params(&[outputs, inputs], scheme, rng)?,
            bias: Tensor::zeros(&[outputs])?,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Result<Linear> {
        Ok(Linear {
            weight: Tensor::zeros(&[outputs, inputs])?,
            bias: Tensor::zeros(&[outputs])?,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    /// `x · Wᵀ + b` for `x: [B, in]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 2 || x.shape()[1] != self.inputs() {
            return Err(Error::ShapeMismatch {
                op: "linear",
                lhs: x.shape().to_vec(),
                rhs: self.weight.shape().to_vec(),
            });
        }
        x.matmul_t(&self.weight)?.add_row(&self.bias)
    }
}

impl Module for Linear {
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn state(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        vec![(join(prefix, "weight"), &self.weight), (join(prefix, "bias"), &self.bias)]
    }

    fn state_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        vec![(join(prefix, "weight"), &mut self.weight), (join(prefix, "bias"), &mut self.bias)]
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub kernel: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: Padding,
}

impl Conv2d {
    pub fn new(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        rng: &mut Rng,
    ) -> Result<Conv2d> {
        Ok(Conv2d {
            kernel: init_params(&[c_out, c_in, kernel, kernel], InitScheme::He, rng)?,
            bias: Tensor::zeros(&[c_out])?,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.conv2d(&self.kernel, self.stride, self.padding)?.add_channel(&self.bias)
    }
}

impl Module for Conv2d {
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.kernel, &mut self.bias]
    }

    fn state(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        vec![(join(prefix, "kernel"), &self.kernel), (join(prefix, "bias"), &self.bias)]
    }

    fn state_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        vec![(join(prefix, "kernel"), &mut self.kernel), (join(prefix, "bias"), &mut self.bias)]
    }
}

/// Batch normalisation over `[B, C]` or `[B, C, H, W]` inputs.
///
/// Training normalises with the biased batch variance; the running variance
/// is updated with the unbiased estimate.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Result<BatchNorm> {
        Ok(BatchNorm {
            gamma: Tensor::ones(&[channels])?,
            beta: Tensor::zeros(&[channels])?,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::ones(&[channels])?,
            momentum: 0.1,
            eps: 1e-5,
        })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if mode == Mode::Eval {
            let (y, _, _) = x.batch_norm(
                &self.gamma,
                &self.beta,
                Some((self.running_mean.data(), self.running_var.data())),
                self.eps,
            )?;
            return Ok(y);
        }
        if x.shape().first().copied().unwrap_or(0) < 2 {
            return Err(Error::InvalidShape {
                shape: x.shape().to_vec(),
                reason: "batch norm in training mode needs at least 2 samples".into(),
            });
        }
        let (y, mean, var) = x.batch_norm(&self.gamma, &self.beta, None, self.eps)?;
        if mode == Mode::Train {
            let n = (x.numel() / x.shape()[1]) as f64;
            let m = self.momentum;
            for (r, b) in self.running_mean.data_mut().iter_mut().zip(&mean) {
                *r = (1.0 - m) * *r + m * b;
            }
            for (r, b) in self.running_var.data_mut().iter_mut().zip(&var) {
                *r = (1.0 - m) * *r + m * b * n / (n - 1.0);
            }
        }
        Ok(y)
    }
}

impl Module for BatchNorm {
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn state(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        vec![
            (join(prefix, "gamma"), &self.gamma),
            (join(prefix, "beta"), &self.beta),
            (join(prefix, "running_mean"), &self.running_mean),
            (join(prefix, "running_var"), &self.running_var),
        ]
    }

    fn state_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        vec![
            (join(prefix, "gamma"), &mut self.gamma),
            (join(prefix, "beta"), &mut self.beta),
            (join(prefix, "running_mean"), &mut self.running_mean),
            (join(prefix, "running_var"), &mut self.running_var),
        ]
    }
}

/// Normalises each row of `[N, C]` over its channels.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(channels: usize) -> Result<LayerNorm> {
        Ok(LayerNorm {
            gamma: Tensor::ones(&[channels])?,
            beta: Tensor::zeros(&[channels])?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.layer_norm_rows(&self.gamma, &self.beta, self.eps)
    }
}

impl Module for LayerNorm {
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn state(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        vec![(join(prefix, "gamma"), &self.gamma), (join(prefix, "beta"), &self.beta)]
    }

    fn state_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        vec![(join(prefix, "gamma"), &mut self.gamma), (join(prefix, "beta"), &mut self.beta)]
    }
}

/// Fully connected stack: hidden layers are linear (+ batch norm) + ReLU,
/// the last layer is linear.
///
/// Hidden layers use He initialisation, the scoring layer Glorot.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub norms: Vec<BatchNorm>,
}

impl Mlp {
    pub fn new(widths: &[usize], batch_norm: bool, rng: &mut Rng) -> Result<Mlp> {
        if widths.len() < 2 {
            return Err(Error::invalid("an MLP needs input and output widths"));
        }
        let last = widths.len() - 2;
        let mut layers = Vec::with_capacity(widths.len() - 1);
        let mut norms = Vec::new();
        for (i, w) in widths.windows(2).enumerate() {
            let scheme = if i == last { InitScheme::Glorot } else { InitScheme::He };
            layers.push(Linear::new(w[0], w[1], scheme, rng)?);
            if batch_norm && i != last {
                norms.push(BatchNorm::new(w[1])?);
            }
        }
        Ok(Mlp { layers, norms })
    }

    /// Zeroes the output layer so every output starts at exactly 0.
    pub fn zero_output(mut self) -> Result<Mlp> {
        let last = self.layers.last_mut().expect("non-empty");
        *last = Linear::zeros(last.inputs(), last.outputs())?;
        Ok(self)
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for i in 0..self.layers.len() {
            h = self.layers[i].forward(&h)?;
            if i != last {
                if let Some(bn) = self.norms.get_mut(i) {
                    h = bn.forward(&h, mode)?;
                }
                h = h.relu()?;
            }
        }
        Ok(h)
    }
}

impl Module for Mlp {
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for l in &mut self.layers {
            out.extend(l.params_mut());
        }
        for n in &mut self.norms {
            out.extend(n.params_mut());
        }
        out
    }

    fn state(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.extend(l.state(&join(prefix, &format!("linear{i}"))));
        }
        for (i, n) in self.norms.iter().enumerate() {
            out.extend(n.state(&join(prefix, &format!("bn{i}"))));
        }
        out
    }

    fn state_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.extend(l.state_mut(&join(prefix, &format!("linear{i}"))));
        }
        for (i, n) in self.norms.iter_mut().enumerate() {
            out.extend(n.state_mut(&join(prefix, &format!("bn{i}"))));
        }
        out
    }
}
