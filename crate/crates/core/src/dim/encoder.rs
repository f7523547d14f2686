use crate::nn::{join, BatchNorm, Conv2d, Linear, Mode, Module};
use crate::tensor::Padding;
use crate::{Error, Result, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    /// `(channels, height, width)` of one input.
    pub input: (usize, usize, usize),
    pub convs: Vec<ConvSpec>,
    pub hidden: usize,
    pub out_dim: usize,
}

impl EncoderConfig {
    /// 16×16×1 input, two 3×3 stride-2 convs (32, 64) giving a 4×4×64 local
    /// map, then 256 hidden units and a 64-d sigmoid output.
    pub fn toy() -> EncoderConfig {
        EncoderConfig::toy_sized(16)
    }

    pub fn toy_sized(side: usize) -> EncoderConfig {
        EncoderConfig {
            input: (1, side, side),
            convs: vec![
                ConvSpec {
                    channels: 32,
                    kernel: 3,
                    stride: 2,
                },
                ConvSpec {
                    channels: 64,
                    kernel: 3,
                    stride: 2,
                },
            ],
            hidden: 256,
            out_dim: 64,
        }
    }

    /// `(d, M)` of the local map, with "same" padding throughout.
    pub fn local_shape(&self) -> Result<(usize, usize)> {
        let (_, mut h, mut w) = self.input;
        let mut d = self.input.0;
        for c in &self.convs {
            if c.stride == 0 || c.kernel == 0 {
                return Err(Error::invalid("conv kernel and stride must be positive"));
            }
            h = h.div_ceil(c.stride);
            w = w.div_ceil(c.stride);
            d = c.channels;
        }
        if h != w {
            return Err(Error::invalid(format!("local map {h}x{w} is not square")));
        }
        Ok((d, h))
    }
}

/// Convolutional encoder with a local feature map `C(x)` of shape
/// `[B, d, M, M]` (taken after the last batch norm and ReLU) and a global
/// feature `E(x) = f(C(x))` squashed into `[0, 1]`.
#[derive(Clone, Debug)]
pub struct DimEncoder {
    pub config: EncoderConfig,
    pub convs: Vec<Conv2d>,
    pub conv_norms: Vec<BatchNorm>,
    pub fc: Linear,
    pub fc_norm: BatchNorm,
    pub out: Linear,
}

#[derive(Clone, Debug)]
pub struct Encoded {
    pub local: Tensor,
    pub global: Tensor,
}

impl DimEncoder {
    pub fn new(config: EncoderConfig, rng: &mut Rng) -> Result<DimEncoder> {
        let (d, m) = config.local_shape()?;
        let mut convs = Vec::new();
        let mut conv_norms = Vec::new();
        let mut c_in = config.input.0;
        for c in &config.convs {
            convs.push(Conv2d::new(c_in, c.channels, c.kernel, c.stride, Padding::Same, rng)?);
            conv_norms.push(BatchNorm::new(c.channels)?);
            c_in = c.channels;
        }
        let fc = Linear::new(d * m * m, config.hidden, crate::nn::InitScheme::He, rng)?;
        let out = Linear::new(config.hidden, config.out_dim, crate::nn::InitScheme::Glorot, rng)?;
        Ok(DimEncoder {
            fc_norm: BatchNorm::new(config.hidden)?,
            config,
            convs,
            conv_norms,
            fc,
            out,
        })
    }

    /// `(d, M)` of the local map.
    pub fn local_shape(&self) -> (usize, usize) {
        self.config.local_shape().expect("validated at construction")
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (c, h, w) = self.config.input;
        if x.rank() != 4 || x.shape()[1..] != [c, h, w] {
            return Err(Error::InvalidShape {
                shape: x.shape().to_vec(),
                reason: format!("encoder expects [B, {c}, {h}, {w}]"),
            });
        }
        Ok(())
    }

    pub fn local(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (conv, bn) in self.convs.iter().zip(self.conv_norms.iter_mut()) {
            h = bn.forward(&conv.forward(&h)?, mode)?.relu()?;
        }
        Ok(h)
    }

    /// The global feature computed from a local map.
    pub fn head(&mut self, local: &Tensor, mode: Mode) -> Result<Tensor> {
        let b = local.shape()[0];
        let flat = local.reshape(&[b, local.numel() / b])?;
        let h = self.fc_norm.forward(&self.fc.forward(&flat)?, mode)?.relu()?;
        self.out.forward(&h)?.sigmoid()
    }

    pub fn encode(&mut self, x: &Tensor, mode: Mode) -> Result<Encoded> {
        let local = self.local(x, mode)?;
        let global = self.head(&local, mode)?;
        Ok(Encoded { local, global })
    }

    /// Sets every batch-norm running statistic to the average of the batch
    /// statistics over `chunk`-sized slices of `x`, without touching
    /// parameters.
    pub fn calibrate_norms(&mut self, x: &Tensor, chunk: usize) -> Result<()> {
        let n = x.shape()[0];
        let saved: Vec<f64> = self.norms().map(|bn| bn.momentum).collect();
        let mut result = Ok(());
        for (k, start) in (0..n).step_by(chunk.max(2)).enumerate() {
            let idx: Vec<usize> = (start..(start + chunk.max(2)).min(n)).collect();
            if idx.len() < 2 {
                break;
            }
            for bn in self.norms() {
                bn.momentum = 1.0 / (k + 1) as f64;
            }
            if let Err(e) = self.encode(&x.index_select(0, &idx)?, Mode::Train) {
                result = Err(e);
                break;
            }
        }
        for (bn, m) in self.norms().zip(saved) {
            bn.momentum = m;
        }
        result
    }

    fn norms(&mut self) -> impl Iterator<Item = &mut BatchNorm> {
        self.conv_norms.iter_mut().chain(std::iter::once(&mut self.fc_norm))
    }

    /// Activations of the head's hidden layer, for probing.
    pub fn hidden(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let local = self.local(x, mode)?;
        let b = local.shape()[0];
        let flat = local.reshape(&[b, local.numel() / b])?;
        self.fc_norm.forward(&self.fc.forward(&flat)?, mode)?.relu()
    }
}

/// Local map `[B, d, M, M]` as rows `[B·M², d]`, row `b·M² + i·M + j`.
pub fn local_rows(local: &Tensor) -> Result<Tensor> {
    let s = local.shape();
    if s.len() != 4 {
        return Err(Error::InvalidShape {
            shape: s.to_vec(),
            reason: "local map must be [B, d, M, M]".into(),
        });
    }
    let (b, d, m1, m2) = (s[0], s[1], s[2], s[3]);
    local.permute(&[0, 2, 3, 1])?.reshape(&[b * m1 * m2, d])
}

/// Local map flattened per sample, `[B, d·M²]`.
pub fn local_flat(local: &Tensor) -> Result<Tensor> {
    let b = local.shape()[0];
    local.reshape(&[b, local.numel() / b])
}

impl Module for DimEncoder {
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for c in &mut self.convs {
            out.extend(c.params_mut());
        }
        for n in &mut self.conv_norms {
            out.extend(n.params_mut());
        }
        out.extend(self.fc.params_mut());
        out.extend(self.fc_norm.params_mut());
        out.extend(self.out.params_mut());
        out
    }

    fn state(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.extend(c.state(&join(prefix, &format!("conv{i}"))));
        }
        for (i, n) in self.conv_norms.iter().enumerate() {
            out.extend(n.state(&join(prefix, &format!("conv_bn{i}"))));
        }
        out.extend(self.fc.state(&join(prefix, "fc")));
        out.extend(self.fc_norm.state(&join(prefix, "fc_bn")));
        out.extend(self.out.state(&join(prefix, "out")));
        out
    }

    fn state_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter_mut().enumerate() {
            out.extend(c.state_mut(&join(prefix, &format!("conv{i}"))));
        }
        for (i, n) in self.conv_norms.iter_mut().enumerate() {
            out.extend(n.state_mut(&join(prefix, &format!("conv_bn{i}"))));
        }
        out.extend(self.fc.state_mut(&join(prefix, "fc")));
        out.extend(self.fc_norm.state_mut(&join(prefix, "fc_bn")));
        out.extend(self.out.state_mut(&join(prefix, "out")));
        out
    }
}
