//! Backbone blocks: `bc` (convolution, ReLU, batch normalization), the
//! convolutional feature filter `cff`, their composition `fbc`, and the
//! softmax cross-entropy head.
//!
//! A filter computes `d = sigmoid(conv(f)) * f` with a square-in-channels
//! gate kernel. Since the gate lies strictly inside `(0, 1)`, the output is a
//! per-element attenuation of `f`: magnitudes shrink and signs are kept.

use crate::error::{Error, Result};
use crate::label::LabelMap;
use crate::rng::Rng;
use crate::tensor::{self, conv2d, conv2d_backward, sigmoid_scalar, ConvKernel, Padding, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Where batch normalization sits relative to the ReLU.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BlockOrder {
    /// `bn(relu(conv(x)))`
    #[default]
    ReluBn,
    /// `relu(bn(conv(x)))`
    BnRelu,
}

impl std::str::FromStr for BlockOrder {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "relu-bn" => Ok(Self::ReluBn),
            "bn-relu" => Ok(Self::BnRelu),
            _ => Err(format!("unknown block order {s:?} (expected relu-bn|bn-relu)")),
        }
    }
}

impl std::fmt::Display for BlockOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ReluBn => "relu-bn",
            Self::BnRelu => "bn-relu",
        })
    }
}

/// Per-channel batch normalization over the spatial extent of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub epsilon: f64,
    pub momentum: f64,
}

#[derive(Clone, Debug)]
pub struct BnCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    mode: Mode,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            epsilon: BN_EPSILON,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, BnCache)> {
        let (h, w, c) = x.hwc()?;
        if c != self.channels() {
            return Err(Error::ChannelMismatch {
                expected: self.channels(),
                got: c,
            });
        }
        let n = (h * w) as f64;
        let data = x.data();
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                for px in data.chunks_exact(c) {
                    for (m, &v) in mean.iter_mut().zip(px) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![0.0; c];
                for px in data.chunks_exact(c) {
                    for ((s, &v), &m) in var.iter_mut().zip(px).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= n);
                (mean, var)
            }
            Mode::Eval => (
                self.running_mean.data().to_vec(),
                self.running_var.data().to_vec(),
            ),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let mut x_hat = Vec::with_capacity(data.len());
        let mut out = Vec::with_capacity(data.len());
        let (g, b) = (self.gamma.data(), self.beta.data());
        for px in data.chunks_exact(c) {
            for k in 0..c {
                let xh = (px[k] - mean[k]) * inv_std[k];
                x_hat.push(xh);
                out.push(g[k] * xh + b[k]);
            }
        }
        Ok((
            Tensor::new(x.dims().to_vec(), out)?,
            BnCache {
                x_hat: Tensor::new(x.dims().to_vec(), x_hat)?,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                mode,
            },
        ))
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// estimates: `running = momentum * running + (1 - momentum) * batch`.
    pub fn update_running(&mut self, cache: &BnCache) {
        if cache.mode != Mode::Train {
            return;
        }
        let m = self.momentum;
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(&cache.batch_mean) {
            *r = m * *r + (1.0 - m) * b;
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(&cache.batch_var) {
            *r = m * *r + (1.0 - m) * b;
        }
    }

    /// Returns `(grad_input, grad_gamma, grad_beta)`.
    pub fn backward(&self, grad_out: &Tensor, cache: &BnCache) -> Result<(Tensor, Tensor, Tensor)> {
        tensor::same_dims("batchnorm_backward", grad_out, &cache.x_hat)?;
        let c = self.channels();
        let gy = grad_out.data();
        let xh = cache.x_hat.data();
        let n = (gy.len() / c) as f64;
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for (gp, xp) in gy.chunks_exact(c).zip(xh.chunks_exact(c)) {
            for k in 0..c {
                dgamma[k] += gp[k] * xp[k];
                dbeta[k] += gp[k];
            }
        }
        let g = self.gamma.data();
        let mut gx = Vec::with_capacity(gy.len());
        match cache.mode {
            Mode::Train => {
                // dx = gamma * inv_std / n * (n * dy - sum(dy) - x_hat * sum(dy * x_hat))
                for (gp, xp) in gy.chunks_exact(c).zip(xh.chunks_exact(c)) {
                    for k in 0..c {
                        let v = g[k] * cache.inv_std[k] / n * (n * gp[k] - dbeta[k] - xp[k] * dgamma[k]);
                        gx.push(v);
                    }
                }
            }
            Mode::Eval => {
                for gp in gy.chunks_exact(c) {
                    for k in 0..c {
                        gx.push(gp[k] * g[k] * cache.inv_std[k]);
                    }
                }
            }
        }
        Ok((
            Tensor::new(grad_out.dims().to_vec(), gx)?,
            Tensor::new(vec![c], dgamma)?,
            Tensor::new(vec![c], dbeta)?,
        ))
    }
}

/// Parameters of one convolutional feature filter.
#[derive(Clone, Debug, PartialEq)]
pub struct CffState {
    pub gate: ConvKernel,
}

impl CffState {
    pub fn new(gate: ConvKernel) -> Result<Self> {
        if gate.in_ch() != gate.out_ch() {
            return Err(Error::invalid(format!(
                "gate kernel must map {0} channels to {0}, got {1} -> {2}",
                gate.in_ch(),
                gate.in_ch(),
                gate.out_ch()
            )));
        }
        Ok(Self { gate })
    }

    /// Gate weights uniform in `+-1/sqrt(fan_in)`, zero biases.
    pub fn init(channels: usize, kernel_size: usize, rng: &mut Rng) -> Self {
        let scale = 1.0 / ((kernel_size * kernel_size * channels) as f64).sqrt();
        Self {
            gate: ConvKernel::uniform(kernel_size, kernel_size, channels, channels, scale, rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.gate.in_ch()
    }

    /// Gate values `sigmoid(conv(f))`.
    pub fn gate_values(&self, f: &Tensor) -> Result<Tensor> {
        let (_, _, c) = f.hwc()?;
        if c != self.channels() {
            return Err(Error::ChannelMismatch {
                expected: self.channels(),
                got: c,
            });
        }
        Ok(conv2d(f, &self.gate, Padding::Same)?.map(sigmoid_scalar))
    }

    pub fn forward(&self, f: &Tensor) -> Result<Tensor> {
        let gate = self.gate_values(f)?;
        tensor::mul(&gate, f)
    }

    /// Returns `(grad_f, grad_gate_kernel)` given the cached input and gate.
    pub fn backward(&self, grad_d: &Tensor, f: &Tensor, gate: &Tensor) -> Result<(Tensor, ConvKernel)> {
        tensor::same_dims("cff_backward", grad_d, f)?;
        tensor::same_dims("cff_backward", grad_d, gate)?;
        let gd = grad_d.data();
        let fv = f.data();
        let sv = gate.data();
        let grad_z = Tensor::new(
            f.dims().to_vec(),
            (0..gd.len()).map(|k| gd[k] * fv[k] * sv[k] * (1.0 - sv[k])).collect(),
        )?;
        let (mut grad_f, grad_gate) = conv2d_backward(&grad_z, f, &self.gate, Padding::Same)?;
        for ((g, &d), &s) in grad_f.data_mut().iter_mut().zip(gd).zip(sv) {
            *g += d * s;
        }
        Ok((grad_f, grad_gate))
    }
}

pub fn cff_forward(f: &Tensor, state: &CffState) -> Result<Tensor> {
    state.forward(f)
}

pub fn cff_backward(grad_d: &Tensor, f: &Tensor, state: &CffState) -> Result<(Tensor, ConvKernel)> {
    let gate = state.gate_values(f)?;
    state.backward(grad_d, f, &gate)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Bc,
    Fbc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub conv_kernel_size: usize,
    pub out_channels: usize,
    /// Gate kernel extent, 1 or 3. Ignored for `Bc`.
    pub cff_kernel_size: usize,
}

impl BlockSpec {
    pub fn bc(out_channels: usize) -> Self {
        Self {
            kind: BlockKind::Bc,
            conv_kernel_size: 3,
            out_channels,
            cff_kernel_size: 1,
        }
    }

    pub fn fbc(out_channels: usize) -> Self {
        Self {
            kind: BlockKind::Fbc,
            ..Self::bc(out_channels)
        }
    }
}

/// One backbone convolutional operation, optionally followed by a filter.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub conv: ConvKernel,
    pub bn: BatchNormState,
    pub cff: Option<CffState>,
    pub order: BlockOrder,
}

/// Intermediates of a block forward pass needed by its backward rule.
#[derive(Clone, Debug)]
pub struct BlockCache {
    input: Tensor,
    conv_out: Tensor,
    /// ReLU output (relu-bn order) or BN output (bn-relu order).
    mid: Tensor,
    bn: BnCache,
    /// Pre-filter feature matrix.
    pub f: Tensor,
    gate: Option<Tensor>,
}

#[derive(Clone, Debug)]
pub struct BlockGrads {
    pub conv: ConvKernel,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub cff: Option<ConvKernel>,
}

impl Block {
    /// He-normal backbone weights from `backbone`; gate weights from `gates`.
    pub fn init(spec: &BlockSpec, in_channels: usize, order: BlockOrder, backbone: &mut Rng, gates: &mut Rng) -> Result<Self> {
        let k = spec.conv_kernel_size;
        if k.is_multiple_of(2) || spec.out_channels == 0 || in_channels == 0 {
            return Err(Error::invalid(format!("bad block spec {spec:?} for {in_channels} inputs")));
        }
        let std = (2.0 / (k * k * in_channels) as f64).sqrt();
        let conv = ConvKernel {
            weights: Tensor::from_fn(&[k, k, in_channels, spec.out_channels], |_| std * backbone.normal()),
            biases: Tensor::zeros(&[spec.out_channels]),
        };
        let cff = match spec.kind {
            BlockKind::Bc => None,
            BlockKind::Fbc => {
                if !matches!(spec.cff_kernel_size, 1 | 3) {
                    return Err(Error::invalid(format!("cff kernel size {} not in {{1, 3}}", spec.cff_kernel_size)));
                }
                Some(CffState::init(spec.out_channels, spec.cff_kernel_size, gates))
            }
        };
        Ok(Self {
            conv,
            bn: BatchNormState::new(spec.out_channels),
            cff,
            order,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_ch()
    }

    pub fn param_count(&self) -> usize {
        self.conv.param_count() + 2 * self.bn.channels() + self.cff.as_ref().map_or(0, |c| c.gate.param_count())
    }

    /// Returns the block output (`d` for filtered blocks, `f` otherwise).
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, BlockCache)> {
        let conv_out = conv2d(x, &self.conv, Padding::Same)?;
        let (mid, f, bn) = match self.order {
            BlockOrder::ReluBn => {
                let r = tensor::relu(&conv_out);
                let (f, bn) = self.bn.forward(&r, mode)?;
                (r, f, bn)
            }
            BlockOrder::BnRelu => {
                let (n, bn) = self.bn.forward(&conv_out, mode)?;
                let f = tensor::relu(&n);
                (n, f, bn)
            }
        };
        let (out, gate) = match &self.cff {
            Some(cff) => {
                let gate = cff.gate_values(&f)?;
                (tensor::mul(&gate, &f)?, Some(gate))
            }
            None => (f.clone(), None),
        };
        Ok((
            out,
            BlockCache {
                input: x.clone(),
                conv_out,
                mid,
                bn,
                f,
                gate,
            },
        ))
    }

    pub fn backward(&self, grad_out: &Tensor, cache: &BlockCache) -> Result<(Tensor, BlockGrads)> {
        let (grad_f, grad_cff) = match (&self.cff, &cache.gate) {
            (Some(cff), Some(gate)) => {
                let (gf, gk) = cff.backward(grad_out, &cache.f, gate)?;
                (gf, Some(gk))
            }
            (None, None) => (grad_out.clone(), None),
            _ => return Err(Error::invalid("block cache does not match block filter")),
        };
        let (grad_conv_out, gamma, beta) = match self.order {
            BlockOrder::ReluBn => {
                let (g_relu, gamma, beta) = self.bn.backward(&grad_f, &cache.bn)?;
                (tensor::relu_backward(&g_relu, &cache.conv_out)?, gamma, beta)
            }
            BlockOrder::BnRelu => {
                let g_bn = tensor::relu_backward(&grad_f, &cache.mid)?;
                self.bn.backward(&g_bn, &cache.bn)?
            }
        };
        let (gx, conv) = conv2d_backward(&grad_conv_out, &cache.input, &self.conv, Padding::Same)?;
        Ok((
            gx,
            BlockGrads {
                conv,
                gamma,
                beta,
                cff: grad_cff,
            },
        ))
    }

    pub fn update_running(&mut self, cache: &BlockCache) {
        self.bn.update_running(&cache.bn);
    }

    /// Same block with the filter removed.
    pub fn without_filter(&self) -> Block {
        Block {
            cff: None,
            ..self.clone()
        }
    }
}

/// `f = bc(x)`: convolution, ReLU and batch normalization in the block's
/// configured order.
pub fn bc_forward(input: &Tensor, block: &Block, mode: Mode) -> Result<Tensor> {
    Ok(block.without_filter().forward(input, mode)?.0)
}

/// Pre- and post-filter feature matrices of one `fbc` block.
#[derive(Clone, Debug)]
pub struct FbcOutput {
    pub f: Tensor,
    pub d: Tensor,
}

pub fn fbc_forward(input: &Tensor, block: &Block, mode: Mode) -> Result<FbcOutput> {
    let Some(cff) = &block.cff else {
        return Err(Error::invalid("fbc_forward on a block without a filter"));
    };
    let f = bc_forward(input, block, mode)?;
    let d = cff.forward(&f)?;
    Ok(FbcOutput { f, d })
}

/// Mean pixel-wise categorical cross-entropy and its gradient with respect
/// to the logits, `(softmax - onehot) / pixels`.
pub fn softmax_ce_loss(logits: &Tensor, labels: &LabelMap) -> Result<(f64, Tensor)> {
    let (h, w, k) = logits.hwc()?;
    if (h, w) != (labels.height(), labels.width()) {
        return Err(Error::ShapeMismatch {
            op: "softmax_ce_loss",
            left: vec![h, w],
            right: vec![labels.height(), labels.width()],
        });
    }
    let n = (h * w) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (px, &y) in logits.data().chunks_exact(k).zip(labels.data()) {
        let y = usize::from(y);
        if y >= k {
            return Err(Error::LabelOutOfRange { label: y, classes: k });
        }
        let m = px.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = px.iter().map(|&v| (v - m).exp()).sum();
        let lse = m + z.ln();
        loss += lse - px[y];
        for (c, &v) in px.iter().enumerate() {
            let p = (v - lse).exp();
            grad.push((p - if c == y { 1.0 } else { 0.0 }) / n);
        }
    }
    Ok((loss / n, Tensor::new(logits.dims().to_vec(), grad)?))
}
