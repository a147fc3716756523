//! Dense `f64` tensors and the spatial primitives every layer is built on.
//!
//! Rank-3 feature matrices are stored row-major as `H x W x C`, so the
//! channel vector of one pixel is a contiguous slice. Convolution kernels are
//! `kh x kw x in x out`, which keeps the output-channel loop innermost.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const FSM1_MAGIC: &[u8; 4] = b"FSM1";

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 4 || dims.contains(&0) {
            return Err(Error::invalid(format!("bad tensor dims {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::LengthMismatch {
                left: n,
                right: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self::full(dims, 0.0)
    }

    pub fn full(dims: &[usize], value: f64) -> Self {
        let n = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `(H, W, C)` of a rank-3 tensor.
    pub fn hwc(&self) -> Result<(usize, usize, usize)> {
        match self.dims[..] {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(Error::Rank {
                op: "hwc",
                expected: 3,
                got: self.rank(),
            }),
        }
    }

    pub fn get3(&self, i: usize, j: usize, c: usize) -> f64 {
        let (w, ch) = (self.dims[1], self.dims[2]);
        self.data[(i * w + j) * ch + c]
    }

    /// Channel vector of pixel `(i, j)`.
    pub fn pixel(&self, i: usize, j: usize) -> &[f64] {
        let (w, ch) = (self.dims[1], self.dims[2]);
        let at = (i * w + j) * ch;
        &self.data[at..at + ch]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        same_dims(op, self, other)?;
        Ok(Tensor {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|x| x * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn reshape(mut self, dims: &[usize]) -> Result<Tensor> {
        let n: usize = dims.iter().product();
        if n != self.data.len() {
            return Err(Error::LengthMismatch {
                left: n,
                right: self.data.len(),
            });
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    /// Writes the FSM1 dump: magic, u32 rank, u32 extents, f64 values, all
    /// little-endian.
    pub fn write_fsm1<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(8 + 4 * self.rank() + 8 * self.len());
        buf.extend_from_slice(FSM1_MAGIC);
        buf.extend_from_slice(&(self.rank() as u32).to_le_bytes());
        for &d in &self.dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in &self.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn read_fsm1<R: Read>(mut input: R) -> std::result::Result<Tensor, String> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes).map_err(|e| e.to_string())?;
        Self::decode_fsm1(&bytes)
    }

    pub fn decode_fsm1(bytes: &[u8]) -> std::result::Result<Tensor, String> {
        if bytes.len() < 8 || &bytes[..4] != FSM1_MAGIC {
            return Err("missing FSM1 magic".into());
        }
        let word = |at: usize| -> std::result::Result<u32, String> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| "truncated header".to_string())
        };
        let rank = word(4)? as usize;
        if rank == 0 || rank > 4 {
            return Err(format!("unsupported rank {rank}"));
        }
        let dims = (0..rank)
            .map(|k| word(8 + 4 * k).map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let n: usize = dims.iter().product();
        let start = 8 + 4 * rank;
        if bytes.len() != start + 8 * n {
            return Err(format!(
                "expected {} payload bytes, found {}",
                8 * n,
                bytes.len().saturating_sub(start)
            ));
        }
        let data = bytes[start..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(dims, data).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_fsm1(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Tensor> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Tensor::decode_fsm1(&bytes).map_err(|reason| Error::Format {
            kind: "FSM1",
            path: path.to_path_buf(),
            reason,
        })
    }
}

pub(crate) fn same_dims(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims != b.dims {
        return Err(Error::ShapeMismatch {
            op,
            left: a.dims.clone(),
            right: b.dims.clone(),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero fill, output keeps the input's spatial extent.
    Same,
    Valid,
}

/// Trainable convolution weights (`kh x kw x in x out`) and biases (`out`).
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel {
    pub weights: Tensor,
    pub biases: Tensor,
}

impl ConvKernel {
    pub fn new(weights: Tensor, biases: Tensor) -> Result<Self> {
        let &[kh, kw, _, out] = weights.dims() else {
            return Err(Error::Rank {
                op: "ConvKernel::new",
                expected: 4,
                got: weights.rank(),
            });
        };
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::invalid(format!("kernel extent {kh}x{kw} must be odd")));
        }
        if biases.dims() != [out] {
            return Err(Error::ShapeMismatch {
                op: "ConvKernel::new",
                left: vec![out],
                right: biases.dims().to_vec(),
            });
        }
        Ok(Self { weights, biases })
    }

    pub fn zeros(kh: usize, kw: usize, in_ch: usize, out_ch: usize) -> Self {
        Self {
            weights: Tensor::zeros(&[kh, kw, in_ch, out_ch]),
            biases: Tensor::zeros(&[out_ch]),
        }
    }

    /// Weights uniform in `[-scale, scale]`, zero biases.
    pub fn uniform(kh: usize, kw: usize, in_ch: usize, out_ch: usize, scale: f64, rng: &mut crate::rng::Rng) -> Self {
        Self {
            weights: Tensor::from_fn(&[kh, kw, in_ch, out_ch], |_| rng.uniform_range(-scale, scale)),
            biases: Tensor::zeros(&[out_ch]),
        }
    }

    pub fn kh(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn kw(&self) -> usize {
        self.weights.dims()[1]
    }

    pub fn in_ch(&self) -> usize {
        self.weights.dims()[2]
    }

    pub fn out_ch(&self) -> usize {
        self.weights.dims()[3]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

struct ConvGeometry {
    h: usize,
    w: usize,
    cin: usize,
    oh: usize,
    ow: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    ph: usize,
    pw: usize,
}

impl ConvGeometry {
    fn new(input_dims: &[usize], kernel: &ConvKernel, padding: Padding) -> Result<Self> {
        let &[h, w, cin] = input_dims else {
            return Err(Error::Rank {
                op: "conv2d",
                expected: 3,
                got: input_dims.len(),
            });
        };
        if cin != kernel.in_ch() {
            return Err(Error::ChannelMismatch {
                expected: kernel.in_ch(),
                got: cin,
            });
        }
        let (kh, kw) = (kernel.kh(), kernel.kw());
        let (ph, pw) = match padding {
            Padding::Same => (kh / 2, kw / 2),
            Padding::Valid => (0, 0),
        };
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return Err(Error::invalid(format!("input {h}x{w} smaller than kernel {kh}x{kw}")));
        }
        Ok(Self {
            h,
            w,
            cin,
            oh: h + 2 * ph - kh + 1,
            ow: w + 2 * pw - kw + 1,
            cout: kernel.out_ch(),
            kh,
            kw,
            ph,
            pw,
        })
    }

    /// Input coordinate covered by output `o` at kernel offset `k`, if inside.
    #[inline]
    fn src(o: usize, k: usize, pad: usize, extent: usize) -> Option<usize> {
        (o + k).checked_sub(pad).filter(|&s| s < extent)
    }
}

/// Unfolds every receptive field into one row of an `(oh*ow) x (kh*kw*cin)`
/// matrix, column order matching the `kh x kw x in` weight layout.
fn im2col(x: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let k = g.kh * g.kw * g.cin;
    let mut cols = vec![0.0; g.oh * g.ow * k];
    for oi in 0..g.oh {
        for oj in 0..g.ow {
            let row = &mut cols[(oi * g.ow + oj) * k..][..k];
            for ki in 0..g.kh {
                let Some(si) = ConvGeometry::src(oi, ki, g.ph, g.h) else { continue };
                for kj in 0..g.kw {
                    let Some(sj) = ConvGeometry::src(oj, kj, g.pw, g.w) else { continue };
                    row[(ki * g.kw + kj) * g.cin..][..g.cin].copy_from_slice(&x[(si * g.w + sj) * g.cin..][..g.cin]);
                }
            }
        }
    }
    cols
}

impl ConvGeometry {
    /// A 1x1 kernel needs no unfolding: the input is its own column matrix.
    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1
    }

    /// Geometry of the transposed pass that maps output gradients back onto
    /// the input grid.
    fn transposed(&self) -> Self {
        Self {
            h: self.oh,
            w: self.ow,
            cin: self.cout,
            oh: self.h,
            ow: self.w,
            cout: self.cin,
            kh: self.kh,
            kw: self.kw,
            ph: self.kh - 1 - self.ph,
            pw: self.kw - 1 - self.pw,
        }
    }
}

/// Row-major `c (m x n) = alpha * a (m x k) * b (k x n) + beta * c`, with
/// explicit strides so transposed operands need no copies.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: (&[f64], isize, isize), b: (&[f64], isize, isize), beta: f64, c: &mut [f64]) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: every operand slice covers the index range implied by its
    // shape and strides, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Cross-correlation plus bias.
pub fn conv2d(input: &Tensor, kernel: &ConvKernel, padding: Padding) -> Result<Tensor> {
    let g = ConvGeometry::new(input.dims(), kernel, padding)?;
    let k = g.kh * g.kw * g.cin;
    let m = g.oh * g.ow;
    let unfolded;
    let cols: &[f64] = if g.pointwise() {
        input.data()
    } else {
        unfolded = im2col(input.data(), &g);
        &unfolded
    };
    let mut out = Vec::with_capacity(m * g.cout);
    for _ in 0..m {
        out.extend_from_slice(kernel.biases.data());
    }
    gemm(
        m,
        k,
        g.cout,
        (cols, k as isize, 1),
        (kernel.weights.data(), g.cout as isize, 1),
        1.0,
        &mut out,
    );
    Tensor::new(vec![g.oh, g.ow, g.cout], out)
}

/// Gradients of a scalar loss with respect to the convolution input and
/// kernel, given the gradient at the convolution output.
pub fn conv2d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    kernel: &ConvKernel,
    padding: Padding,
) -> Result<(Tensor, ConvKernel)> {
    let g = ConvGeometry::new(input.dims(), kernel, padding)?;
    if grad_out.dims() != [g.oh, g.ow, g.cout] {
        return Err(Error::ShapeMismatch {
            op: "conv2d_backward",
            left: vec![g.oh, g.ow, g.cout],
            right: grad_out.dims().to_vec(),
        });
    }
    let k = g.kh * g.kw * g.cin;
    let m = g.oh * g.ow;
    let gy = grad_out.data();
    let unfolded;
    let cols: &[f64] = if g.pointwise() {
        input.data()
    } else {
        unfolded = im2col(input.data(), &g);
        &unfolded
    };

    let mut gb = vec![0.0; g.cout];
    for row in gy.chunks_exact(g.cout) {
        for (b, &v) in gb.iter_mut().zip(row) {
            *b += v;
        }
    }
    // grad_w = cols^T * grad_out
    let mut gw = vec![0.0; k * g.cout];
    gemm(k, m, g.cout, (cols, 1, k as isize), (gy, g.cout as isize, 1), 0.0, &mut gw);
    // grad_x is the correlation of grad_out with the spatially flipped,
    // channel-transposed kernel.
    let t = g.transposed();
    let tk = g.kh * g.kw * g.cout;
    let mut flipped = vec![0.0; tk * g.cin];
    let w = kernel.weights.data();
    for ki in 0..g.kh {
        for kj in 0..g.kw {
            let src = ((g.kh - 1 - ki) * g.kw + (g.kw - 1 - kj)) * g.cin * g.cout;
            let dst = (ki * g.kw + kj) * g.cout * g.cin;
            for c in 0..g.cin {
                for o in 0..g.cout {
                    flipped[dst + o * g.cin + c] = w[src + c * g.cout + o];
                }
            }
        }
    }
    let unfolded_grad;
    let gcols: &[f64] = if t.pointwise() {
        gy
    } else {
        unfolded_grad = im2col(gy, &t);
        &unfolded_grad
    };
    let mut gx = vec![0.0; g.h * g.w * g.cin];
    gemm(
        g.h * g.w,
        tk,
        g.cin,
        (gcols, tk as isize, 1),
        (&flipped, g.cin as isize, 1),
        0.0,
        &mut gx,
    );
    Ok((
        Tensor::new(input.dims().to_vec(), gx)?,
        ConvKernel {
            weights: Tensor::new(kernel.weights.dims().to_vec(), gw)?,
            biases: Tensor::new(vec![g.cout], gb)?,
        },
    ))
}

/// 2x2 max pooling. Returns the pooled tensor and, for every output element,
/// the flat input index that won the window (first maximum in row-major
/// window order on ties).
pub fn maxpool2(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (h, w, c) = input.hwc()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::OddExtent { op: "maxpool2", h, w });
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut idx = Vec::with_capacity(oh * ow * c);
    for i in 0..oh {
        for j in 0..ow {
            for ch in 0..c {
                let mut best = (2 * i * w + 2 * j) * c + ch;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let at = ((2 * i + di) * w + 2 * j + dj) * c + ch;
                    if x[at] > x[best] {
                        best = at;
                    }
                }
                out.push(x[best]);
                idx.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![oh, ow, c], out)?, idx))
}

pub fn maxpool2_backward(grad_out: &Tensor, indices: &[usize], input_dims: &[usize]) -> Result<Tensor> {
    if grad_out.len() != indices.len() {
        return Err(Error::LengthMismatch {
            left: grad_out.len(),
            right: indices.len(),
        });
    }
    let mut gx = Tensor::zeros(input_dims);
    for (&at, &g) in indices.iter().zip(grad_out.data()) {
        gx.data[at] += g;
    }
    Ok(gx)
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2(input: &Tensor) -> Result<Tensor> {
    let (h, w, c) = input.hwc()?;
    let x = input.data();
    let mut out = vec![0.0; 4 * h * w * c];
    for i in 0..2 * h {
        for j in 0..2 * w {
            let src = &x[((i / 2) * w + j / 2) * c..][..c];
            out[(i * 2 * w + j) * c..][..c].copy_from_slice(src);
        }
    }
    Tensor::new(vec![2 * h, 2 * w, c], out)
}

/// Sums each 2x2 block of the upsampled gradient.
pub fn upsample2_backward(grad_out: &Tensor) -> Result<Tensor> {
    let (h2, w2, c) = grad_out.hwc()?;
    if h2 % 2 != 0 || w2 % 2 != 0 {
        return Err(Error::OddExtent {
            op: "upsample2_backward",
            h: h2,
            w: w2,
        });
    }
    let (h, w) = (h2 / 2, w2 / 2);
    let gy = grad_out.data();
    let mut gx = vec![0.0; h * w * c];
    for i in 0..h2 {
        for j in 0..w2 {
            let dst = &mut gx[((i / 2) * w + j / 2) * c..][..c];
            for (d, &g) in dst.iter_mut().zip(&gy[(i * w2 + j) * c..][..c]) {
                *d += g;
            }
        }
    }
    Tensor::new(vec![h, w, c], gx)
}

/// Channel-wise concatenation of two rank-3 tensors with equal `H x W`.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (h, w, ca) = a.hwc()?;
    let (hb, wb, cb) = b.hwc()?;
    if (h, w) != (hb, wb) {
        return Err(Error::ShapeMismatch {
            op: "concat_channels",
            left: a.dims().to_vec(),
            right: b.dims().to_vec(),
        });
    }
    let mut out = Vec::with_capacity(h * w * (ca + cb));
    for p in 0..h * w {
        out.extend_from_slice(&a.data()[p * ca..][..ca]);
        out.extend_from_slice(&b.data()[p * cb..][..cb]);
    }
    Tensor::new(vec![h, w, ca + cb], out)
}

/// Splits a concatenated gradient back into its `(first, second)` parts.
pub fn split_channels(grad: &Tensor, first: usize) -> Result<(Tensor, Tensor)> {
    let (h, w, c) = grad.hwc()?;
    if first == 0 || first >= c {
        return Err(Error::invalid(format!("cannot split {c} channels at {first}")));
    }
    let second = c - first;
    let mut a = Vec::with_capacity(h * w * first);
    let mut b = Vec::with_capacity(h * w * second);
    for p in 0..h * w {
        a.extend_from_slice(&grad.data()[p * c..][..first]);
        b.extend_from_slice(&grad.data()[p * c + first..][..second]);
    }
    Ok((Tensor::new(vec![h, w, first], a)?, Tensor::new(vec![h, w, second], b)?))
}

/// Logistic sigmoid, kept strictly inside `(0, 1)` for every finite input.
#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// NaN passes through so divergence stays visible downstream.
pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v <= 0.0 { 0.0 } else { v })
}

pub fn relu_backward(grad_out: &Tensor, pre: &Tensor) -> Result<Tensor> {
    grad_out.zip_with(pre, "relu_backward", |g, x| if x <= 0.0 { 0.0 } else { g })
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Gradient through a sigmoid given its cached output.
pub fn sigmoid_backward(grad_out: &Tensor, out: &Tensor) -> Result<Tensor> {
    grad_out.zip_with(out, "sigmoid_backward", |g, s| g * s * (1.0 - s))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.zip_with(b, "mul", |x, y| x * y)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.zip_with(b, "add", |x, y| x + y)
}
