//! Binary information entropy of feature signal matrices.
//!
//! A matrix is treated as samples of one Gaussian variable: every element is
//! mapped through the normal density fitted to the matrix itself, the
//! resulting probabilities are split at their mean into a low and a high
//! share, and the entropy of that two-point distribution is reported.
//! Lower entropy means the low-probability (high-amplitude, rare) signals
//! make up a smaller share of the matrix.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{conv2d, ConvKernel, Padding, Tensor};

/// Standard deviations below this are treated as a constant matrix.
pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianParams {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !mu.is_finite() || !sigma.is_finite() {
            return Err(Error::invalid(format!("gaussian needs finite mu and sigma > 0, got ({mu}, {sigma})")));
        }
        Ok(Self { mu, sigma })
    }

    /// Sample mean and population standard deviation of `values`.
    pub fn fit(values: &[f64]) -> (f64, f64) {
        let n = values.len() as f64;
        let mu = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        (mu, var.sqrt())
    }

    pub fn density(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        (-0.5 * z * z).exp() / (self.sigma * (2.0 * PI).sqrt())
    }
}

/// Element-wise normal densities of a feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMatrix {
    pub values: Vec<f64>,
    pub source_dims: Vec<usize>,
}

pub fn gaussian_density(alpha: &[f64], params: GaussianParams) -> Vec<f64> {
    alpha.iter().map(|&a| params.density(a)).collect()
}

/// Fits the matrix's own mean and std and evaluates the density at every
/// element. `None` when the matrix is constant (`sigma < SIGMA_FLOOR`).
pub fn normalize(f: &Tensor) -> Option<ProbabilityMatrix> {
    let (mu, sigma) = GaussianParams::fit(f.data());
    if !(sigma >= SIGMA_FLOOR) {
        return None;
    }
    let params = GaussianParams { mu, sigma };
    Some(ProbabilityMatrix {
        values: gaussian_density(f.data(), params),
        source_dims: f.dims().to_vec(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Degenerate,
    Split,
}

/// Low/high probability shares of a matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinaryDistribution {
    pub a: f64,
    pub b: f64,
    pub branch: Branch,
}

impl BinaryDistribution {
    pub const DEGENERATE: Self = Self {
        a: 0.5,
        b: 0.5,
        branch: Branch::Degenerate,
    };
}

/// `a` = share strictly below the mean, `b` = share strictly above. Returns
/// `{0.5, 0.5}` unless `0 < a < b`.
pub fn binarize(p: &[f64]) -> BinaryDistribution {
    if p.is_empty() {
        return BinaryDistribution::DEGENERATE;
    }
    let n = p.len() as f64;
    let mean = p.iter().sum::<f64>() / n;
    let below = p.iter().filter(|&&v| v < mean).count();
    let above = p.iter().filter(|&&v| v > mean).count();
    let (a, b) = (below as f64 / n, above as f64 / n);
    // Nothing below the mean only happens when rounding puts the computed
    // mean under a set of (near-)equal values; exactly, that set has a == b.
    if a >= b || below == 0 {
        BinaryDistribution::DEGENERATE
    } else {
        BinaryDistribution {
            a,
            b,
            branch: Branch::Split,
        }
    }
}

/// `-(a log2 a + b log2 b)`; exactly 1 on the degenerate branch.
pub fn binary_entropy(p: &BinaryDistribution) -> f64 {
    match p.branch {
        Branch::Degenerate => 1.0,
        Branch::Split => -(p.a * p.a.log2() + p.b * p.b.log2()),
    }
}

/// Full normalize, binarize, entropy pipeline for one matrix.
pub fn matrix_entropy(f: &Tensor) -> f64 {
    match normalize(f) {
        Some(p) => binary_entropy(&binarize(&p.values)),
        None => 1.0,
    }
}

/// `(Hf, Hd)` for the pre- and post-filter matrices of one block.
pub fn layer_entropy_pair(f: &Tensor, d: &Tensor) -> Result<(f64, f64)> {
    if f.dims() != d.dims() {
        return Err(Error::ShapeMismatch {
            op: "layer_entropy_pair",
            left: f.dims().to_vec(),
            right: d.dims().to_vec(),
        });
    }
    Ok((matrix_entropy(f), matrix_entropy(d)))
}

/// Per-layer entropy variation `HD - HF`. Negative entries mean the filter
/// lowered the uncertainty of that layer's signals.
pub fn delta_entropy(hf: &[f64], hd: &[f64]) -> Result<Vec<f64>> {
    if hf.len() != hd.len() {
        return Err(Error::LengthMismatch {
            left: hf.len(),
            right: hd.len(),
        });
    }
    Ok(hd.iter().zip(hf).map(|(d, f)| d - f).collect())
}

/// Entropy of one filtered layer at one probe point.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyReport {
    pub layer_index: usize,
    pub tag: String,
    pub hf: f64,
    pub hd: f64,
    pub delta: f64,
}

impl EntropyReport {
    pub fn new(layer_index: usize, tag: impl Into<String>, hf: f64, hd: f64) -> Self {
        Self {
            layer_index,
            tag: tag.into(),
            hf,
            hd,
            delta: hd - hf,
        }
    }
}

pub const REPORT_HEADER: &str = "layer_index,tag,Hf,Hd,delta";

pub fn reports_to_csv(rows: &[EntropyReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.layer_index, r.tag, r.hf, r.hd, r.delta));
    }
    out
}

/// Channel vector of pixel `(i, j)`.
pub fn extract_pixel_signal(f: &Tensor, i: usize, j: usize) -> Result<Vec<f64>> {
    let (h, w, _) = f.hwc()?;
    if i >= h || j >= w {
        return Err(Error::IndexOutOfRange { i, j, h, w });
    }
    Ok(f.pixel(i, j).to_vec())
}

/// Draws `n` samples of `X ~ N(mu, sigma^2)`, maps them through
/// `Y = a X + b`, and returns the empirical mean and population variance
/// of `Y`.
pub fn theorem1_check(mu: f64, sigma: f64, a: f64, b: f64, n: usize, seed: u64) -> Result<(f64, f64)> {
    GaussianParams::new(mu, sigma)?;
    if n == 0 {
        return Err(Error::invalid("theorem1_check needs at least one sample"));
    }
    let mut rng = Rng::new(seed);
    let ys: Vec<f64> = (0..n).map(|_| a * (mu + sigma * rng.normal()) + b).collect();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n as f64;
    Ok((mean, var))
}

/// `max |conv(alpha x + beta eps) - (alpha conv(x) + beta conv(eps))|` for a
/// bias-free kernel and `alpha + beta = 1`: additive noise survives
/// convolution unchanged in form.
pub fn noise_persistence_check(x: &Tensor, eps: &Tensor, alpha: f64, beta: f64, kernel: &ConvKernel) -> Result<f64> {
    if (alpha + beta - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("mixing weights must sum to 1, got {alpha} + {beta}")));
    }
    if x.dims() != eps.dims() {
        return Err(Error::ShapeMismatch {
            op: "noise_persistence_check",
            left: x.dims().to_vec(),
            right: eps.dims().to_vec(),
        });
    }
    if kernel.biases.max_abs() != 0.0 {
        return Err(Error::invalid("noise persistence check requires a zero-bias kernel"));
    }
    let mixed = x.zip_with(eps, "mix", |u, v| alpha * u + beta * v)?;
    let lhs = conv2d(&mixed, kernel, Padding::Same)?;
    let cx = conv2d(x, kernel, Padding::Same)?;
    let ce = conv2d(eps, kernel, Padding::Same)?;
    Ok(lhs
        .data()
        .iter()
        .zip(cx.data().iter().zip(ce.data()))
        .map(|(l, (u, v))| (l - (alpha * u + beta * v)).abs())
        .fold(0.0, f64::max))
}
