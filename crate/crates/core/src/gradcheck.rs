//! Central finite-difference checks for every backward rule.
//!
//! Each check builds a random scalar objective `L = sum(proj * op(x))`,
//! differentiates it numerically by perturbing one input at a time, and
//! compares against the analytic backward pass fed with `proj`.

use crate::error::Result;
use crate::label::LabelMap;
use crate::layers::{BatchNormState, CffState, Mode};
use crate::rng::Rng;
use crate::tensor::{self, ConvKernel, Padding, Tensor};

pub const STEP: f64 = 1e-5;
/// Denominator floor for the relative error of near-zero gradients.
pub const FLOOR: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradReport {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Central-difference gradient of `loss` at `x`.
pub fn numeric_grad(x: &Tensor, mut loss: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.dims());
    for k in 0..x.len() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + STEP;
        let up = loss(&probe);
        probe.data_mut()[k] = orig - STEP;
        let down = loss(&probe);
        probe.data_mut()[k] = orig;
        grad.data_mut()[k] = (up - down) / (2.0 * STEP);
    }
    grad
}

pub fn max_rel_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| rel_error(a, n))
        .fold(0.0, f64::max)
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn normal(dims: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::from_fn(dims, |_| rng.normal())
}

struct Acc {
    name: String,
    worst: f64,
    checked: usize,
}

impl Acc {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            worst: 0.0,
            checked: 0,
        }
    }

    fn add(&mut self, analytic: &Tensor, numeric: &Tensor) {
        self.worst = self.worst.max(max_rel_error(analytic, numeric));
        self.checked += analytic.len();
    }

    fn finish(self) -> GradReport {
        GradReport {
            name: self.name,
            max_rel_error: self.worst,
            checked: self.checked,
        }
    }
}

pub fn check_conv2d(rng: &mut Rng) -> Result<GradReport> {
    let x = normal(&[5, 5, 3], rng);
    let k = ConvKernel::new(normal(&[3, 3, 3, 2], rng), normal(&[2], rng))?;
    let proj = normal(&[5, 5, 2], rng);
    let (gx, gk) = tensor::conv2d_backward(&proj, &x, &k, Padding::Same)?;
    let mut acc = Acc::new("conv2d");
    acc.add(&gx, &numeric_grad(&x, |x| dot(&proj, &tensor::conv2d(x, &k, Padding::Same).unwrap())));
    acc.add(
        &gk.weights,
        &numeric_grad(&k.weights, |w| {
            let kk = ConvKernel::new(w.clone(), k.biases.clone()).unwrap();
            dot(&proj, &tensor::conv2d(&x, &kk, Padding::Same).unwrap())
        }),
    );
    acc.add(
        &gk.biases,
        &numeric_grad(&k.biases, |b| {
            let kk = ConvKernel::new(k.weights.clone(), b.clone()).unwrap();
            dot(&proj, &tensor::conv2d(&x, &kk, Padding::Same).unwrap())
        }),
    );
    Ok(acc.finish())
}

pub fn check_batchnorm(rng: &mut Rng) -> Result<GradReport> {
    let x = normal(&[5, 5, 3], rng);
    let mut bn = BatchNormState::new(3);
    bn.gamma = normal(&[3], rng);
    bn.beta = normal(&[3], rng);
    let proj = normal(&[5, 5, 3], rng);
    let (_, cache) = bn.forward(&x, Mode::Train)?;
    let (gx, gg, gb) = bn.backward(&proj, &cache)?;
    let mut acc = Acc::new("batchnorm");
    acc.add(&gx, &numeric_grad(&x, |x| dot(&proj, &bn.forward(x, Mode::Train).unwrap().0)));
    let mut probe = bn.clone();
    acc.add(
        &gg,
        &numeric_grad(&bn.gamma, |g| {
            probe.gamma = g.clone();
            dot(&proj, &probe.forward(&x, Mode::Train).unwrap().0)
        }),
    );
    let mut probe = bn.clone();
    acc.add(
        &gb,
        &numeric_grad(&bn.beta, |b| {
            probe.beta = b.clone();
            dot(&proj, &probe.forward(&x, Mode::Train).unwrap().0)
        }),
    );
    Ok(acc.finish())
}

pub fn check_relu(rng: &mut Rng) -> Result<GradReport> {
    // keep inputs away from the kink
    let x = Tensor::from_fn(&[5, 5, 3], |_| {
        let v = rng.normal();
        if v.abs() < 0.05 {
            v.signum() * 0.05 + v
        } else {
            v
        }
    });
    let proj = normal(&[5, 5, 3], rng);
    let gx = tensor::relu_backward(&proj, &x)?;
    let mut acc = Acc::new("relu");
    acc.add(&gx, &numeric_grad(&x, |x| dot(&proj, &tensor::relu(x))));
    Ok(acc.finish())
}

pub fn check_sigmoid(rng: &mut Rng) -> Result<GradReport> {
    let x = normal(&[5, 5, 3], rng).scale(2.0);
    let proj = normal(&[5, 5, 3], rng);
    let gx = tensor::sigmoid_backward(&proj, &tensor::sigmoid(&x))?;
    let mut acc = Acc::new("sigmoid gate");
    acc.add(&gx, &numeric_grad(&x, |x| dot(&proj, &tensor::sigmoid(x))));
    Ok(acc.finish())
}

pub fn check_cff(rng: &mut Rng, kernel_size: usize) -> Result<GradReport> {
    let f = normal(&[5, 5, 3], rng);
    let mut cff = CffState::init(3, kernel_size, rng);
    cff.gate.biases = normal(&[3], rng).scale(0.5);
    let proj = normal(&[5, 5, 3], rng);
    let gate = cff.gate_values(&f)?;
    let (gf, gk) = cff.backward(&proj, &f, &gate)?;
    let mut acc = Acc::new(&format!("cff {kernel_size}x{kernel_size}"));
    acc.add(&gf, &numeric_grad(&f, |f| dot(&proj, &cff.forward(f).unwrap())));
    let mut probe = cff.clone();
    acc.add(
        &gk.weights,
        &numeric_grad(&cff.gate.weights, |w| {
            probe.gate.weights = w.clone();
            dot(&proj, &probe.forward(&f).unwrap())
        }),
    );
    let mut probe = cff.clone();
    acc.add(
        &gk.biases,
        &numeric_grad(&cff.gate.biases, |b| {
            probe.gate.biases = b.clone();
            dot(&proj, &probe.forward(&f).unwrap())
        }),
    );
    Ok(acc.finish())
}

pub fn check_maxpool2(rng: &mut Rng) -> Result<GradReport> {
    let x = normal(&[6, 6, 3], rng);
    let proj = normal(&[3, 3, 3], rng);
    let (_, idx) = tensor::maxpool2(&x)?;
    let gx = tensor::maxpool2_backward(&proj, &idx, x.dims())?;
    let mut acc = Acc::new("maxpool2");
    acc.add(&gx, &numeric_grad(&x, |x| dot(&proj, &tensor::maxpool2(x).unwrap().0)));
    Ok(acc.finish())
}

pub fn check_upsample2(rng: &mut Rng) -> Result<GradReport> {
    let x = normal(&[3, 3, 3], rng);
    let proj = normal(&[6, 6, 3], rng);
    let gx = tensor::upsample2_backward(&proj)?;
    let mut acc = Acc::new("upsample2");
    acc.add(&gx, &numeric_grad(&x, |x| dot(&proj, &tensor::upsample2(x).unwrap())));
    Ok(acc.finish())
}

pub fn check_concat(rng: &mut Rng) -> Result<GradReport> {
    let a = normal(&[4, 4, 2], rng);
    let b = normal(&[4, 4, 3], rng);
    let proj = normal(&[4, 4, 5], rng);
    let (ga, gb) = tensor::split_channels(&proj, 2)?;
    let mut acc = Acc::new("concat");
    acc.add(&ga, &numeric_grad(&a, |a| dot(&proj, &tensor::concat_channels(a, &b).unwrap())));
    acc.add(&gb, &numeric_grad(&b, |b| dot(&proj, &tensor::concat_channels(&a, b).unwrap())));
    Ok(acc.finish())
}

pub fn check_softmax_ce(rng: &mut Rng) -> Result<GradReport> {
    let logits = normal(&[2, 2, 3], rng);
    let labels = LabelMap::new(2, 2, 3, (0..4).map(|_| rng.int_range(0, 2) as u8).collect())?;
    let (_, grad) = crate::layers::softmax_ce_loss(&logits, &labels)?;
    let mut acc = Acc::new("softmax-ce");
    acc.add(
        &grad,
        &numeric_grad(&logits, |l| crate::layers::softmax_ce_loss(l, &labels).unwrap().0),
    );
    Ok(acc.finish())
}

/// Runs every layer-level check from one seed.
pub fn check_all(seed: u64) -> Result<Vec<GradReport>> {
    let mut rng = Rng::new(seed);
    Ok(vec![
        check_conv2d(&mut rng)?,
        check_batchnorm(&mut rng)?,
        check_relu(&mut rng)?,
        check_sigmoid(&mut rng)?,
        check_cff(&mut rng, 1)?,
        check_cff(&mut rng, 3)?,
        check_maxpool2(&mut rng)?,
        check_upsample2(&mut rng)?,
        check_concat(&mut rng)?,
        check_softmax_ce(&mut rng)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_layer_checks_pass() {
        for seed in [1, 2, 3] {
            for r in check_all(seed).unwrap() {
                eprintln!("{seed} {:<14} {:.3e} ({} entries)", r.name, r.max_rel_error, r.checked);
                assert!(r.passed(), "{} failed: {:e}", r.name, r.max_rel_error);
            }
        }
    }
}
