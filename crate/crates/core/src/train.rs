//! Adam training of layer graphs against pixel-wise cross-entropy.
//!
//! One run trains with batch size 1, records the mean train loss and the
//! eval-mode validation loss per epoch, and snapshots the parameters at the
//! five probe epochs: first (`Es`), best validation loss (`Em`), last (`En`),
//! and the midpoints `Esm` (between `Es` and `Em`) and `Enm` (between `Em`
//! and `En`).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::entropy::{layer_entropy_pair, EntropyReport};
use crate::error::{Error, Result};
use crate::layers::{softmax_ce_loss, Mode};
use crate::metrics::{self, MetricsRow};
use crate::nets::{build, parse_switch, LayerGraph, NetworkSpec};
use crate::rng::Rng;
use crate::synthdata::{normalize_image, random_augment, AugmentMode, Dataset, Sample};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Drives the per-epoch sample order and augmentation draws.
    pub seed: u64,
    /// Standardize every input image to zero mean and unit variance.
    pub normalize: bool,
    pub augment: Option<AugmentMode>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 1e-3,
            batch_size: 1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            normalize: true,
            augment: None,
        }
    }
}

impl TrainConfig {
    /// `key = value` lines under the `train.` prefix.
    pub fn to_text(&self) -> String {
        format!(
            "train.epochs = {}\ntrain.learning_rate = {}\ntrain.batch_size = {}\ntrain.beta1 = {}\ntrain.beta2 = {}\ntrain.epsilon = {}\ntrain.seed = {}\ntrain.normalize = {}\ntrain.augment = {}\n",
            self.epochs,
            self.learning_rate,
            self.batch_size,
            self.beta1,
            self.beta2,
            self.epsilon,
            self.seed,
            if self.normalize { "on" } else { "off" },
            self.augment.map_or("off".to_string(), |m| m.to_string())
        )
    }

    /// Applies one `train.*` setting. Returns `false` for other keys.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
        }
        match key {
            "train.epochs" => self.epochs = num(key, value)?,
            "train.learning_rate" => self.learning_rate = num(key, value)?,
            "train.batch_size" => self.batch_size = num(key, value)?,
            "train.beta1" => self.beta1 = num(key, value)?,
            "train.beta2" => self.beta2 = num(key, value)?,
            "train.epsilon" => self.epsilon = num(key, value)?,
            "train.seed" => self.seed = num(key, value)?,
            "train.normalize" => self.normalize = parse_switch(key, value)?,
            "train.augment" => {
                self.augment = match value {
                    "off" | "none" => None,
                    other => Some(other.parse()?),
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::invalid("learning_rate must be non-negative"));
        }
        if self.batch_size != 1 {
            return Err(Error::invalid("only batch_size = 1 is supported"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::invalid("adam betas must lie in [0, 1) and epsilon be positive"));
        }
        Ok(())
    }
}

/// Adam moment estimates for a list of parameter tensors.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    /// Number of completed steps.
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.dims())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.dims())).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Shapes are checked before anything is
/// written, so a failed call leaves parameters and state untouched.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[&Tensor], state: &mut AdamState, config: &TrainConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::LengthMismatch {
            left: params.len(),
            right: grads.len(),
        });
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.dims() != g.dims() || p.dims() != m.dims() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                left: p.dims().to_vec(),
                right: g.dims().to_vec(),
            });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (k, p) in params.iter_mut().enumerate() {
        let g = grads[k].data();
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        for (i, w) in p.data_mut().iter_mut().enumerate() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *w -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProbeTag {
    Es,
    Esm,
    Em,
    Enm,
    En,
}

impl ProbeTag {
    pub const ALL: [ProbeTag; 5] = [Self::Es, Self::Esm, Self::Em, Self::Enm, Self::En];

    /// 1-based epoch of each tag given the best epoch and the epoch count.
    pub fn epoch(self, best: usize, epochs: usize) -> usize {
        match self {
            Self::Es => 1,
            Self::Esm => (1 + best) / 2,
            Self::Em => best,
            Self::Enm => (best + epochs) / 2,
            Self::En => epochs,
        }
    }
}

impl std::fmt::Display for ProbeTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Es => "Es",
            Self::Esm => "Esm",
            Self::Em => "Em",
            Self::Enm => "Enm",
            Self::En => "En",
        })
    }
}

impl std::str::FromStr for ProbeTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|t| t.to_string() == s)
            .ok_or_else(|| format!("unknown probe tag {s:?} (expected Es|Esm|Em|Enm|En)"))
    }
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub tag: ProbeTag,
    pub epoch: usize,
    pub graph: LayerGraph,
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch of the minimum validation loss (earliest on ties).
    pub best_epoch: usize,
    pub checkpoints: Vec<Checkpoint>,
    /// Per-class validation metrics of the `Em` checkpoint.
    pub val_metrics: Vec<MetricsRow>,
}

impl RunRecord {
    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch - 1]
    }

    pub fn checkpoint(&self, tag: ProbeTag) -> &Checkpoint {
        self.checkpoints.iter().find(|c| c.tag == tag).expect("all tags are recorded")
    }

    pub fn mean_seg(&self) -> Result<(f64, f64)> {
        metrics::mean_seg(&self.val_metrics)
    }

    pub fn loss_csv(&self) -> String {
        loss_csv(&self.train_loss, &self.val_loss)
    }
}

pub fn loss_csv(train: &[f64], val: &[f64]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for (k, (t, v)) in train.iter().zip(val).enumerate() {
        let _ = writeln!(out, "{},{t},{v}", k + 1);
    }
    out
}

/// Index of the minimum, earliest on ties.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = k;
        }
    }
    best
}

/// Model input for a sample under the run's preprocessing.
pub fn prepare_input(sample: &Sample, normalize: bool) -> Tensor {
    if normalize {
        normalize_image(&sample.image)
    } else {
        sample.image.clone()
    }
}

/// Mean eval-mode cross-entropy over `samples`.
pub fn validation_loss(graph: &LayerGraph, samples: &[Sample], normalize: bool) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    let mut total = 0.0;
    for s in samples {
        let logits = graph.forward(&prepare_input(s, normalize), Mode::Eval)?;
        total += softmax_ce_loss(&logits, &s.label)?.0;
    }
    Ok(total / samples.len() as f64)
}

/// Per-sample foreground metrics of eval-mode predictions.
pub fn evaluate_samples(graph: &LayerGraph, samples: &[Sample], normalize: bool) -> Result<Vec<(usize, Vec<MetricsRow>)>> {
    samples
        .iter()
        .map(|s| {
            if s.label.classes() != graph.spec().num_classes {
                return Err(Error::invalid(format!(
                    "sample {} has {} classes, network predicts {}",
                    s.id,
                    s.label.classes(),
                    graph.spec().num_classes
                )));
            }
            let pred = graph.predict(&prepare_input(s, normalize))?;
            Ok((s.id, metrics::evaluate(&pred, &s.label)?))
        })
        .collect()
}

/// Per-class means over samples.
pub fn mean_rows(per_sample: &[(usize, Vec<MetricsRow>)]) -> Vec<MetricsRow> {
    let Some((_, first)) = per_sample.first() else {
        return Vec::new();
    };
    let n = per_sample.len() as f64;
    first
        .iter()
        .enumerate()
        .map(|(k, row)| MetricsRow {
            class_id: row.class_id,
            dice: per_sample.iter().map(|(_, r)| r[k].dice).sum::<f64>() / n,
            hausdorff: per_sample.iter().map(|(_, r)| r[k].hausdorff).sum::<f64>() / n,
        })
        .collect()
}

fn non_finite_detail(graph: &LayerGraph, x: &Tensor, loss: f64) -> String {
    let Ok(trace) = graph.forward_trace(x, Mode::Train) else {
        return format!("loss {loss}");
    };
    for (k, node) in graph.nodes().iter().enumerate() {
        if !trace.node_output(k).is_finite() {
            return format!("loss {loss}; first non-finite output at node {k} ({node:?})");
        }
    }
    format!("loss {loss}; all layer outputs finite")
}

/// Writes `manifest.txt`, the FSM1 tensors and `spec.txt` for one graph.
pub fn save_checkpoint(graph: &LayerGraph, dir: &Path) -> Result<()> {
    graph.save_params(dir)?;
    let path = dir.join("spec.txt");
    std::fs::write(&path, graph.spec().to_text()).map_err(|e| Error::io(&path, e))
}

/// Rebuilds a graph from a checkpoint directory.
pub fn load_checkpoint(dir: &Path) -> Result<LayerGraph> {
    let path = dir.join("spec.txt");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let spec = NetworkSpec::parse(&text).map_err(|reason| Error::Format {
        kind: "spec",
        path: path.clone(),
        reason,
    })?;
    let mut graph = build(&spec)?;
    graph.load_params(dir)?;
    Ok(graph)
}

/// Trains one network. With `out`, writes `loss.csv` and
/// `ckpt/<tag>/` directories under it.
pub fn train_run(spec: &NetworkSpec, data: &Dataset, config: &TrainConfig, out: Option<&Path>) -> Result<RunRecord> {
    config.validate()?;
    if data.train.is_empty() || data.validation.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let mut graph = build(spec)?;
    let params: Vec<&Tensor> = graph.trainable().into_iter().map(|(_, t)| t).collect();
    let mut adam = AdamState::new(&params);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut shuffler = Rng::named(config.seed, "order");
    let mut train_loss = Vec::with_capacity(config.epochs);
    let mut val_loss = Vec::with_capacity(config.epochs);
    let mut snapshots = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        shuffler.shuffle(&mut order);
        let mut total = 0.0;
        for &k in &order {
            let sample = match config.augment {
                Some(mode) => random_augment(&data.train[k], mode, config.seed ^ (epoch as u64) << 32),
                None => data.train[k].clone(),
            };
            let x = prepare_input(&sample, config.normalize);
            let trace = graph.forward_trace(&x, Mode::Train)?;
            let (loss, grad) = softmax_ce_loss(trace.logits(), &sample.label)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    detail: non_finite_detail(&graph, &x, loss),
                });
            }
            total += loss;
            let grads = graph.backward(&trace, &grad)?;
            let grad_refs = grads.tensors();
            if let Some(k) = grad_refs.iter().position(|g| !g.is_finite()) {
                let name = graph.trainable().swap_remove(k).0;
                return Err(Error::NonFinite {
                    epoch,
                    detail: format!("gradient of {name} (sample {}); {}", sample.id, non_finite_detail(&graph, &x, loss)),
                });
            }
            graph.update_running(&trace);
            adam_step(&mut graph.trainable_mut(), &grad_refs, &mut adam, config)?;
        }
        train_loss.push(total / data.train.len() as f64);
        let v = validation_loss(&graph, &data.validation, config.normalize)?;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                detail: format!("validation loss {v}"),
            });
        }
        val_loss.push(v);
        snapshots.push(graph.clone());
    }

    let best_epoch = argmin(&val_loss) + 1;
    let mut checkpoints = Vec::with_capacity(ProbeTag::ALL.len());
    for tag in ProbeTag::ALL {
        let epoch = tag.epoch(best_epoch, config.epochs);
        let path = match out {
            Some(dir) => {
                let p = dir.join("ckpt").join(tag.to_string());
                save_checkpoint(&snapshots[epoch - 1], &p)?;
                Some(p)
            }
            None => None,
        };
        checkpoints.push(Checkpoint {
            tag,
            epoch,
            graph: snapshots[epoch - 1].clone(),
            path,
        });
    }
    let best = &snapshots[best_epoch - 1];
    let val_metrics = mean_rows(&evaluate_samples(best, &data.validation, config.normalize)?);
    let record = RunRecord {
        train_loss,
        val_loss,
        best_epoch,
        checkpoints,
        val_metrics,
    };
    if let Some(dir) = out {
        let path = dir.join("loss.csv");
        std::fs::write(&path, record.loss_csv()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(record)
}

/// Per-layer entropies of the filtered blocks, averaged over `samples`.
/// `delta` is the difference of the averaged `hd` and `hf`.
pub fn probe_entropy(graph: &LayerGraph, samples: &[Sample], normalize: bool, tag: &str) -> Result<Vec<EntropyReport>> {
    if samples.is_empty() {
        return Err(Error::invalid("probe set is empty"));
    }
    let mut sums: Vec<(f64, f64)> = Vec::new();
    for s in samples {
        let pairs = graph.probe(&prepare_input(s, normalize))?;
        sums.resize(pairs.len(), (0.0, 0.0));
        for (acc, (f, d)) in sums.iter_mut().zip(&pairs) {
            let (hf, hd) = layer_entropy_pair(f, d)?;
            acc.0 += hf;
            acc.1 += hd;
        }
    }
    let n = samples.len() as f64;
    Ok(sums
        .iter()
        .enumerate()
        .map(|(k, &(hf, hd))| EntropyReport::new(k, tag, hf / n, hd / n))
        .collect())
}

/// Mean and sample standard deviation (`n - 1`), two-pass.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassSummary {
    pub class_id: usize,
    pub dice: (f64, f64),
    pub hausdorff: (f64, f64),
}

/// Mean and std across seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedSummary {
    pub classes: Vec<ClassSummary>,
    pub mean_seg_dice: (f64, f64),
    pub mean_seg_hausdorff: (f64, f64),
    pub best_val_loss: (f64, f64),
}

pub fn summarize(runs: &[RunRecord]) -> Result<SeedSummary> {
    let Some(first) = runs.first() else {
        return Err(Error::invalid("no runs to summarize"));
    };
    let classes = first
        .val_metrics
        .iter()
        .enumerate()
        .map(|(k, row)| ClassSummary {
            class_id: row.class_id,
            dice: mean_std(&runs.iter().map(|r| r.val_metrics[k].dice).collect::<Vec<_>>()),
            hausdorff: mean_std(&runs.iter().map(|r| r.val_metrics[k].hausdorff).collect::<Vec<_>>()),
        })
        .collect();
    let segs = runs.iter().map(RunRecord::mean_seg).collect::<Result<Vec<_>>>()?;
    Ok(SeedSummary {
        classes,
        mean_seg_dice: mean_std(&segs.iter().map(|s| s.0).collect::<Vec<_>>()),
        mean_seg_hausdorff: mean_std(&segs.iter().map(|s| s.1).collect::<Vec<_>>()),
        best_val_loss: mean_std(&runs.iter().map(RunRecord::best_val_loss).collect::<Vec<_>>()),
    })
}

/// Trains one run per seed; each seed drives both initialization and sample
/// order. With `out`, run `k` writes under `out/seed_<seed>/`.
pub fn multi_seed_with(
    spec: &NetworkSpec,
    data: &Dataset,
    config: &TrainConfig,
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<(Vec<RunRecord>, SeedSummary)> {
    if seeds.len() < 2 {
        return Err(Error::invalid("multi-seed runs need at least two seeds"));
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let spec = NetworkSpec { seed, ..spec.clone() };
        let config = TrainConfig { seed, ..config.clone() };
        let dir = out.map(|d| d.join(format!("seed_{seed}")));
        runs.push(train_run(&spec, data, &config, dir.as_deref())?);
    }
    let summary = summarize(&runs)?;
    Ok((runs, summary))
}

/// Seeds `config.seed .. config.seed + n_seeds`.
pub fn multi_seed(
    spec: &NetworkSpec,
    data: &Dataset,
    config: &TrainConfig,
    n_seeds: usize,
    out: Option<&Path>,
) -> Result<(Vec<RunRecord>, SeedSummary)> {
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|k| config.seed + k).collect();
    multi_seed_with(spec, data, config, &seeds, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_params() {
        let before = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let mut p = before.clone();
        let g = Tensor::zeros(&[3]);
        let mut state = AdamState::new(&[&p]);
        adam_step(&mut [&mut p], &[&g], &mut state, &TrainConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.t, 1);

        let mut state = AdamState::new(&[&p]);
        state.m[0] = Tensor::full(&[3], 0.1);
        state.v[0] = Tensor::full(&[3], 0.2);
        let config = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        adam_step(&mut [&mut p], &[&g], &mut state, &config).unwrap();
        assert_eq!(p, before);
        assert!(state.m[0].data().iter().all(|&m| (m - 0.09).abs() < 1e-15));
        assert!(state.v[0].data().iter().all(|&v| (v - 0.1998).abs() < 1e-15));
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Tensor::new(vec![3], vec![0.0, 0.0, 0.0]).unwrap();
        let g = Tensor::new(vec![3], vec![3.0, -0.2, 1e-3]).unwrap();
        let mut state = AdamState::new(&[&p]);
        let config = TrainConfig::default();
        adam_step(&mut [&mut p], &[&g], &mut state, &config).unwrap();
        for (w, gv) in p.data().iter().zip(g.data()) {
            let expect = -config.learning_rate * gv.signum();
            assert!((w - expect).abs() < 1e-7, "{w} vs {expect}");
        }
    }

    #[test]
    fn converges_on_scalar_quadratic() {
        let config = TrainConfig {
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let target = 0.1;
        let mut p = Tensor::new(vec![1], vec![0.0]).unwrap();
        let mut state = AdamState::new(&[&p]);
        for _ in 0..100 {
            let g = Tensor::new(vec![1], vec![2.0 * (p.data()[0] - target)]).unwrap();
            adam_step(&mut [&mut p], &[&g], &mut state, &config).unwrap();
        }
        assert!((p.data()[0] - target).abs() < 1e-3, "{}", p.data()[0]);
    }

    #[test]
    fn shape_mismatch_is_atomic() {
        let mut a = Tensor::zeros(&[2]);
        let mut b = Tensor::zeros(&[3]);
        let ga = Tensor::full(&[2], 1.0);
        let gb = Tensor::full(&[2], 1.0);
        let mut state = AdamState::new(&[&a, &b]);
        assert!(adam_step(&mut [&mut a, &mut b], &[&ga, &gb], &mut state, &TrainConfig::default()).is_err());
        assert_eq!(a.max_abs(), 0.0);
        assert_eq!(state.t, 0);
    }

    #[test]
    fn probe_tag_epochs() {
        assert_eq!(ProbeTag::ALL.map(|t| t.epoch(7, 20)), [1, 4, 7, 13, 20]);
        assert_eq!(ProbeTag::ALL.map(|t| t.epoch(1, 1)), [1; 5]);
        assert_eq!("Enm".parse::<ProbeTag>().unwrap(), ProbeTag::Enm);
        assert!("E".parse::<ProbeTag>().is_err());
    }

    #[test]
    fn argmin_prefers_earliest() {
        assert_eq!(argmin(&[3.0, 1.0, 2.0, 1.0]), 1);
    }

    #[test]
    fn mean_std_matches_two_pass() {
        let xs = [1.0, 2.0, 4.0, 7.0];
        let (m, s) = mean_std(&xs);
        assert_eq!(m, 3.5);
        let ss: f64 = xs.iter().map(|x| (x - 3.5) * (x - 3.5)).sum();
        assert!((s - (ss / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[2.0, 2.0]), (2.0, 0.0));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(TrainConfig {
            batch_size: 2,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn config_text_round_trip() {
        let config = TrainConfig {
            epochs: 3,
            learning_rate: 0.0025,
            seed: 9,
            normalize: false,
            augment: Some(AugmentMode::Translate),
            ..TrainConfig::default()
        };
        let mut back = TrainConfig::default();
        for line in config.to_text().lines() {
            let (k, v) = line.split_once('=').unwrap();
            assert!(back.set(k.trim(), v.trim()).unwrap(), "{k}");
        }
        assert_eq!(back, config);
        assert!(!back.set("scene.image_size", "8").unwrap());
    }
}
