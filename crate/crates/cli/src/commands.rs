use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use featfilter::entropy::{
    binarize, binary_entropy, extract_pixel_signal, layer_entropy_pair, noise_persistence_check, reports_to_csv,
    theorem1_check, BinaryDistribution, Branch,
};
use featfilter::layers::{cff_forward, CffState};
use featfilter::metrics::{self, metrics_csv, MetricsRow};
use featfilter::nets::count_params;
use featfilter::rng::Rng;
use featfilter::synthdata::{generate, read_dataset, split, write_dataset, Dataset, Sample};
use featfilter::train::{
    self, evaluate_samples, load_checkpoint, mean_std, prepare_input, probe_entropy, train_run, ProbeTag, RunRecord,
};
use featfilter::{ConvKernel, LabelMap, Tensor};

use crate::config::{RunConfig, Split};
use crate::output::{Staging, CONFIG_ECHO};
use crate::{UsageError, VerificationFailed};

pub const VAL_METRICS: &str = "val_metrics.csv";
pub const LOSS_CSV: &str = "loss.csv";
pub const SUMMARY_CSV: &str = "summary.csv";

pub fn cmd_gen(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    let samples = generate(&config.scene, config.data.count, config.data.seed)?;
    let (train, validation) = split(&samples, config.data.train_fraction, config.data.seed)?;
    let stage = Staging::new(out)?;
    write_dataset(stage.path(), &Dataset { train, validation })?;
    stage.write(CONFIG_ECHO, config.to_text())?;
    stage.commit()
}

fn load_data(dir: &Path) -> Result<Dataset> {
    read_dataset(dir).with_context(|| format!("loading dataset from {}", dir.display()))
}

fn val_metrics_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut out = String::from("class_id,dice,hausdorff\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.class_id, r.dice, r.hausdorff);
    }
    let (d, h) = metrics::mean_seg(rows)?;
    let _ = writeln!(out, "mean_seg,{d},{h}");
    Ok(out)
}

fn write_run(dir: &Path, record: &RunRecord) -> Result<()> {
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    };
    write(LOSS_CSV, record.loss_csv())?;
    write(VAL_METRICS, val_metrics_csv(&record.val_metrics)?)
}

pub fn cmd_train(config: &RunConfig, data_dir: &Path, out: &Path) -> Result<PathBuf> {
    let data = load_data(data_dir)?;
    let stage = Staging::new(out)?;
    stage.write(CONFIG_ECHO, config.to_text())?;
    if config.runs == 1 {
        let record = train_run(&config.net, &data, &config.train, Some(stage.path()))?;
        write_run(stage.path(), &record)?;
        eprintln!(
            "trained {} epochs, best epoch {} (val loss {})",
            record.val_loss.len(),
            record.best_epoch,
            record.best_val_loss()
        );
    } else {
        let (runs, summary) = train::multi_seed(&config.net, &data, &config.train, config.runs, Some(stage.path()))?;
        for (k, record) in runs.iter().enumerate() {
            write_run(&stage.path().join(format!("seed_{}", config.train.seed + k as u64)), record)?;
        }
        let mut csv = String::from("metric,mean,std\n");
        for c in &summary.classes {
            let _ = writeln!(csv, "dice_{},{},{}", c.class_id, c.dice.0, c.dice.1);
            let _ = writeln!(csv, "hausdorff_{},{},{}", c.class_id, c.hausdorff.0, c.hausdorff.1);
        }
        let _ = writeln!(csv, "dice_mean_seg,{},{}", summary.mean_seg_dice.0, summary.mean_seg_dice.1);
        let _ = writeln!(csv, "hausdorff_mean_seg,{},{}", summary.mean_seg_hausdorff.0, summary.mean_seg_hausdorff.1);
        let _ = writeln!(csv, "best_val_loss,{},{}", summary.best_val_loss.0, summary.best_val_loss.1);
        stage.write(SUMMARY_CSV, csv)?;
    }
    stage.commit()
}

fn select(data: Dataset, which: Split) -> Vec<Sample> {
    match which {
        Split::Train => data.train,
        Split::Val => data.validation,
        Split::All => data.train.into_iter().chain(data.validation).collect(),
    }
}

/// Checkpoint directory of a run. Multi-seed runs resolve to their first seed.
pub fn checkpoint_dir(run: &Path, tag: ProbeTag) -> Result<PathBuf> {
    let direct = run.join("ckpt").join(tag.to_string());
    if direct.is_dir() {
        return Ok(direct);
    }
    if let Some(first) = seed_dirs(run)?.first() {
        return Ok(first.join("ckpt").join(tag.to_string()));
    }
    Ok(direct)
}

fn seed_dirs(run: &Path) -> Result<Vec<PathBuf>> {
    let Ok(entries) = std::fs::read_dir(run) else {
        return Ok(Vec::new());
    };
    let mut dirs: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.with_context(|| format!("reading {}", run.display()))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(seed) = name.strip_prefix("seed_").and_then(|s| s.parse().ok()) {
            dirs.push((seed, entry.path()));
        }
    }
    dirs.sort();
    Ok(dirs.into_iter().map(|(_, p)| p).collect())
}

pub fn cmd_eval(config: &RunConfig, data_dir: &Path, checkpoint: &Path, out: &Path) -> Result<PathBuf> {
    let graph = load_checkpoint(checkpoint).with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let samples = select(load_data(data_dir)?, config.eval_split);
    let rows = evaluate_samples(&graph, &samples, config.train.normalize)?;
    let csv = metrics_csv(&rows)?;
    let stage = Staging::new(out)?;
    stage.write(CONFIG_ECHO, config.to_text())?;
    stage.write("metrics.csv", csv)?;
    stage.commit()
}

pub fn cmd_probe(config: &RunConfig, data_dir: &Path, run: &Path, out: &Path) -> Result<PathBuf> {
    let data = load_data(data_dir)?;
    let Some(center_sample) = data.validation.get(config.probe_sample) else {
        bail!(UsageError(format!(
            "probe.sample {} is out of range for {} validation samples",
            config.probe_sample,
            data.validation.len()
        )));
    };
    let stage = Staging::new(out)?;
    stage.write(CONFIG_ECHO, config.to_text())?;
    let mut reports = Vec::new();
    for &tag in &config.probe_tags {
        let dir = checkpoint_dir(run, tag)?;
        let graph = load_checkpoint(&dir).with_context(|| format!("loading checkpoint {}", dir.display()))?;
        if graph.filtered_blocks().is_empty() {
            bail!(UsageError(format!(
                "checkpoint {} has no feature filters to probe (trained with net.cff = off)",
                dir.display()
            )));
        }
        reports.extend(probe_entropy(&graph, &data.validation, config.train.normalize, &tag.to_string())?);

        let taps = graph.probe(&prepare_input(center_sample, config.train.normalize))?;
        let mut csv = String::from("layer_index,channel,f_value,d_value\n");
        for (layer, (f, d)) in taps.iter().enumerate() {
            let (h, w, _) = f.hwc()?;
            let fs = extract_pixel_signal(f, h / 2, w / 2)?;
            let ds = extract_pixel_signal(d, h / 2, w / 2)?;
            for (c, (fv, dv)) in fs.iter().zip(&ds).enumerate() {
                let _ = writeln!(csv, "{layer},{c},{fv},{dv}");
            }
        }
        stage.write(&format!("center_signal_{tag}.csv"), csv)?;
    }
    stage.write("entropy.csv", reports_to_csv(&reports))?;
    stage.commit()
}

/// Mean and std of the per-seed rows of one run directory.
struct RunSummary {
    metrics: Vec<(String, (f64, f64))>,
    classes: Vec<usize>,
    params: usize,
}

fn read_val_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        let [class, dice, hd] = parts[..] else {
            bail!("{}: malformed line {line:?}", path.display());
        };
        if class == "mean_seg" {
            continue;
        }
        let parse = |v: &str| v.parse::<f64>().with_context(|| format!("{}: bad number {v:?}", path.display()));
        rows.push(MetricsRow {
            class_id: class.parse().with_context(|| format!("{}: bad class {class:?}", path.display()))?,
            dice: parse(dice)?,
            hausdorff: parse(hd)?,
        });
    }
    Ok(rows)
}

fn read_best_loss(path: &Path) -> Result<f64> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut best = f64::INFINITY;
    for line in text.lines().skip(1) {
        let v = line
            .rsplit(',')
            .next()
            .and_then(|v| v.parse::<f64>().ok())
            .with_context(|| format!("{}: malformed line {line:?}", path.display()))?;
        best = best.min(v);
    }
    Ok(best)
}

fn summarize_run(run: &Path) -> Result<RunSummary> {
    let mut dirs = seed_dirs(run)?;
    if dirs.is_empty() {
        dirs.push(run.to_path_buf());
    }
    let mut per_seed = Vec::new();
    let mut losses = Vec::new();
    for d in &dirs {
        per_seed.push(read_val_metrics(&d.join(VAL_METRICS))?);
        losses.push(read_best_loss(&d.join(LOSS_CSV))?);
    }
    let classes: Vec<usize> = per_seed[0].iter().map(|r| r.class_id).collect();
    if per_seed.iter().any(|rows| rows.iter().map(|r| r.class_id).ne(classes.iter().copied())) {
        bail!("{}: seeds disagree on the class set", run.display());
    }
    let mut out = Vec::new();
    let column = |k: usize, f: fn(&MetricsRow) -> f64| -> Vec<f64> { per_seed.iter().map(|rows| f(&rows[k])).collect() };
    for (k, c) in classes.iter().enumerate() {
        out.push((format!("dice_{c}"), mean_std(&column(k, |r| r.dice))));
        out.push((format!("hausdorff_{c}"), mean_std(&column(k, |r| r.hausdorff))));
    }
    let segs = per_seed.iter().map(|rows| metrics::mean_seg(rows)).collect::<featfilter::Result<Vec<_>>>()?;
    out.push(("dice_mean_seg".into(), mean_std(&segs.iter().map(|s| s.0).collect::<Vec<_>>())));
    out.push(("hausdorff_mean_seg".into(), mean_std(&segs.iter().map(|s| s.1).collect::<Vec<_>>())));
    out.push(("best_val_loss".into(), mean_std(&losses)));
    let ckpt = dirs[0].join("ckpt").join(ProbeTag::Em.to_string());
    let graph = load_checkpoint(&ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    Ok(RunSummary {
        metrics: out,
        classes,
        params: count_params(&graph),
    })
}

/// Side-by-side mean/std of two runs with `b - a` deltas.
pub fn compare_csv(run_a: &Path, run_b: &Path) -> Result<String> {
    let a = summarize_run(run_a)?;
    let b = summarize_run(run_b)?;
    if a.classes != b.classes {
        bail!(UsageError(format!(
            "incompatible class sets: {:?} in {} vs {:?} in {}",
            a.classes,
            run_a.display(),
            b.classes,
            run_b.display()
        )));
    }
    let mut csv = String::from("metric,a_mean,a_std,b_mean,b_std,delta\n");
    for ((name, (am, asd)), (_, (bm, bsd))) in a.metrics.iter().zip(&b.metrics) {
        let _ = writeln!(csv, "{name},{am},{asd},{bm},{bsd},{}", bm - am);
    }
    let _ = writeln!(
        csv,
        "params,{},0,{},0,{}",
        a.params,
        b.params,
        b.params as i64 - a.params as i64
    );
    Ok(csv)
}

pub fn cmd_compare(config: &RunConfig, run_a: &Path, run_b: &Path, out: &Path) -> Result<PathBuf> {
    let csv = compare_csv(run_a, run_b)?;
    let stage = Staging::new(out)?;
    let mut echo = config.to_text();
    let _ = writeln!(echo, "# run a: {}\n# run b: {}", run_a.display(), run_b.display());
    stage.write(CONFIG_ECHO, echo)?;
    stage.write("compare.csv", csv)?;
    stage.commit()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Grad,
    Entropy,
    Theorem1,
    Linearity,
    Metrics,
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "grad" => Ok(Self::Grad),
            "entropy" => Ok(Self::Entropy),
            "theorem1" => Ok(Self::Theorem1),
            "linearity" => Ok(Self::Linearity),
            "metrics" => Ok(Self::Metrics),
            _ => Err(format!("unknown suite {s:?} (expected grad|entropy|theorem1|linearity|metrics)")),
        }
    }
}

pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn line(name: impl Into<String>, passed: bool, detail: String) -> CheckLine {
    CheckLine {
        name: name.into(),
        passed,
        detail,
    }
}

fn random_tensor(rng: &mut Rng, dims: &[usize], scale: f64) -> Tensor {
    Tensor::from_fn(dims, |_| scale * rng.normal())
}

pub fn run_suite(suite: Suite, config: &RunConfig) -> Result<Vec<CheckLine>> {
    let c = &config.check;
    let mut out = Vec::new();
    match suite {
        Suite::Grad => {
            for r in featfilter::gradcheck::check_all(c.seed)? {
                out.push(line(
                    format!("grad {}", r.name),
                    r.passed(),
                    format!("max rel error {:.3e} over {} entries", r.max_rel_error, r.checked),
                ));
            }
        }
        Suite::Entropy => {
            let cases: [(&str, Vec<f64>, (f64, f64)); 2] = [
                ("binarize constant", vec![0.3; 4], (0.5, 0.5)),
                ("binarize [0,10,10,10]", vec![0.0, 10.0, 10.0, 10.0], (0.25, 0.75)),
            ];
            for (name, p, (a, b)) in cases {
                let got = binarize(&p);
                out.push(line(name, got.a == a && got.b == b, format!("got {{{}, {}}}", got.a, got.b)));
            }
            let h = binary_entropy(&BinaryDistribution {
                a: 0.5,
                b: 0.5,
                branch: Branch::Split,
            });
            out.push(line("entropy of {0.5,0.5}", h == 1.0, format!("got {h}")));

            let mut rng = Rng::named(c.seed, "check-entropy");
            let (mut bad_amp, mut bad_sign, mut bad_range) = (0, 0, 0);
            for _ in 0..c.trials {
                let ch = rng.int_range(1, 4) as usize;
                let f = random_tensor(&mut rng, &[4, 5, ch], 2.0);
                let mut gate = CffState::init(ch, 1, &mut rng);
                for b in gate.gate.biases.data_mut() {
                    *b = 4.0 * rng.normal();
                }
                let d = cff_forward(&f, &gate)?;
                for (fv, dv) in f.data().iter().zip(d.data()) {
                    if dv.abs() > fv.abs() || (*fv != 0.0 && dv.abs() >= fv.abs()) {
                        bad_amp += 1;
                    }
                    if fv.signum() != dv.signum() && *fv != 0.0 {
                        bad_sign += 1;
                    }
                }
                let (hf, hd) = layer_entropy_pair(&f, &d)?;
                if !(0.0..=1.0).contains(&hf) || !(0.0..=1.0).contains(&hd) {
                    bad_range += 1;
                }
            }
            out.push(line("low-amplitude pass", bad_amp == 0, format!("{bad_amp} violations over {} pairs", c.trials)));
            out.push(line("sign preservation", bad_sign == 0, format!("{bad_sign} violations")));
            out.push(line("entropy in [0, 1]", bad_range == 0, format!("{bad_range} violations")));
        }
        Suite::Theorem1 => {
            let (mu, sigma, a, b) = (0.0, 1.0, 2.0, 3.0);
            let n = c.samples;
            if n < 2 {
                bail!(UsageError("check.samples must be at least 2".into()));
            }
            let (mean, var) = theorem1_check(mu, sigma, a, b, n, c.seed)?;
            let target_mean = a * mu + b;
            let target_var = a * a * sigma * sigma;
            let se_mean = (target_var / n as f64).sqrt();
            let se_var = target_var * (2.0 / (n as f64 - 1.0)).sqrt();
            let dm = (mean - target_mean).abs();
            let dv = (var - target_var).abs();
            out.push(line(
                "theorem1 mean",
                dm <= 3.0 * se_mean,
                format!("{mean} vs {target_mean} ({:.2} standard errors)", dm / se_mean),
            ));
            out.push(line(
                "theorem1 variance",
                dv <= 3.0 * se_var,
                format!("{var} vs {target_var} ({:.2} standard errors)", dv / se_var),
            ));
        }
        Suite::Linearity => {
            let mut rng = Rng::named(c.seed, "check-linearity");
            let mut worst: f64 = 0.0;
            for _ in 0..c.trials {
                let cin = rng.int_range(1, 3) as usize;
                let cout = rng.int_range(1, 3) as usize;
                let k = [1, 3][rng.int_range(0, 1) as usize];
                let x = random_tensor(&mut rng, &[6, 6, cin], 1.0);
                let eps = random_tensor(&mut rng, &[6, 6, cin], 0.1);
                let kernel = ConvKernel::new(
                    random_tensor(&mut rng, &[k, k, cin, cout], 1.0),
                    Tensor::zeros(&[cout]),
                )?;
                let alpha = rng.uniform();
                let beta = 1.0 - alpha;
                worst = worst.max(noise_persistence_check(&x, &eps, alpha, beta, &kernel)?);
            }
            out.push(line(
                "conv linearity",
                worst < 1e-10,
                format!("max residual {worst:.3e} over {} trials", c.trials),
            ));
        }
        Suite::Metrics => {
            let map = |data: &[u8]| LabelMap::new(2, 2, 2, data.to_vec());
            let a = map(&[1, 1, 0, 0])?;
            let b = map(&[0, 0, 1, 1])?;
            let half = map(&[1, 0, 1, 0])?;
            let cases = [
                ("dice identical", metrics::dice(&a, &a, 1)?, 1.0),
                ("dice disjoint", metrics::dice(&a, &b, 1)?, 0.0),
                ("dice half overlap", metrics::dice(&a, &half, 1)?, 0.5),
            ];
            for (name, got, want) in cases {
                out.push(line(name, got == want, format!("got {got}, want {want}")));
            }
            let mut p = LabelMap::filled(5, 5, 2, 0)?;
            let mut g = LabelMap::filled(5, 5, 2, 0)?;
            p.set(0, 0, 1);
            g.set(3, 4, 1);
            let hd = metrics::hausdorff(&p, &g, 1)?;
            out.push(line("hausdorff (0,0)/(3,4)", hd == 5.0, format!("got {hd}")));
        }
    }
    Ok(out)
}

pub fn cmd_check(suite: Suite, config: &RunConfig) -> Result<()> {
    let lines = run_suite(suite, config)?;
    let mut failed = 0;
    for l in &lines {
        println!("{} {}: {}", if l.passed { "PASS" } else { "FAIL" }, l.name, l.detail);
        failed += usize::from(!l.passed);
    }
    if failed > 0 {
        bail!(VerificationFailed(format!("{failed} of {} checks failed", lines.len())));
    }
    Ok(())
}
