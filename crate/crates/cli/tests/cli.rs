use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const GOLDEN_LOSS_CSV: &str = "epoch,train_loss,val_loss
1,1.6053721879732177,1.431501661347058
2,1.4207779110427066,1.2864189707325666
";

fn featfilter(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_featfilter"))
        .args(args)
        .env("FEATFILTER_OUT", root)
        .current_dir(root)
        .output()
        .unwrap()
}

fn ok(root: &Path, args: &[&str]) -> String {
    let out = featfilter(root, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

/// Four-sample dataset and two-epoch runs with seed 7.
fn tiny(root: &Path) {
    ok(root, &["gen", "--count", "4", "--seed", "7"]);
}

fn train_tiny(root: &Path, cff: &str) -> PathBuf {
    let out = ok(root, &["train", "--seed", "7", "--cff", cff, "--set", "train.epochs=2"]);
    PathBuf::from(out.trim())
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_defaults_and_determinism() {
    let root = tempfile::tempdir().unwrap();
    let a = root.path().join("a");
    let b = root.path().join("b");
    ok(root.path(), &["gen", "--out", a.to_str().unwrap()]);
    ok(root.path(), &["gen", "--out", b.to_str().unwrap()]);
    let manifest = read(a.join("manifest.txt"));
    assert_eq!(manifest.lines().count(), 250);
    assert_eq!(manifest.lines().filter(|l| l.ends_with(",train")).count(), 200);
    assert_eq!(manifest.lines().filter(|l| l.ends_with(",val")).count(), 50);
    assert!(read(a.join("config.txt")).contains("data.count = 250\n"));
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn usage_errors_exit_2() {
    let root = tempfile::tempdir().unwrap();
    let out = featfilter(root.path(), &["gen", "--count", "0"]);
    assert_eq!(code(&out), 2);
    let out = featfilter(root.path(), &["--set", "net.width=3", "check", "metrics"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("net.width"));
    assert_eq!(code(&featfilter(root.path(), &["check", "everything"])), 2);
    assert_eq!(code(&featfilter(root.path(), &["bogus"])), 2);
}

#[test]
fn missing_dataset_names_manifest() {
    let root = tempfile::tempdir().unwrap();
    let out = featfilter(root.path(), &["train", "--data", "nowhere"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest.txt"));
}

#[test]
fn config_file_is_applied_and_echoed() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("run.cfg");
    std::fs::write(&cfg, "# tiny data\ndata.count = 6\ndata.seed = 2\nscene.noise_sigma = 0\n").unwrap();
    ok(root.path(), &["--config", cfg.to_str().unwrap(), "gen"]);
    let data = root.path().join("data");
    assert_eq!(read(data.join("manifest.txt")).lines().count(), 6);
    let echo = read(data.join("config.txt"));
    assert!(echo.contains("data.count = 6\n") && echo.contains("scene.noise_sigma = 0\n"), "{echo}");

    std::fs::write(&cfg, "data.count = 6\nnet.bogus = 1\n").unwrap();
    let out = featfilter(root.path(), &["--config", cfg.to_str().unwrap(), "gen"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));
}

#[test]
fn golden_run_and_idempotent_rerun() {
    let root = tempfile::tempdir().unwrap();
    tiny(root.path());
    let run = train_tiny(root.path(), "off");
    assert_eq!(run, root.path().join("unet"));
    assert_eq!(read(run.join("loss.csv")), GOLDEN_LOSS_CSV);
    let echo = read(run.join("config.txt"));
    assert!(echo.contains("train.seed = 7\n") && echo.contains("net.seed = 7\n") && echo.contains("train.epochs = 2\n"));
    for tag in ["Es", "Esm", "Em", "Enm", "En"] {
        assert!(run.join("ckpt").join(tag).join("manifest.txt").is_file());
    }
    let first = tree(&run);
    train_tiny(root.path(), "off");
    assert_eq!(first, tree(&run));
}

#[test]
fn eval_probe_compare() {
    let root = tempfile::tempdir().unwrap();
    tiny(root.path());
    let base = train_tiny(root.path(), "off");
    let cff = train_tiny(root.path(), "on");
    assert_eq!(cff, root.path().join("unet-cff"));

    let eval_dir = PathBuf::from(ok(root.path(), &["eval", "--run", base.to_str().unwrap()]).trim());
    let csv = read(eval_dir.join("metrics.csv"));
    assert!(csv.starts_with("sample_id,class_id,dice,hausdorff\n"));
    assert!(csv.contains("\nmean,mean_seg,"));
    ok(root.path(), &["eval", "--run", base.to_str().unwrap()]);
    assert_eq!(read(eval_dir.join("metrics.csv")), csv);
    let train_eval = ok(root.path(), &["eval", "--run", base.to_str().unwrap(), "--split", "train", "--tag", "Es"]);
    assert!(train_eval.trim().ends_with("eval_Es_train"));

    let out = featfilter(root.path(), &["probe", "--run", base.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no feature filters"));

    let probe = PathBuf::from(ok(root.path(), &["probe", "--run", cff.to_str().unwrap(), "--tags", "Es,En"]).trim());
    let entropy = read(probe.join("entropy.csv"));
    let mut lines = entropy.lines();
    assert_eq!(lines.next(), Some("layer_index,tag,Hf,Hd,delta"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let es = rows.iter().filter(|r| r[1] == "Es").count();
    let en = rows.iter().filter(|r| r[1] == "En").count();
    assert_eq!((es, en), (14, 14));
    for r in &rows {
        let (hf, hd, delta): (f64, f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!((0.0..=1.0).contains(&hf) && (0.0..=1.0).contains(&hd));
        assert_eq!(delta, hd - hf);
    }
    let center = read(probe.join("center_signal_Es.csv"));
    assert!(center.starts_with("layer_index,channel,f_value,d_value\n"));
    assert!(probe.join("center_signal_En.csv").is_file());

    let compare = PathBuf::from(
        ok(root.path(), &["compare", base.to_str().unwrap(), cff.to_str().unwrap()]).trim(),
    );
    let table = read(compare.join("compare.csv"));
    assert!(table.starts_with("metric,a_mean,a_std,b_mean,b_std,delta\n"));
    assert!(table.contains("\nparams,122700,0,136620,0,13920\n"), "{table}");

    let own = root.path().join("self");
    ok(root.path(), &["compare", cff.to_str().unwrap(), cff.to_str().unwrap(), "--out", own.to_str().unwrap()]);
    for line in read(own.join("compare.csv")).lines().skip(1) {
        assert_eq!(line.rsplit(',').next(), Some("0"), "{line}");
    }
}

fn fsm1(dims: &[usize], values: &[f64]) -> Vec<u8> {
    let mut out = b"FSM1".to_vec();
    out.extend((dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend((d as u32).to_le_bytes());
    }
    for v in values {
        out.extend(v.to_le_bytes());
    }
    out
}

#[test]
fn saturated_gates_give_zero_delta() {
    let root = tempfile::tempdir().unwrap();
    tiny(root.path());
    let cff = train_tiny(root.path(), "on");
    let manifest = read(cff.join("ckpt/Es/manifest.txt"));
    let mut forced = 0;
    for line in manifest.lines() {
        let parts: Vec<&str> = line.split(',').collect();
        if parts[0].ends_with(".cff.biases") {
            let dims: Vec<usize> = parts[2].split('x').map(|d| d.parse().unwrap()).collect();
            let n = dims.iter().product();
            std::fs::write(cff.join("ckpt/Es").join(parts[1]), fsm1(&dims, &vec![20.0; n])).unwrap();
            forced += 1;
        }
    }
    assert_eq!(forced, 14);
    let probe = PathBuf::from(ok(root.path(), &["probe", "--run", cff.to_str().unwrap(), "--tags", "Es"]).trim());
    for line in read(probe.join("entropy.csv")).lines().skip(1) {
        let delta: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(delta.abs() <= 1e-9, "{line}");
    }
}

#[test]
fn eval_rejects_class_mismatch() {
    let root = tempfile::tempdir().unwrap();
    tiny(root.path());
    let run = train_tiny(root.path(), "off");
    // relabel every PGM as five-class: same pixels, larger maxval
    let labels = root.path().join("data/labels");
    for entry in std::fs::read_dir(&labels).unwrap() {
        let path = entry.unwrap().path();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n64 64\n3\n";
        assert!(bytes.starts_with(header));
        let mut patched = b"P5\n64 64\n4\n".to_vec();
        patched.extend(&bytes[header.len()..]);
        std::fs::write(&path, patched).unwrap();
    }
    let out = featfilter(root.path(), &["eval", "--run", run.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("classes"));
}

#[test]
fn multi_seed_summary() {
    let root = tempfile::tempdir().unwrap();
    tiny(root.path());
    let run = PathBuf::from(
        ok(
            root.path(),
            &["train", "--runs", "2", "--set", "train.epochs=1", "--set", "net.depth=1", "--set", "net.base_channels=2"],
        )
        .trim(),
    );
    let summary = read(run.join("summary.csv"));
    assert!(summary.starts_with("metric,mean,std\n") && summary.contains("\nbest_val_loss,"));
    assert!(run.join("seed_0/loss.csv").is_file() && run.join("seed_1/ckpt/Em/manifest.txt").is_file());
    let table_dir = root.path().join("cmp");
    ok(root.path(), &["compare", run.to_str().unwrap(), run.to_str().unwrap(), "--out", table_dir.to_str().unwrap()]);
    let table = read(table_dir.join("compare.csv"));
    let loss_row = table.lines().find(|l| l.starts_with("best_val_loss,")).unwrap();
    let std_a: f64 = loss_row.split(',').nth(2).unwrap().parse().unwrap();
    assert!(std_a > 0.0, "{loss_row}");
}

#[test]
fn check_suites_pass() {
    let root = tempfile::tempdir().unwrap();
    for suite in ["grad", "entropy", "theorem1", "linearity", "metrics"] {
        let out = ok(root.path(), &["check", suite]);
        assert!(out.lines().all(|l| l.starts_with("PASS ")), "{out}");
    }
    let out = featfilter(root.path(), &["--set", "check.samples=1", "check", "theorem1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn refuses_to_clobber_foreign_directory() {
    let root = tempfile::tempdir().unwrap();
    let keep = root.path().join("keep");
    std::fs::create_dir(&keep).unwrap();
    std::fs::write(keep.join("notes.txt"), "mine").unwrap();
    let out = featfilter(root.path(), &["gen", "--count", "2", "--out", keep.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert_eq!(read(keep.join("notes.txt")), "mine");
}
