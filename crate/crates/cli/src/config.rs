//! Plain-text run configuration: `key = value` lines with dotted keys.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use featfilter::nets::NetworkSpec;
use featfilter::synthdata::SceneConfig;
use featfilter::train::{ProbeTag, TrainConfig};

use crate::UsageError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    All,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "all" => Ok(Self::All),
            _ => Err(format!("unknown split {s:?} (expected train|val|all)")),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::All => "all",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSettings {
    /// Dataset directory; defaults to `<output root>/data`.
    pub dir: Option<PathBuf>,
    pub count: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckSettings {
    pub seed: u64,
    /// Monte-Carlo draws for the theorem check.
    pub samples: usize,
    /// Random trials for the linearity and low-amplitude checks.
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: DataSettings,
    pub scene: SceneConfig,
    pub net: NetworkSpec,
    pub train: TrainConfig,
    /// Number of seeds per training command.
    pub runs: usize,
    pub eval_tag: ProbeTag,
    pub eval_split: Split,
    pub probe_tags: Vec<ProbeTag>,
    /// Validation sample whose center signal is dumped.
    pub probe_sample: usize,
    pub check: CheckSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSettings {
                dir: None,
                count: 250,
                train_fraction: 0.8,
                seed: 0,
            },
            scene: SceneConfig::default(),
            net: NetworkSpec::default(),
            train: TrainConfig::default(),
            runs: 1,
            eval_tag: ProbeTag::Em,
            eval_split: Split::Val,
            probe_tags: ProbeTag::ALL.to_vec(),
            probe_sample: 0,
            check: CheckSettings {
                seed: 0,
                samples: 100_000,
                trials: 100,
            },
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), UsageError> {
        let wrap = |reason: String| UsageError(reason);
        let known = match key {
            "data.dir" => {
                self.data.dir = (!value.is_empty()).then(|| PathBuf::from(value));
                true
            }
            "data.count" => {
                self.data.count = num(key, value).map_err(wrap)?;
                true
            }
            "data.train_fraction" => {
                self.data.train_fraction = num(key, value).map_err(wrap)?;
                true
            }
            "data.seed" => {
                self.data.seed = num(key, value).map_err(wrap)?;
                true
            }
            "train.runs" => {
                self.runs = num(key, value).map_err(wrap)?;
                true
            }
            "eval.tag" => {
                self.eval_tag = value.parse().map_err(wrap)?;
                true
            }
            "eval.split" => {
                self.eval_split = value.parse().map_err(wrap)?;
                true
            }
            "probe.tags" => {
                self.probe_tags = value
                    .split(',')
                    .map(|t| t.trim().parse())
                    .collect::<Result<_, String>>()
                    .map_err(wrap)?;
                true
            }
            "probe.sample" => {
                self.probe_sample = num(key, value).map_err(wrap)?;
                true
            }
            "check.seed" => {
                self.check.seed = num(key, value).map_err(wrap)?;
                true
            }
            "check.samples" => {
                self.check.samples = num(key, value).map_err(wrap)?;
                true
            }
            "check.trials" => {
                self.check.trials = num(key, value).map_err(wrap)?;
                true
            }
            _ => {
                self.scene.set(key, value).map_err(wrap)?
                    || self.net.set(key, value).map_err(wrap)?
                    || self.train.set(key, value).map_err(wrap)?
            }
        };
        if known {
            Ok(())
        } else {
            Err(UsageError(format!("unknown config key {key:?}")))
        }
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), UsageError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| UsageError(format!("expected key=value, got {pair:?}")))?;
        self.set(k.trim(), v.trim())
    }

    /// Applies every line of a config file; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), UsageError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.set_pair(line)
                .map_err(|e| UsageError(format!("{origin}:{}: {}", n + 1, e.0)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> anyhow::Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::Error::new(e).context(format!("reading config {}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        let wrap = |e: featfilter::Error| UsageError(e.to_string());
        self.scene.validate().map_err(wrap)?;
        self.net.validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        if self.data.count == 0 {
            return Err(UsageError("data.count must be at least 1".into()));
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(UsageError("data.train_fraction must lie in (0, 1)".into()));
        }
        if self.runs == 0 {
            return Err(UsageError("train.runs must be at least 1".into()));
        }
        if self.probe_tags.is_empty() {
            return Err(UsageError("probe.tags must name at least one tag".into()));
        }
        Ok(())
    }

    /// Every key with its resolved value, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let dir = self.data.dir.as_ref().map_or(String::new(), |d| d.display().to_string());
        let _ = writeln!(out, "data.dir = {dir}");
        let _ = writeln!(out, "data.count = {}", self.data.count);
        let _ = writeln!(out, "data.train_fraction = {}", self.data.train_fraction);
        let _ = writeln!(out, "data.seed = {}", self.data.seed);
        out.push_str(&self.scene.to_text());
        out.push_str(&self.net.to_text());
        out.push_str(&self.train.to_text());
        let _ = writeln!(out, "train.runs = {}", self.runs);
        let _ = writeln!(out, "eval.tag = {}", self.eval_tag);
        let _ = writeln!(out, "eval.split = {}", self.eval_split);
        let tags: Vec<String> = self.probe_tags.iter().map(ProbeTag::to_string).collect();
        let _ = writeln!(out, "probe.tags = {}", tags.join(","));
        let _ = writeln!(out, "probe.sample = {}", self.probe_sample);
        let _ = writeln!(out, "check.seed = {}", self.check.seed);
        let _ = writeln!(out, "check.samples = {}", self.check.samples);
        let _ = writeln!(out, "check.trials = {}", self.check.trials);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut config = RunConfig::default();
        config
            .apply_text(
                "net.family = fcn\nnet.cff = on # filters\ntrain.epochs = 3\nscene.lv_radius = 4,6\nprobe.tags = Es,En\ndata.dir = /tmp/x\n",
                "test",
            )
            .unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&config.to_text(), "echo").unwrap();
        assert_eq!(back, config);
        assert_eq!(back.probe_tags, vec![ProbeTag::Es, ProbeTag::En]);
    }

    #[test]
    fn empty_data_dir_echo_is_unset() {
        let mut back = RunConfig::default();
        back.apply_text(&RunConfig::default().to_text(), "echo").unwrap();
        assert_eq!(back.data.dir, None);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut config = RunConfig::default();
        assert!(config.set("net.width", "3").is_err());
        assert!(config.set("train.epochs", "many").is_err());
        let err = config.apply_text("\n\ntrain.seed 7\n", "cfg").unwrap_err();
        assert!(err.0.starts_with("cfg:3:"), "{}", err.0);
    }

    #[test]
    fn validate_rejects_zero_count() {
        let mut config = RunConfig::default();
        config.set("data.count", "0").unwrap();
        assert!(config.validate().is_err());
    }
}
