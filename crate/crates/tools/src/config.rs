//! Run configuration: every setting of every subcommand, parsed from plain
//! `key = value` text and rendered back in a fixed key order.
//!
//! A rendered configuration (the run manifest) parses back to the same
//! value, so replaying a run means passing its manifest as `--config`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tnn_core::transform::TransformKind;
use tnn_core::{AttackConfig, AttackKind, LossSpec, OrthogonalTransform};

use crate::error::{Result, ToolError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GapVsN,
    ImplicitBias,
    NuclearReg,
    Bounds,
    Verify,
    Compress,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::GapVsN,
        Command::ImplicitBias,
        Command::NuclearReg,
        Command::Bounds,
        Command::Verify,
        Command::Compress,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::GapVsN => "gap-vs-n",
            Command::ImplicitBias => "implicit-bias",
            Command::NuclearReg => "nuclear-reg",
            Command::Bounds => "bounds",
            Command::Verify => "verify",
            Command::Compress => "compress",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| ToolError::Config(format!("unknown subcommand `{s}`")))
    }
}

/// A tubal-rank cap, or no cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankSetting {
    Full,
    Rank(usize),
}

impl RankSetting {
    pub fn label(self) -> String {
        match self {
            RankSetting::Full => "full".into(),
            RankSetting::Rank(r) => r.to_string(),
        }
    }
}

impl FromStr for RankSetting {
    type Err = ToolError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "full" {
            return Ok(RankSetting::Full);
        }
        match s.parse::<usize>() {
            Ok(r) if r > 0 => Ok(RankSetting::Rank(r)),
            _ => Err(ToolError::Config(format!("rank `{s}` is neither a positive integer nor `full`"))),
        }
    }
}

/// Where samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic,
    Mnist { images: PathBuf, labels: PathBuf },
}

/// FGSM strength used with MNIST pixels in `[0, 1]`.
pub const MNIST_XI: f64 = 20.0 / 255.0;
/// Default attack strength on synthetic data. Synthetic inputs have unit
/// F-norm while an MNIST digit has F-norm near 9, so the MNIST strength is
/// divided by 9 to keep the ratio of attack radius to input norm.
pub const SYNTH_XI: f64 = MNIST_XI / 9.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    /// `identity`, `dct` or `custom:<path>`.
    pub transform: String,
    pub attack: AttackKind,
    /// `None` until resolved from the data source.
    pub xi: Option<f64>,
    pub pgd_rho: f64,
    pub pgd_steps: usize,
    pub loss: LossSpec,
    pub epochs: usize,
    pub lr: f64,
    /// Minibatch size; 0 means full batch.
    pub batch: usize,
    /// Hidden width `D` of every t-product layer.
    pub width: usize,
    /// Number of t-product layers `L`.
    pub layers: usize,
    pub ranks: Vec<RankSetting>,
    /// Multiplier on the default initialization standard deviation.
    pub init_gain: f64,
    pub lambda: Vec<f64>,
    pub log_every: usize,
    pub data: DataSource,
    /// Synthetic feature count `d`.
    pub features: usize,
    /// Synthetic channel count `c`.
    pub channels: usize,
    pub teacher_rank: usize,
    /// Training-set sizes swept by `gap-vs-n`.
    pub n_values: Vec<usize>,
    /// Training-set size of single runs.
    pub n_train: usize,
    pub n_test: usize,
    /// Independent initializations averaged by `gap-vs-n`.
    pub repeats: usize,
    /// Checkpoint compressed by `compress` (a random model when absent).
    pub model: Option<PathBuf>,
    /// Per-layer caps `B_l` for `bounds` (one value is broadcast).
    pub caps: Vec<f64>,
    pub head_cap: f64,
    pub b_x: f64,
    pub c_r: f64,
    pub confidence_t: f64,
    pub decay_v0: f64,
    pub decay_alpha: f64,
    pub constant_full: f64,
    pub constant_lowrank: f64,
    pub constant_decay: f64,
}

impl RunConfig {
    /// Defaults of `command` at desk scale.
    pub fn defaults(command: Command) -> Self {
        let mut cfg = Self {
            command,
            seed: 0,
            transform: "dct".into(),
            attack: AttackKind::Fgsm,
            xi: None,
            pgd_rho: AttackConfig::DEFAULT_PGD_RHO,
            pgd_steps: AttackConfig::DEFAULT_PGD_STEPS,
            loss: LossSpec::logistic(),
            epochs: 200,
            lr: 0.01,
            batch: 0,
            width: 32,
            layers: 3,
            ranks: Vec::new(),
            init_gain: 1.0,
            lambda: vec![0.0],
            log_every: 1,
            data: DataSource::Synthetic,
            features: 16,
            channels: 8,
            teacher_rank: 2,
            n_values: vec![200, 400, 800, 1600],
            n_train: 400,
            n_test: 1000,
            repeats: 3,
            model: None,
            caps: vec![1.0],
            head_cap: 1.0,
            b_x: 1.0,
            c_r: 1.0,
            confidence_t: 1.0,
            decay_v0: 1.0,
            decay_alpha: 1.0,
            constant_full: 1.0,
            constant_lowrank: 1.0,
            constant_decay: 1.0,
        };
        match command {
            Command::GapVsN => {
                cfg.ranks = vec![RankSetting::Rank(4), RankSetting::Full];
                cfg.epochs = 60;
                cfg.lr = 0.05;
                cfg.batch = 25;
                cfg.init_gain = 4.0;
            }
            Command::ImplicitBias | Command::NuclearReg => {
                cfg.width = 64;
                cfg.batch = 80;
                cfg.lr = 0.5;
                cfg.init_gain = 4.0;
                if command == Command::NuclearReg {
                    cfg.lambda = vec![0.0, 0.01];
                    // larger weights keep the loss gradient ahead of the prox threshold
                    cfg.init_gain = 8.0;
                }
            }
            Command::Bounds => {
                cfg.features = 28;
                cfg.channels = 28;
                cfg.width = 28;
                cfg.n_train = 1000;
                cfg.ranks = vec![RankSetting::Rank(4)];
                cfg.xi = Some(0.0);
            }
            Command::Compress => {
                cfg.ranks = vec![RankSetting::Rank(4)];
                cfg.n_test = 200;
            }
            Command::Verify => {}
        }
        cfg
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "command" => {
                let c = Command::parse(value)?;
                if c != self.command {
                    return Err(ToolError::Config(format!(
                        "config is for `{}`, not `{}`",
                        c.name(),
                        self.command.name()
                    )));
                }
            }
            // informational manifest entries
            "version" | "output" => {}
            "seed" => self.seed = num(key, value)?,
            "transform" => {
                if !(value == "identity" || value == "dct" || value.starts_with("custom:")) {
                    return Err(ToolError::Config(format!(
                        "transform `{value}` is not identity, dct or custom:<path>"
                    )));
                }
                self.transform = value.into();
            }
            "attack" => self.attack = AttackKind::parse(value)?,
            "xi" => self.xi = Some(num(key, value)?),
            "pgd_rho" => self.pgd_rho = num(key, value)?,
            "pgd_steps" => self.pgd_steps = num(key, value)?,
            "loss" => self.loss = LossSpec::parse(value)?,
            "epochs" => self.epochs = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "batch" => self.batch = num(key, value)?,
            "width" => self.width = num(key, value)?,
            "layers" => self.layers = num(key, value)?,
            "ranks" => self.ranks = list(key, value)?,
            "init_gain" => self.init_gain = num(key, value)?,
            "lambda" => self.lambda = list(key, value)?,
            "log_every" => self.log_every = num(key, value)?,
            "data" => {
                self.data = match value {
                    "synth" => DataSource::Synthetic,
                    "mnist" => match &self.data {
                        DataSource::Mnist { .. } => self.data.clone(),
                        DataSource::Synthetic => DataSource::Mnist { images: PathBuf::new(), labels: PathBuf::new() },
                    },
                    _ => return Err(ToolError::Config(format!("data `{value}` is neither synth nor mnist"))),
                }
            }
            "mnist_images" | "mnist_labels" => {
                let (mut images, mut labels) = match &self.data {
                    DataSource::Mnist { images, labels } => (images.clone(), labels.clone()),
                    DataSource::Synthetic => (PathBuf::new(), PathBuf::new()),
                };
                if key == "mnist_images" {
                    images = value.into();
                } else {
                    labels = value.into();
                }
                self.data = DataSource::Mnist { images, labels };
            }
            "features" => self.features = num(key, value)?,
            "channels" => self.channels = num(key, value)?,
            "teacher_rank" => self.teacher_rank = num(key, value)?,
            "n_values" => self.n_values = list(key, value)?,
            "n_train" => self.n_train = num(key, value)?,
            "n_test" => self.n_test = num(key, value)?,
            "repeats" => self.repeats = num(key, value)?,
            "model" => self.model = if value.is_empty() { None } else { Some(value.into()) },
            "caps" => self.caps = list(key, value)?,
            "head_cap" => self.head_cap = num(key, value)?,
            "b_x" => self.b_x = num(key, value)?,
            "c_r" => self.c_r = num(key, value)?,
            "t" => self.confidence_t = num(key, value)?,
            "decay_v0" => self.decay_v0 = num(key, value)?,
            "decay_alpha" => self.decay_alpha = num(key, value)?,
            "constant_full" => self.constant_full = num(key, value)?,
            "constant_lowrank" => self.constant_lowrank = num(key, value)?,
            "constant_decay" => self.constant_decay = num(key, value)?,
            _ => return Err(ToolError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ToolError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value).map_err(|e| ToolError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| ToolError::io(path, e))?;
        self.apply_text(&text)
    }

    /// Fills settings that depend on others (currently the attack strength).
    pub fn resolve(&mut self) {
        if self.xi.is_none() {
            self.xi = Some(match self.data {
                DataSource::Synthetic => SYNTH_XI,
                DataSource::Mnist { .. } => MNIST_XI,
            });
        }
    }

    pub fn xi(&self) -> f64 {
        self.xi.unwrap_or(match self.data {
            DataSource::Synthetic => SYNTH_XI,
            DataSource::Mnist { .. } => MNIST_XI,
        })
    }

    pub fn attack_config(&self) -> AttackConfig {
        let mut a = AttackConfig::new(self.attack, self.xi());
        a.rho = self.pgd_rho;
        a.steps = self.pgd_steps;
        a
    }

    /// Input shape `(d, c)` of the configured data.
    pub fn input_shape(&self) -> (usize, usize) {
        match self.data {
            DataSource::Synthetic => (self.features, self.channels),
            DataSource::Mnist { .. } => (28, 28),
        }
    }

    /// `d_0, ..., d_L`.
    pub fn widths(&self) -> Vec<usize> {
        let (d, _) = self.input_shape();
        std::iter::once(d).chain(std::iter::repeat_n(self.width, self.layers)).collect()
    }

    pub fn build_transform(&self) -> Result<OrthogonalTransform> {
        let (_, c) = self.input_shape();
        let kind = match self.transform.as_str() {
            "identity" => TransformKind::Identity,
            "dct" => TransformKind::Dct,
            other => {
                let path = Path::new(other.trim_start_matches("custom:"));
                let text = fs::read_to_string(path).map_err(|e| ToolError::io(path, e))?;
                let values = text
                    .split_whitespace()
                    .map(|t| {
                        t.parse::<f64>().map_err(|_| ToolError::Config(format!("{}: bad number `{t}`", path.display())))
                    })
                    .collect::<Result<Vec<_>>>()?;
                TransformKind::Custom(values)
            }
        };
        Ok(OrthogonalTransform::build(kind, c)?)
    }

    /// Per-layer ranks from `ranks`: one entry is broadcast, `full` means the
    /// layer's maximum.
    pub fn layer_ranks(&self) -> Result<Vec<usize>> {
        let widths = self.widths();
        let caps: Vec<usize> = widths.windows(2).map(|w| w[0].min(w[1])).collect();
        let settings = match self.ranks.len() {
            0 => vec![RankSetting::Full; caps.len()],
            1 => vec![self.ranks[0]; caps.len()],
            n if n == caps.len() => self.ranks.clone(),
            n => return Err(ToolError::Config(format!("{n} ranks for {} layers", caps.len()))),
        };
        Ok(settings
            .iter()
            .zip(&caps)
            .map(|(s, &cap)| match s {
                RankSetting::Full => cap,
                RankSetting::Rank(r) => *r,
            })
            .collect())
    }

    /// Every key in fixed order, defaults materialized.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            writeln!(out, "{k} = {v}").expect("writing to a String cannot fail");
        };
        put("command", self.command.name().into());
        put("seed", self.seed.to_string());
        put("transform", self.transform.clone());
        put("attack", self.attack.name().into());
        put("xi", self.xi().to_string());
        put("pgd_rho", self.pgd_rho.to_string());
        put("pgd_steps", self.pgd_steps.to_string());
        put("loss", self.loss.name().into());
        put("epochs", self.epochs.to_string());
        put("lr", self.lr.to_string());
        put("batch", self.batch.to_string());
        put("width", self.width.to_string());
        put("layers", self.layers.to_string());
        put("ranks", join(self.ranks.iter().map(|r| r.label())));
        put("init_gain", self.init_gain.to_string());
        put("lambda", join(self.lambda.iter()));
        put("log_every", self.log_every.to_string());
        match &self.data {
            DataSource::Synthetic => put("data", "synth".into()),
            DataSource::Mnist { images, labels } => {
                put("data", "mnist".into());
                put("mnist_images", images.display().to_string());
                put("mnist_labels", labels.display().to_string());
            }
        }
        put("features", self.features.to_string());
        put("channels", self.channels.to_string());
        put("teacher_rank", self.teacher_rank.to_string());
        put("n_values", join(self.n_values.iter()));
        put("n_train", self.n_train.to_string());
        put("n_test", self.n_test.to_string());
        put("repeats", self.repeats.to_string());
        put("model", self.model.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        put("caps", join(self.caps.iter()));
        put("head_cap", self.head_cap.to_string());
        put("b_x", self.b_x.to_string());
        put("c_r", self.c_r.to_string());
        put("t", self.confidence_t.to_string());
        put("decay_v0", self.decay_v0.to_string());
        put("decay_alpha", self.decay_alpha.to_string());
        put("constant_full", self.constant_full.to_string());
        put("constant_lowrank", self.constant_lowrank.to_string());
        put("constant_decay", self.constant_decay.to_string());
        out
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| ToolError::Config(format!("{key}: cannot parse `{value}`")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| num(key, v.trim())).collect()
}

fn join<T: ToString>(items: impl Iterator<Item = T>) -> String {
    items.map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}
