//! `key = value` run configuration with `#` comments.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::NoiseLevel;
use crate::error::{Error, Result};
use crate::ftn::{AlphaPolicy, FtnConfig};
use crate::model::{NetworkSpec, ProviderConfig};
use crate::train::{LossKind, OptimizerKind, TrainConfig};

/// What the second level is learned with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Mode {
    /// FTN with the configured group count and depth.
    #[default]
    Ftn,
    FtnGc4,
    FtnGc16,
    /// Three 1×1 stages.
    FtnDeeper,
    AdaFm,
    /// Unconstrained fine-tuning of the main network (DNI's second model).
    Finetune,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Ftn,
        Mode::FtnGc4,
        Mode::FtnGc16,
        Mode::FtnDeeper,
        Mode::AdaFm,
        Mode::Finetune,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Ftn => "ftn",
            Mode::FtnGc4 => "ftn-gc4",
            Mode::FtnGc16 => "ftn-gc16",
            Mode::FtnDeeper => "ftn-deeper",
            Mode::AdaFm => "adafm",
            Mode::Finetune => "finetune",
        }
    }

    /// Providers to attach; `None` for fine-tuning.
    pub fn provider_config(self, ftn: FtnConfig, exclude_last: bool) -> Option<ProviderConfig> {
        let with = |c: FtnConfig| {
            let mut p = ProviderConfig::ftn(c);
            p.exclude_last = exclude_last;
            Some(p)
        };
        match self {
            Mode::Ftn => with(ftn),
            Mode::FtnGc4 => with(FtnConfig { groups: 4, ..ftn }),
            Mode::FtnGc16 => with(FtnConfig { groups: 16, ..ftn }),
            Mode::FtnDeeper => with(FtnConfig { depth: 3, ..ftn }),
            Mode::AdaFm => Some(ProviderConfig::adafm()),
            Mode::Finetune => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

/// Everything a command needs. Every key has a default.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub mode: Mode,
    pub alpha: f64,
    pub alpha_policy: AlphaPolicy,
    pub network: NetworkSpec,
    pub ftn: FtnConfig,
    pub exclude_last: bool,
    pub train: TrainConfig,
    pub sweep_step: f64,
    /// Test levels on the 8-bit scale.
    pub sweep_sigmas: Vec<f64>,
    pub macs_size: usize,
    pub demo_size: usize,
    /// Grayscale image with per-pixel levels; a left-to-right ramp if unset.
    pub level_map: Option<PathBuf>,
    pub ramp_left: f64,
    pub ramp_right: f64,
    /// Clean input for the pixel demo (noise at `demo_sigma` is added); a
    /// synthetic image if unset.
    pub demo_input: Option<PathBuf>,
    pub demo_sigma: f64,
    pub phase1_checkpoint: Option<PathBuf>,
    pub gradcheck_instances: usize,
    pub gradcheck_epsilon: f64,
    pub gradcheck_tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs"),
            mode: Mode::Ftn,
            alpha: 0.5,
            alpha_policy: AlphaPolicy::Strict,
            network: NetworkSpec::default(),
            ftn: FtnConfig::default(),
            exclude_last: false,
            train: TrainConfig::default(),
            sweep_step: 0.01,
            sweep_sigmas: vec![20.0, 40.0, 60.0, 80.0],
            macs_size: 32,
            demo_size: 64,
            level_map: None,
            ramp_left: 0.0,
            ramp_right: 1.0,
            demo_input: None,
            demo_sigma: 50.0,
            phase1_checkpoint: None,
            gradcheck_instances: 20,
            gradcheck_epsilon: 1e-4,
            gradcheck_tolerance: 1e-6,
        }
    }
}

fn parse<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?}"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got {v:?}")),
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn level(v: &str) -> std::result::Result<NoiseLevel, String> {
    NoiseLevel::from_8bit(parse(v)?).map_err(|e| e.to_string())
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub const KEYS: [&'static str; 40] = [
        "seed",
        "out",
        "mode",
        "alpha",
        "alpha_policy",
        "channels",
        "blocks",
        "kernel",
        "image_channels",
        "ftn_groups",
        "ftn_depth",
        "exclude_last",
        "batch",
        "patch",
        "phase1_steps",
        "phase2_steps",
        "lr_phase1",
        "lr_phase2",
        "beta1",
        "beta2",
        "adam_eps",
        "loss",
        "optimizer",
        "sigma_low",
        "sigma_high",
        "val_images",
        "val_size",
        "sweep_step",
        "sweep_sigmas",
        "macs_size",
        "demo_size",
        "level_map",
        "ramp_left",
        "ramp_right",
        "demo_input",
        "demo_sigma",
        "phase1_checkpoint",
        "gradcheck_instances",
        "gradcheck_epsilon",
        "gradcheck_tolerance",
    ];

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::ParseConfig {
                    line: i + 1,
                    msg: format!("expected `key = value`, got {line:?}"),
                });
            };
            cfg.set(k.trim(), v.trim()).map_err(|e| match e {
                Error::Config(msg) => Error::ParseConfig { line: i + 1, msg },
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let r: std::result::Result<(), String> = (|| {
            let v = value;
            match key {
                "seed" => {
                    self.seed = parse(v)?;
                    self.train.seed = self.seed;
                }
                "out" => self.out = PathBuf::from(v),
                "mode" => self.mode = v.parse()?,
                "alpha" => self.alpha = parse(v)?,
                "alpha_policy" => {
                    self.alpha_policy = match v {
                        "strict" => AlphaPolicy::Strict,
                        "clamp" => AlphaPolicy::Clamp,
                        "extrapolate" => AlphaPolicy::Extrapolate,
                        _ => return Err(format!("unknown alpha policy {v:?}")),
                    }
                }
                "channels" => self.network.channels = parse(v)?,
                "blocks" => self.network.num_blocks = parse(v)?,
                "kernel" => self.network.kernel_size = parse(v)?,
                "image_channels" => {
                    self.network.in_channels = parse(v)?;
                    self.network.out_channels = self.network.in_channels;
                }
                "ftn_groups" => self.ftn.groups = parse(v)?,
                "ftn_depth" => self.ftn.depth = parse(v)?,
                "exclude_last" => self.exclude_last = parse_bool(v)?,
                "batch" => self.train.batch_size = parse(v)?,
                "patch" => self.train.patch_size = parse(v)?,
                "phase1_steps" => self.train.phase1_steps = parse(v)?,
                "phase2_steps" => self.train.phase2_steps = parse(v)?,
                "lr_phase1" => self.train.lr_phase1 = parse(v)?,
                "lr_phase2" => self.train.lr_phase2 = parse(v)?,
                "beta1" => self.train.beta1 = parse(v)?,
                "beta2" => self.train.beta2 = parse(v)?,
                "adam_eps" => self.train.eps = parse(v)?,
                "loss" => {
                    self.train.loss = match v {
                        "l1" => LossKind::L1,
                        "l2" => LossKind::L2,
                        _ => return Err(format!("unknown loss {v:?}")),
                    }
                }
                "optimizer" => {
                    self.train.optimizer = match v {
                        "adam" => OptimizerKind::Adam,
                        "sgd" => OptimizerKind::Sgd,
                        _ => return Err(format!("unknown optimizer {v:?}")),
                    }
                }
                "sigma_low" => self.train.sigma_low = level(v)?,
                "sigma_high" => self.train.sigma_high = level(v)?,
                "val_images" => self.train.val_images = parse(v)?,
                "val_size" => self.train.val_size = parse(v)?,
                "sweep_step" => self.sweep_step = parse(v)?,
                "sweep_sigmas" => {
                    self.sweep_sigmas = v
                        .split(',')
                        .map(|s| parse::<f64>(s.trim()))
                        .collect::<std::result::Result<_, _>>()?
                }
                "macs_size" => self.macs_size = parse(v)?,
                "demo_size" => self.demo_size = parse(v)?,
                "level_map" => self.level_map = opt_path(v),
                "ramp_left" => self.ramp_left = parse(v)?,
                "ramp_right" => self.ramp_right = parse(v)?,
                "demo_input" => self.demo_input = opt_path(v),
                "demo_sigma" => self.demo_sigma = parse(v)?,
                "phase1_checkpoint" => self.phase1_checkpoint = opt_path(v),
                "gradcheck_instances" => self.gradcheck_instances = parse(v)?,
                "gradcheck_epsilon" => self.gradcheck_epsilon = parse(v)?,
                "gradcheck_tolerance" => self.gradcheck_tolerance = parse(v)?,
                _ => return Err(format!("unknown key {key:?}")),
            }
            Ok(())
        })();
        r.map_err(|m| Error::Config(format!("{key}: {m}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.ftn.validate()?;
        self.train.validate()?;
        self.alpha_policy.apply(self.alpha)?;
        if self.sweep_sigmas.is_empty() {
            return Err(Error::Config("sweep_sigmas is empty".into()));
        }
        if self.macs_size == 0 || self.demo_size == 0 || self.gradcheck_instances == 0 {
            return Err(Error::Config("sizes and counts must be positive".into()));
        }
        if !(self.gradcheck_epsilon > 0.0) {
            return Err(Error::Config("gradcheck_epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Providers for the configured mode.
    pub fn provider_config(&self) -> Option<ProviderConfig> {
        self.mode.provider_config(self.ftn, self.exclude_last)
    }

    pub fn phase1_path(&self) -> PathBuf {
        self.phase1_checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join("phase1.ckpt"))
    }

    pub fn tuned_path(&self, mode: Mode) -> PathBuf {
        self.out.join(format!("tuned-{mode}.ckpt"))
    }

    /// Every key with its effective value; parses back to `self`.
    pub fn render(&self) -> String {
        let t = &self.train;
        let n = &self.network;
        let policy = match self.alpha_policy {
            AlphaPolicy::Strict => "strict",
            AlphaPolicy::Clamp => "clamp",
            AlphaPolicy::Extrapolate => "extrapolate",
        };
        let loss = match t.loss {
            LossKind::L1 => "l1",
            LossKind::L2 => "l2",
        };
        let opt = match t.optimizer {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        };
        let sigmas: Vec<String> = self.sweep_sigmas.iter().map(|s| format!("{s:?}")).collect();
        let pairs: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("out", self.out.display().to_string()),
            ("mode", self.mode.to_string()),
            ("alpha", format!("{:?}", self.alpha)),
            ("alpha_policy", policy.into()),
            ("channels", n.channels.to_string()),
            ("blocks", n.num_blocks.to_string()),
            ("kernel", n.kernel_size.to_string()),
            ("image_channels", n.in_channels.to_string()),
            ("ftn_groups", self.ftn.groups.to_string()),
            ("ftn_depth", self.ftn.depth.to_string()),
            ("exclude_last", self.exclude_last.to_string()),
            ("batch", t.batch_size.to_string()),
            ("patch", t.patch_size.to_string()),
            ("phase1_steps", t.phase1_steps.to_string()),
            ("phase2_steps", t.phase2_steps.to_string()),
            ("lr_phase1", format!("{:?}", t.lr_phase1)),
            ("lr_phase2", format!("{:?}", t.lr_phase2)),
            ("beta1", format!("{:?}", t.beta1)),
            ("beta2", format!("{:?}", t.beta2)),
            ("adam_eps", format!("{:?}", t.eps)),
            ("loss", loss.into()),
            ("optimizer", opt.into()),
            ("sigma_low", format!("{:?}", t.sigma_low.as_8bit())),
            ("sigma_high", format!("{:?}", t.sigma_high.as_8bit())),
            ("val_images", t.val_images.to_string()),
            ("val_size", t.val_size.to_string()),
            ("sweep_step", format!("{:?}", self.sweep_step)),
            ("sweep_sigmas", sigmas.join(",")),
            ("macs_size", self.macs_size.to_string()),
            ("demo_size", self.demo_size.to_string()),
            ("level_map", show_path(&self.level_map)),
            ("ramp_left", format!("{:?}", self.ramp_left)),
            ("ramp_right", format!("{:?}", self.ramp_right)),
            ("demo_input", show_path(&self.demo_input)),
            ("demo_sigma", format!("{:?}", self.demo_sigma)),
            ("phase1_checkpoint", show_path(&self.phase1_checkpoint)),
            ("gradcheck_instances", self.gradcheck_instances.to_string()),
            ("gradcheck_epsilon", format!("{:?}", self.gradcheck_epsilon)),
            ("gradcheck_tolerance", format!("{:?}", self.gradcheck_tolerance)),
        ];
        let mut s = String::new();
        for (k, v) in pairs {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}
