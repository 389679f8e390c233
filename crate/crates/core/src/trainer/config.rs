use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dialogworld::{GoalConfig, WorldGenConfig};
use crate::error::{Error, Result};
use crate::fet::{FetConfig, FetMode};
use crate::nncore::{Activation, OptimizerConfig, OptimizerKind};
use crate::objectives::{AugmentConfig, LossWeights, DEFAULT_FIXMATCH_TAU, DEFAULT_IPS_CLIP, DEFAULT_TRANSLATION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Banditmatch,
    Sl,
    Ips,
    Banditnet,
    Fixmatch,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Banditmatch, Method::Sl, Method::Ips, Method::Banditnet, Method::Fixmatch];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Banditmatch => "banditmatch",
            Method::Sl => "sl",
            Method::Ips => "ips",
            Method::Banditnet => "banditnet",
            Method::Fixmatch => "fixmatch",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Components removed from full BanditMatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    NoMcScale,
    NoFet,
    NoCbl,
    NoKl,
    NoneAll,
}

impl Ablation {
    pub const GRID: [Ablation; 6] = [
        Ablation::None,
        Ablation::NoMcScale,
        Ablation::NoFet,
        Ablation::NoCbl,
        Ablation::NoKl,
        Ablation::NoneAll,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoMcScale => "no_mc_scale",
            Ablation::NoFet => "no_fet",
            Ablation::NoCbl => "no_cbl",
            Ablation::NoKl => "no_kl",
            Ablation::NoneAll => "none_all",
        }
    }

    /// Row label in ablation tables.
    pub fn label(self) -> &'static str {
        match self {
            Ablation::None => "BanditMatch",
            Ablation::NoMcScale => "- MC scale",
            Ablation::NoFet => "- FET",
            Ablation::NoCbl => "- CBL",
            Ablation::NoKl => "- KL control",
            Ablation::NoneAll => "- all",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::GRID
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation `{s}`")))
    }
}

/// Network and optimizer settings shared by every training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub method: Method,
    /// Adds the KL term to IPS or BanditNet.
    pub with_kl: bool,
    pub ablation: Ablation,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub hidden_dims: Vec<usize>,
    pub hidden_activation: Activation,
    /// Epochs for the logging policy on the labeled split.
    pub logging_epochs: usize,
    /// Start from fresh weights instead of the logging policy.
    pub cold_start: bool,
    /// Replay the labeled split as extra positives during fine-tuning.
    pub append_labeled: bool,
    pub ips_clip: f64,
    pub translation: f64,
    pub fixmatch_tau: f64,
    /// FixMatch also learns from logged positives; otherwise the bandit log
    /// only contributes unlabeled states.
    pub fixmatch_logged_positives: bool,
    pub weights: LossWeights,
    pub augment: AugmentConfig,
    pub fet: FetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            method: Method::Banditmatch,
            with_kl: false,
            ablation: Ablation::None,
            batch_size: 64,
            epochs: 30,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            hidden_dims: vec![128, 128],
            hidden_activation: Activation::Relu,
            logging_epochs: 150,
            cold_start: false,
            append_labeled: false,
            ips_clip: DEFAULT_IPS_CLIP,
            translation: DEFAULT_TRANSLATION,
            fixmatch_tau: DEFAULT_FIXMATCH_TAU,
            fixmatch_logged_positives: false,
            weights: LossWeights::default(),
            augment: AugmentConfig::default(),
            fet: FetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ablation != Ablation::None && self.method != Method::Banditmatch {
            return Err(Error::Config(format!(
                "ablation `{}` only applies to banditmatch, not `{}`",
                self.ablation, self.method
            )));
        }
        if self.with_kl && !matches!(self.method, Method::Ips | Method::Banditnet) {
            return Err(Error::Config(format!("with_kl only applies to ips and banditnet, not `{}`", self.method)));
        }
        if self.batch_size == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config("batch size and hidden widths must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if !(self.augment.alpha_weak > 0.0 && self.augment.alpha_strong > 0.0) {
            return Err(Error::Config("mix-up alphas must be positive".into()));
        }
        if !(self.ips_clip > 0.0) || !(0.5..1.0).contains(&self.fixmatch_tau) {
            return Err(Error::Config("ips_clip must be positive and fixmatch_tau in [0.5, 1)".into()));
        }
        self.fet.validate()
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.optimizer,
            learning_rate: self.learning_rate,
            ..OptimizerConfig::default()
        }
    }

    /// Loss weights after applying the ablation switch.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights;
        match self.ablation {
            Ablation::NoCbl => w.lambda_b = 0.0,
            Ablation::NoKl => w.lambda_k = 0.0,
            Ablation::NoneAll => {
                w.lambda_b = 0.0;
                w.lambda_k = 0.0;
            }
            _ => {}
        }
        w
    }

    pub fn fet_mode(&self) -> FetMode {
        match self.ablation {
            Ablation::NoMcScale => FetMode::NoMcScale,
            Ablation::NoFet | Ablation::NoneAll => FetMode::Fixed,
            _ => FetMode::Full,
        }
    }

    /// Name used for report rows, e.g. `ips+kl` or `banditmatch-no_cbl`.
    pub fn label(&self) -> String {
        let mut s = self.method.to_string();
        if self.with_kl {
            s.push_str("+kl");
        }
        if self.ablation != Ablation::None {
            s.push('-');
            s.push_str(self.ablation.as_str());
        }
        s
    }
}

/// Everything needed to run the data pipeline and train/evaluate methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub runs: usize,
    pub world_seed: u64,
    pub corpus_dialogs: usize,
    pub labeled_fraction: f64,
    pub eval_dialogs: usize,
    pub eval_runs: usize,
    /// SL data fractions for the sweep.
    pub sweep_fractions: Vec<f64>,
    pub world: WorldGenConfig,
    pub goals: GoalConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            runs: 5,
            world_seed: 0,
            corpus_dialogs: 400,
            labeled_fraction: 0.1,
            eval_dialogs: 500,
            eval_runs: 5,
            sweep_fractions: vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            world: WorldGenConfig::default(),
            goals: GoalConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 || self.eval_dialogs == 0 || self.eval_runs == 0 || self.corpus_dialogs == 0 {
            return Err(Error::Config("runs, eval_dialogs, eval_runs and corpus_dialogs must be positive".into()));
        }
        for &p in std::iter::once(&self.labeled_fraction).chain(&self.sweep_fractions) {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Config(format!("labeled fraction {p} outside (0, 1]")));
            }
        }
        self.train.validate()
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let line = unknown_key_line(text, e.message())
                .or_else(|| e.span().map(|s| text[..s.start].lines().count().max(1)))
                .unwrap_or(0);
            Error::parse(origin, line, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }
}

/// Unknown-field errors carry the whole table's span; point at the key instead.
fn unknown_key_line(text: &str, message: &str) -> Option<usize> {
    let key = message.strip_prefix("unknown field `")?.split('`').next()?;
    text.lines().position(|l| {
        l.trim_start()
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}
