//! Feedback-enhanced thresholding.
//!
//! Per-class accept/reject thresholds are estimated on positive examples the
//! current policy still predicts exactly, then rescaled for negatives by the
//! ratio of importance-weighted model correctness on negatives and positives.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dialogworld::ActionSet;
use crate::error::{Error, Result};

pub const FALLBACK_TAU_Y: f64 = 0.95;
pub const FALLBACK_TAU_N: f64 = 0.05;
pub const MC_EPSILON: f64 = 1e-3;
pub const EMA_DECAY: f64 = 0.9;

/// One logged decision as seen by FET: current policy probabilities on the
/// unaugmented state, the logged action set and its logging propensities.
#[derive(Debug, Clone, Copy)]
pub struct FetRecord<'a> {
    pub probs: &'a [f64],
    pub actions: &'a ActionSet,
    pub rho: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FetConfig {
    pub fallback_tau_y: f64,
    pub fallback_tau_n: f64,
    pub ema_decay: f64,
    pub mc_epsilon: f64,
}

impl Default for FetConfig {
    fn default() -> Self {
        FetConfig {
            fallback_tau_y: FALLBACK_TAU_Y,
            fallback_tau_n: FALLBACK_TAU_N,
            ema_decay: EMA_DECAY,
            mc_epsilon: MC_EPSILON,
        }
    }
}

impl FetConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.5..=1.0).contains(&self.fallback_tau_y)
            && (0.0..=0.5).contains(&self.fallback_tau_n)
            && (0.0..1.0).contains(&self.ema_decay)
            && self.mc_epsilon > 0.0
            && self.mc_epsilon < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid thresholding settings: {self:?}")))
        }
    }
}

/// Per-class thresholds; `None` marks a class without supporting examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositiveThresholds {
    pub tau_y: Vec<Option<f64>>,
    pub tau_n: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub tau_pos_y: Vec<f64>,
    pub tau_pos_n: Vec<f64>,
    pub tau_neg_y: Vec<f64>,
    pub tau_neg_n: Vec<f64>,
    pub valid_y: Vec<bool>,
    pub valid_n: Vec<bool>,
}

impl ThresholdSet {
    /// Fixed thresholds on every class.
    pub fn fixed(num_classes: usize, tau_y: f64, tau_n: f64) -> Self {
        ThresholdSet {
            tau_pos_y: vec![tau_y; num_classes],
            tau_pos_n: vec![tau_n; num_classes],
            tau_neg_y: vec![tau_y; num_classes],
            tau_neg_n: vec![tau_n; num_classes],
            valid_y: vec![false; num_classes],
            valid_n: vec![false; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.tau_neg_y.len()
    }
}

/// Clamped model-correctness estimates; `None` when there was nothing to
/// average over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessStats {
    pub mc_pos: Option<f64>,
    pub mc_neg: Option<f64>,
    pub n_correct_positives: usize,
}

/// Indices of positives whose current prediction equals the logged set.
pub fn correct_positive_set(positives: &[FetRecord<'_>]) -> Vec<usize> {
    positives
        .iter()
        .enumerate()
        .filter(|(_, r)| ActionSet::from_probs(r.probs) == *r.actions)
        .map(|(i, _)| i)
        .collect()
}

pub fn positive_thresholds(correct: &[FetRecord<'_>], num_classes: usize) -> PositiveThresholds {
    let mut sum_y = vec![0.0; num_classes];
    let mut sum_n = vec![0.0; num_classes];
    let mut n_y = vec![0usize; num_classes];
    let mut n_n = vec![0usize; num_classes];
    for r in correct {
        for c in 0..num_classes {
            if r.actions.contains(c) {
                sum_y[c] += r.probs[c];
                n_y[c] += 1;
            } else {
                sum_n[c] += r.probs[c];
                n_n[c] += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
    PositiveThresholds {
        tau_y: (0..num_classes).map(|c| mean(sum_y[c], n_y[c])).collect(),
        tau_n: (0..num_classes).map(|c| mean(sum_n[c], n_n[c])).collect(),
    }
}

/// `1/|Â|`; `None` for an empty set.
pub fn attribution_pos(actions: &ActionSet) -> Option<f64> {
    (!actions.is_empty()).then(|| 1.0 / actions.len() as f64)
}

/// `ρ_j / Σ_{k∈Â} ρ_k`; `None` when `action ∉ Â` or the set is empty.
pub fn attribution_neg(action: usize, actions: &ActionSet, rho: &[f64]) -> Option<f64> {
    if !actions.contains(action) {
        return None;
    }
    let total: f64 = actions.iter().map(|k| rho[k]).sum();
    Some(rho[action] / total)
}

/// Unclamped MC over positives; records with empty logged sets are skipped.
pub fn raw_mc_pos(correct: &[FetRecord<'_>]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in correct {
        let Some(w) = attribution_pos(r.actions) else { continue };
        sum += r.actions.iter().map(|j| w * r.probs[j] / r.rho[j]).sum::<f64>();
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Unclamped MC over negatives; records with empty logged sets are skipped.
pub fn raw_mc_neg(negatives: &[FetRecord<'_>]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in negatives {
        if r.actions.is_empty() {
            continue;
        }
        sum += r
            .actions
            .iter()
            .map(|j| attribution_neg(j, r.actions, r.rho).unwrap_or(0.0) * (1.0 - r.probs[j]) / (1.0 - r.rho[j]))
            .sum::<f64>();
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

pub fn clamp_mc(mc: f64, epsilon: f64) -> f64 {
    mc.clamp(0.0, 1.0 - epsilon)
}

pub fn model_correctness(correct: &[FetRecord<'_>], negatives: &[FetRecord<'_>], epsilon: f64) -> CorrectnessStats {
    CorrectnessStats {
        mc_pos: raw_mc_pos(correct).map(|m| clamp_mc(m, epsilon)),
        mc_neg: raw_mc_neg(negatives).map(|m| clamp_mc(m, epsilon)),
        n_correct_positives: correct.len(),
    }
}

/// `(1 - mc_neg) / (1 - mc_pos)` on clamped values.
pub fn mc_scale(mc_pos: f64, mc_neg: f64) -> f64 {
    (1.0 - mc_neg) / (1.0 - mc_pos)
}

/// Scale the positive baselines into negative thresholds and clamp them;
/// invalid classes get the fallback pair. `scale = None` falls back entirely.
pub fn negative_thresholds(pos: &PositiveThresholds, scale: Option<f64>, cfg: &FetConfig) -> ThresholdSet {
    let c = pos.tau_y.len();
    let Some(scale) = scale else {
        let mut t = ThresholdSet::fixed(c, cfg.fallback_tau_y, cfg.fallback_tau_n);
        t.tau_pos_y = pos.tau_y.iter().map(|v| v.unwrap_or(cfg.fallback_tau_y)).collect();
        t.tau_pos_n = pos.tau_n.iter().map(|v| v.unwrap_or(cfg.fallback_tau_n)).collect();
        return t;
    };
    let mut t = ThresholdSet::fixed(c, cfg.fallback_tau_y, cfg.fallback_tau_n);
    for k in 0..c {
        if let Some(y) = pos.tau_y[k] {
            t.tau_pos_y[k] = y;
            t.tau_neg_y[k] = (y * scale).clamp(0.5, 1.0);
            t.valid_y[k] = true;
        }
        if let Some(n) = pos.tau_n[k] {
            t.tau_pos_n[k] = n;
            let raw = if scale == 1.0 { n } else { 1.0 - (1.0 - n) * scale };
            t.tau_neg_n[k] = raw.clamp(0.0, 0.5);
            t.valid_n[k] = true;
        }
    }
    t
}

/// `Conf[i,c] = 1` iff `δ_i = 0` and the weak-augmentation probability lies
/// outside `[tau_neg_N[c], tau_neg_Y[c]]`.
pub fn confidence_mask(weak_probs: ArrayView2<'_, f64>, delta: &[u8], t: &ThresholdSet) -> Array2<f64> {
    Array2::from_shape_fn(weak_probs.dim(), |(i, c)| {
        let p = weak_probs[[i, c]];
        f64::from(u8::from(delta[i] == 0 && (p < t.tau_neg_n[c] || p > t.tau_neg_y[c])))
    })
}

/// Thresholding mode used by training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FetMode {
    /// Positive baselines scaled by model correctness.
    Full,
    /// Positive baselines used directly for negatives.
    NoMcScale,
    /// Fallback thresholds everywhere.
    Fixed,
}

/// Step-to-step threshold state: exponential moving averages of the positive
/// baselines and of `mc_pos`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetState {
    pub config: FetConfig,
    pub mode: FetMode,
    pub tau_y: Vec<Option<f64>>,
    pub tau_n: Vec<Option<f64>>,
    pub mc_pos: Option<f64>,
}

/// What one FET step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct FetStep {
    pub thresholds: ThresholdSet,
    pub stats: CorrectnessStats,
    pub scale: Option<f64>,
}

fn ema(old: Option<f64>, new: Option<f64>, decay: f64) -> Option<f64> {
    match (old, new) {
        (Some(o), Some(n)) => Some(decay * o + (1.0 - decay) * n),
        (None, n) => n,
        (o, None) => o,
    }
}

impl FetState {
    pub fn new(num_classes: usize, config: FetConfig, mode: FetMode) -> Self {
        FetState {
            config,
            mode,
            tau_y: vec![None; num_classes],
            tau_n: vec![None; num_classes],
            mc_pos: None,
        }
    }

    /// Fold in this batch's positives and negatives and return the thresholds
    /// to use for the batch.
    pub fn step(&mut self, positives: &[FetRecord<'_>], negatives: &[FetRecord<'_>]) -> FetStep {
        let c = self.tau_y.len();
        let cfg = self.config;
        if self.mode == FetMode::Fixed {
            return FetStep {
                thresholds: ThresholdSet::fixed(c, cfg.fallback_tau_y, cfg.fallback_tau_n),
                stats: CorrectnessStats {
                    mc_pos: None,
                    mc_neg: None,
                    n_correct_positives: 0,
                },
                scale: None,
            };
        }
        let correct: Vec<FetRecord<'_>> = correct_positive_set(positives).into_iter().map(|i| positives[i]).collect();
        let batch = positive_thresholds(&correct, c);
        for k in 0..c {
            self.tau_y[k] = ema(self.tau_y[k], batch.tau_y[k], cfg.ema_decay);
            self.tau_n[k] = ema(self.tau_n[k], batch.tau_n[k], cfg.ema_decay);
        }
        let stats = model_correctness(&correct, negatives, cfg.mc_epsilon);
        self.mc_pos = ema(self.mc_pos, stats.mc_pos, cfg.ema_decay).map(|m| clamp_mc(m, cfg.mc_epsilon));
        let smoothed = PositiveThresholds {
            tau_y: self.tau_y.clone(),
            tau_n: self.tau_n.clone(),
        };
        let scale = match self.mode {
            FetMode::NoMcScale => Some(1.0),
            _ => self.mc_pos.zip(stats.mc_neg).map(|(p, n)| mc_scale(p, n)),
        };
        FetStep {
            thresholds: negative_thresholds(&smoothed, scale, &cfg),
            stats: CorrectnessStats {
                mc_pos: self.mc_pos,
                ..stats
            },
            scale,
        }
    }
}
