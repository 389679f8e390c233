use std::path::Path;

use ndarray::Axis;
use rand::seq::SliceRandom;
use serde::Serialize;

use super::config::{Method, TrainConfig};
use crate::datasets::{BanditRecord, LabeledExample};
use crate::dialogworld::ActionSet;
use crate::error::{Error, Result};
use crate::fet::{confidence_mask, FetMode, FetRecord, FetState};
use crate::nncore::{Graph, Matrix, MlpSpec, NodeId, Optimizer};
use crate::objectives::{
    composite_loss, fixmatch_mask, indicator_matrix, loss_banditnet, loss_ips, loss_kl, loss_labeled, mix_batch, pseudo_labels,
    unconf_plus_mask, CompositeBatch,
};
use crate::policy::{stack_states, PolicyNet, Role};
use crate::rng::{self, Rng};

/// One training-log row; terms a method does not use are left empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepLog {
    pub step: usize,
    pub loss_labeled: Option<f64>,
    pub loss_pseudo: Option<f64>,
    pub loss_bandit: Option<f64>,
    pub loss_kl: Option<f64>,
    pub total: f64,
    pub n_conf: Option<usize>,
    pub n_unconf_plus: Option<usize>,
    pub mc_pos: Option<f64>,
    pub mc_neg: Option<f64>,
}

/// Per-class thresholds at one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdLog {
    pub step: usize,
    pub class: usize,
    pub tau_pos_y: f64,
    pub tau_pos_n: f64,
    pub tau_neg_y: f64,
    pub tau_neg_n: f64,
    pub mc_pos: Option<f64>,
    pub mc_neg: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepLog>,
    pub thresholds: Vec<ThresholdLog>,
}

impl TrainLog {
    pub fn write_steps(&self, path: &Path) -> Result<()> {
        write_csv(path, &self.steps)
    }

    pub fn write_thresholds(&self, path: &Path) -> Result<()> {
        write_csv(path, &self.thresholds)
    }
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

/// Options for a training call that do not belong in the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    /// Record per-class thresholds every step.
    pub trace_thresholds: bool,
}

fn batches(n: usize, batch_size: usize, epochs: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..epochs {
        order.shuffle(rng);
        out.extend(order.chunks(batch_size).map(<[usize]>::to_vec));
    }
    out
}

fn finish_step(policy: &mut PolicyNet, opt: &mut Optimizer, g: &Graph, loss: NodeId) -> Result<f64> {
    let value = g.scalar(loss);
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss(value));
    }
    let grads = g.backward(loss)?;
    let params = policy.params_mut()?;
    params.zero_grad();
    grads.accumulate_into(params);
    opt.step(params)?;
    Ok(value)
}

fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    m.select(Axis(0), rows)
}

/// Plain per-class BCE on full labels, no augmentation.
fn supervised(policy: &mut PolicyNet, data: &[LabeledExample], cfg: &TrainConfig, epochs: usize, stream: &str) -> Result<TrainLog> {
    if data.is_empty() {
        return Err(Error::Usage("supervised training needs at least one example".into()));
    }
    let c = policy.num_actions();
    let dim = policy.spec().input_dim;
    let states = stack_states(data.iter().map(|e| e.state.as_slice()), dim)?;
    let sets: Vec<&ActionSet> = data.iter().map(|e| &e.actions).collect();
    let targets = indicator_matrix(&sets, c);
    let mut opt = Optimizer::new(cfg.optimizer_config(), policy.params());
    let mut r = rng::stream(cfg.seed, stream);
    let mut log = TrainLog::default();
    for (step, idx) in batches(data.len(), cfg.batch_size, epochs, &mut r).into_iter().enumerate() {
        let mut g = Graph::new();
        let x = g.constant(select_rows(&states, &idx));
        let p = policy.net().forward_graph(&mut g, x)?;
        let l = loss_labeled(&mut g, p, &select_rows(&targets, &idx))?;
        let total = finish_step(policy, &mut opt, &g, l)?;
        log.steps.push(StepLog {
            step,
            loss_labeled: Some(total),
            loss_pseudo: None,
            loss_bandit: None,
            loss_kl: None,
            total,
            n_conf: None,
            n_unconf_plus: None,
            mc_pos: None,
            mc_neg: None,
        });
    }
    Ok(log)
}

pub fn policy_spec(cfg: &TrainConfig, state_dim: usize, num_actions: usize) -> MlpSpec {
    MlpSpec {
        input_dim: state_dim,
        hidden_dims: cfg.hidden_dims.clone(),
        output_dim: num_actions,
        hidden_activation: cfg.hidden_activation,
    }
}

/// Supervised logging policy on the labeled split; returned frozen.
pub fn train_logging_policy(labeled: &[LabeledExample], state_dim: usize, num_actions: usize, cfg: &TrainConfig) -> Result<(PolicyNet, TrainLog)> {
    if labeled.is_empty() {
        return Err(Error::Usage("the labeled split is empty".into()));
    }
    let spec = policy_spec(cfg, state_dim, num_actions);
    let mut policy = PolicyNet::init(spec, &mut rng::stream(cfg.seed, "logging-init"))?;
    let log = supervised(&mut policy, labeled, cfg, cfg.logging_epochs, "logging-batches")?;
    Ok((policy.clone_frozen(), log))
}

/// The bandit log as dense matrices plus the frozen policy's probabilities.
struct LogData<'a> {
    records: Vec<&'a BanditRecord>,
    states: Matrix,
    rho: Matrix,
    logged: Matrix,
    probs0: Matrix,
}

impl<'a> LogData<'a> {
    fn new(records: Vec<&'a BanditRecord>, pi0: &PolicyNet) -> Result<Self> {
        let c = pi0.num_actions();
        let dim = pi0.spec().input_dim;
        let states = stack_states(records.iter().map(|r| r.state.as_slice()), dim)?;
        let rho = stack_states(records.iter().map(|r| r.rho.as_slice()), c)?;
        let sets: Vec<&ActionSet> = records.iter().map(|r| &r.actions).collect();
        let logged = indicator_matrix(&sets, c);
        let probs0 = pi0.probs_batch(states.view())?;
        Ok(LogData {
            records,
            states,
            rho,
            logged,
            probs0,
        })
    }
}

fn start_policy(pi0: &PolicyNet, cfg: &TrainConfig) -> Result<PolicyNet> {
    if cfg.cold_start {
        PolicyNet::init(pi0.spec().clone(), &mut rng::stream(cfg.seed, "cold-init"))
    } else {
        Ok(pi0.clone_trainable())
    }
}

fn check_frozen(pi0: &PolicyNet) -> Result<()> {
    if pi0.role() != Role::Frozen {
        return Err(Error::Usage("the logging policy must be frozen".into()));
    }
    Ok(())
}

/// Fine-tune a copy of `pi0` on the bandit log with the full objective (or
/// the ablation selected in `cfg`).
pub fn train_banditmatch(
    pi0: &PolicyNet,
    records: &[BanditRecord],
    labeled: &[LabeledExample],
    cfg: &TrainConfig,
    opts: TrainOptions,
) -> Result<(PolicyNet, TrainLog)> {
    check_frozen(pi0)?;
    cfg.validate()?;
    let mut extra = Vec::new();
    if cfg.append_labeled {
        let probs = pi0.probs_batch(stack_states(labeled.iter().map(|e| e.state.as_slice()), pi0.spec().input_dim)?.view())?;
        for (e, row) in labeled.iter().zip(probs.rows()) {
            extra.push(BanditRecord {
                state: e.state.clone(),
                actions: e.actions.clone(),
                rho: row.to_vec(),
                delta: 1,
            });
        }
    }
    let all: Vec<&BanditRecord> = records.iter().chain(&extra).collect();
    if all.is_empty() {
        return Err(Error::Usage("no bandit records to train on".into()));
    }
    let data = LogData::new(all, pi0)?;
    let mut policy = start_policy(pi0, cfg)?;
    let weights = cfg.effective_weights();
    let mode = cfg.fet_mode();
    let c = policy.num_actions();
    let mut fet = FetState::new(c, cfg.fet, mode);
    let mut opt = Optimizer::new(cfg.optimizer_config(), policy.params());
    let mut batch_rng = rng::stream(cfg.seed, "finetune-batches");
    let mut aug_rng = rng::stream(cfg.seed, "augment");
    let mut log = TrainLog::default();

    for (step, idx) in batches(data.records.len(), cfg.batch_size, cfg.epochs, &mut batch_rng).into_iter().enumerate() {
        let states = select_rows(&data.states, &idx);
        let rho = select_rows(&data.rho, &idx);
        let delta: Vec<u8> = idx.iter().map(|&i| data.records[i].delta).collect();
        let sets: Vec<&ActionSet> = idx.iter().map(|&i| &data.records[i].actions).collect();
        let probs = policy.probs_batch(states.view())?;

        let fet_records: Vec<FetRecord<'_>> = (0..idx.len())
            .map(|k| FetRecord {
                probs: probs.row(k).to_slice().expect("standard layout"),
                actions: sets[k],
                rho: rho.row(k).to_slice().expect("standard layout"),
            })
            .collect();
        let (pos, neg): (Vec<_>, Vec<_>) = (0..idx.len()).partition(|&k| delta[k] == 1);
        let pos_recs: Vec<FetRecord<'_>> = pos.iter().map(|&k| fet_records[k]).collect();
        let neg_recs: Vec<FetRecord<'_>> = neg.iter().map(|&k| fet_records[k]).collect();
        let fet_step = fet.step(&pos_recs, &neg_recs);

        let weak = mix_batch(states.view(), cfg.augment.alpha_weak, &mut aug_rng)?;
        let strong = mix_batch(states.view(), cfg.augment.alpha_strong, &mut aug_rng)?;
        let weak_probs = policy.probs_batch(weak.view())?;
        let conf = match mode {
            FetMode::Fixed => fixmatch_mask(weak_probs.view(), &delta, cfg.fet.fallback_tau_y),
            _ => confidence_mask(weak_probs.view(), &delta, &fet_step.thresholds),
        };
        let qhat = pseudo_labels(weak_probs.view());
        let unconf_plus = unconf_plus_mask(&delta, &conf, &sets);
        let pos_sets: Vec<&ActionSet> = pos.iter().map(|&k| sets[k]).collect();
        let batch = CompositeBatch {
            weak_positive_states: select_rows(&weak, &pos),
            positive_targets: indicator_matrix(&pos_sets, c),
            strong_states: strong,
            conf,
            qhat,
            states,
            rho,
            delta,
            unconf_plus,
            probs0: select_rows(&data.probs0, &idx),
        };
        let mut g = Graph::new();
        let terms = composite_loss(&mut g, policy.net(), &batch, &weights)?;
        let total = finish_step(&mut policy, &mut opt, &g, terms.total)?;

        if opts.trace_thresholds {
            let t = &fet_step.thresholds;
            for k in 0..c {
                log.thresholds.push(ThresholdLog {
                    step,
                    class: k,
                    tau_pos_y: t.tau_pos_y[k],
                    tau_pos_n: t.tau_pos_n[k],
                    tau_neg_y: t.tau_neg_y[k],
                    tau_neg_n: t.tau_neg_n[k],
                    mc_pos: fet_step.stats.mc_pos,
                    mc_neg: fet_step.stats.mc_neg,
                });
            }
        }
        log.steps.push(StepLog {
            step,
            loss_labeled: Some(g.scalar(terms.labeled)),
            loss_pseudo: Some(g.scalar(terms.pseudo)),
            loss_bandit: Some(g.scalar(terms.bandit)),
            loss_kl: Some(g.scalar(terms.kl)),
            total,
            n_conf: Some(batch.conf.sum() as usize),
            n_unconf_plus: Some(batch.unconf_plus.sum() as usize),
            mc_pos: fet_step.stats.mc_pos,
            mc_neg: fet_step.stats.mc_neg,
        });
    }
    Ok((policy.clone_trainable(), log))
}

/// Counterfactual baselines (IPS, BanditNet, each optionally with KL).
fn train_crm(pi0: &PolicyNet, records: &[BanditRecord], cfg: &TrainConfig) -> Result<(PolicyNet, TrainLog)> {
    if records.is_empty() {
        return Err(Error::Usage("no bandit records to train on".into()));
    }
    let data = LogData::new(records.iter().collect(), pi0)?;
    let mut policy = start_policy(pi0, cfg)?;
    let mut opt = Optimizer::new(cfg.optimizer_config(), policy.params());
    let mut r = rng::stream(cfg.seed, "finetune-batches");
    let mut log = TrainLog::default();
    let lambda_k = cfg.weights.lambda_k;
    for (step, idx) in batches(data.records.len(), cfg.batch_size, cfg.epochs, &mut r).into_iter().enumerate() {
        let delta: Vec<u8> = idx.iter().map(|&i| data.records[i].delta).collect();
        let rho = select_rows(&data.rho, &idx);
        let logged = select_rows(&data.logged, &idx);
        let mut g = Graph::new();
        let x = g.constant(select_rows(&data.states, &idx));
        let p = policy.net().forward_graph(&mut g, x)?;
        let crm = match cfg.method {
            Method::Ips => loss_ips(&mut g, p, &rho, &logged, &delta, cfg.ips_clip)?,
            _ => loss_banditnet(&mut g, p, &rho, &logged, &delta, cfg.translation, cfg.ips_clip)?,
        };
        let (total_node, kl) = if cfg.with_kl {
            let k = loss_kl(&mut g, p, &select_rows(&data.probs0, &idx))?;
            let scaled = g.scale(k, lambda_k);
            (g.add(crm, scaled), Some(k))
        } else {
            (crm, None)
        };
        let total = finish_step(&mut policy, &mut opt, &g, total_node)?;
        log.steps.push(StepLog {
            step,
            loss_labeled: None,
            loss_pseudo: None,
            loss_bandit: Some(g.scalar(crm)),
            loss_kl: kl.map(|k| g.scalar(k)),
            total,
            n_conf: None,
            n_unconf_plus: None,
            mc_pos: None,
            mc_neg: None,
        });
    }
    Ok((policy, log))
}

/// Baselines fine-tuned from `pi0`: full-label SL on `corpus`, IPS or
/// BanditNet on `records`, FixMatch on `labeled` plus the logged states.
pub fn train_baseline(
    pi0: &PolicyNet,
    records: &[BanditRecord],
    corpus: &[LabeledExample],
    labeled: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<(PolicyNet, TrainLog)> {
    check_frozen(pi0)?;
    cfg.validate()?;
    match cfg.method {
        Method::Sl => {
            let mut policy = start_policy(pi0, cfg)?;
            let log = supervised(&mut policy, corpus, cfg, cfg.epochs, "finetune-batches")?;
            Ok((policy, log))
        }
        Method::Ips | Method::Banditnet => train_crm(pi0, records, cfg),
        Method::Fixmatch => {
            let mut fm = cfg.clone();
            fm.method = Method::Banditmatch;
            fm.ablation = super::config::Ablation::NoneAll;
            fm.fet.fallback_tau_y = cfg.fixmatch_tau;
            fm.fet.fallback_tau_n = 1.0 - cfg.fixmatch_tau;
            if cfg.fixmatch_logged_positives {
                return train_banditmatch(pi0, records, &[], &fm, TrainOptions::default());
            }
            fm.append_labeled = true;
            let unlabeled: Vec<BanditRecord> = records.iter().map(|r| BanditRecord { delta: 0, ..r.clone() }).collect();
            train_banditmatch(pi0, &unlabeled, labeled, &fm, TrainOptions::default())
        }
        Method::Banditmatch => Err(Error::Usage("use train_banditmatch for the full method".into())),
    }
}

/// Dispatch on `cfg.method`.
pub fn train_method(
    pi0: &PolicyNet,
    records: &[BanditRecord],
    corpus: &[LabeledExample],
    labeled: &[LabeledExample],
    cfg: &TrainConfig,
    opts: TrainOptions,
) -> Result<(PolicyNet, TrainLog)> {
    match cfg.method {
        Method::Banditmatch => train_banditmatch(pi0, records, labeled, cfg, opts),
        _ => train_baseline(pi0, records, corpus, labeled, cfg),
    }
}

/// Fraction of examples whose predicted set equals the label.
pub fn exact_match_rate(policy: &PolicyNet, data: &[LabeledExample]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let states = stack_states(data.iter().map(|e| e.state.as_slice()), policy.spec().input_dim)?;
    let probs = policy.probs_batch(states.view())?;
    let hits = data
        .iter()
        .zip(probs.rows())
        .filter(|(e, row)| ActionSet::from_probs(row.as_slice().expect("standard layout")) == e.actions)
        .count();
    Ok(hits as f64 / data.len() as f64)
}
