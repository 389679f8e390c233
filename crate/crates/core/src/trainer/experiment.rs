use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{Ablation, ExperimentConfig, Method, TrainConfig};
use super::eval::{evaluate, ExperimentReport, RunSummary};
use super::loops::{train_logging_policy, train_method, TrainOptions};
use crate::datasets::{generate_corpus, log_bandit_data, split_corpus, BanditRecord, LabeledExample, SplitConfig};
use crate::dialogworld::{World, WorldSchema};
use crate::error::Result;
use crate::policy::PolicyNet;
use crate::rng;

/// Data and logging policy for one run.
#[derive(Debug, Clone)]
pub struct PipelineData {
    pub seed: u64,
    pub corpus: Vec<LabeledExample>,
    pub labeled: Vec<LabeledExample>,
    pub records: Vec<BanditRecord>,
    pub pi0: PolicyNet,
}

pub fn build_world(cfg: &ExperimentConfig) -> Result<World> {
    let schema = WorldSchema::generate(&cfg.world, &mut rng::stream(cfg.world_seed, "world"))?;
    Ok(World::new(schema))
}

/// Seed of run `run` derived from the master seed.
pub fn run_seed(cfg: &ExperimentConfig, run: usize) -> u64 {
    rng::derive_seed(cfg.seed, "run", run as u64)
}

/// Corpus, split, logging policy and bandit log for one run seed.
pub fn prepare_run(world: &World, cfg: &ExperimentConfig, seed: u64, labeled_fraction: f64) -> Result<PipelineData> {
    let corpus = generate_corpus(world, &cfg.goals, cfg.corpus_dialogs, rng::derive_seed(seed, "corpus", 0))?;
    let split = SplitConfig {
        labeled_fraction,
        seed: rng::derive_seed(seed, "split", 0),
    };
    let (labeled, pool) = split_corpus(&corpus, &split)?;
    let train = TrainConfig {
        seed: rng::derive_seed(seed, "logging", 0),
        ..cfg.train.clone()
    };
    let (pi0, _) = train_logging_policy(&labeled, world.state_dim(), world.num_actions(), &train)?;
    let records = log_bandit_data(&pi0, &pool)?;
    Ok(PipelineData {
        seed,
        corpus,
        labeled,
        records,
        pi0,
    })
}

/// A trainable configuration or the logging policy itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Arm {
    Logging,
    Train(TrainConfig),
}

impl Arm {
    pub fn method(method: Method, with_kl: bool, base: &TrainConfig) -> Arm {
        Arm::Train(TrainConfig {
            method,
            with_kl,
            ablation: Ablation::None,
            ..base.clone()
        })
    }

    pub fn ablation(ablation: Ablation, base: &TrainConfig) -> Arm {
        Arm::Train(TrainConfig {
            method: Method::Banditmatch,
            with_kl: false,
            ablation,
            ..base.clone()
        })
    }

    pub fn label(&self) -> String {
        match self {
            Arm::Logging => "logging".into(),
            Arm::Train(t) => t.label(),
        }
    }
}

/// Train (if needed) and evaluate one arm on prepared data.
pub fn run_arm(world: &World, cfg: &ExperimentConfig, data: &PipelineData, arm: &Arm, eval_runs: usize) -> Result<RunOutcome> {
    let policy = match arm {
        Arm::Logging => data.pi0.clone(),
        Arm::Train(t) => {
            let t = TrainConfig {
                seed: rng::derive_seed(data.seed, "finetune", 0),
                ..t.clone()
            };
            train_method(&data.pi0, &data.records, &data.corpus, &data.labeled, &t, TrainOptions::default())?.0
        }
    };
    let eval_seed = rng::derive_seed(data.seed, "eval", 0);
    let report = evaluate(&policy, &arm.label(), world, &cfg.goals, cfg.eval_dialogs, eval_runs, eval_seed)?;
    Ok(RunOutcome { policy, report })
}

pub struct RunOutcome {
    pub policy: PolicyNet,
    pub report: ExperimentReport,
}

/// Per-arm results over `cfg.runs` seeds; each seed contributes the mean of
/// its evaluation runs as one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub arms: Vec<(String, ExperimentReport)>,
}

impl Comparison {
    pub fn get(&self, label: &str) -> Option<&ExperimentReport> {
        self.arms.iter().find(|(l, _)| l == label).map(|(_, r)| r)
    }
}

/// Every arm on every run seed with shared data and evaluation goals.
pub fn compare_arms(world: &World, cfg: &ExperimentConfig, arms: &[Arm], labeled_fraction: f64) -> Result<Comparison> {
    cfg.validate()?;
    let mut per_arm: BTreeMap<usize, Vec<RunSummary>> = BTreeMap::new();
    for run in 0..cfg.runs {
        let data = prepare_run(world, cfg, run_seed(cfg, run), labeled_fraction)?;
        for (k, arm) in arms.iter().enumerate() {
            let out = run_arm(world, cfg, &data, arm, cfg.eval_runs)?;
            per_arm.entry(k).or_default().push(mean_run(&out.report.runs));
        }
    }
    let arms = arms
        .iter()
        .enumerate()
        .map(|(k, arm)| {
            let label = arm.label();
            let report = ExperimentReport::from_runs(label.clone(), per_arm.remove(&k).unwrap_or_default())?;
            Ok((label, report))
        })
        .collect::<Result<_>>()?;
    Ok(Comparison { arms })
}

fn mean_run(runs: &[RunSummary]) -> RunSummary {
    let n = runs.len() as f64;
    let m = |f: &dyn Fn(&RunSummary) -> f64| runs.iter().map(f).sum::<f64>() / n;
    RunSummary {
        turns: m(&|r| r.turns),
        matched: m(&|r| r.matched),
        inform_recall: m(&|r| r.inform_recall),
        inform_precision: m(&|r| r.inform_precision),
        inform_f1: m(&|r| r.inform_f1),
        success_pct: m(&|r| r.success_pct),
    }
}

/// Full BanditMatch and its five ablations on shared seeds.
pub fn run_ablation_grid(world: &World, cfg: &ExperimentConfig) -> Result<Vec<(Ablation, ExperimentReport)>> {
    let arms: Vec<Arm> = Ablation::GRID.iter().map(|&a| Arm::ablation(a, &cfg.train)).collect();
    let cmp = compare_arms(world, cfg, &arms, cfg.labeled_fraction)?;
    Ok(Ablation::GRID.iter().copied().zip(cmp.arms.into_iter().map(|(_, r)| r)).collect())
}

/// The main comparison: logging policy, full-label SL, IPS, BanditNet
/// (each ± KL), FixMatch and BanditMatch.
pub fn main_arms(base: &TrainConfig) -> Vec<Arm> {
    vec![
        Arm::Logging,
        Arm::method(Method::Sl, false, base),
        Arm::method(Method::Ips, false, base),
        Arm::method(Method::Ips, true, base),
        Arm::method(Method::Banditnet, false, base),
        Arm::method(Method::Banditnet, true, base),
        Arm::method(Method::Fixmatch, false, base),
        Arm::method(Method::Banditmatch, false, base),
    ]
}

/// One comparison per labeled fraction; results keyed by arm label, one
/// `(fraction, report)` series each.
pub fn run_sl_sweep(world: &World, cfg: &ExperimentConfig, arms: &[Arm]) -> Result<BTreeMap<String, Vec<(f64, ExperimentReport)>>> {
    let mut out: BTreeMap<String, Vec<(f64, ExperimentReport)>> = BTreeMap::new();
    for &p in &cfg.sweep_fractions {
        let cmp = compare_arms(world, cfg, arms, p)?;
        for (label, report) in cmp.arms {
            out.entry(label).or_default().push((p, report));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogworld::GoalConfig;
    use crate::dialogworld::WorldGenConfig;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            runs: 2,
            corpus_dialogs: 20,
            labeled_fraction: 0.3,
            eval_dialogs: 20,
            eval_runs: 1,
            sweep_fractions: vec![0.2, 0.5],
            world: WorldGenConfig {
                domains: vec!["hotel".into()],
                informable_per_domain: 2,
                requestable_per_domain: 2,
                values_per_slot: 2,
                entities_per_domain: 4,
            },
            goals: GoalConfig {
                domain_count_weights: vec![1.0],
                ..GoalConfig::default()
            },
            train: TrainConfig {
                hidden_dims: vec![16],
                logging_epochs: 10,
                epochs: 1,
                batch_size: 16,
                ..TrainConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn ablation_grid_has_six_paired_rows() {
        let cfg = tiny();
        let w = build_world(&cfg).unwrap();
        let grid = run_ablation_grid(&w, &cfg).unwrap();
        assert_eq!(grid.len(), 6);
        assert_eq!(grid.iter().map(|(a, _)| *a).collect::<Vec<_>>(), Ablation::GRID.to_vec());
        assert!(grid.iter().all(|(_, r)| r.runs.len() == cfg.runs));
        assert_eq!(run_ablation_grid(&w, &cfg).unwrap(), grid);
    }

    #[test]
    fn logging_arm_equals_direct_evaluation() {
        let cfg = tiny();
        let w = build_world(&cfg).unwrap();
        let data = prepare_run(&w, &cfg, run_seed(&cfg, 0), cfg.labeled_fraction).unwrap();
        let out = run_arm(&w, &cfg, &data, &Arm::Logging, 1).unwrap();
        let direct = evaluate(&data.pi0, "logging", &w, &cfg.goals, cfg.eval_dialogs, 1, rng::derive_seed(data.seed, "eval", 0)).unwrap();
        assert_eq!(out.report, direct);
    }

    #[test]
    fn sweep_series_follow_the_fraction_list() {
        assert_eq!(ExperimentConfig::default().sweep_fractions.len(), 10);
        let cfg = ExperimentConfig { runs: 1, ..tiny() };
        let w = build_world(&cfg).unwrap();
        let arms = [Arm::Logging, Arm::method(Method::Sl, false, &cfg.train)];
        let series = run_sl_sweep(&w, &cfg, &arms).unwrap();
        assert_eq!(series.len(), 2);
        for s in series.values() {
            assert_eq!(s.iter().map(|(p, _)| *p).collect::<Vec<_>>(), cfg.sweep_fractions);
        }
    }

    #[test]
    fn main_arm_labels() {
        let labels: Vec<String> = main_arms(&TrainConfig::default()).iter().map(Arm::label).collect();
        assert_eq!(
            labels,
            ["logging", "sl", "ips", "ips+kl", "banditnet", "banditnet+kl", "fixmatch", "banditmatch"]
        );
    }
}
