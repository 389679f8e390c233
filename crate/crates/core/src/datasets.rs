//! Expert corpora, labeled/bandit splits, feedback simulation and JSON-lines
//! persistence.
//!
//! Every JSONL line carries `"v": "v1"`. Corpus lines are
//! `{"v","state","actions"}`; bandit lines add `"rho"` (full per-class
//! propensity vector) and `"delta"` (0 or 1).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dialogworld::{run_episode_with, sample_goal, ActionSet, ExpertAgent, GoalConfig, UserAct, World, DEFAULT_MAX_TURNS};
use crate::error::{Error, Result};
use crate::nncore::Matrix;
use crate::policy::{stack_states, PolicyNet};
use crate::rng;

pub const DATA_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub state: Vec<f64>,
    pub actions: ActionSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditRecord {
    pub state: Vec<f64>,
    pub actions: ActionSet,
    pub rho: Vec<f64>,
    pub delta: u8,
}

impl BanditRecord {
    pub fn is_positive(&self) -> bool {
        self.delta == 1
    }

    /// Record invariants: binary δ, ρ in (0,1) and `actions = {c : ρ_c > 0.5}`.
    pub fn validate(&self, num_actions: usize) -> Result<()> {
        if self.rho.len() != num_actions {
            return Err(Error::Dimension {
                context: "bandit record propensities",
                expected: num_actions,
                got: self.rho.len(),
            });
        }
        if self.delta > 1 {
            return Err(Error::Config(format!("feedback must be 0 or 1, got {}", self.delta)));
        }
        if let Some(r) = self.rho.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(Error::Config(format!("propensity {r} outside (0,1)")));
        }
        if ActionSet::from_probs(&self.rho) != self.actions {
            return Err(Error::Config("logged actions disagree with propensities".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub labeled_fraction: f64,
    pub seed: u64,
}

/// Roll out the expert on `n_dialogs` sampled goals and keep every
/// (state, expert action set) pair, plus the closing `{bye}` turn.
pub fn generate_corpus(world: &World, goals: &GoalConfig, n_dialogs: usize, seed: u64) -> Result<Vec<LabeledExample>> {
    if n_dialogs == 0 {
        return Err(Error::Usage("n_dialogs must be positive".into()));
    }
    let per_dialog: Vec<Vec<LabeledExample>> = (0..n_dialogs)
        .into_par_iter()
        .map(|i| {
            let goal = sample_goal(&world.schema, goals, &mut rng::indexed(seed, "corpus-goal", i as u64))?;
            let mut out = Vec::new();
            run_episode_with(world, &ExpertAgent, &goal, DEFAULT_MAX_TURNS, |ctx, state, actions, reply| {
                out.push(LabeledExample {
                    state: state.to_vec(),
                    actions: actions.clone(),
                });
                if reply == [UserAct::Bye] {
                    let mut last = ctx.clone();
                    last.apply_user_acts(reply);
                    out.push(LabeledExample {
                        state: world.encode(&last),
                        actions: ActionSet::from([world.vocab.bye()]),
                    });
                }
            });
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_dialog.into_iter().flatten().collect())
}

/// Shuffle by seed, then the first `round(p·n)` examples form the labeled set.
pub fn split_corpus<T: Clone>(corpus: &[T], cfg: &SplitConfig) -> Result<(Vec<T>, Vec<T>)> {
    let p = cfg.labeled_fraction;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Usage(format!("labeled fraction must lie in (0, 1], got {p}")));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng::stream(cfg.seed, "split"));
    let n_labeled = (p * corpus.len() as f64).round() as usize;
    let labeled = order[..n_labeled].iter().map(|&i| corpus[i].clone()).collect();
    let pool = order[n_labeled..].iter().map(|&i| corpus[i].clone()).collect();
    Ok((labeled, pool))
}

/// Exact set match.
pub fn simulate_feedback(predicted: &ActionSet, truth: &ActionSet) -> u8 {
    u8::from(predicted == truth)
}

/// Log one record per pool example given the logging policy's probabilities
/// (one row per example).
pub fn log_with_probs(pool: &[LabeledExample], probs: &Matrix) -> Result<Vec<BanditRecord>> {
    if probs.nrows() != pool.len() {
        return Err(Error::Dimension {
            context: "logging probabilities rows",
            expected: pool.len(),
            got: probs.nrows(),
        });
    }
    Ok(pool
        .iter()
        .zip(probs.rows())
        .map(|(ex, row)| {
            let rho = row.to_vec();
            let actions = ActionSet::from_probs(&rho);
            let delta = simulate_feedback(&actions, &ex.actions);
            BanditRecord {
                state: ex.state.clone(),
                actions,
                rho,
                delta,
            }
        })
        .collect())
}

pub fn log_bandit_data(logging: &PolicyNet, pool: &[LabeledExample]) -> Result<Vec<BanditRecord>> {
    let dim = logging.spec().input_dim;
    let states = stack_states(pool.iter().map(|e| e.state.as_slice()), dim)?;
    let probs = logging.probs_batch(states.view())?;
    log_with_probs(pool, &probs)
}

#[derive(Serialize)]
struct LineOut<'a, T> {
    v: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Deserialize)]
struct LineIn<T> {
    v: String,
    #[serde(flatten)]
    body: T,
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(&LineOut { v: DATA_VERSION, body: item })
            .map_err(|e| Error::Config(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LineIn<T> = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if parsed.v != DATA_VERSION {
            return Err(Error::Version {
                found: parsed.v,
                expected: DATA_VERSION.into(),
            });
        }
        out.push(parsed.body);
    }
    Ok(out)
}

pub fn read_corpus(path: &Path, world: &World) -> Result<Vec<LabeledExample>> {
    let items: Vec<LabeledExample> = read_jsonl(path)?;
    for (i, ex) in items.iter().enumerate() {
        check_example(&ex.state, &ex.actions, world).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
    }
    Ok(items)
}

pub fn read_bandit(path: &Path, world: &World) -> Result<Vec<BanditRecord>> {
    let items: Vec<BanditRecord> = read_jsonl(path)?;
    for (i, r) in items.iter().enumerate() {
        check_example(&r.state, &r.actions, world)
            .and_then(|_| r.validate(world.num_actions()))
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
    }
    Ok(items)
}

fn check_example(state: &[f64], actions: &ActionSet, world: &World) -> Result<()> {
    if state.len() != world.state_dim() {
        return Err(Error::Dimension {
            context: "state vector",
            expected: world.state_dim(),
            got: state.len(),
        });
    }
    if let Some(max) = actions.max_index() {
        if max >= world.num_actions() {
            return Err(Error::Config(format!("action index {max} out of range")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogworld::{WorldGenConfig, WorldSchema};
    use ndarray::Array2;

    fn world() -> World {
        World::new(WorldSchema::generate(&WorldGenConfig::default(), &mut rng::stream(0, "world")).unwrap())
    }

    #[test]
    fn corpus_is_deterministic_and_multi_action() {
        let w = world();
        let a = generate_corpus(&w, &GoalConfig::default(), 500, 4).unwrap();
        let b = generate_corpus(&w, &GoalConfig::default(), 500, 4).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().any(|e| e.actions.len() >= 2));
        assert!(a.iter().all(|e| !e.actions.is_empty()));
        assert!(generate_corpus(&w, &GoalConfig::default(), 0, 4).is_err());
    }

    #[test]
    fn split_sizes_and_partition() {
        let corpus: Vec<usize> = (0..1000).collect();
        let cfg = SplitConfig { labeled_fraction: 0.1, seed: 3 };
        let (s, b) = split_corpus(&corpus, &cfg).unwrap();
        assert_eq!(s.len(), 100);
        let mut all: Vec<usize> = s.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, corpus);
        assert_eq!(split_corpus(&corpus, &cfg).unwrap(), (s, b));
        let (s, b) = split_corpus(&corpus, &SplitConfig { labeled_fraction: 1.0, seed: 3 }).unwrap();
        assert_eq!((s.len(), b.len()), (1000, 0));
        for p in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(split_corpus(&corpus, &SplitConfig { labeled_fraction: p, seed: 3 }).is_err());
        }
    }

    #[test]
    fn feedback_examples() {
        assert_eq!(simulate_feedback(&ActionSet::from([1, 3]), &ActionSet::from([1, 3])), 1);
        assert_eq!(simulate_feedback(&ActionSet::from([1, 2, 3]), &ActionSet::from([1, 3])), 0);
        assert_eq!(simulate_feedback(&ActionSet::new(), &ActionSet::new()), 1);
    }

    #[test]
    fn predict_set_threshold() {
        assert_eq!(ActionSet::from_probs(&[0.51, 0.49]), ActionSet::from([0]));
        assert!(ActionSet::from_probs(&[0.5, 0.2]).is_empty());
    }

    fn pool() -> Vec<LabeledExample> {
        vec![
            LabeledExample { state: vec![1.0, 0.0], actions: ActionSet::from([0]) },
            LabeledExample { state: vec![0.0, 1.0], actions: ActionSet::from([1, 2]) },
            LabeledExample { state: vec![1.0, 1.0], actions: ActionSet::new() },
        ]
    }

    #[test]
    fn oracle_and_uniform_logging() {
        let pool = pool();
        let oracle = Array2::from_shape_fn((3, 3), |(i, c)| if pool[i].actions.contains(c) { 0.9 } else { 0.1 });
        let recs = log_with_probs(&pool, &oracle).unwrap();
        assert!(recs.iter().all(|r| r.delta == 1));
        let uniform = Array2::from_elem((3, 3), 0.5);
        let recs = log_with_probs(&pool, &uniform).unwrap();
        assert!(recs.iter().all(|r| r.actions.is_empty()));
        assert_eq!(recs.iter().map(|r| r.delta).collect::<Vec<_>>(), vec![0, 0, 1]);
        for r in &recs {
            r.validate(3).unwrap();
        }
    }

    #[test]
    fn jsonl_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let pool = pool();
        let probs = Array2::from_shape_fn((3, 3), |(i, c)| 0.1 + 0.8 * ((i + c) % 2) as f64 + 1e-13 * c as f64);
        let recs = log_with_probs(&pool, &probs).unwrap();
        let path = dir.path().join("b.jsonl");
        write_jsonl(&path, &recs).unwrap();
        let back: Vec<BanditRecord> = read_jsonl(&path).unwrap();
        assert_eq!(back, recs);
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("{\"v\":\"v1\""));

        let bad = dir.path().join("bad.jsonl");
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1] = "{\"v\":\"v1\",\"state\":[1.0";
        std::fs::write(&bad, lines.join("\n")).unwrap();
        match read_jsonl::<BanditRecord>(&bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        std::fs::write(&bad, text.replace("\"v1\"", "\"v2\"")).unwrap();
        assert!(matches!(read_jsonl::<BanditRecord>(&bad), Err(Error::Version { .. })));
        assert!(matches!(read_jsonl::<BanditRecord>(&dir.path().join("none")), Err(Error::MissingFile(_))));
    }
}
