use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loops::{csv_error, write_csv};
use crate::dialogworld::{run_episode, sample_goal, Agent, EpisodeMetrics, GoalConfig, MetricsReport, Stat, World, DEFAULT_MAX_TURNS};
use crate::error::{Error, Result};
use crate::rng;

/// Episode means of one evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub turns: f64,
    pub matched: f64,
    pub inform_recall: f64,
    pub inform_precision: f64,
    pub inform_f1: f64,
    pub success_pct: f64,
}

impl RunSummary {
    pub fn of(episodes: &[EpisodeMetrics]) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::Usage("cannot summarize zero episodes".into()));
        }
        let n = episodes.len() as f64;
        let mean = |f: &dyn Fn(&EpisodeMetrics) -> f64| episodes.iter().map(f).sum::<f64>() / n;
        Ok(RunSummary {
            turns: mean(&|e| e.turns as f64),
            matched: mean(&|e| f64::from(u8::from(e.matched))),
            inform_recall: mean(&|e| e.inform_recall),
            inform_precision: mean(&|e| e.inform_precision),
            inform_f1: mean(&|e| e.inform_f1),
            success_pct: mean(&|e| 100.0 * f64::from(u8::from(e.success))),
        })
    }
}

/// Runs of one method and their mean ± std (over runs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub method: String,
    pub runs: Vec<RunSummary>,
    pub summary: MetricsReport,
}

impl ExperimentReport {
    pub fn from_runs(method: impl Into<String>, runs: Vec<RunSummary>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Usage("a report needs at least one run".into()));
        }
        let col = |f: &dyn Fn(&RunSummary) -> f64| Stat::of(&runs.iter().map(f).collect::<Vec<_>>());
        let summary = MetricsReport {
            turns: col(&|r| r.turns),
            matched: col(&|r| r.matched),
            inform_recall: col(&|r| r.inform_recall),
            inform_f1: col(&|r| r.inform_f1),
            success_pct: col(&|r| r.success_pct),
        };
        Ok(ExperimentReport {
            method: method.into(),
            runs,
            summary,
        })
    }
}

/// Evaluate `agent` on `n_runs` independent sets of `n_dialogs` goals; goal
/// streams depend only on `seed`, so methods are compared on the same goals.
pub fn evaluate<A: Agent + Sync + ?Sized>(
    agent: &A,
    method: &str,
    world: &World,
    goals: &GoalConfig,
    n_dialogs: usize,
    n_runs: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    if n_dialogs == 0 || n_runs == 0 {
        return Err(Error::Usage("evaluation needs at least one dialog and one run".into()));
    }
    let mut runs = Vec::with_capacity(n_runs);
    for run in 0..n_runs {
        let run_seed = rng::derive_seed(seed, "eval-run", run as u64);
        let episodes: Vec<EpisodeMetrics> = (0..n_dialogs)
            .into_par_iter()
            .map(|i| {
                let goal = sample_goal(&world.schema, goals, &mut rng::indexed(run_seed, "eval-goal", i as u64))?;
                Ok(run_episode(world, agent, &goal, DEFAULT_MAX_TURNS))
            })
            .collect::<Result<_>>()?;
        runs.push(RunSummary::of(&episodes)?);
    }
    ExperimentReport::from_runs(method, runs)
}

/// One row of a report CSV, columns in table order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub key: String,
    pub method: String,
    pub runs: usize,
    pub turn_mean: f64,
    pub turn_std: f64,
    pub match_mean: f64,
    pub match_std: f64,
    pub inform_rec_mean: f64,
    pub inform_rec_std: f64,
    pub inform_f1_mean: f64,
    pub inform_f1_std: f64,
    pub success_mean: f64,
    pub success_std: f64,
}

impl ReportRow {
    pub fn new(key: impl Into<String>, r: &ExperimentReport) -> Self {
        let s = &r.summary;
        ReportRow {
            key: key.into(),
            method: r.method.clone(),
            runs: r.runs.len(),
            turn_mean: s.turns.mean,
            turn_std: s.turns.std,
            match_mean: s.matched.mean,
            match_std: s.matched.std,
            inform_rec_mean: s.inform_recall.mean,
            inform_rec_std: s.inform_recall.std,
            inform_f1_mean: s.inform_f1.mean,
            inform_f1_std: s.inform_f1.std,
            success_mean: s.success_pct.mean,
            success_std: s.success_pct.std,
        }
    }
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    write_csv(path, rows)
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(path, i + 2, e.to_string())))
        .collect()
}

/// Aligned text table in the `mean ± std` style.
pub fn format_table(rows: &[(String, &ExperimentReport)]) -> String {
    let header = ["Agent", "Turn", "Match", "Inform Rec", "Inform F1", "Success%"];
    let body: Vec<[String; 6]> = rows
        .iter()
        .map(|(name, r)| {
            let c = r.summary.formatted_row();
            [name.clone(), c[0].clone(), c[1].clone(), c[2].clone(), c[3].clone(), c[4].clone()]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let fmt_row = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = fmt_row(header.to_vec());
    out.push('\n');
    for row in &body {
        out.push_str(&fmt_row(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}
