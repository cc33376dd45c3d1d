use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_episode, Agent, RunLimits};
use crate::agentcore::Trajectory;
use crate::error::{Error, Result};
use crate::hash::derive_seed;
use crate::system2::Experience;
use crate::webenv::{drift, Environment, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub epoch: usize,
    pub task_id: u32,
    pub score: u8,
    pub tokens: u64,
    pub steps: usize,
    pub s2_step_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_id: String,
    pub success_rate: f64,
    pub mean_tokens: f64,
    pub s2_step_fraction: f64,
    pub rows: Vec<TaskRow>,
}

impl EvalReport {
    fn from_rows(config_id: String, rows: Vec<TaskRow>) -> Self {
        let n = rows.len().max(1) as f64;
        EvalReport {
            config_id,
            success_rate: rows.iter().map(|r| f64::from(r.score)).sum::<f64>() / n,
            mean_tokens: rows.iter().map(|r| r.tokens as f64).sum::<f64>() / n,
            s2_step_fraction: rows.iter().map(|r| r.s2_step_fraction).sum::<f64>() / n,
            rows,
        }
    }
}

/// A report with the trajectories behind it and the final episodic pool.
#[derive(Debug, Clone)]
pub struct EvalRun {
    pub report: EvalReport,
    pub trajectories: Vec<Trajectory>,
    pub pool: Vec<Experience>,
}

/// The episode's own drifted copy of the site, when it drifts at all.
fn episode_env(env: &Environment, seed: u64, episode: usize) -> Option<Environment> {
    (env.drift_rate() > 0.0).then(|| drift(env, derive_seed(seed, "drift", episode as u64)))
}

/// Run every task (or `limits.episodes` of them, sampled by seed) for each
/// epoch. The episodic pool persists across episodes and epochs. With memory
/// off and `jobs > 1`, episodes of an epoch run in parallel; results keep
/// task order either way.
pub fn evaluate(agent: &Agent, env: &Environment, tasks: &[Task], limits: &RunLimits, pool: Vec<Experience>, jobs: usize) -> Result<EvalRun> {
    if tasks.is_empty() {
        return Err(Error::InvalidSpec("empty task stream".into()));
    }
    agent.validate()?;
    limits.validate()?;
    let chosen: Vec<&Task> = if limits.episodes == 0 || limits.episodes >= tasks.len() {
        tasks.iter().collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(limits.seed, "episodes", 0));
        let mut idx = sample(&mut rng, tasks.len(), limits.episodes).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| &tasks[i]).collect()
    };
    let mut pool = pool;
    let mut rows = Vec::new();
    let mut trajectories = Vec::new();
    for epoch in 0..limits.epochs {
        let base = epoch * chosen.len();
        let episodes = if jobs > 1 && !agent.memory {
            let threads = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            threads.install(|| {
                chosen
                    .par_iter()
                    .enumerate()
                    .map(|(i, task)| {
                        let drifted = episode_env(env, limits.seed, base + i);
                        run_episode(agent, drifted.as_ref().unwrap_or(env), task, limits, &mut Vec::new())
                    })
                    .collect::<Result<Vec<_>>>()
            })?
        } else {
            let mut out = Vec::with_capacity(chosen.len());
            for (i, task) in chosen.iter().enumerate() {
                let drifted = episode_env(env, limits.seed, base + i);
                out.push(run_episode(agent, drifted.as_ref().unwrap_or(env), task, limits, &mut pool)?);
            }
            out
        };
        for ep in episodes {
            let steps = ep.trajectory.len();
            rows.push(TaskRow {
                epoch,
                task_id: ep.trajectory.task.id,
                score: ep.score,
                tokens: ep.tokens,
                steps,
                s2_step_fraction: ep.trajectory.s2_steps() as f64 / steps.max(1) as f64,
            });
            trajectories.push(ep.trajectory);
        }
    }
    Ok(EvalRun {
        report: EvalReport::from_rows(agent.id.clone(), rows),
        trajectories,
        pool,
    })
}

/// One ablation: which of the base agent's parts are kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub s1: bool,
    pub s2: bool,
    pub memory: bool,
}

/// Evaluate the base agent with parts removed, one report per row. Each row
/// starts from an empty episodic pool.
pub fn ablate(base: &Agent, rows: &[AblationRow], env: &Environment, tasks: &[Task], limits: &RunLimits, jobs: usize) -> Result<Vec<EvalReport>> {
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        if !row.s1 && !row.s2 {
            return Err(Error::InvalidConfig(format!("ablation row {} has neither system", row.label)));
        }
        let agent = Agent {
            id: row.label.clone(),
            s1: if row.s1 { base.s1.clone() } else { None },
            s2: if row.s2 { base.s2.clone() } else { None },
            memory: row.memory,
            ..base.clone()
        };
        out.push(evaluate(&agent, env, tasks, limits, Vec::new(), jobs)?.report);
    }
    Ok(out)
}

#[derive(Serialize)]
struct SummaryLine<'a> {
    config: &'a str,
    episodes: usize,
    success_rate: f64,
    mean_tokens: f64,
    s2_step_fraction: f64,
}

pub fn write_ablation_csv<W: Write>(w: W, reports: &[EvalReport]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for r in reports {
        csv.serialize(SummaryLine {
            config: &r.config_id,
            episodes: r.rows.len(),
            success_rate: r.success_rate,
            mean_tokens: r.mean_tokens,
            s2_step_fraction: r.s2_step_fraction,
        })?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RowLine<'a> {
    config: &'a str,
    epoch: usize,
    task_id: u32,
    score: u8,
    tokens: u64,
    steps: usize,
    s2_step_fraction: f64,
}

/// Per-episode rows of one report.
pub fn write_report_csv<W: Write>(w: W, report: &EvalReport) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for r in &report.rows {
        csv.serialize(RowLine {
            config: &report.config_id,
            epoch: r.epoch,
            task_id: r.task_id,
            score: r.score,
            tokens: r.tokens,
            steps: r.steps,
            s2_step_fraction: r.s2_step_fraction,
        })?;
    }
    csv.flush()?;
    Ok(())
}
