use serde::{Deserialize, Serialize};

use super::{run_episode, Agent, RunLimits};
use crate::agentcore::Trajectory;
use crate::error::{Error, Result};
use crate::hash::derive_seed;
use crate::webenv::{generate_environment, kolmogorov_estimate, sample_tasks, DifficultyLaw, EnvSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntelligenceEstimate {
    pub value: f64,
    pub environments_sampled: usize,
    pub discount: f64,
    /// (K̂, V̂) of each environment, in input order.
    pub per_env: Vec<(f64, f64)>,
}

/// Σ w_μ V̂_μ with w_μ ∝ 2^(−K̂_μ/Z), Z the largest K̂; uniform weights when
/// every K̂ is zero.
pub fn weighted_intelligence(per_env: &[(f64, f64)]) -> Result<f64> {
    if per_env.is_empty() {
        return Err(Error::InvalidSpec("no environments".into()));
    }
    let z = per_env.iter().map(|p| p.0).fold(0.0, f64::max);
    let w: Vec<f64> = per_env
        .iter()
        .map(|&(k, _)| if z > 0.0 { (-k / z).exp2() } else { 1.0 })
        .collect();
    let total: f64 = w.iter().sum();
    Ok(per_env.iter().zip(&w).map(|(p, w)| w * p.1).sum::<f64>() / total)
}

/// γ^t for the step t that satisfied the goal, 0 on failure.
fn discounted_return(traj: &Trajectory, discount: f64) -> f64 {
    traj.records
        .iter()
        .position(|r| traj.task.goal.satisfied_by(r.page, &r.action, r.invalid))
        .map_or(0.0, |t| discount.powi(t as i32))
}

/// Generate each environment, run the agent on freshly sampled tasks, and
/// weight the mean discounted returns by the environments' complexity.
pub fn estimate_intelligence(agent: &Agent, specs: &[EnvSpec], tasks_per_env: usize, law: &DifficultyLaw, discount: f64, limits: &RunLimits) -> Result<IntelligenceEstimate> {
    if specs.is_empty() {
        return Err(Error::InvalidSpec("no environment specs".into()));
    }
    if !(discount > 0.0 && discount <= 1.0) {
        return Err(Error::InvalidConfig(format!("discount {discount} outside (0,1]")));
    }
    let mut per_env = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let env = generate_environment(spec)?;
        let tasks = sample_tasks(&env, tasks_per_env, law, derive_seed(limits.seed, "intel-tasks", i as u64))?;
        let mut pool = Vec::new();
        let mut sum = 0.0;
        for task in &tasks {
            let ep = run_episode(agent, &env, task, limits, &mut pool)?;
            sum += discounted_return(&ep.trajectory, discount);
        }
        per_env.push((kolmogorov_estimate(&env), sum / tasks.len().max(1) as f64));
    }
    Ok(IntelligenceEstimate {
        value: weighted_intelligence(&per_env)?,
        environments_sampled: specs.len(),
        discount,
        per_env,
    })
}
