//! The episode loop, early stopping, evaluation, ablation, configuration
//! anchoring and the intelligence estimate.

mod anchor;
mod eval;
mod intel;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use anchor::{anchor_configs, mix_outcome, read_points_csv, Anchors, ConfigPoint};
pub use eval::{ablate, evaluate, write_ablation_csv, write_report_csv, AblationRow, EvalReport, EvalRun, TaskRow};
pub use intel::{estimate_intelligence, weighted_intelligence, IntelligenceEstimate};

use crate::agentcore::{trajectory_cost, Action, CostModel, PageState, Record, System, Trajectory};
use crate::error::{Error, Result};
use crate::switch::{decide, EpisodeTracker, GateParams, Reason};
use crate::system1::FastPolicy;
use crate::system2::{plan, recall, reflect, Experience, MemoryEntry, OnlinePolicyParams, PlanContext, PlannerConfig, WorkingMemory};
use crate::webenv::{Environment, Page, Task};

pub const MAX_STEPS_REASON: &str = "max steps";
pub const REPEATING_REASON: &str = "repeating action";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunLimits {
    pub max_steps: u32,
    pub stuck_threshold: u32,
    /// Episodes per epoch; 0 runs every task once.
    pub episodes: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits {
            max_steps: 30,
            stuck_threshold: 3,
            episodes: 0,
            epochs: 1,
            seed: 0,
        }
    }
}

impl RunLimits {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max steps must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Whether the episode must end now, and why. A record is unsuccessful when
/// it was invalid or the next record observed the same state.
pub fn early_stop(traj: &Trajectory, limits: &RunLimits) -> (bool, String) {
    let n = traj.records.len();
    if n >= limits.max_steps as usize {
        return (true, MAX_STEPS_REASON.to_string());
    }
    let k = limits.stuck_threshold as usize;
    if k > 0 && n >= k {
        let tail = &traj.records[n - k..];
        let key = tail[0].action.key();
        let failed = |i: usize| {
            let r = &traj.records[i];
            r.invalid || traj.records.get(i + 1).is_some_and(|nx| nx.state_digest == r.state_digest)
        };
        if tail.iter().all(|r| r.action.key() == key) && (n - k..n).all(failed) {
            return (true, REPEATING_REASON.to_string());
        }
    }
    (false, String::new())
}

pub trait FastSystem: Send + Sync {
    fn act(&self, page: &Page, state: &PageState, task: &Task) -> Result<Action>;
}

impl FastSystem for FastPolicy {
    fn act(&self, page: &Page, state: &PageState, task: &Task) -> Result<Action> {
        FastPolicy::act(self, page, state, task)
    }
}

/// What the slow system sees at a step.
pub struct SlowInput<'a> {
    pub env: &'a Environment,
    pub state: &'a PageState,
    pub task: &'a Task,
    pub working: &'a WorkingMemory,
    pub recalled: &'a [Experience],
    pub cost: &'a CostModel,
}

pub trait SlowSystem: Send + Sync {
    /// The chosen action and the reasoning tokens spent on it.
    fn act(&self, input: &SlowInput<'_>) -> Result<(Action, u64)>;
}

/// System 2: the budgeted planner with an optional online-policy prior.
#[derive(Debug, Clone, Default)]
pub struct Planner {
    pub config: PlannerConfig,
    pub prior: Option<OnlinePolicyParams>,
}

impl SlowSystem for Planner {
    fn act(&self, input: &SlowInput<'_>) -> Result<(Action, u64)> {
        self.config.validate()?;
        let ctx = PlanContext {
            env: input.env,
            state: input.state,
            task: input.task,
            working: input.working,
            recalled: input.recalled,
            prior: self.prior.as_ref(),
            discount: input.cost.discount,
            cost_per_expansion: input.cost.s2_cost_per_expansion,
        };
        let p = plan(&self.config, &ctx);
        Ok((p.action, p.reasoning_tokens))
    }
}

/// One agent configuration; a missing system is an ablation.
#[derive(Clone)]
pub struct Agent {
    pub id: String,
    pub s1: Option<Arc<dyn FastSystem>>,
    pub s2: Option<Arc<dyn SlowSystem>>,
    pub gate: GateParams,
    pub memory: bool,
    /// Experiences recalled per episode.
    pub recall: usize,
    pub working_k: usize,
    pub cost: CostModel,
}

impl Agent {
    pub fn new(id: impl Into<String>) -> Self {
        Agent {
            id: id.into(),
            s1: None,
            s2: None,
            gate: GateParams::default(),
            memory: true,
            recall: 3,
            working_k: crate::system2::DEFAULT_WORKING_MEMORY,
            cost: CostModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s1.is_none() && self.s2.is_none() {
            return Err(Error::InvalidConfig(format!("agent {} has neither system", self.id)));
        }
        self.cost.validate()
    }
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub trajectory: Trajectory,
    pub score: u8,
    pub tokens: u64,
    /// Reflection on the episode; `None` with memory off.
    pub experience: Option<Experience>,
}

fn error_stop(e: &Error) -> Action {
    Action::stop_with_note(format!("ERROR: {e}"))
}

/// One episode. Each step: the early-stop check, then the switch picks a
/// system, which acts; the environment applies the action. The episode ends
/// on a stop, or with a placeholder stop when the environment terminates.
/// With memory on, the reflection is appended to `pool`.
pub fn run_episode(agent: &Agent, env: &Environment, task: &Task, limits: &RunLimits, pool: &mut Vec<Experience>) -> Result<Episode> {
    agent.validate()?;
    limits.validate()?;
    let recalled = if agent.memory { recall(pool, task, agent.recall) } else { Vec::new() };
    let mut working = WorkingMemory::new(agent.working_k);
    let mut tracker = EpisodeTracker::new();
    let mut traj = Trajectory::new(task.clone());
    let mut state = env.initial_state();

    let slow = |state: &PageState, working: &WorkingMemory| -> (Action, u64) {
        let Some(s2) = &agent.s2 else {
            return (Action::stop_unachievable("no slow system"), 0);
        };
        let input = SlowInput {
            env,
            state,
            task,
            working,
            recalled: &recalled,
            cost: &agent.cost,
        };
        s2.act(&input).unwrap_or_else(|e| (error_stop(&e), 0))
    };

    loop {
        let (flag, reason) = early_stop(&traj, limits);
        let (action, system, tokens) = if flag {
            if reason != MAX_STEPS_REASON {
                let (a, t) = slow(&state, &working);
                (a, System::S2, t)
            } else {
                let last = traj.records.last().map_or(System::S2, |r| r.system);
                (Action::stop_with_note(format!("Early stop: {reason}")), last, 0)
            }
        } else {
            let features = tracker.features(task, &state);
            let decision = decide(&agent.gate, &features);
            match (&agent.s1, &agent.s2) {
                (Some(s1), Some(_)) if decision.system == System::S1 => {
                    let a = s1.act(env.page_of(&state), &state, task).unwrap_or_else(|e| error_stop(&e));
                    (a, System::S1, 0)
                }
                (Some(s1), None) => {
                    // nothing to escalate to: the rules end the episode instead
                    let a = match decision.reason {
                        Reason::RuleStuck | Reason::RuleInvalid => Action::stop_unachievable(
                            if decision.reason == Reason::RuleStuck { "stuck" } else { "invalid action" },
                        ),
                        _ => s1.act(env.page_of(&state), &state, task).unwrap_or_else(|e| error_stop(&e)),
                    };
                    (a, System::S1, 0)
                }
                _ => {
                    let (a, t) = slow(&state, &working);
                    (a, System::S2, t)
                }
            }
        };

        let res = env.step(&state, &action);
        let satisfied = task.goal.satisfied_by(state.page, &action, res.invalid);
        traj.records.push(Record {
            step: traj.records.len() as u32,
            state_digest: state.digest(),
            page: state.page,
            action: action.clone(),
            system,
            reasoning_tokens: tokens,
            invalid: res.invalid,
        });
        working.push(MemoryEntry {
            state_digest: state.digest(),
            action: action.key(),
            invalid: res.invalid,
        });
        if action.is_stop() {
            break;
        }
        tracker.observe(&state, action.key(), &res.next, res.invalid, system);
        if res.terminated || satisfied {
            traj.records.push(Record {
                step: traj.records.len() as u32,
                state_digest: res.next.digest(),
                page: res.next.page,
                action: Action::stop_with_note(""),
                system,
                reasoning_tokens: 0,
                invalid: false,
            });
            break;
        }
        state = res.next;
    }

    let score = traj.evaluate();
    traj.final_score = Some(score);
    let tokens = trajectory_cost(&traj, &agent.cost);
    let experience = agent.memory.then(|| reflect(&traj, score));
    if let Some(e) = &experience {
        pool.push(e.clone());
    }
    Ok(Episode {
        trajectory: traj,
        score,
        tokens,
        experience,
    })
}
