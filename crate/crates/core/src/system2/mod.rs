//! The slow policy: budgeted lookahead on the simulator conditioned on
//! working and episodic memory, reflection, the advantage oracle and the
//! KL-constrained online update.

mod advantage;
mod memory;
mod online;
mod planner;

pub use advantage::{
    advantage_oracle, monte_carlo_advantage, rollout, value_iteration, AdvantageEstimate,
    AdvantageMethod, Branch, MonteCarloOptions, Navigator, TabularMdp, ValueTable, VI_TOLERANCE,
};
pub use memory::{
    jaccard, read_experiences_jsonl, recall, reflect, task_signature, write_experiences_jsonl,
    Experience, MemoryEntry, Outcome, PenaltyEntry, WorkingMemory, DEFAULT_WORKING_MEMORY,
    REPEAT_THRESHOLD,
};
pub use online::{
    greedy_success, kl_update_loss, mean_kl, train_online, KlLoss, OnlineOptions,
    OnlinePolicyParams, OnlineResult, OnlineSample,
};
pub use planner::{
    one_step_values, plan, Plan, PlanContext, PlanTrace, PlannerConfig, REPETITION_PENALTY,
};
