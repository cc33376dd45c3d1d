//! Synthetic websites: page graphs, their dynamics, complexity measures and
//! task sampling.

mod complexity;
mod drift;
mod env;
mod generate;
pub(crate) mod graph;
pub mod site;
mod tasks;

pub use complexity::{
    conditional_link_entropy, entropy_ratio, kolmogorov_estimate, kolmogorov_from, link_entropy,
    web_entropy, ComplexityProfile,
};
pub use drift::{drift, drift_with_report, DriftReport};
pub use env::{Element, ElementId, ElementKind, Environment, Page, PageId, StepResult, Token};
pub use generate::{generate_environment, EnvSpec};
pub use graph::{bfs_distances, TELEPORT};
pub use tasks::{
    goals_at_distance, intent_for, read_tasks_jsonl, sample_tasks, write_tasks_jsonl,
    DifficultyLaw, Goal, Task,
};
