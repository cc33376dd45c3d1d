//! Agent substrate shared by both systems: states, actions, candidate
//! enumeration, trajectories, featurization, mixing and cost accounting.

mod action;
mod candidates;
mod cost;
mod features;
mod mixture;
mod state;
pub mod statespace;
mod trajectory;

pub use action::{Action, ActionKey, ActionKind};
pub use candidates::candidates;
pub use cost::{trajectory_cost, CostModel};
pub use features::{
    candidate_features, context_features, feature_slot, featurize, FeatureVector, DEFAULT_DIM,
};
pub use mixture::{mixture_action_distribution, ActionDistribution};
pub use state::{PageState, StateDigest, VIEWPORT};
pub use statespace::StateSpace;
pub use trajectory::{read_trajectories_jsonl, write_trajectories_jsonl, Record, System, Trajectory};
