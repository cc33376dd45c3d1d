use serde::{Deserialize, Serialize};

use crate::agentcore::{System, Trajectory};
use crate::error::{Error, Result};

/// Token prices of the two systems and the reward discount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    /// Flat price of an S1 action; `None` charges its emitted length.
    pub s1_cost_per_action: Option<u32>,
    /// Reasoning tokens charged per planner node expansion.
    pub s2_cost_per_expansion: u32,
    /// Constant per-step discount γ.
    pub discount: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            s1_cost_per_action: None,
            s2_cost_per_expansion: 8,
            discount: 0.9,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "discount {} outside (0,1]",
                self.discount
            )));
        }
        Ok(())
    }
}

/// Emitted action tokens plus the reasoning tokens of S2 steps.
pub fn trajectory_cost(traj: &Trajectory, model: &CostModel) -> u64 {
    traj.records
        .iter()
        .map(|r| match r.system {
            System::S1 => u64::from(model.s1_cost_per_action.unwrap_or(r.action.emitted_len)),
            System::S2 => u64::from(r.action.emitted_len) + r.reasoning_tokens,
        })
        .sum()
}
