//! The fast policy: a learned reranker over candidate actions, trained
//! offline by imitation or pairwise preference.

mod demos;
mod losses;
mod negatives;
mod scorer;
mod train;

use std::path::Path;

pub use demos::{oracle_demos, read_demos_jsonl, write_demos_jsonl, DemoOptions};
pub use losses::{sft_loss, wepo_loss, DemoBatch, DemoItem, LossAndGradient, Objective};
pub use negatives::{sample_negatives, NegativeSample, NegativeStrategy};
pub use scorer::{
    action_distribution, score, Architecture, Forward, Gradient, Prepared, ScorerParams,
    DEFAULT_EMBED_DIM, DEFAULT_HIDDEN,
};
pub use train::{train_offline, TrainOptions, TrainResult};

use crate::agentcore::{Action, PageState};
use crate::error::{Error, Result};
use crate::tensorfile;
use crate::webenv::{Page, Task};

impl ScorerParams {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = serde_json::json!({ "architecture": self.arch, "dim": self.dim, "width": self.width });
        let b2 = [self.b2];
        tensorfile::save(
            path,
            "scorer",
            meta,
            &[("table", &self.table), ("b1", &self.b1), ("w2", &self.w2), ("b2", &b2)],
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (h, mut t) = tensorfile::load(path, "scorer")?;
        let field = |k: &str| {
            h.meta
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Format(format!("scorer header lacks {k}")))
        };
        let arch: Architecture = serde_json::from_value(field("architecture")?)?;
        let dim: usize = serde_json::from_value(field("dim")?)?;
        let width: usize = serde_json::from_value(field("width")?)?;
        if t.len() != 4 || t[3].len() != 1 {
            return Err(Error::Format("scorer file must hold table, b1, w2, b2".into()));
        }
        let b2 = t[3][0];
        let w2 = std::mem::take(&mut t[2]);
        let b1 = std::mem::take(&mut t[1]);
        let table = std::mem::take(&mut t[0]);
        let p = ScorerParams {
            arch,
            dim,
            width,
            table,
            b1,
            w2,
            b2,
        };
        p.validate()?;
        Ok(p)
    }
}

/// System 1 as an agent: the argmax of the reranker's distribution.
#[derive(Debug, Clone)]
pub struct FastPolicy {
    pub params: ScorerParams,
}

impl FastPolicy {
    pub fn new(params: ScorerParams) -> Self {
        FastPolicy { params }
    }

    pub fn act(&self, page: &Page, state: &PageState, task: &Task) -> Result<Action> {
        let d = action_distribution(&self.params, page, state, task)?;
        let i = d.argmax();
        Ok(d.candidates[i].clone())
    }
}
