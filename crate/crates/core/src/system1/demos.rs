use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agentcore::statespace::{StateSpace, STATE_CAP};
use crate::agentcore::DEFAULT_DIM;
use crate::error::Result;
use crate::hash::derive_seed;
use crate::system1::losses::{DemoBatch, DemoItem};
use crate::system1::negatives::{sample_negatives, NegativeStrategy};
use crate::webenv::{Environment, Task};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoOptions {
    pub negatives: usize,
    pub strategy: NegativeStrategy,
    pub dim: usize,
    pub seed: u64,
}

impl Default for DemoOptions {
    fn default() -> Self {
        DemoOptions {
            negatives: 4,
            strategy: NegativeStrategy::Random,
            dim: DEFAULT_DIM,
            seed: 0,
        }
    }
}

/// Expert demonstrations from a shortest-path oracle: for each task, walk a
/// shortest solution from the start state, taking the first optimal action
/// in canonical order, and record every step. Tasks the oracle cannot solve
/// contribute nothing. Steps with no alternative action are dropped when
/// negatives are requested.
pub fn oracle_demos(env: &Environment, tasks: &[Task], opts: &DemoOptions) -> Result<DemoBatch> {
    let mut items = Vec::new();
    for task in tasks {
        let root = env.initial_state();
        let space = StateSpace::build(env, &root, task, STATE_CAP)?;
        let dist = space.steps_to_goal();
        let mut s = 0;
        for step in 0.. {
            let Some(&i) = space.optimal_actions(s, &dist).first() else {
                break;
            };
            let tr = &space.transitions[s];
            let state = &space.states[s];
            let page = env.page_of(state);
            let positive = tr[i].action.clone();
            let neg = sample_negatives(
                page,
                state,
                task,
                &positive,
                opts.negatives,
                opts.strategy,
                opts.dim,
                derive_seed(opts.seed, "negatives", (u64::from(task.id) << 16) | step),
            );
            if opts.negatives == 0 || !neg.actions.is_empty() {
                items.push(DemoItem {
                    page: page.clone(),
                    state: state.clone(),
                    task: task.clone(),
                    positive,
                    negatives: neg.actions,
                });
            }
            match tr[i].next {
                Some(nx) => s = nx,
                None => break,
            }
        }
    }
    Ok(DemoBatch { items })
}

pub fn write_demos_jsonl(path: impl AsRef<Path>, batch: &DemoBatch) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for item in &batch.items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_demos_jsonl(path: impl AsRef<Path>) -> Result<DemoBatch> {
    let r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut items = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            items.push(serde_json::from_str(&line)?);
        }
    }
    Ok(DemoBatch { items })
}
