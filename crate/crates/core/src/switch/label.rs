use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EpisodeTracker, LabeledFeatures};
use crate::agentcore::statespace::{StateSpace, STATE_CAP};
use crate::agentcore::System;
use crate::error::Result;
use crate::hash::derive_seed;
use crate::system1::FastPolicy;
use crate::webenv::{Environment, Task};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelOptions {
    /// Maximum number of labeled states overall.
    pub budget: usize,
    pub max_steps: usize,
    /// Probability of following a wrong S1 action anyway, so that the data
    /// also covers states reached after mistakes.
    pub explore: f64,
    pub seed: u64,
}

impl Default for LabelOptions {
    fn default() -> Self {
        LabelOptions {
            budget: 5000,
            max_steps: 20,
            explore: 0.3,
            seed: 0,
        }
    }
}

/// Label states along switched rollouts: S1 when its greedy action starts a
/// shortest path to the goal, S2 otherwise. The rollout follows S1 where it
/// is right and an exact shortest-path oracle (standing in for S2) where it
/// is not, except for `explore`-probability detours along S1's choice.
pub fn label_switch_data(env: &Environment, tasks: &[Task], s1: &FastPolicy, opts: &LabelOptions) -> Result<Vec<LabeledFeatures>> {
    let mut out = Vec::new();
    for (ti, task) in tasks.iter().enumerate() {
        if out.len() >= opts.budget {
            break;
        }
        let space = StateSpace::build(env, &env.initial_state(), task, STATE_CAP)?;
        let dist = space.steps_to_goal();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, "label", ti as u64));
        let mut tracker = EpisodeTracker::new();
        let mut s = 0usize;
        for _ in 0..opts.max_steps {
            if out.len() >= opts.budget {
                break;
            }
            let state = &space.states[s];
            let page = env.page_of(state);
            let features = tracker.features(task, state);
            let a1 = s1.act(page, state, task)?;
            let optimal = space.optimal_actions(s, &dist);
            let t1 = space.transitions[s].iter().position(|t| t.action == a1);
            let label = match t1 {
                Some(t) if optimal.contains(&t) => System::S1,
                _ => System::S2,
            };
            out.push(LabeledFeatures { features, label });
            let follow_s1 = label == System::S1 || optimal.is_empty() || rng.random_bool(opts.explore.clamp(0.0, 1.0));
            let t = match (follow_s1, t1) {
                (true, Some(t)) => t,
                _ => match optimal.first() {
                    Some(&t) => t,
                    None => break,
                },
            };
            let tr = &space.transitions[s][t];
            let Some(next) = tr.next else { break };
            tracker.observe(state, tr.action.key(), &space.states[next], tr.invalid, label);
            s = next;
        }
    }
    Ok(out)
}

pub fn write_switch_jsonl<W: Write>(mut w: W, data: &[LabeledFeatures]) -> Result<()> {
    for d in data {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_switch_jsonl<R: BufRead>(r: R) -> Result<Vec<LabeledFeatures>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
