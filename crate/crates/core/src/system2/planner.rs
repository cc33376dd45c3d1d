use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::agentcore::{candidates, Action, PageState, StateDigest};
use crate::error::{Error, Result};
use crate::system2::memory::{Experience, WorkingMemory};
use crate::system2::online::OnlinePolicyParams;
use crate::webenv::{Environment, Task};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Longest plan considered, counting the final goal-satisfying action.
    pub max_depth: u32,
    /// Node expansion budget (r2).
    pub max_expansions: usize,
    /// Children generated per expansion, in prior order.
    pub breadth: usize,
    /// Multiplier on recalled episodic penalties.
    pub penalty_weight: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            max_depth: 4,
            max_expansions: 200,
            breadth: 5,
            penalty_weight: 1.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.breadth == 0 {
            return Err(Error::InvalidConfig("planner depth and breadth must be at least 1".into()));
        }
        if !(self.penalty_weight >= 0.0) {
            return Err(Error::InvalidConfig("penalty weight must be non-negative".into()));
        }
        Ok(())
    }
}

/// Penalty for repeating an action that already appears twice in working memory.
pub const REPETITION_PENALTY: f64 = 0.5;

/// Everything the planner conditions on besides its configuration.
pub struct PlanContext<'a> {
    pub env: &'a Environment,
    pub state: &'a PageState,
    pub task: &'a Task,
    pub working: &'a WorkingMemory,
    pub recalled: &'a [Experience],
    /// Child ordering and tie-break prior; canonical order when absent.
    pub prior: Option<&'a OnlinePolicyParams>,
    pub discount: f64,
    pub cost_per_expansion: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTrace {
    /// Backed-up value of every root action.
    pub root_values: Vec<(Action, f64)>,
    /// Value of the best goal-satisfying plan found.
    pub goal_value: Option<f64>,
    /// The reachable space was searched to the end without cutoffs.
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub action: Action,
    pub expansions: usize,
    pub reasoning_tokens: u64,
    pub trace: PlanTrace,
}

impl PlanContext<'_> {
    fn penalty(&self, cfg: &PlannerConfig, digest: StateDigest, action: &Action) -> f64 {
        let key = action.key();
        let episodic: f64 = self.recalled.iter().map(|e| e.penalty(digest, key)).sum();
        let repeat = if self.working.count(digest, key) >= 2 { REPETITION_PENALTY } else { 0.0 };
        cfg.penalty_weight * episodic + repeat
    }

    fn ranked(&self, state: &PageState) -> Vec<(Action, f64)> {
        let page = self.env.page_of(state);
        let cands = candidates(page, state, &self.task.intent);
        let priors = match self.prior {
            Some(p) => p.logits(page, state, self.task, &cands),
            None => vec![0.0; cands.len()],
        };
        let mut out: Vec<(Action, f64)> = cands.into_iter().zip(priors).collect();
        // stable: equal priors keep canonical order
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out
    }
}

struct Node {
    state: PageState,
    depth: u32,
    first: usize,
    pen: f64,
    remaining: Option<std::vec::IntoIter<(Action, f64)>>,
}

#[derive(PartialEq)]
struct Entry {
    priority: f64,
    prior: f64,
    seq: Reverse<usize>,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then(self.prior.total_cmp(&other.prior))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

enum Outcome {
    Goal(f64),
    Dead(f64),
    NoOp,
    Alive(PageState),
}

fn outcome(ctx: &PlanContext<'_>, state: &PageState, action: &Action, depth: u32, pen: f64) -> Outcome {
    let res = ctx.env.step(state, action);
    if ctx.task.goal.satisfied_by(state.page, action, res.invalid) {
        Outcome::Goal(ctx.discount.powi(depth as i32) - pen)
    } else if res.terminated {
        Outcome::Dead(-pen)
    } else if res.invalid || res.next.position_digest() == state.position_digest() {
        Outcome::NoOp
    } else {
        Outcome::Alive(res.next)
    }
}

/// Value of each root action after one step: 1 for satisfying the goal,
/// γ for reaching a live state, 0 for ending the episode otherwise, each
/// minus its penalty; no-ops are excluded.
pub fn one_step_values(cfg: &PlannerConfig, ctx: &PlanContext<'_>) -> Vec<(Action, f64, f64)> {
    let digest = ctx.state.digest();
    ctx.ranked(ctx.state)
        .into_iter()
        .map(|(a, prior)| {
            let pen = ctx.penalty(cfg, digest, &a);
            let v = match outcome(ctx, ctx.state, &a, 0, pen) {
                Outcome::Goal(v) | Outcome::Dead(v) => v,
                Outcome::NoOp => f64::NEG_INFINITY,
                Outcome::Alive(_) => ctx.discount - pen,
            };
            (a, v, prior)
        })
        .collect()
}

/// Index of the best (value, prior) pair; earliest canonical action on ties.
fn pick(values: &[(Action, f64, f64)]) -> usize {
    let mut best = 0;
    for (i, (a, v, p)) in values.iter().enumerate() {
        let (ba, bv, bp) = &values[best];
        let better = match v.total_cmp(bv) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => match p.total_cmp(bp) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => a.order_key() < ba.order_key(),
            },
        };
        if better {
            best = i;
        }
    }
    best
}

/// Budgeted best-first lookahead on the simulator. Nodes are ordered by the
/// optimistic bound γ^depth minus accumulated penalties; each expansion
/// generates the next `breadth` children in prior order. Search stops when
/// no frontier bound can beat the best goal found, or the budget runs out.
pub fn plan(cfg: &PlannerConfig, ctx: &PlanContext<'_>) -> Plan {
    let gamma = ctx.discount;
    let horizon_value = gamma.powi(cfg.max_depth as i32);

    if cfg.max_expansions == 0 {
        let vals = one_step_values(cfg, ctx);
        let i = pick(&vals);
        return Plan {
            action: vals[i].0.clone(),
            expansions: 0,
            reasoning_tokens: 0,
            trace: PlanTrace {
                root_values: vals.into_iter().map(|(a, v, _)| (a, v)).collect(),
                goal_value: None,
                exhausted: false,
            },
        };
    }

    let root_ranked = ctx.ranked(ctx.state);
    let mut root_vals: Vec<f64> = vec![f64::NEG_INFINITY; root_ranked.len()];
    let root_index: HashMap<Action, usize> = root_ranked
        .iter()
        .enumerate()
        .map(|(i, (a, _))| (a.clone(), i))
        .collect();

    let mut nodes = vec![Node {
        state: ctx.state.clone(),
        depth: 0,
        first: usize::MAX,
        pen: 0.0,
        remaining: None,
    }];
    let mut best_seen: HashMap<StateDigest, f64> = HashMap::from([(ctx.state.position_digest(), 1.0)]);
    let mut heap = BinaryHeap::from([Entry {
        priority: 1.0,
        prior: 0.0,
        seq: Reverse(0),
        node: 0,
    }]);
    let mut seq = 1usize;
    let mut expansions = 0usize;
    let mut goal_value: Option<f64> = None;
    let mut cutoff = false;

    while let Some(top) = heap.peek() {
        if expansions >= cfg.max_expansions {
            cutoff = true;
            break;
        }
        if goal_value.is_some_and(|g| g >= top.priority) {
            break;
        }
        let entry = heap.pop().expect("peeked");
        expansions += 1;
        let n = entry.node;
        if nodes[n].remaining.is_none() {
            let ranked = if n == 0 { root_ranked.clone() } else { ctx.ranked(&nodes[n].state) };
            nodes[n].remaining = Some(ranked.into_iter());
        }
        let batch: Vec<(Action, f64)> = nodes[n].remaining.as_mut().expect("set").take(cfg.breadth).collect();
        let (depth, pen, state, first) = (nodes[n].depth, nodes[n].pen, nodes[n].state.clone(), nodes[n].first);
        let digest = state.digest();
        for (action, prior) in batch {
            let child_first = if n == 0 { root_index[&action] } else { first };
            let child_pen = pen + ctx.penalty(cfg, digest, &action);
            let child_depth = depth + 1;
            let leaf = match outcome(ctx, &state, &action, depth, child_pen) {
                Outcome::Goal(v) => {
                    goal_value = Some(goal_value.map_or(v, |g| g.max(v)));
                    Some(v)
                }
                Outcome::Dead(v) => Some(v),
                Outcome::NoOp => None,
                Outcome::Alive(next) => {
                    let priority = gamma.powi(child_depth as i32) - child_pen;
                    let pos = next.position_digest();
                    if best_seen.get(&pos).is_some_and(|&p| p >= priority) {
                        Some(horizon_value - child_pen)
                    } else if child_depth >= cfg.max_depth {
                        cutoff = true;
                        best_seen.insert(pos, priority);
                        Some(horizon_value - child_pen)
                    } else {
                        best_seen.insert(pos, priority);
                        nodes.push(Node {
                            state: next,
                            depth: child_depth,
                            first: child_first,
                            pen: child_pen,
                            remaining: None,
                        });
                        heap.push(Entry {
                            priority,
                            prior,
                            seq: Reverse(seq),
                            node: nodes.len() - 1,
                        });
                        seq += 1;
                        None
                    }
                }
            };
            if let Some(v) = leaf {
                root_vals[child_first] = root_vals[child_first].max(v);
            }
        }
        if nodes[n].remaining.as_ref().is_some_and(|r| r.len() > 0) {
            heap.push(Entry {
                priority: gamma.powi(depth as i32) - pen,
                prior: entry.prior,
                seq: Reverse(seq),
                node: n,
            });
            seq += 1;
        }
    }

    // whatever is still open counts as alive up to the horizon
    let mut root_open = heap.iter().any(|e| e.node == 0);
    for e in heap.iter() {
        let node = &nodes[e.node];
        if e.node != 0 {
            root_vals[node.first] = root_vals[node.first].max(horizon_value - node.pen);
        }
    }
    if root_open || nodes[0].remaining.is_none() {
        root_open = true;
        let digest = ctx.state.digest();
        let generated = nodes[0].remaining.as_ref().map_or(0, |r| root_ranked.len() - r.len());
        for (i, (a, _)) in root_ranked.iter().enumerate().skip(generated) {
            let v = horizon_value - ctx.penalty(cfg, digest, a);
            root_vals[i] = root_vals[i].max(v);
        }
    }
    let exhausted = heap.is_empty() && !cutoff && !root_open;

    let values: Vec<(Action, f64, f64)> = root_ranked
        .iter()
        .zip(&root_vals)
        .map(|((a, p), v)| (a.clone(), *v, *p))
        .collect();
    let action = if exhausted && goal_value.is_none() {
        Action::stop_unachievable("goal not reachable from here")
    } else {
        values[pick(&values)].0.clone()
    };
    let mut root_values: Vec<(Action, f64)> = values.into_iter().map(|(a, v, _)| (a, v)).collect();
    root_values.sort_by_key(|(a, _)| a.order_key());
    Plan {
        action,
        expansions,
        reasoning_tokens: expansions as u64 * u64::from(ctx.cost_per_expansion),
        trace: PlanTrace {
            root_values,
            goal_value,
            exhausted,
        },
    }
}
