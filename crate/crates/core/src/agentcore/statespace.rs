//! Exhaustive enumeration of the agent-level state graph reachable from a
//! state under the candidate action sets, for exact oracles.

use std::collections::{HashMap, VecDeque};

use crate::agentcore::{candidates, Action, PageState};
use crate::error::{Error, Result};
use crate::webenv::{Environment, Task};

/// Default limit on enumerated states.
pub const STATE_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub action: Action,
    /// Successor state index; `None` when the action ends the episode.
    pub next: Option<usize>,
    /// 1 when the action satisfies the goal, else 0.
    pub reward: f64,
    pub invalid: bool,
}

#[derive(Debug, Clone)]
pub struct StateSpace {
    pub states: Vec<PageState>,
    pub transitions: Vec<Vec<Transition>>,
    index: HashMap<PageState, usize>,
}

impl StateSpace {
    /// Enumerate every state reachable from `root`. Reaching the goal ends
    /// the episode, as does stopping or pressing a submit button.
    pub fn build(env: &Environment, root: &PageState, task: &Task, cap: usize) -> Result<Self> {
        let mut space = StateSpace {
            states: vec![root.clone()],
            transitions: Vec::new(),
            index: HashMap::from([(root.clone(), 0)]),
        };
        let mut queue = VecDeque::from([0usize]);
        let mut pending: Vec<Option<Vec<Transition>>> = vec![None];
        while let Some(s) = queue.pop_front() {
            let state = space.states[s].clone();
            let page = env.page_of(&state);
            let mut out = Vec::new();
            for action in candidates(page, &state, &task.intent) {
                let res = env.step(&state, &action);
                let satisfied = task.goal.satisfied_by(state.page, &action, res.invalid);
                let next = if res.terminated || satisfied {
                    None
                } else {
                    let id = match space.index.get(&res.next) {
                        Some(&id) => id,
                        None => {
                            if space.states.len() >= cap {
                                return Err(Error::MethodUnavailable(format!(
                                    "state space exceeds {cap} states; use monte-carlo"
                                )));
                            }
                            let id = space.states.len();
                            space.states.push(res.next.clone());
                            space.index.insert(res.next, id);
                            pending.push(None);
                            queue.push_back(id);
                            id
                        }
                    };
                    Some(id)
                };
                out.push(Transition {
                    action,
                    next,
                    reward: if satisfied { 1.0 } else { 0.0 },
                    invalid: res.invalid,
                });
            }
            pending[s] = Some(out);
        }
        space.transitions = pending.into_iter().map(|t| t.unwrap_or_default()).collect();
        Ok(space)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, state: &PageState) -> Option<usize> {
        self.index.get(state).copied()
    }

    /// Fewest actions from each state to a goal-satisfying action (inclusive);
    /// `None` where the goal is unreachable.
    pub fn steps_to_goal(&self) -> Vec<Option<u32>> {
        let n = self.len();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut dist: Vec<Option<u32>> = vec![None; n];
        let mut queue = VecDeque::new();
        for (s, ts) in self.transitions.iter().enumerate() {
            for t in ts {
                if let Some(nx) = t.next {
                    preds[nx].push(s);
                }
                if t.reward > 0.0 && dist[s].is_none() {
                    dist[s] = Some(1);
                    queue.push_back(s);
                }
            }
        }
        while let Some(s) = queue.pop_front() {
            let d = dist[s].unwrap();
            for &p in &preds[s] {
                if dist[p].is_none() {
                    dist[p] = Some(d + 1);
                    queue.push_back(p);
                }
            }
        }
        dist
    }

    /// Indices (into `transitions[s]`) of actions that start a shortest
    /// path to the goal.
    pub fn optimal_actions(&self, s: usize, dist: &[Option<u32>]) -> Vec<usize> {
        let Some(d) = dist[s] else {
            return Vec::new();
        };
        self.transitions[s]
            .iter()
            .enumerate()
            .filter(|(_, t)| {
                if d == 1 {
                    t.reward > 0.0
                } else {
                    t.next.and_then(|nx| dist[nx]) == Some(d - 1)
                }
            })
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::webenv::{Element, Goal, Page, PageId};

    #[test]
    fn chain_distances() {
        let pages = vec![
            Page::new(0, vec![Element::link(0, PageId(1), vec![])], vec![]),
            Page::new(1, vec![Element::link(0, PageId(2), vec![]), Element::link(1, PageId(0), vec![])], vec![]),
            Page::new(2, vec![], vec![]),
        ];
        let env = Environment::new(pages, PageId(0), 0.0, 0).unwrap();
        let task = Task {
            id: 0,
            goal: Goal::ReachPage { page: PageId(2) },
            intent: vec![],
            nominal_steps: 2,
        };
        let space = StateSpace::build(&env, &env.initial_state(), &task, STATE_CAP).unwrap();
        assert_eq!(space.len(), 3);
        let d = space.steps_to_goal();
        assert_eq!(d[0], Some(3));
        assert_eq!(space.optimal_actions(0, &d), vec![0]);
    }

    #[test]
    fn cap_is_enforced() {
        let pages = vec![
            Page::new(0, vec![Element::link(0, PageId(1), vec![])], vec![]),
            Page::new(1, vec![], vec![]),
        ];
        let env = Environment::new(pages, PageId(0), 0.0, 0).unwrap();
        let task = Task {
            id: 0,
            goal: Goal::ReachPage { page: PageId(1) },
            intent: vec![],
            nominal_steps: 1,
        };
        assert!(matches!(
            StateSpace::build(&env, &env.initial_state(), &task, 1),
            Err(Error::MethodUnavailable(_))
        ));
    }
}
