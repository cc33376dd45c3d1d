use std::collections::{BTreeMap, VecDeque};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agentcore::statespace::{StateSpace, STATE_CAP};
use crate::agentcore::{candidates, Action, ActionKind, PageState};
use crate::error::{Error, Result};
use crate::webenv::{Environment, Goal, PageId, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvantageMethod {
    ValueIteration,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvantageEstimate {
    pub value: f64,
    pub method: AdvantageMethod,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub prob: f64,
    /// `None` ends the episode.
    pub next: Option<usize>,
    pub reward: f64,
}

/// Finite MDP: `actions[s][a]` lists the stochastic outcomes of action `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub actions: Vec<Vec<Vec<Branch>>>,
}

impl TabularMdp {
    pub fn from_space(space: &StateSpace) -> Self {
        TabularMdp {
            actions: space
                .transitions
                .iter()
                .map(|ts| {
                    ts.iter()
                        .map(|t| {
                            vec![Branch {
                                prob: 1.0,
                                next: t.next,
                                reward: t.reward,
                            }]
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn q(&self, v: &[f64], s: usize, a: usize, gamma: f64) -> f64 {
        self.actions[s][a]
            .iter()
            .map(|b| b.prob * (b.reward + b.next.map_or(0.0, |n| gamma * v[n])))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub iterations: usize,
}

impl ValueTable {
    pub fn advantage(&self, s: usize, a: usize) -> f64 {
        self.q[s][a] - self.v[s]
    }

    /// First maximizing action of each state.
    pub fn greedy_policy(&self) -> Vec<usize> {
        self.q
            .iter()
            .map(|qs| {
                let mut best = 0;
                for (i, &x) in qs.iter().enumerate() {
                    if x > qs[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

pub const VI_TOLERANCE: f64 = 1e-10;
const VI_MAX_ITERATIONS: usize = 1_000_000;

/// Bellman optimality iteration until the sup-norm change is ≤ `tol`.
/// States without actions have value 0.
pub fn value_iteration(mdp: &TabularMdp, gamma: f64, tol: f64) -> ValueTable {
    let n = mdp.len();
    let mut v = vec![0.0; n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut delta: f64 = 0.0;
        for s in 0..n {
            let best = (0..mdp.actions[s].len())
                .map(|a| mdp.q(&v, s, a, gamma))
                .fold(f64::NEG_INFINITY, f64::max);
            let new = if best.is_finite() { best } else { 0.0 };
            delta = delta.max((new - v[s]).abs());
            v[s] = new;
        }
        if delta <= tol || iterations >= VI_MAX_ITERATIONS {
            break;
        }
    }
    let q: Vec<Vec<f64>> = (0..n)
        .map(|s| (0..mdp.actions[s].len()).map(|a| mdp.q(&v, s, a, gamma)).collect())
        .collect();
    // report V as max Q so that max_a A = 0 holds exactly
    let v = q
        .iter()
        .map(|qs| qs.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .map(|x| if x.is_finite() { x } else { 0.0 })
        .collect();
    ValueTable { v, q, iterations }
}

/// Discounted return of one episode from `s`, optionally forcing the first
/// action, then following `policy`.
pub fn rollout<R: Rng>(mdp: &TabularMdp, policy: &[usize], s: usize, first: Option<usize>, gamma: f64, horizon: usize, rng: &mut R) -> f64 {
    let mut state = s;
    let mut ret = 0.0;
    let mut disc = 1.0;
    for t in 0..horizon {
        if mdp.actions[state].is_empty() {
            break;
        }
        let a = if t == 0 { first.unwrap_or(policy[state]) } else { policy[state] };
        let u: f64 = rng.random();
        let branches = &mdp.actions[state][a];
        let mut acc = 0.0;
        let mut chosen = branches[branches.len() - 1];
        for b in branches {
            acc += b.prob;
            if u < acc {
                chosen = *b;
                break;
            }
        }
        ret += disc * chosen.reward;
        disc *= gamma;
        match chosen.next {
            Some(n) => state = n,
            None => break,
        }
    }
    ret
}

/// Mean return after `(s, a)` minus mean return from `s`, both following `policy`.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_advantage(
    mdp: &TabularMdp,
    policy: &[usize],
    s: usize,
    a: usize,
    gamma: f64,
    rollouts: usize,
    horizon: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rollouts.max(1) as f64;
    let q: f64 = (0..rollouts).map(|_| rollout(mdp, policy, s, Some(a), gamma, horizon, &mut rng)).sum::<f64>() / n;
    let v: f64 = (0..rollouts).map(|_| rollout(mdp, policy, s, None, gamma, horizon, &mut rng)).sum::<f64>() / n;
    q - v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOptions {
    pub rollouts: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        MonteCarloOptions {
            rollouts: 10_000,
            horizon: 64,
            seed: 0,
        }
    }
}

/// A*(s, a) = Q*(s, a) − V*(s) for reward 1 on the goal-satisfying action.
pub fn advantage_oracle(
    env: &Environment,
    state: &PageState,
    action: &Action,
    task: &Task,
    method: AdvantageMethod,
    discount: f64,
    mc: &MonteCarloOptions,
) -> Result<AdvantageEstimate> {
    if !(discount > 0.0 && discount <= 1.0) {
        return Err(Error::InvalidConfig(format!("discount {discount} outside (0,1]")));
    }
    let value = match method {
        AdvantageMethod::ValueIteration => {
            let space = StateSpace::build(env, state, task, STATE_CAP)?;
            let a = space.transitions[0]
                .iter()
                .position(|t| t.action == *action)
                .ok_or_else(|| Error::ContractViolation(format!("{} is not a candidate", action.describe())))?;
            let table = value_iteration(&TabularMdp::from_space(&space), discount, VI_TOLERANCE);
            table.advantage(0, a)
        }
        AdvantageMethod::MonteCarlo => {
            let nav = Navigator::new(env, &task.goal);
            let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
            let n = mc.rollouts.max(1) as f64;
            let mut q = 0.0;
            let mut v = 0.0;
            for _ in 0..mc.rollouts {
                q += nav.rollout(state, Some(action), task, discount, mc.horizon, &mut rng);
                v += nav.rollout(state, None, task, discount, mc.horizon, &mut rng);
            }
            (q - v) / n
        }
    };
    Ok(AdvantageEstimate { value, method })
}

/// Page-level shortest-path policy: take a goal-satisfying action when one
/// is on screen, otherwise follow a visible link that gets closest to the
/// goal page (random among ties), scroll when a closer link is off screen.
pub struct Navigator<'e> {
    env: &'e Environment,
    dist: BTreeMap<PageId, u32>,
}

impl<'e> Navigator<'e> {
    pub fn new(env: &'e Environment, goal: &Goal) -> Self {
        let target = match goal {
            Goal::ReachPage { page } | Goal::ActivateElement { page, .. } => Some(*page),
            Goal::SubmitAnswer { .. } => None,
        };
        let mut rev: BTreeMap<PageId, Vec<PageId>> = BTreeMap::new();
        for p in env.pages() {
            for t in p.out_links() {
                rev.entry(t).or_default().push(p.id);
            }
        }
        let mut dist = BTreeMap::new();
        if let Some(t) = target {
            dist.insert(t, 0);
            let mut queue = VecDeque::from([t]);
            while let Some(p) = queue.pop_front() {
                let d = dist[&p];
                for &q in rev.get(&p).into_iter().flatten() {
                    dist.entry(q).or_insert_with(|| {
                        queue.push_back(q);
                        d + 1
                    });
                }
            }
        }
        Navigator { env, dist }
    }

    pub fn choose<R: Rng>(&self, state: &PageState, task: &Task, rng: &mut R) -> Action {
        let page = self.env.page_of(state);
        let cands = candidates(page, state, &task.intent);
        let satisfying: Vec<&Action> = cands
            .iter()
            .filter(|a| {
                let r = self.env.step(state, a);
                task.goal.satisfied_by(state.page, a, r.invalid)
            })
            .collect();
        if let Some(a) = satisfying.choose(rng) {
            return (*a).clone();
        }
        let here = self.dist.get(&state.page).copied().unwrap_or(u32::MAX);
        let link_dist = |a: &Action| -> Option<u32> {
            let el = page.element(a.element?)?;
            if a.kind != ActionKind::Click || el.disabled {
                return None;
            }
            self.dist.get(&el.target?).copied()
        };
        let best = cands.iter().filter_map(link_dist).min();
        let hidden_best = page
            .elements
            .iter()
            .filter(|e| !e.disabled)
            .filter_map(|e| e.target.and_then(|t| self.dist.get(&t).copied()))
            .min();
        let goal_hidden = matches!(task.goal, Goal::ActivateElement { page: p, .. } if p == state.page);
        match best {
            Some(b) if b < here && hidden_best.is_none_or(|h| b <= h) => {
                let ties: Vec<&Action> = cands.iter().filter(|a| link_dist(a) == Some(b)).collect();
                (*ties.choose(rng).expect("nonempty")).clone()
            }
            _ if goal_hidden || hidden_best.is_some_and(|h| h < here) => cands
                .iter()
                .find(|a| a.kind == ActionKind::Scroll)
                .cloned()
                .unwrap_or_else(Action::stop),
            _ => Action::stop(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn rollout<R: Rng>(&self, state: &PageState, first: Option<&Action>, task: &Task, gamma: f64, horizon: usize, rng: &mut R) -> f64 {
        let mut s = state.clone();
        let mut disc = 1.0;
        for t in 0..horizon {
            let a = match (t, first) {
                (0, Some(a)) => a.clone(),
                _ => self.choose(&s, task, rng),
            };
            let r = self.env.step(&s, &a);
            if task.goal.satisfied_by(s.page, &a, r.invalid) {
                return disc;
            }
            if r.terminated {
                return 0.0;
            }
            s = r.next;
            disc *= gamma;
        }
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::webenv::{Element, Page};

    fn chain() -> (Environment, Task) {
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
        (env, task)
    }

    #[test]
    fn chain_hand_dp() {
        let (env, task) = chain();
        let g = 0.9;
        let s1 = env.step(&env.initial_state(), &Action::click(crate::webenv::ElementId(0))).next;
        // from page 1: toward = click(0) → page 2, then stop: Q = γ·1
        // away = click(1) → page 0 → page 1 → page 2 → stop: Q = γ³
        let toward = advantage_oracle(&env, &s1, &Action::click(crate::webenv::ElementId(0)), &task, AdvantageMethod::ValueIteration, g, &Default::default()).unwrap();
        let away = advantage_oracle(&env, &s1, &Action::click(crate::webenv::ElementId(1)), &task, AdvantageMethod::ValueIteration, g, &Default::default()).unwrap();
        assert!(toward.value.abs() < 1e-12);
        assert!((away.value - (g.powi(3) - g)).abs() < 1e-12);
        let space = StateSpace::build(&env, &env.initial_state(), &task, STATE_CAP).unwrap();
        let t = value_iteration(&TabularMdp::from_space(&space), g, VI_TOLERANCE);
        assert!((t.q[0][0] - 0.81).abs() < 1e-12);
    }

    #[test]
    fn single_action_has_zero_advantage() {
        let page = Page::new(0, vec![], vec![]);
        let env = Environment::new(vec![page], PageId(0), 0.0, 0).unwrap();
        let task = Task {
            id: 0,
            goal: Goal::ReachPage { page: PageId(0) },
            intent: vec![],
            nominal_steps: 1,
        };
        let a = advantage_oracle(&env, &env.initial_state(), &Action::stop(), &task, AdvantageMethod::ValueIteration, 0.9, &Default::default()).unwrap();
        assert_eq!(a.value, 0.0);
    }

    #[test]
    fn monte_carlo_matches_on_chain() {
        let (env, task) = chain();
        let mc = MonteCarloOptions {
            rollouts: 200,
            ..Default::default()
        };
        let s = env.initial_state();
        for a in [Action::click(crate::webenv::ElementId(0)), Action::stop()] {
            let vi = advantage_oracle(&env, &s, &a, &task, AdvantageMethod::ValueIteration, 0.9, &mc).unwrap();
            let m = advantage_oracle(&env, &s, &a, &task, AdvantageMethod::MonteCarlo, 0.9, &mc).unwrap();
            assert!((vi.value - m.value).abs() < 0.02);
        }
    }
}
