use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agentcore::statespace::{StateSpace, STATE_CAP};
use crate::agentcore::{candidates, feature_slot, featurize, Action, ActionDistribution, ActionKind, FeatureVector, PageState};
use crate::error::{Error, Result};
use crate::hash::derive_seed;
use crate::system2::advantage::{value_iteration, TabularMdp, ValueTable, VI_TOLERANCE};
use crate::tensorfile;
use crate::webenv::{Environment, Page, Task};

/// Linear softmax policy π_θ2 over joint features, with a frozen reference
/// copy π_ref and KL coefficient ϑ.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlinePolicyParams {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub reference: Vec<f64>,
    pub kl_coef: f64,
}

/// One scored step for the KL-constrained update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineSample {
    pub page: Page,
    pub state: PageState,
    pub task: Task,
    pub action: Action,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlLoss {
    pub loss: f64,
    /// Sparse gradient with respect to `weights`.
    pub gradient: FeatureVector,
}

struct Scored {
    candidates: Vec<Action>,
    features: Vec<FeatureVector>,
}

impl Scored {
    fn new(page: &Page, state: &PageState, task: &Task, dim: usize) -> Self {
        let candidates = candidates(page, state, &task.intent);
        let features = candidates.iter().map(|a| featurize(page, state, a, task, dim)).collect();
        Scored { candidates, features }
    }

    fn log_probs(&self, w: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self.features.iter().map(|f| f.dot_dense(w)).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        logits.iter().map(|l| l - lse).collect()
    }
}

impl OnlinePolicyParams {
    pub fn zeros(dim: usize, kl_coef: f64) -> Self {
        OnlinePolicyParams {
            dim,
            weights: vec![0.0; dim],
            reference: vec![0.0; dim],
            kl_coef,
        }
    }

    /// Prior that prefers actions whose element label overlaps the intent.
    pub fn label_match(dim: usize, kl_coef: f64) -> Self {
        let mut p = Self::zeros(dim, kl_coef);
        let (i, s) = feature_slot("overlap", 0, 0, dim);
        p.weights[i as usize] = s;
        p.reference.clone_from(&p.weights);
        p
    }

    pub fn refresh_reference(&mut self) {
        self.reference.clone_from(&self.weights);
    }

    pub fn distribution(&self, page: &Page, state: &PageState, task: &Task) -> Result<ActionDistribution> {
        let sc = Scored::new(page, state, task, self.dim);
        let lp = sc.log_probs(&self.weights);
        ActionDistribution::new(sc.candidates, lp.into_iter().map(f64::exp).collect())
    }

    /// Logits of every candidate, in candidate order.
    pub fn logits(&self, page: &Page, state: &PageState, task: &Task, actions: &[Action]) -> Vec<f64> {
        actions
            .iter()
            .map(|a| featurize(page, state, a, task, self.dim).dot_dense(&self.weights))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        tensorfile::save(
            path,
            "online-policy",
            serde_json::json!({ "dim": self.dim, "kl_coef": self.kl_coef }),
            &[("weights", &self.weights), ("reference", &self.reference)],
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (h, mut t) = tensorfile::load(path, "online-policy")?;
        let dim: usize = serde_json::from_value(h.meta["dim"].clone())?;
        let kl_coef: f64 = serde_json::from_value(h.meta["kl_coef"].clone())?;
        if t.len() != 2 || t[0].len() != dim || t[1].len() != dim {
            return Err(Error::Format("online policy tensors disagree with header".into()));
        }
        let reference = t.pop().expect("two tensors");
        let weights = t.pop().expect("two tensors");
        Ok(OnlinePolicyParams {
            dim,
            weights,
            reference,
            kl_coef,
        })
    }
}

/// Mean over the batch of (ϑ·[log π(a|s,g) − log π_ref(a|s,g)] − A*)².
pub fn kl_update_loss(params: &OnlinePolicyParams, batch: &[OnlineSample]) -> Result<KlLoss> {
    if !(params.kl_coef > 0.0) {
        return Err(Error::InvalidConfig(format!("kl coefficient {} must be positive", params.kl_coef)));
    }
    let mut total = 0.0;
    let mut grad: Vec<(u32, f64)> = Vec::new();
    for (i, item) in batch.iter().enumerate() {
        let sc = Scored::new(&item.page, &item.state, &item.task, params.dim);
        let Some(k) = sc.candidates.iter().position(|a| *a == item.action) else {
            return Err(Error::data(i, "action is not an enumerated candidate"));
        };
        let lp = sc.log_probs(&params.weights);
        let lr = sc.log_probs(&params.reference);
        if lr[k] == f64::NEG_INFINITY || lr[k].exp() == 0.0 {
            return Err(Error::data(i, "reference probability is zero"));
        }
        let r = params.kl_coef * (lp[k] - lr[k]) - item.advantage;
        total += r * r;
        // ∇ log π(a) = φ(a) − Σ_c π(c) φ(c)
        let c0 = 2.0 * r * params.kl_coef;
        for &(j, v) in &sc.features[k].entries {
            grad.push((j, c0 * v));
        }
        for (f, l) in sc.features.iter().zip(&lp) {
            let p = l.exp();
            for &(j, v) in &f.entries {
                grad.push((j, -c0 * p * v));
            }
        }
    }
    let n = batch.len().max(1) as f64;
    for g in &mut grad {
        g.1 /= n;
    }
    Ok(KlLoss {
        loss: total / n,
        gradient: FeatureVector::from_entries(params.dim, grad),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnlineOptions {
    pub rounds: usize,
    pub episodes_per_round: usize,
    pub updates_per_round: usize,
    pub learning_rate: f64,
    pub kl_coef: f64,
    pub discount: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for OnlineOptions {
    fn default() -> Self {
        OnlineOptions {
            rounds: 30,
            episodes_per_round: 16,
            updates_per_round: 10,
            learning_rate: 0.5,
            kl_coef: 1.0,
            discount: 0.9,
            max_steps: 12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OnlineResult {
    pub params: OnlinePolicyParams,
    /// Fraction of sampled episodes that succeeded in each round.
    pub success_curve: Vec<f64>,
    /// Mean KL(π‖π_ref) over the round's visited states after its updates.
    pub kl_curve: Vec<f64>,
}

struct Solved {
    space: StateSpace,
    table: ValueTable,
}

/// Rounds of on-policy rollouts scored by the value-iteration oracle, each
/// followed by gradient steps on the KL-constrained loss against the policy
/// that collected them.
pub fn train_online(params: &OnlinePolicyParams, env: &Environment, tasks: &[Task], opts: &OnlineOptions) -> Result<OnlineResult> {
    if tasks.is_empty() {
        return Err(Error::InvalidSpec("empty task stream".into()));
    }
    let mut params = params.clone();
    params.kl_coef = opts.kl_coef;
    let mut success_curve = Vec::with_capacity(opts.rounds);
    let mut kl_curve = Vec::with_capacity(opts.rounds);
    let mut solved: HashMap<u32, Solved> = HashMap::new();
    for round in 0..opts.rounds {
        params.refresh_reference();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, "online-round", round as u64));
        let mut batch = Vec::new();
        let mut successes = 0usize;
        for _ in 0..opts.episodes_per_round {
            let task = &tasks[rng.random_range(0..tasks.len())];
            if let std::collections::hash_map::Entry::Vacant(e) = solved.entry(task.id) {
                let space = StateSpace::build(env, &env.initial_state(), task, STATE_CAP)?;
                let table = value_iteration(&TabularMdp::from_space(&space), opts.discount, VI_TOLERANCE);
                e.insert(Solved { space, table });
            }
            let sol = &solved[&task.id];
            let mut s = 0usize;
            for _ in 0..opts.max_steps {
                let state = &sol.space.states[s];
                let page = env.page_of(state);
                let d = params.distribution(page, state, task)?;
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = d.len() - 1;
                for (i, p) in d.probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                let action = d.candidates[k].clone();
                let t = sol.space.transitions[s]
                    .iter()
                    .position(|t| t.action == action)
                    .expect("state space and policy share candidates");
                batch.push(OnlineSample {
                    page: page.clone(),
                    state: state.clone(),
                    task: task.clone(),
                    action,
                    advantage: sol.table.advantage(s, t),
                });
                let tr = &sol.space.transitions[s][t];
                if tr.reward > 0.0 {
                    successes += 1;
                }
                match tr.next {
                    Some(n) => s = n,
                    None => break,
                }
            }
        }
        for u in 0..opts.updates_per_round {
            let l = kl_update_loss(&params, &batch)?;
            if !l.loss.is_finite() || l.gradient.entries.iter().any(|(_, g)| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch: round, batch: u });
            }
            for &(j, g) in &l.gradient.entries {
                params.weights[j as usize] -= opts.learning_rate * g;
            }
        }
        success_curve.push(successes as f64 / opts.episodes_per_round.max(1) as f64);
        kl_curve.push(mean_kl(&params, &batch));
    }
    Ok(OnlineResult {
        params,
        success_curve,
        kl_curve,
    })
}

/// Mean KL(π‖π_ref) over the states of a batch.
pub fn mean_kl(params: &OnlinePolicyParams, batch: &[OnlineSample]) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    batch
        .iter()
        .map(|b| {
            let sc = Scored::new(&b.page, &b.state, &b.task, params.dim);
            let lp = sc.log_probs(&params.weights);
            let lr = sc.log_probs(&params.reference);
            lp.iter().zip(&lr).map(|(p, r)| p.exp() * (p - r)).sum::<f64>()
        })
        .sum::<f64>()
        / batch.len() as f64
}

/// Greedy success rate of the policy on tasks from the start state.
pub fn greedy_success(params: &OnlinePolicyParams, env: &Environment, tasks: &[Task], max_steps: usize) -> Result<f64> {
    let mut wins = 0;
    for task in tasks {
        let mut s = env.initial_state();
        for _ in 0..max_steps {
            let page = env.page_of(&s);
            let d = params.distribution(page, &s, task)?;
            let a = &d.candidates[d.argmax()];
            let r = env.step(&s, a);
            if task.goal.satisfied_by(s.page, a, r.invalid) {
                wins += 1;
                break;
            }
            if r.terminated || a.kind == ActionKind::Stop {
                break;
            }
            s = r.next;
        }
    }
    Ok(wins as f64 / tasks.len().max(1) as f64)
}
