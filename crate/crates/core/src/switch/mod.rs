//! Per-step choice between the two systems: hard rules for stuck, invalid
//! and first-step states, otherwise a logistic gate λ = σ(wᵀx + b).

mod label;

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use label::{label_switch_data, read_switch_jsonl, write_switch_jsonl, LabelOptions};

use crate::agentcore::{ActionKey, PageState, StateDigest, System};
use crate::error::{Error, Result};
use crate::hash::derive_seed;
use crate::tensorfile;
use crate::webenv::Task;

pub const STUCK_THRESHOLD: u32 = 3;
pub const SWITCH_DIM: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchFeatures {
    pub estimated_remaining_steps: f64,
    pub page_novelty: bool,
    pub stuck_count: u32,
    pub invalid: bool,
    pub intent_length: u32,
    pub last_system: System,
    pub steps_elapsed: u32,
}

impl SwitchFeatures {
    /// Gate input: counts rescaled to roughly unit range, flags as 0/1,
    /// last system S2 = 1.
    pub fn to_vector(&self) -> [f64; SWITCH_DIM] {
        [
            self.estimated_remaining_steps / 10.0,
            f64::from(u8::from(self.page_novelty)),
            f64::from(self.stuck_count) / 3.0,
            f64::from(u8::from(self.invalid)),
            f64::from(self.intent_length) / 10.0,
            f64::from(u8::from(self.last_system == System::S2)),
            f64::from(self.steps_elapsed) / 10.0,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Default for GateParams {
    fn default() -> Self {
        GateParams {
            weights: vec![0.0; SWITCH_DIM],
            bias: 0.0,
        }
    }
}

impl GateParams {
    pub fn lambda(&self, x: &[f64]) -> f64 {
        let z: f64 = self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias;
        sigmoid(z)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let b = [self.bias];
        tensorfile::save(
            path,
            "gate",
            serde_json::json!({ "dim": self.weights.len() }),
            &[("weights", &self.weights), ("bias", &b)],
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (_, t) = tensorfile::load(path, "gate")?;
        if t.len() != 2 || t[0].len() != SWITCH_DIM || t[1].len() != 1 {
            return Err(Error::Format("gate file must hold 7 weights and a bias".into()));
        }
        Ok(GateParams {
            weights: t[0].clone(),
            bias: t[1][0],
        })
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reason {
    Gate,
    RuleStuck,
    RuleInvalid,
    RuleFirstStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchDecision {
    pub lambda: f64,
    pub system: System,
    pub reason: Reason,
}

/// Rules first (stuck, invalid, first step → S2), then the gate: S1 iff λ ≥ 0.5.
pub fn decide(gate: &GateParams, features: &SwitchFeatures) -> SwitchDecision {
    let lambda = gate.lambda(&features.to_vector());
    let rule = if features.stuck_count >= STUCK_THRESHOLD {
        Some(Reason::RuleStuck)
    } else if features.invalid {
        Some(Reason::RuleInvalid)
    } else if features.steps_elapsed == 0 {
        Some(Reason::RuleFirstStep)
    } else {
        None
    };
    match rule {
        Some(reason) => SwitchDecision {
            lambda,
            system: System::S2,
            reason,
        },
        None => SwitchDecision {
            lambda,
            system: if lambda >= 0.5 { System::S1 } else { System::S2 },
            reason: Reason::Gate,
        },
    }
}

/// Running per-episode bookkeeping behind the switch features.
#[derive(Debug, Clone, Default)]
pub struct EpisodeTracker {
    seen: HashSet<StateDigest>,
    stuck: u32,
    last_failed: Option<ActionKey>,
    last_system: Option<System>,
    steps: u32,
}

impl EpisodeTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn features(&self, task: &Task, state: &PageState) -> SwitchFeatures {
        SwitchFeatures {
            estimated_remaining_steps: f64::from(task.nominal_steps.saturating_sub(self.steps)),
            page_novelty: !self.seen.contains(&state.position_digest()),
            stuck_count: self.stuck,
            invalid: state.invalid,
            intent_length: task.intent.len() as u32,
            last_system: self.last_system.unwrap_or(System::S2),
            steps_elapsed: self.steps,
        }
    }

    /// Record one step. A step fails when it is invalid or leaves the state
    /// digest unchanged; consecutive identical failed actions count as stuck.
    pub fn observe(&mut self, before: &PageState, action: ActionKey, after: &PageState, invalid: bool, system: System) {
        self.seen.insert(before.position_digest());
        let failed = invalid || before.digest() == after.digest();
        if failed {
            if self.last_failed == Some(action) {
                self.stuck += 1;
            } else {
                self.stuck = 1;
            }
            self.last_failed = Some(action);
        } else {
            self.stuck = 0;
            self.last_failed = None;
        }
        self.last_system = Some(system);
        self.steps += 1;
    }

    pub fn stuck_count(&self) -> u32 {
        self.stuck
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeatures {
    pub features: SwitchFeatures,
    pub label: System,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateOptions {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Mini-batch size; 0 uses the full set every step.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for GateOptions {
    fn default() -> Self {
        GateOptions {
            iterations: 500,
            learning_rate: 0.5,
            batch_size: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GateResult {
    pub gate: GateParams,
    /// Training accuracy (S1 iff λ ≥ 0.5) after each iteration.
    pub accuracy_curve: Vec<f64>,
}

pub fn gate_accuracy(gate: &GateParams, labeled: &[LabeledFeatures]) -> f64 {
    let right = labeled
        .iter()
        .filter(|l| (gate.lambda(&l.features.to_vector()) >= 0.5) == (l.label == System::S1))
        .count();
    right as f64 / labeled.len().max(1) as f64
}

/// Logistic regression by gradient descent on the mean log-loss, label S1 = 1.
pub fn train_gate(gate: &GateParams, labeled: &[LabeledFeatures], opts: &GateOptions) -> Result<GateResult> {
    if labeled.is_empty() {
        return Err(Error::InvalidSpec("no labeled switch examples".into()));
    }
    let mut gate = gate.clone();
    let xs: Vec<[f64; SWITCH_DIM]> = labeled.iter().map(|l| l.features.to_vector()).collect();
    let ys: Vec<f64> = labeled.iter().map(|l| f64::from(u8::from(l.label == System::S1))).collect();
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    let mut accuracy_curve = Vec::with_capacity(opts.iterations);
    let bs = if opts.batch_size == 0 { labeled.len() } else { opts.batch_size };
    for it in 0..opts.iterations {
        if bs < labeled.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, "gate", it as u64));
            order.shuffle(&mut rng);
        }
        let idx = &order[..bs.min(labeled.len())];
        let mut gw = [0.0; SWITCH_DIM];
        let mut gb = 0.0;
        for &i in idx {
            let err = gate.lambda(&xs[i]) - ys[i];
            for (g, x) in gw.iter_mut().zip(&xs[i]) {
                *g += err * x;
            }
            gb += err;
        }
        let n = idx.len() as f64;
        for (w, g) in gate.weights.iter_mut().zip(gw) {
            *w -= opts.learning_rate * g / n;
        }
        gate.bias -= opts.learning_rate * gb / n;
        if !gate.bias.is_finite() || gate.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::TrainingDiverged { epoch: it, batch: 0 });
        }
        accuracy_curve.push(gate_accuracy(&gate, labeled));
    }
    Ok(GateResult { gate, accuracy_curve })
}
