use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agentcore::{
    candidate_features, candidates, context_features, featurize, Action, ActionDistribution,
    FeatureVector, PageState,
};
use crate::error::{Error, Result};
use crate::webenv::{Page, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// score = E(a)ᵀ E(s, g) with one shared embedding table.
    BiEncoder,
    /// score = w2ᵀ tanh(W1ᵀ ψ(a, s, g) + b1) + b2.
    CrossEncoder,
}

/// Scorer weights. `table` is row-major `[dim × width]`: the embedding table
/// of the bi-encoder or the first layer of the cross-encoder. `b1`, `w2` and
/// `b2` are used by the cross-encoder only and are empty/zero otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    pub arch: Architecture,
    pub dim: usize,
    pub width: usize,
    pub table: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

pub const DEFAULT_EMBED_DIM: usize = 32;
pub const DEFAULT_HIDDEN: usize = 64;

impl ScorerParams {
    pub fn zeros(arch: Architecture, dim: usize, width: usize) -> Self {
        let head = if arch == Architecture::CrossEncoder { width } else { 0 };
        ScorerParams {
            arch,
            dim,
            width,
            table: vec![0.0; dim * width],
            b1: vec![0.0; head],
            w2: vec![0.0; head],
            b2: 0.0,
        }
    }

    /// Small uniform random weights; biases start at zero.
    pub fn init(arch: Architecture, dim: usize, width: usize, seed: u64) -> Self {
        let mut p = Self::zeros(arch, dim, width);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 0.1;
        for w in &mut p.table {
            *w = rng.random_range(-scale..scale);
        }
        for w in &mut p.w2 {
            *w = rng.random_range(-scale..scale);
        }
        p
    }

    pub fn default_width(arch: Architecture) -> usize {
        match arch {
            Architecture::BiEncoder => DEFAULT_EMBED_DIM,
            Architecture::CrossEncoder => DEFAULT_HIDDEN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let head = if self.arch == Architecture::CrossEncoder { self.width } else { 0 };
        if self.table.len() != self.dim * self.width || self.b1.len() != head || self.w2.len() != head {
            return Err(Error::Format("scorer tensor shapes disagree with header".into()));
        }
        let finite = self.table.iter().chain(&self.b1).chain(&self.w2).all(|x| x.is_finite());
        if !finite || !self.b2.is_finite() {
            return Err(Error::Format("scorer weights are not finite".into()));
        }
        Ok(())
    }

    /// Σᵢ xᵢ · row(i).
    pub fn embed(&self, x: &FeatureVector) -> Vec<f64> {
        let mut e = vec![0.0; self.width];
        for &(i, v) in &x.entries {
            let row = &self.table[i as usize * self.width..(i as usize + 1) * self.width];
            for (acc, w) in e.iter_mut().zip(row) {
                *acc += v * w;
            }
        }
        e
    }

    /// Number of scalar parameters, in the order used by `flat`/`set_flat`.
    pub fn flat_len(&self) -> usize {
        self.table.len() + self.b1.len() + self.w2.len() + 1
    }

    pub fn flat(&self, k: usize) -> f64 {
        let (t, b, w) = (self.table.len(), self.b1.len(), self.w2.len());
        if k < t {
            self.table[k]
        } else if k < t + b {
            self.b1[k - t]
        } else if k < t + b + w {
            self.w2[k - t - b]
        } else {
            self.b2
        }
    }

    pub fn set_flat(&mut self, k: usize, v: f64) {
        let (t, b, w) = (self.table.len(), self.b1.len(), self.w2.len());
        if k < t {
            self.table[k] = v;
        } else if k < t + b {
            self.b1[k - t] = v;
        } else if k < t + b + w {
            self.w2[k - t - b] = v;
        } else {
            self.b2 = v;
        }
    }

    /// `self -= lr · grad`, touching only the rows present in the gradient.
    pub fn apply(&mut self, grad: &Gradient, lr: f64) {
        for (&i, row) in &grad.rows {
            let dst = &mut self.table[i as usize * self.width..(i as usize + 1) * self.width];
            for (w, g) in dst.iter_mut().zip(row) {
                *w -= lr * g;
            }
        }
        for (w, g) in self.b1.iter_mut().zip(&grad.b1) {
            *w -= lr * g;
        }
        for (w, g) in self.w2.iter_mut().zip(&grad.w2) {
            *w -= lr * g;
        }
        self.b2 -= lr * grad.b2;
    }
}

/// Gradient with respect to `ScorerParams`, storing only touched table rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub width: usize,
    pub rows: BTreeMap<u32, Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Gradient {
    pub fn zeros_like(p: &ScorerParams) -> Self {
        Gradient {
            width: p.width,
            rows: BTreeMap::new(),
            b1: vec![0.0; p.b1.len()],
            w2: vec![0.0; p.w2.len()],
            b2: 0.0,
        }
    }

    fn row(&mut self, i: u32) -> &mut [f64] {
        let w = self.width;
        self.rows.entry(i).or_insert_with(|| vec![0.0; w])
    }

    pub fn scale(&mut self, c: f64) {
        for row in self.rows.values_mut() {
            row.iter_mut().for_each(|g| *g *= c);
        }
        self.b1.iter_mut().for_each(|g| *g *= c);
        self.w2.iter_mut().for_each(|g| *g *= c);
        self.b2 *= c;
    }

    /// Same-shape dense form of the gradient.
    pub fn to_dense(&self, like: &ScorerParams) -> ScorerParams {
        let mut d = ScorerParams::zeros(like.arch, like.dim, like.width);
        for (&i, row) in &self.rows {
            d.table[i as usize * self.width..(i as usize + 1) * self.width].copy_from_slice(row);
        }
        d.b1.clone_from(&self.b1);
        d.w2.clone_from(&self.w2);
        d.b2 = self.b2;
        d
    }

    pub fn flat(&self, like: &ScorerParams, k: usize) -> f64 {
        let t = like.table.len();
        if k < t {
            let (r, c) = (k / self.width, k % self.width);
            self.rows.get(&(r as u32)).map_or(0.0, |row| row[c])
        } else if k < t + self.b1.len() {
            self.b1[k - t]
        } else if k < t + self.b1.len() + self.w2.len() {
            self.w2[k - t - self.b1.len()]
        } else {
            self.b2
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rows.values().flatten().chain(&self.b1).chain(&self.w2).all(|g| g.is_finite())
            && self.b2.is_finite()
    }
}

/// Featurized scoring inputs for a list of actions in one context. Features
/// do not depend on the weights, so training prepares them once.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Candidate tower inputs (bi-encoder) or joint inputs (cross-encoder).
    pub inputs: Vec<FeatureVector>,
    /// Context tower input; bi-encoder only.
    pub context: Option<FeatureVector>,
}

impl Prepared {
    pub fn new(arch: Architecture, dim: usize, page: &Page, state: &PageState, task: &Task, actions: &[Action]) -> Self {
        match arch {
            Architecture::BiEncoder => Prepared {
                inputs: actions
                    .iter()
                    .map(|a| candidate_features(page, state, a, dim))
                    .collect(),
                context: Some(context_features(page, state, task, dim)),
            },
            Architecture::CrossEncoder => Prepared {
                inputs: actions.iter().map(|a| featurize(page, state, a, task, dim)).collect(),
                context: None,
            },
        }
    }
}

/// Per-input activations kept for the backward pass.
pub struct Forward {
    pub scores: Vec<f64>,
    hidden: Vec<Vec<f64>>,
    context: Vec<f64>,
}

impl ScorerParams {
    pub fn forward(&self, prep: &Prepared) -> Forward {
        match self.arch {
            Architecture::BiEncoder => {
                let ctx = self.embed(prep.context.as_ref().expect("bi-encoder needs a context"));
                let hidden: Vec<Vec<f64>> = prep.inputs.iter().map(|x| self.embed(x)).collect();
                let scores = hidden.iter().map(|e| dot(e, &ctx)).collect();
                Forward {
                    scores,
                    hidden,
                    context: ctx,
                }
            }
            Architecture::CrossEncoder => {
                let hidden: Vec<Vec<f64>> = prep
                    .inputs
                    .iter()
                    .map(|x| {
                        self.embed(x)
                            .iter()
                            .zip(&self.b1)
                            .map(|(z, b)| (z + b).tanh())
                            .collect()
                    })
                    .collect();
                let scores = hidden.iter().map(|h| dot(h, &self.w2) + self.b2).collect();
                Forward {
                    scores,
                    hidden,
                    context: Vec::new(),
                }
            }
        }
    }

    /// Accumulate Σ_c coeff[c] · ∇score_c into `grad`.
    pub fn backward(&self, prep: &Prepared, fwd: &Forward, coeff: &[f64], grad: &mut Gradient) {
        match self.arch {
            Architecture::BiEncoder => {
                let mut ctx_grad = vec![0.0; self.width];
                for ((x, e), &c) in prep.inputs.iter().zip(&fwd.hidden).zip(coeff) {
                    if c == 0.0 {
                        continue;
                    }
                    for &(i, v) in &x.entries {
                        for (g, z) in grad.row(i).iter_mut().zip(&fwd.context) {
                            *g += c * v * z;
                        }
                    }
                    for (g, z) in ctx_grad.iter_mut().zip(e) {
                        *g += c * z;
                    }
                }
                for &(j, v) in &prep.context.as_ref().expect("bi-encoder needs a context").entries {
                    for (g, z) in grad.row(j).iter_mut().zip(&ctx_grad) {
                        *g += v * z;
                    }
                }
            }
            Architecture::CrossEncoder => {
                for ((x, h), &c) in prep.inputs.iter().zip(&fwd.hidden).zip(coeff) {
                    if c == 0.0 {
                        continue;
                    }
                    grad.b2 += c;
                    let dh: Vec<f64> = h
                        .iter()
                        .zip(&self.w2)
                        .map(|(hk, wk)| c * wk * (1.0 - hk * hk))
                        .collect();
                    for (g, hk) in grad.w2.iter_mut().zip(h) {
                        *g += c * hk;
                    }
                    for (g, d) in grad.b1.iter_mut().zip(&dh) {
                        *g += d;
                    }
                    for &(i, v) in &x.entries {
                        for (g, d) in grad.row(i).iter_mut().zip(&dh) {
                            *g += v * d;
                        }
                    }
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// f_θ1(a, s, g).
pub fn score(params: &ScorerParams, page: &Page, state: &PageState, task: &Task, action: &Action) -> f64 {
    let prep = Prepared::new(params.arch, params.dim, page, state, task, std::slice::from_ref(action));
    params.forward(&prep).scores[0]
}

/// Softmax over the scores of every candidate action in the state.
pub fn action_distribution(params: &ScorerParams, page: &Page, state: &PageState, task: &Task) -> Result<ActionDistribution> {
    let cands = candidates(page, state, &task.intent);
    let prep = Prepared::new(params.arch, params.dim, page, state, task, &cands);
    let fwd = params.forward(&prep);
    ActionDistribution::softmax(cands, &fwd.scores)
}
