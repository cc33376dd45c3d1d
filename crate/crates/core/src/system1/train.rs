use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::derive_seed;
use crate::system1::losses::{loss_on, prepare, DemoBatch, Objective};
use crate::system1::scorer::ScorerParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub objective: Objective,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            objective: Objective::Sft,
            learning_rate: 0.1,
            epochs: 10,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: ScorerParams,
    /// Mean training loss of each epoch.
    pub loss_curve: Vec<f64>,
}

/// Mini-batch gradient descent with a seed-determined shuffle per epoch.
pub fn train_offline(params: &ScorerParams, dataset: &DemoBatch, opts: &TrainOptions) -> Result<TrainResult> {
    if dataset.items.is_empty() {
        return Err(Error::InvalidSpec("empty demonstration set".into()));
    }
    if opts.batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be at least 1".into()));
    }
    let mut params = params.clone();
    if opts.epochs == 0 {
        return Ok(TrainResult {
            params,
            loss_curve: Vec::new(),
        });
    }
    let prepared = prepare(&params, &dataset.items, opts.objective, 0)?;
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut loss_curve = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, "shuffle", epoch as u64));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(opts.batch_size).enumerate() {
            let lg = loss_on(&params, chunk.iter().map(|&i| &prepared[i]), opts.objective);
            if !lg.loss.is_finite() || !lg.gradient.is_finite() {
                return Err(Error::TrainingDiverged { epoch, batch: b });
            }
            total += lg.loss * chunk.len() as f64;
            params.apply(&lg.gradient, opts.learning_rate);
        }
        loss_curve.push(total / prepared.len() as f64);
    }
    Ok(TrainResult { params, loss_curve })
}
