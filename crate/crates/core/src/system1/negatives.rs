use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agentcore::{candidates, featurize, Action, PageState};
use crate::webenv::{Page, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeStrategy {
    Random,
    Semantic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSample {
    pub actions: Vec<Action>,
    /// Fewer than the requested number of alternatives existed.
    pub short: bool,
}

/// Pick `k` candidates other than `positive`: uniformly without replacement,
/// or the `k` closest to it by cosine distance of their joint features.
#[allow(clippy::too_many_arguments)]
pub fn sample_negatives(
    page: &Page,
    state: &PageState,
    task: &Task,
    positive: &Action,
    k: usize,
    strategy: NegativeStrategy,
    dim: usize,
    seed: u64,
) -> NegativeSample {
    let alternatives: Vec<Action> = candidates(page, state, &task.intent)
        .into_iter()
        .filter(|a| a != positive)
        .collect();
    let short = alternatives.len() < k;
    if short {
        return NegativeSample {
            actions: alternatives,
            short,
        };
    }
    let actions = match strategy {
        NegativeStrategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            alternatives.choose_multiple(&mut rng, k).cloned().collect()
        }
        NegativeStrategy::Semantic => {
            let anchor = featurize(page, state, positive, task, dim);
            let mut scored: Vec<(f64, Action)> = alternatives
                .into_iter()
                .map(|a| (1.0 - anchor.cosine(&featurize(page, state, &a, task, dim)), a))
                .collect();
            scored.sort_by(|x, y| x.0.total_cmp(&y.0));
            scored.into_iter().take(k).map(|(_, a)| a).collect()
        }
    };
    NegativeSample {
        actions,
        short: false,
    }
}
