use serde::{Deserialize, Serialize};

use crate::agentcore::{candidates, Action, PageState};
use crate::error::{Error, Result};
use crate::system1::scorer::{Gradient, Prepared, ScorerParams};
use crate::webenv::{Page, Task};

/// One demonstration: the full observed page and state, the task, the
/// expert action and contrasting non-expert actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoItem {
    pub page: Page,
    pub state: PageState,
    pub task: Task,
    pub positive: Action,
    pub negatives: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DemoBatch {
    pub items: Vec<DemoItem>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGradient {
    pub loss: f64,
    pub gradient: Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Sft,
    Wepo,
}

/// A demo item featurized for one objective: index 0 of `actions` is the
/// positive for WEPO; for SFT `positive` indexes the candidate list.
#[derive(Debug, Clone)]
pub(crate) struct PreparedItem {
    prep: Prepared,
    positive: usize,
}

pub(crate) fn prepare(params: &ScorerParams, items: &[DemoItem], objective: Objective, offset: usize) -> Result<Vec<PreparedItem>> {
    items
        .iter()
        .enumerate()
        .map(|(k, item)| {
            let index = offset + k;
            let (actions, positive) = match objective {
                Objective::Sft => {
                    let cands = candidates(&item.page, &item.state, &item.task.intent);
                    let Some(pos) = cands.iter().position(|a| *a == item.positive) else {
                        return Err(Error::data(index, "positive action is not an enumerated candidate"));
                    };
                    (cands, pos)
                }
                Objective::Wepo => {
                    if item.negatives.is_empty() {
                        return Err(Error::data(index, "no negative actions"));
                    }
                    if item.negatives.contains(&item.positive) {
                        return Err(Error::data(index, "positive action listed among negatives"));
                    }
                    let mut acts = vec![item.positive.clone()];
                    acts.extend(item.negatives.iter().cloned());
                    (acts, 0)
                }
            };
            Ok(PreparedItem {
                prep: Prepared::new(params.arch, params.dim, &item.page, &item.state, &item.task, &actions),
                positive,
            })
        })
        .collect()
}

pub(crate) fn loss_on<'a>(
    params: &ScorerParams,
    items: impl IntoIterator<Item = &'a PreparedItem>,
    objective: Objective,
) -> LossAndGradient {
    let mut grad = Gradient::zeros_like(params);
    let mut total = 0.0;
    let mut count = 0usize;
    for item in items {
        let fwd = params.forward(&item.prep);
        let s = &fwd.scores;
        let mut coeff = vec![0.0; s.len()];
        match objective {
            Objective::Sft => {
                let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = s.iter().map(|x| (x - max).exp()).sum();
                let lse = max + z.ln();
                total += lse - s[item.positive];
                for (c, x) in coeff.iter_mut().zip(s) {
                    *c = (x - lse).exp();
                }
                coeff[item.positive] -= 1.0;
                count += 1;
            }
            Objective::Wepo => {
                for j in 1..s.len() {
                    let m = s[0] - s[j];
                    total += softplus(-m);
                    let g = sigmoid(-m);
                    coeff[0] -= g;
                    coeff[j] += g;
                    count += 1;
                }
            }
        }
        params.backward(&item.prep, &fwd, &coeff, &mut grad);
    }
    let n = count.max(1) as f64;
    grad.scale(1.0 / n);
    LossAndGradient {
        loss: total / n,
        gradient: grad,
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + eˣ), stable for large |x|.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Mean −log p(a⁺ | s, g) over the batch, with its exact gradient.
pub fn sft_loss(params: &ScorerParams, batch: &DemoBatch) -> Result<LossAndGradient> {
    let prepared = prepare(params, &batch.items, Objective::Sft, 0)?;
    Ok(loss_on(params, &prepared, Objective::Sft))
}

/// Mean −log σ(f(a⁺) − f(a⁻)) over every (positive, negative) pair.
pub fn wepo_loss(params: &ScorerParams, batch: &DemoBatch) -> Result<LossAndGradient> {
    let prepared = prepare(params, &batch.items, Objective::Wepo, 0)?;
    Ok(loss_on(params, &prepared, Objective::Wepo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system1::Architecture;
    use crate::webenv::{Element, ElementId, Goal, PageId};

    fn item(n_links: u32) -> DemoItem {
        let page = Page::new(
            0,
            (0..n_links).map(|i| Element::link(i, PageId(0), vec![i])).collect(),
            vec![],
        );
        DemoItem {
            state: PageState::enter(&page),
            page,
            task: Task {
                id: 0,
                goal: Goal::ReachPage { page: PageId(0) },
                intent: vec![1],
                nominal_steps: 1,
            },
            positive: Action::click(ElementId(0)),
            negatives: vec![Action::stop()],
        }
    }

    #[test]
    fn uniform_four_is_ln4() {
        let p = ScorerParams::zeros(Architecture::CrossEncoder, 128, 4);
        let batch = DemoBatch { items: vec![item(3)] };
        let l = sft_loss(&p, &batch).unwrap();
        assert!((l.loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_candidate_is_zero() {
        let mut it = item(0);
        it.positive = Action::stop();
        it.negatives.clear();
        let p = ScorerParams::init(Architecture::BiEncoder, 128, 4, 3);
        let l = sft_loss(&p, &DemoBatch { items: vec![it] }).unwrap();
        assert_eq!(l.loss, 0.0);
    }

    #[test]
    fn equal_scores_give_ln2() {
        let p = ScorerParams::zeros(Architecture::BiEncoder, 128, 4);
        let l = wepo_loss(&p, &DemoBatch { items: vec![item(2)] }).unwrap();
        assert!((l.loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn margin_ten() {
        assert!((softplus(-10.0) - 4.539_889e-5).abs() < 1e-9);
    }

    #[test]
    fn data_errors_name_the_item() {
        let p = ScorerParams::zeros(Architecture::CrossEncoder, 64, 2);
        let mut bad = item(2);
        bad.positive = Action::click(ElementId(7));
        let batch = DemoBatch { items: vec![item(2), bad.clone()] };
        assert!(matches!(sft_loss(&p, &batch), Err(Error::Data { index: 1, .. })));
        bad.negatives.clear();
        let batch = DemoBatch { items: vec![bad] };
        assert!(matches!(wepo_loss(&p, &batch), Err(Error::Data { index: 0, .. })));
    }
}
