use serde::{Deserialize, Serialize};

use crate::agentcore::Action;
use crate::error::{Error, Result};

/// Probabilities over an explicit candidate list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub candidates: Vec<Action>,
    pub probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn new(candidates: Vec<Action>, probs: Vec<f64>) -> Result<Self> {
        if candidates.len() != probs.len() {
            return Err(Error::ContractViolation(format!(
                "{} candidates but {} probabilities",
                candidates.len(),
                probs.len()
            )));
        }
        Ok(ActionDistribution { candidates, probs })
    }

    /// Softmax of raw scores, stabilized by subtracting the maximum.
    pub fn softmax(candidates: Vec<Action>, scores: &[f64]) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::ContractViolation("no candidate actions".into()));
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        Self::new(candidates, exp.into_iter().map(|e| e / z).collect())
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Highest-probability candidate; ties go to the earliest in canonical order.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn prob_of(&self, action: &Action) -> Option<f64> {
        self.candidates
            .iter()
            .position(|a| a == action)
            .map(|i| self.probs[i])
    }

    fn check(&self, name: &str) -> Result<()> {
        let total: f64 = self.probs.iter().sum();
        if self.probs.iter().any(|p| !(0.0..=1.0 + 1e-12).contains(p)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::ContractViolation(format!(
                "{name} is not a probability distribution (sum {total})"
            )));
        }
        Ok(())
    }
}

/// λ·p1 + (1−λ)·p2 over a shared candidate list.
pub fn mixture_action_distribution(
    p1: &ActionDistribution,
    p2: &ActionDistribution,
    lambda: f64,
) -> Result<ActionDistribution> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::ContractViolation(format!("lambda {lambda} outside [0,1]")));
    }
    if p1.candidates != p2.candidates {
        return Err(Error::ContractViolation(
            "mixture components have different candidate sets".into(),
        ));
    }
    p1.check("p1")?;
    p2.check("p2")?;
    let probs = p1
        .probs
        .iter()
        .zip(&p2.probs)
        .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
        .collect();
    ActionDistribution::new(p1.candidates.clone(), probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::webenv::ElementId;

    fn two(p: [f64; 2]) -> ActionDistribution {
        ActionDistribution::new(vec![Action::click(ElementId(0)), Action::stop()], p.to_vec()).unwrap()
    }

    #[test]
    fn boundaries_and_midpoint() {
        let a = two([1.0, 0.0]);
        let b = two([0.0, 1.0]);
        assert_eq!(mixture_action_distribution(&a, &b, 1.0).unwrap(), a);
        assert_eq!(mixture_action_distribution(&a, &b, 0.0).unwrap(), b);
        assert_eq!(mixture_action_distribution(&a, &b, 0.5).unwrap().probs, vec![0.5, 0.5]);
    }

    #[test]
    fn mismatched_sets_rejected() {
        let a = two([1.0, 0.0]);
        let c = ActionDistribution::new(vec![Action::stop()], vec![1.0]).unwrap();
        assert!(matches!(
            mixture_action_distribution(&a, &c, 0.5),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn softmax_analytic() {
        let d = ActionDistribution::softmax(
            vec![Action::click(ElementId(0)), Action::stop()],
            &[2f64.ln(), 0.0],
        )
        .unwrap();
        assert!((d.probs[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((d.probs[1] - 1.0 / 3.0).abs() < 1e-12);
    }
}
