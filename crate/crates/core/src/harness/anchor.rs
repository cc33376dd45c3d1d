use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A policy configuration on the capability-efficiency plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigPoint {
    pub label: String,
    /// Success fraction.
    pub capability: f64,
    /// Mean tokens per trajectory.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchors {
    pub fast: ConfigPoint,
    pub slow: ConfigPoint,
    /// Position of the fast anchor in cost order: configurations up to it
    /// serve the easy share.
    pub threshold_index: usize,
    /// Fraction of tasks, easiest first, routed to the fast anchor.
    pub split: f64,
    pub success: f64,
    pub cost: f64,
    pub success_per_token: f64,
}

/// Success and mean cost when the cheaper configuration serves the easiest
/// `split` of tasks and the other the rest. Tasks are ranked by difficulty
/// and a configuration of capability c solves exactly the easiest c of them.
pub fn mix_outcome(fast: &ConfigPoint, slow: &ConfigPoint, split: f64) -> (f64, f64) {
    let success = fast.capability.min(split) + (slow.capability - split).max(0.0);
    let cost = split * fast.cost + (1.0 - split) * slow.cost;
    (success, cost)
}

fn validate(points: &[ConfigPoint]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidSpec("no configuration points".into()));
    }
    for p in points {
        if !(0.0..=1.0).contains(&p.capability) || !(p.cost > 0.0) || !p.cost.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "point {} needs capability in [0,1] and positive cost",
                p.label
            )));
        }
    }
    Ok(())
}

/// Pick the (cheaper, dearer) pair and split with the highest success per
/// token. The ratio is piecewise linear-fractional in the split, so only
/// the breakpoints 0, 1 and the two capabilities need checking.
pub fn anchor_configs(points: &[ConfigPoint]) -> Result<Anchors> {
    validate(points)?;
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then(a.capability.total_cmp(&b.capability))
            .then(a.label.cmp(&b.label))
    });
    let n = sorted.len();
    let mut best: Option<(f64, usize, usize, f64, f64, f64)> = None;
    let pairs: Vec<(usize, usize)> = if n == 1 {
        vec![(0, 0)]
    } else {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    };
    for (i, j) in pairs {
        let mut splits = vec![0.0, 1.0, sorted[i].capability, sorted[j].capability];
        splits.sort_by(f64::total_cmp);
        splits.dedup();
        for s in splits {
            let (succ, cost) = mix_outcome(&sorted[i], &sorted[j], s);
            let ratio = succ / cost;
            if best.is_none_or(|b| ratio > b.0) {
                best = Some((ratio, i, j, s, succ, cost));
            }
        }
    }
    let (ratio, i, j, split, success, cost) = best.expect("at least one pair");
    Ok(Anchors {
        fast: sorted[i].clone(),
        slow: sorted[j].clone(),
        threshold_index: i,
        split,
        success,
        cost,
        success_per_token: ratio,
    })
}

/// Points from CSV with header `label,capability,cost`.
pub fn read_points_csv<R: Read>(r: R) -> Result<Vec<ConfigPoint>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rd.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(label: &str, capability: f64, cost: f64) -> ConfigPoint {
        ConfigPoint {
            label: label.into(),
            capability,
            cost,
        }
    }

    #[test]
    fn single_point() {
        let a = anchor_configs(&[pt("a", 0.4, 10.0)]).unwrap();
        assert_eq!(a.fast, a.slow);
        assert_eq!(a.fast.label, "a");
    }

    #[test]
    fn two_points_by_cost() {
        let a = anchor_configs(&[pt("big", 0.9, 100.0), pt("small", 0.3, 5.0)]).unwrap();
        assert_eq!(a.fast.label, "small");
        assert_eq!(a.slow.label, "big");
    }

    #[test]
    fn rejects_bad_points() {
        assert!(anchor_configs(&[]).is_err());
        assert!(anchor_configs(&[pt("a", 1.5, 1.0)]).is_err());
        assert!(anchor_configs(&[pt("a", 0.5, 0.0)]).is_err());
    }

    #[test]
    fn csv_round() {
        let pts = read_points_csv("label,capability,cost\nx,0.5,12\n".as_bytes()).unwrap();
        assert_eq!(pts, vec![pt("x", 0.5, 12.0)]);
    }
}
