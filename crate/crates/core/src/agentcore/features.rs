use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::agentcore::{Action, PageState};
use crate::hash::StableHasher;
use crate::webenv::{Page, Task, Token};

pub const DEFAULT_DIM: usize = 1 << 16;

/// Sparse vector with sorted, unique indices below `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub dim: usize,
    pub entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn from_entries(dim: usize, mut raw: Vec<(u32, f64)>) -> Self {
        raw.sort_by_key(|&(i, _)| i);
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(raw.len());
        for (i, v) in raw {
            match entries.last_mut() {
                Some((j, acc)) if *j == i => *acc += v,
                _ => entries.push((i, v)),
            }
        }
        entries.retain(|&(_, v)| v != 0.0);
        FeatureVector { dim, entries }
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0.0, |k| self.entries[k].1)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn dot_dense(&self, w: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * w[i as usize]).sum()
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        let mut s = 0.0;
        while let (Some(&&(i, x)), Some(&&(j, y))) = (a.peek(), b.peek()) {
            match i.cmp(&j) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    s += x * y;
                    a.next();
                    b.next();
                }
            }
        }
        s
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity; 0 when either vector is empty.
    pub fn cosine(&self, other: &FeatureVector) -> f64 {
        let n = self.norm() * other.norm();
        if n == 0.0 {
            0.0
        } else {
            self.dot(other) / n
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            d[i as usize] = v;
        }
        d
    }
}

/// Hashed slot and sign of a named feature.
pub fn feature_slot(tag: &str, a: u64, b: u64, dim: usize) -> (u32, f64) {
    let h = StableHasher::new().str(tag).u64(a).u64(b).finish();
    let index = (h % dim as u64) as u32;
    let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
    (index, sign)
}

struct Builder {
    dim: usize,
    raw: Vec<(u32, f64)>,
}

impl Builder {
    fn new(dim: usize) -> Self {
        Builder {
            dim,
            raw: Vec::with_capacity(32),
        }
    }

    fn add(&mut self, tag: &str, a: u64, b: u64, value: f64) {
        let (i, s) = feature_slot(tag, a, b, self.dim);
        self.raw.push((i, s * value));
    }

    fn finish(self) -> FeatureVector {
        FeatureVector::from_entries(self.dim, self.raw)
    }
}

const NO_POSITION: u64 = u64::MAX;

fn label_tokens<'p>(page: &'p Page, action: &Action) -> &'p [Token] {
    action
        .element
        .and_then(|e| page.element(e))
        .map_or(&[], |el| el.tokens.as_slice())
}

fn position(page: &Page, state: &PageState, action: &Action) -> u64 {
    action
        .element
        .and_then(|e| page.element_index(e))
        .map_or(NO_POSITION, |i| i.saturating_sub(state.window_start) as u64)
}

fn kind_code(action: &Action) -> u64 {
    action.kind as u64
}

fn add_candidate(b: &mut Builder, page: &Page, state: &PageState, action: &Action) {
    let kind = kind_code(action);
    b.add("kind", kind, 0, 1.0);
    if let Some(el) = action.element.and_then(|e| page.element(e)) {
        b.add("ekind", kind, el.kind as u64, 1.0);
    }
    b.add("pos", kind, position(page, state, action), 1.0);
    let toks = label_tokens(page, action);
    for &t in toks.iter().collect::<BTreeSet<_>>() {
        b.add("tok", u64::from(t), 0, 1.0);
    }
    for w in toks.windows(2) {
        b.add("bi", u64::from(w[0]), u64::from(w[1]), 1.0);
    }
}

fn overlap(a: &[Token], b: &[Token]) -> usize {
    let a: BTreeSet<_> = a.iter().collect();
    let b: BTreeSet<_> = b.iter().collect();
    a.intersection(&b).count()
}

fn page_goal_fraction(page: &Page, task: &Task) -> f64 {
    let goal: BTreeSet<_> = task.intent.iter().collect();
    if goal.is_empty() {
        0.0
    } else {
        overlap(&page.tokens, &task.intent) as f64 / goal.len() as f64
    }
}

fn bucket(frac: f64) -> u64 {
    (frac * 4.0).floor().clamp(0.0, 4.0) as u64
}

/// Features of a candidate on its own (the candidate tower of the bi-encoder).
pub fn candidate_features(page: &Page, state: &PageState, action: &Action, dim: usize) -> FeatureVector {
    let mut b = Builder::new(dim);
    add_candidate(&mut b, page, state, action);
    b.finish()
}

/// Features of the (state, goal) context (the context tower of the
/// bi-encoder). Intent tokens share slots with candidate label tokens.
pub fn context_features(page: &Page, state: &PageState, task: &Task, dim: usize) -> FeatureVector {
    let mut b = Builder::new(dim);
    b.add("bias", 0, 0, 1.0);
    for &t in task.intent.iter().collect::<BTreeSet<_>>() {
        b.add("tok", u64::from(t), 0, 1.0);
    }
    let frac = page_goal_fraction(page, task);
    b.add("pgov", bucket(frac), 0, 1.0);
    b.add("pgfrac", 0, 0, frac);
    if state.invalid {
        b.add("invalid", 0, 0, 1.0);
    }
    if !state.buffers.is_empty() {
        b.add("buffer", 0, 0, 1.0);
    }
    b.finish()
}

/// Joint features of (candidate, state, goal): the candidate's own features
/// plus candidate/goal and page/goal overlaps conjoined with the action kind.
pub fn featurize(page: &Page, state: &PageState, action: &Action, task: &Task, dim: usize) -> FeatureVector {
    let mut b = Builder::new(dim);
    add_candidate(&mut b, page, state, action);
    let kind = kind_code(action);
    let toks = label_tokens(page, action);
    let ov = overlap(toks, &task.intent);
    b.add("overlap", 0, 0, ov as f64);
    b.add("ovk", kind, ov.min(3) as u64, 1.0);
    if !toks.is_empty() {
        let distinct = toks.iter().collect::<BTreeSet<_>>().len();
        b.add("ovfrac", kind, 0, ov as f64 / distinct as f64);
    }
    let frac = page_goal_fraction(page, task);
    b.add("pgk", kind, bucket(frac), 1.0);
    b.add("pgfrack", kind, 0, frac);
    if state.invalid {
        b.add("invk", kind, 0, 1.0);
    }
    if let Some(e) = action.element {
        if state.buffers.contains_key(&e) {
            b.add("typed", kind, 0, 1.0);
        }
    }
    if !state.buffers.is_empty() {
        b.add("bufk", kind, 0, 1.0);
    }
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::webenv::{Element, ElementId, Goal, PageId};

    fn task(intent: Vec<Token>) -> Task {
        Task {
            id: 0,
            goal: Goal::ReachPage { page: PageId(1) },
            intent,
            nominal_steps: 1,
        }
    }

    fn page() -> Page {
        Page::new(
            0,
            vec![
                Element::link(0, PageId(1), vec![1, 2, 3, 4]),
                Element::link(1, PageId(1), vec![]),
            ],
            vec![2, 9],
        )
    }

    #[test]
    fn overlap_is_intersection_size() {
        let p = page();
        let s = PageState::enter(&p);
        let t = task(vec![2, 3, 4, 7, 2]);
        let v = featurize(&p, &s, &Action::click(ElementId(0)), &t, DEFAULT_DIM);
        let (i, sign) = feature_slot("overlap", 0, 0, DEFAULT_DIM);
        assert_eq!(v.get(i) * sign, 3.0);
    }

    #[test]
    fn empty_label_still_has_support() {
        let p = page();
        let s = PageState::enter(&p);
        let v = featurize(&p, &s, &Action::click(ElementId(1)), &task(vec![]), DEFAULT_DIM);
        let (k, _) = feature_slot("kind", 0, 0, DEFAULT_DIM);
        assert!(v.get(k) != 0.0);
        assert!(v.nnz() >= 2);
    }

    #[test]
    fn deterministic() {
        let p = page();
        let s = PageState::enter(&p);
        let t = task(vec![1, 5]);
        let a = Action::click(ElementId(0));
        assert_eq!(featurize(&p, &s, &a, &t, 1024), featurize(&p, &s, &a, &t, 1024));
    }

    #[test]
    fn merge_and_dot() {
        let v = FeatureVector::from_entries(8, vec![(3, 1.0), (1, 2.0), (3, 0.5)]);
        assert_eq!(v.entries, vec![(1, 2.0), (3, 1.5)]);
        let w = FeatureVector::from_entries(8, vec![(3, 2.0), (5, 1.0)]);
        assert_eq!(v.dot(&w), 3.0);
        assert_eq!(v.dot_dense(&w.to_dense()), 3.0);
    }
}
