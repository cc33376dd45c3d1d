use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agentcore::{ActionKey, StateDigest, Trajectory};
use crate::error::Result;
use crate::hash::StableHasher;
use crate::webenv::{Task, Token};

pub const DEFAULT_WORKING_MEMORY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub state_digest: StateDigest,
    pub action: ActionKey,
    pub invalid: bool,
}

/// The last `k` (state, action, outcome) entries of the current episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkingMemory {
    k: usize,
    window: VecDeque<MemoryEntry>,
}

impl Default for WorkingMemory {
    fn default() -> Self {
        Self::new(DEFAULT_WORKING_MEMORY)
    }
}

impl WorkingMemory {
    pub fn new(k: usize) -> Self {
        WorkingMemory {
            k,
            window: VecDeque::with_capacity(k + 1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.k
    }

    pub fn push(&mut self, entry: MemoryEntry) {
        if self.k == 0 {
            return;
        }
        if self.window.len() == self.k {
            self.window.pop_front();
        }
        self.window.push_back(entry);
    }

    pub fn entries(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.window.iter()
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Occurrences of the (state, action) pair in the window.
    pub fn count(&self, digest: StateDigest, action: ActionKey) -> usize {
        self.window
            .iter()
            .filter(|e| e.state_digest == digest && e.action == action)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Success,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyEntry {
    pub state_digest: StateDigest,
    pub action: ActionKey,
    pub weight: f64,
}

/// Reflection over one finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    /// Hash of the intent token multiset.
    pub task_signature: u64,
    pub intent: Vec<Token>,
    pub outcome: Outcome,
    pub penalty_entries: Vec<PenaltyEntry>,
    /// Readable trace: the action sequence on success, the penalized
    /// actions on failure.
    pub summary: Vec<String>,
}

impl Experience {
    /// Total penalty weight for taking `action` in the state with `digest`.
    pub fn penalty(&self, digest: StateDigest, action: ActionKey) -> f64 {
        self.penalty_entries
            .iter()
            .filter(|e| e.state_digest == digest && e.action == action)
            .map(|e| e.weight)
            .sum()
    }
}

pub fn task_signature(intent: &[Token]) -> u64 {
    let mut sorted = intent.to_vec();
    sorted.sort_unstable();
    let mut h = StableHasher::new();
    h.u64(sorted.len() as u64);
    for t in sorted {
        h.u32(t);
    }
    h.finish()
}

/// Threshold at which a repeated (state, action) pair counts as a loop.
pub const REPEAT_THRESHOLD: usize = 3;

/// Summarize an episode. Failures penalize every (state, action) pair that
/// was invalid or taken at least three times; successes keep only the
/// action sequence.
pub fn reflect(traj: &Trajectory, score: u8) -> Experience {
    let intent = traj.task.intent.clone();
    let task_signature = task_signature(&intent);
    if score > 0 {
        return Experience {
            task_signature,
            intent,
            outcome: Outcome::Success,
            penalty_entries: Vec::new(),
            summary: traj.records.iter().map(|r| r.action.kind.as_str().to_string()).collect(),
        };
    }
    let mut counts: BTreeMap<(StateDigest, ActionKey), usize> = BTreeMap::new();
    let mut invalid: BTreeSet<(StateDigest, ActionKey)> = BTreeSet::new();
    for r in &traj.records {
        let key = (r.state_digest, r.action.key());
        *counts.entry(key).or_default() += 1;
        if r.invalid {
            invalid.insert(key);
        }
    }
    let mut penalty_entries = Vec::new();
    let mut summary = Vec::new();
    // first-occurrence order keeps the entry list readable and stable
    let mut seen = BTreeSet::new();
    for r in &traj.records {
        let key = (r.state_digest, r.action.key());
        if !seen.insert(key) {
            continue;
        }
        let n = counts[&key];
        if invalid.contains(&key) || n >= REPEAT_THRESHOLD {
            penalty_entries.push(PenaltyEntry {
                state_digest: key.0,
                action: key.1,
                weight: 1.0,
            });
            let why = if invalid.contains(&key) { "invalid" } else { "repeated" };
            summary.push(format!("{why} {} x{n} at {}", r.action.describe(), r.page));
        }
    }
    Experience {
        task_signature,
        intent,
        outcome: Outcome::Failure,
        penalty_entries,
        summary,
    }
}

pub fn jaccard(a: &[Token], b: &[Token]) -> f64 {
    let a: BTreeSet<_> = a.iter().collect();
    let b: BTreeSet<_> = b.iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// The `m` experiences whose intent is most similar to the task's, newest
/// first among equals. Experiences sharing no intent token are never
/// recalled. The pool is in append order.
pub fn recall(pool: &[Experience], task: &Task, m: usize) -> Vec<Experience> {
    let mut ranked: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .map(|(i, e)| (jaccard(&e.intent, &task.intent), i))
        .filter(|&(j, _)| j > 0.0)
        .collect();
    ranked.sort_by(|x, y| y.0.total_cmp(&x.0).then(y.1.cmp(&x.1)));
    ranked.into_iter().take(m).map(|(_, i)| pool[i].clone()).collect()
}

pub fn write_experiences_jsonl<W: Write>(mut w: W, pool: &[Experience]) -> Result<()> {
    for e in pool {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_experiences_jsonl(path: impl AsRef<Path>) -> Result<Vec<Experience>> {
    let r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
