use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::agentcore::{Action, ActionKind};
use crate::error::{Error, Result};
use crate::webenv::graph::bfs_distances;
use crate::webenv::{ElementId, Environment, PageId, Token};

/// Success condition of a task.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Goal {
    /// Stop (without the unachievable hint) while on the page.
    ReachPage { page: PageId },
    /// Activate the element on that page.
    ActivateElement { page: PageId, element: ElementId },
    /// Stop with exactly this answer.
    SubmitAnswer { answer: Vec<Token> },
}

impl Goal {
    /// Whether taking `action` on `page` (with the given validity outcome)
    /// satisfies the goal.
    pub fn satisfied_by(&self, page: PageId, action: &Action, invalid: bool) -> bool {
        if invalid {
            return false;
        }
        match self {
            Goal::ReachPage { page: target } => {
                action.kind == ActionKind::Stop
                    && *target == page
                    && !action.unachievable
                    && action.note.is_none()
            }
            Goal::ActivateElement {
                page: target,
                element,
            } => {
                matches!(action.kind, ActionKind::Click | ActionKind::OpenTab)
                    && *target == page
                    && action.element == Some(*element)
            }
            Goal::SubmitAnswer { answer } => {
                action.kind == ActionKind::Stop
                    && !action.unachievable
                    && action.answer.as_ref() == Some(answer)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Task {
    pub id: u32,
    pub goal: Goal,
    /// The intent tokens the agent sees.
    pub intent: Vec<Token>,
    /// Length of the shortest known solution.
    pub nominal_steps: u32,
}

/// Distribution of requested task lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DifficultyLaw {
    /// Steps ~ 1 + Geometric(p) on {1, 2, ...}.
    Geometric { p: f64 },
    /// Explicit step-count → weight table.
    Histogram(BTreeMap<u32, f64>),
}

pub(crate) enum DifficultySampler {
    Geometric(Geometric),
    Histogram(Vec<u32>, WeightedIndex<f64>),
}

impl DifficultyLaw {
    pub(crate) fn sampler(&self) -> Result<DifficultySampler> {
        match self {
            DifficultyLaw::Geometric { p } => {
                if !(*p > 0.0 && *p <= 1.0) {
                    return Err(Error::InvalidSpec(format!("geometric p {p} outside (0,1]")));
                }
                Ok(DifficultySampler::Geometric(
                    Geometric::new(*p).map_err(|e| Error::InvalidSpec(e.to_string()))?,
                ))
            }
            DifficultyLaw::Histogram(h) => {
                if h.is_empty() || h.contains_key(&0) {
                    return Err(Error::InvalidSpec(
                        "histogram needs step counts >= 1".into(),
                    ));
                }
                let keys: Vec<u32> = h.keys().copied().collect();
                let w = WeightedIndex::new(h.values().copied())
                    .map_err(|e| Error::InvalidSpec(format!("histogram weights: {e}")))?;
                Ok(DifficultySampler::Histogram(keys, w))
            }
        }
    }

    /// Draw raw step counts, before any reachability clipping.
    pub fn draw(&self, n: usize, seed: u64) -> Result<Vec<u32>> {
        let sampler = self.sampler()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n).map(|_| sampler.sample(&mut rng)).collect())
    }
}

impl DifficultySampler {
    pub(crate) fn sample<R: Rng>(&self, rng: &mut R) -> u32 {
        match self {
            DifficultySampler::Geometric(g) => 1 + g.sample(rng).min(u32::MAX as u64 - 1) as u32,
            DifficultySampler::Histogram(keys, w) => keys[w.sample(rng)],
        }
    }
}

const NOISE_TOKENS: usize = 2;
const MAX_REDRAWS: usize = 1000;

/// Goals exactly `steps` actions away from the start, excluding the final stop
/// for page goals: pages at BFS distance `steps`, and terminal buttons on
/// pages at distance `steps - 1`.
pub fn goals_at_distance(env: &Environment, dist: &BTreeMap<PageId, u32>, steps: u32) -> Vec<Goal> {
    let mut goals = Vec::new();
    for (&page, &d) in dist {
        if d == steps && page != env.start() {
            goals.push(Goal::ReachPage { page });
        }
        if d + 1 == steps {
            if let Some(p) = env.page(page) {
                for el in p.elements.iter().filter(|e| e.is_terminal() && !e.disabled) {
                    goals.push(Goal::ActivateElement {
                        page,
                        element: el.id,
                    });
                }
            }
        }
    }
    goals
}

/// Intent tokens for a goal: its page text (plus element label) and noise.
pub fn intent_for<R: Rng>(env: &Environment, goal: &Goal, vocab: u32, noise: usize, rng: &mut R) -> Vec<Token> {
    let mut intent = match goal {
        Goal::ReachPage { page } => env.page(*page).map(|p| p.tokens.clone()).unwrap_or_default(),
        Goal::ActivateElement { page, element } => {
            let p = env.page(*page).expect("goal page exists");
            let mut t = p.tokens.clone();
            if let Some(el) = p.element(*element) {
                t.extend(&el.tokens);
            }
            t
        }
        Goal::SubmitAnswer { answer } => answer.clone(),
    };
    intent.extend((0..noise).map(|_| rng.random_range(0..vocab.max(1))));
    intent
}

/// Sample tasks whose nominal length follows `law`, re-drawing lengths that
/// have no goal at that distance.
pub fn sample_tasks(env: &Environment, n: usize, law: &DifficultyLaw, seed: u64) -> Result<Vec<Task>> {
    if n == 0 {
        return Err(Error::InvalidSpec("task count must be at least 1".into()));
    }
    let sampler = law.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = bfs_distances(env, env.start());
    let vocab = env
        .pages()
        .flat_map(|p| p.tokens.iter())
        .max()
        .map_or(1, |&t| t + 1);
    let mut by_steps: BTreeMap<u32, Vec<Goal>> = BTreeMap::new();
    let mut tasks = Vec::with_capacity(n);
    for id in 0..n {
        let mut chosen = None;
        for _ in 0..MAX_REDRAWS {
            let steps = sampler.sample(&mut rng);
            let goals = by_steps
                .entry(steps)
                .or_insert_with(|| goals_at_distance(env, &dist, steps));
            if let Some(g) = goals.choose(&mut rng) {
                chosen = Some((steps, g.clone()));
                break;
            }
        }
        let Some((steps, goal)) = chosen else {
            return Err(Error::UnsatisfiableDifficulty(format!(
                "no goal at any drawn distance after {MAX_REDRAWS} re-draws (max distance {})",
                dist.values().max().copied().unwrap_or(0)
            )));
        };
        let intent = intent_for(env, &goal, vocab, NOISE_TOKENS, &mut rng);
        tasks.push(Task {
            id: id as u32,
            goal,
            intent,
            nominal_steps: steps,
        });
    }
    Ok(tasks)
}

pub fn write_tasks_jsonl(path: impl AsRef<Path>, tasks: &[Task]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in tasks {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tasks_jsonl(path: impl AsRef<Path>) -> Result<Vec<Task>> {
    let r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut tasks = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        tasks.push(serde_json::from_str(&line)?);
    }
    Ok(tasks)
}
