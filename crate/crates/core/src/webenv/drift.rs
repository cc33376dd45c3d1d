use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::webenv::{Environment, PageId};

/// What a drift pass touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DriftReport {
    pub edge_count: usize,
    pub edges_resampled: usize,
    pub pages_redrawn: usize,
}

/// Mutate the site between episodes: every edge is independently re-pointed
/// at a uniformly drawn page with probability `drift_rate`, and every page's
/// text is re-drawn with the same probability.
pub fn drift(env: &Environment, seed: u64) -> Environment {
    drift_with_report(env, seed).0
}

pub fn drift_with_report(env: &Environment, seed: u64) -> (Environment, DriftReport) {
    let rate = env.drift_rate();
    let mut report = DriftReport {
        edge_count: env.edge_count(),
        ..Default::default()
    };
    if rate == 0.0 {
        return (env.clone(), report);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<PageId> = env.page_ids().collect();
    let vocab = env
        .pages()
        .flat_map(|p| p.tokens.iter().chain(p.elements.iter().flat_map(|e| &e.tokens)))
        .max()
        .map_or(1, |&t| t + 1);

    let mut pages: Vec<_> = env.pages().cloned().collect();
    for page in &mut pages {
        for el in &mut page.elements {
            if el.target.is_some() && rng.random_bool(rate) {
                el.target = Some(ids[rng.random_range(0..ids.len())]);
                report.edges_resampled += 1;
            }
        }
        if rng.random_bool(rate) {
            for t in &mut page.tokens {
                *t = rng.random_range(0..vocab);
            }
            report.pages_redrawn += 1;
        }
    }
    let next = Environment::new(pages, env.start(), rate, env.seed())
        .expect("drift keeps targets inside the page set");
    (next, report)
}
