use std::collections::{BTreeMap, VecDeque};

use crate::webenv::{Environment, Page, PageId};

/// Probability of jumping to a uniformly random page at each step of the walk.
pub const TELEPORT: f64 = 0.15;

/// Stationary visit distribution of a random surfer that follows a uniformly
/// chosen out-link with probability `1 - TELEPORT` and otherwise teleports.
/// Dead ends always teleport.
pub(crate) fn stationary_distribution(pages: &BTreeMap<PageId, Page>) -> BTreeMap<PageId, f64> {
    let ids: Vec<PageId> = pages.keys().copied().collect();
    let n = ids.len();
    let index: BTreeMap<PageId, usize> = ids.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let links: Vec<Vec<usize>> = ids
        .iter()
        .map(|p| pages[p].out_links().map(|t| index[&t]).collect())
        .collect();

    let uniform = 1.0 / n as f64;
    let mut rank = vec![uniform; n];
    let mut next = vec![0.0; n];
    for _ in 0..10_000 {
        let dead: f64 = links
            .iter()
            .zip(&rank)
            .filter(|(l, _)| l.is_empty())
            .map(|(_, r)| r)
            .sum();
        let base = TELEPORT * uniform + (1.0 - TELEPORT) * dead * uniform;
        next.iter_mut().for_each(|x| *x = base);
        for (i, out) in links.iter().enumerate() {
            if out.is_empty() {
                continue;
            }
            let share = (1.0 - TELEPORT) * rank[i] / out.len() as f64;
            for &j in out {
                next[j] += share;
            }
        }
        let delta: f64 = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if delta < 1e-15 {
            break;
        }
    }
    let total: f64 = rank.iter().sum();
    ids.into_iter()
        .zip(rank)
        .map(|(p, r)| (p, r / total))
        .collect()
}

/// Page-level BFS distances (number of link traversals) from `from`.
pub fn bfs_distances(env: &Environment, from: PageId) -> BTreeMap<PageId, u32> {
    let mut dist = BTreeMap::new();
    let mut queue = VecDeque::new();
    dist.insert(from, 0);
    queue.push_back(from);
    while let Some(p) = queue.pop_front() {
        let d = dist[&p];
        if let Some(page) = env.page(p) {
            for t in page.out_links() {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(t) {
                    e.insert(d + 1);
                    queue.push_back(t);
                }
            }
        }
    }
    dist
}
