use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::agentcore::VIEWPORT;
use crate::error::{Error, Result};
use crate::webenv::graph::bfs_distances;
use crate::webenv::{Element, ElementKind, Environment, Page, PageId, Token};

/// Parameters of a random site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub pages: usize,
    pub mean_out_degree: f64,
    pub vocab: u32,
    pub seed: u64,
}

const TERMINAL_BUTTON_P: f64 = 0.3;
const TEXTBOX_P: f64 = 0.2;
const NAV_BUTTON_P: f64 = 0.15;

/// Random directed site: Poisson out-degrees, uniform link targets, link
/// labels drawn partly from the target page's text. Pages unreachable from
/// page 0 are pruned and the survivors renumbered in order.
pub fn generate_environment(spec: &EnvSpec) -> Result<Environment> {
    if spec.pages == 0 {
        return Err(Error::InvalidSpec("page count must be at least 1".into()));
    }
    if spec.vocab == 0 {
        return Err(Error::InvalidSpec("vocabulary must be non-empty".into()));
    }
    if !spec.mean_out_degree.is_finite() || spec.mean_out_degree < 0.0 {
        return Err(Error::InvalidSpec(format!(
            "mean out-degree {} must be finite and non-negative",
            spec.mean_out_degree
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.pages;
    let vocab = spec.vocab;

    let content: Vec<Vec<Token>> = (0..n)
        .map(|_| {
            let len = rng.random_range(4..=7);
            (0..len).map(|_| rng.random_range(0..vocab)).collect()
        })
        .collect();

    let degree = (spec.mean_out_degree > 0.0)
        .then(|| Poisson::new(spec.mean_out_degree).expect("positive finite rate"));

    let mut pages = Vec::with_capacity(n);
    for (i, text) in content.iter().enumerate() {
        let k = degree.as_ref().map_or(0, |d| d.sample(&mut rng) as usize);
        let mut elements: Vec<Element> = Vec::new();
        for _ in 0..k {
            let target = if n == 1 {
                0
            } else {
                let t = rng.random_range(0..n - 1);
                if t >= i {
                    t + 1
                } else {
                    t
                }
            };
            let mut label: Vec<Token> = content[target]
                .choose_multiple(&mut rng, 2)
                .copied()
                .collect();
            label.push(rng.random_range(0..vocab));
            let kind = if rng.random_bool(NAV_BUTTON_P) {
                ElementKind::Button
            } else {
                ElementKind::Link
            };
            elements.push(Element {
                id: crate::webenv::ElementId(0),
                kind,
                tokens: label,
                target: Some(PageId(target as u32)),
                disabled: false,
            });
        }
        if rng.random_bool(TERMINAL_BUTTON_P) {
            let label = (0..2).map(|_| rng.random_range(0..vocab)).collect();
            elements.push(Element::button(0, None, label));
        }
        if rng.random_bool(TEXTBOX_P) {
            elements.push(Element::textbox(0, vec![rng.random_range(0..vocab)]));
        }
        elements.shuffle(&mut rng);
        if elements.len() > VIEWPORT {
            elements.insert(0, Element::scroll_region(0, vec![rng.random_range(0..vocab)]));
        }
        for (idx, el) in elements.iter_mut().enumerate() {
            el.id = crate::webenv::ElementId(idx as u32);
        }
        pages.push(Page::new(i as u32, elements, text.clone()));
    }

    let full = Environment::new(pages, PageId(0), 0.0, spec.seed)?;
    prune_unreachable(full)
}

fn prune_unreachable(env: Environment) -> Result<Environment> {
    let reach = bfs_distances(&env, env.start());
    if reach.len() == env.page_count() {
        return Ok(env);
    }
    let renumber: BTreeMap<PageId, PageId> = reach
        .keys()
        .enumerate()
        .map(|(i, &p)| (p, PageId(i as u32)))
        .collect();
    let pages = env
        .pages()
        .filter_map(|p| {
            let id = *renumber.get(&p.id)?;
            let mut page = p.clone();
            page.id = id;
            for el in &mut page.elements {
                el.target = el.target.map(|t| renumber[&t]);
            }
            Some(page)
        })
        .collect();
    Environment::new(pages, renumber[&env.start()], env.drift_rate(), env.seed())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_single_page() {
        let env = generate_environment(&EnvSpec {
            pages: 1,
            mean_out_degree: 0.0,
            vocab: 8,
            seed: 7,
        })
        .unwrap();
        assert_eq!(env.page_count(), 1);
        assert_eq!(env.edge_count(), 0);
    }

    #[test]
    fn invalid_specs() {
        let base = EnvSpec {
            pages: 3,
            mean_out_degree: 1.0,
            vocab: 4,
            seed: 0,
        };
        assert!(generate_environment(&EnvSpec { pages: 0, ..base }).is_err());
        assert!(generate_environment(&EnvSpec { vocab: 0, ..base }).is_err());
        assert!(generate_environment(&EnvSpec {
            mean_out_degree: -1.0,
            ..base
        })
        .is_err());
    }

    #[test]
    fn every_page_reachable() {
        let env = generate_environment(&EnvSpec {
            pages: 60,
            mean_out_degree: 1.5,
            vocab: 32,
            seed: 3,
        })
        .unwrap();
        assert_eq!(bfs_distances(&env, env.start()).len(), env.page_count());
    }
}
