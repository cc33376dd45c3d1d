//! Structured desk-scale sites: a catalogue tree whose listings hide the one
//! purchasable product among look-alikes, and a hub of trap corridors.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agentcore::VIEWPORT;
use crate::error::{Error, Result};
use crate::webenv::{intent_for, Element, ElementId, Environment, Goal, Page, PageId, Task, Token};

const HOME: Token = 0;
const BACK: Token = 1;
const BUY: Token = 2;
const FIRST_FREE: Token = 3;
const INTENT_NOISE: usize = 2;
/// Size of the vocabulary of intent noise words, disjoint from page text.
const FILLER_WORDS: u32 = 64;

/// Catalogue tree: `levels` levels of category pages with `fanout` children
/// each; every leaf category is a listing of `products` identically labelled
/// products, of which only one can be bought.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShopSpec {
    pub levels: u32,
    pub fanout: u32,
    pub products: u32,
    pub seed: u64,
}

impl Default for ShopSpec {
    fn default() -> Self {
        ShopSpec {
            levels: 4,
            fanout: 3,
            products: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShopSite {
    pub env: Environment,
    /// Category pages with their depth below home.
    pub categories: Vec<(PageId, u32)>,
    /// Goals of buying the real product of each listing.
    pub purchases: Vec<Goal>,
}

struct Builder {
    pages: Vec<Page>,
    next_token: Token,
}

impl Builder {
    fn token(&mut self) -> Token {
        let t = self.next_token;
        self.next_token += 1;
        t
    }

    fn reserve(&mut self) -> PageId {
        let id = PageId(self.pages.len() as u32);
        self.pages.push(Page::new(id.0, Vec::new(), Vec::new()));
        id
    }
}

/// Element ids are assigned in element order.
fn with_ids(mut elements: Vec<Element>) -> Vec<Element> {
    for (i, e) in elements.iter_mut().enumerate() {
        e.id = ElementId(i as u32);
    }
    elements
}

pub fn shop_site(spec: &ShopSpec) -> Result<ShopSite> {
    if spec.levels == 0 || spec.fanout == 0 || spec.products == 0 {
        return Err(Error::InvalidSpec("shop needs at least one level, child and product".into()));
    }
    let leaves = u64::from(spec.fanout).pow(spec.levels) * u64::from(spec.products);
    if leaves > 50_000 {
        return Err(Error::InvalidSpec(format!("shop of {leaves} products is too large")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = Builder {
        pages: Vec::new(),
        next_token: FIRST_FREE,
    };
    let home = b.reserve();
    let mut categories = Vec::new();
    let mut purchases = Vec::new();
    // (page, depth, path tokens)
    let mut stack = vec![(home, 0u32, Vec::<Token>::new())];
    while let Some((page, depth, path)) = stack.pop() {
        let mut elements = Vec::new();
        if depth < spec.levels {
            for _ in 0..spec.fanout {
                let child = b.reserve();
                let label = b.token();
                let mut child_path = path.clone();
                child_path.push(label);
                elements.push(Element::link(0, child, vec![label]));
                categories.push((child, depth + 1));
                stack.push((child, depth + 1, child_path));
            }
        } else {
            let product = b.token();
            let real = rng.random_range(0..spec.products);
            let mut tokens = path.clone();
            tokens.push(product);
            for k in 0..spec.products {
                let pp = b.reserve();
                let buy = Element::button(0, None, vec![BUY, product]);
                let buy = if k == real { buy } else { buy.disabled() };
                let back = Element::link(1, page, vec![BACK]);
                b.pages[pp.0 as usize] = Page::new(pp.0, with_ids(vec![buy, back]), tokens.clone());
                if k == real {
                    purchases.push(Goal::ActivateElement {
                        page: pp,
                        element: ElementId(0),
                    });
                }
                elements.push(Element::link(0, pp, vec![product]));
            }
        }
        if page != home {
            elements.push(Element::link(0, home, vec![HOME]));
        }
        b.pages[page.0 as usize] = Page::new(page.0, with_ids(elements), path);
    }
    categories.sort();
    purchases.sort_by_key(|g| match g {
        Goal::ActivateElement { page, .. } => *page,
        _ => PageId(0),
    });
    let env = Environment::new(b.pages, home, 0.0, spec.seed)?;
    Ok(ShopSite {
        env,
        categories,
        purchases,
    })
}

/// Bimodal task mix: short tasks reach a category one or two levels down,
/// long tasks buy the real product of a random listing. Intents are the
/// goal page's text plus two filler words.
pub fn shop_tasks(site: &ShopSite, n: usize, long_fraction: f64, seed: u64) -> Result<Vec<Task>> {
    if !(0.0..=1.0).contains(&long_fraction) {
        return Err(Error::InvalidSpec(format!("long fraction {long_fraction} outside [0,1]")));
    }
    let short: Vec<(PageId, u32)> = site.categories.iter().copied().filter(|&(_, d)| d <= 2).collect();
    let levels = site.categories.iter().map(|c| c.1).max().unwrap_or(0);
    let vocab = vocab_of(&site.env);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::with_capacity(n);
    for id in 0..n as u32 {
        let (goal, steps) = if rng.random_bool(long_fraction) {
            (site.purchases.choose(&mut rng).expect("a listing").clone(), levels + 2)
        } else {
            let &(page, d) = short.choose(&mut rng).expect("a category");
            (Goal::ReachPage { page }, d)
        };
        let mut intent = intent_for(&site.env, &goal, vocab, 0, &mut rng);
        intent.extend((0..INTENT_NOISE).map(|_| vocab + rng.random_range(0..FILLER_WORDS)));
        tasks.push(Task {
            id,
            goal,
            intent,
            nominal_steps: steps,
        });
    }
    Ok(tasks)
}

fn vocab_of(env: &Environment) -> u32 {
    env.pages().flat_map(|p| p.tokens.iter()).max().map_or(1, |&t| t + 1)
}

/// Hub of `entries` sections, grouped so every page fits one screen. Each
/// section offers a strongly labelled link into a cycle of `loop_len` pages
/// and a weakly labelled one down a path of `path_len` pages to the goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapSpec {
    pub entries: u32,
    pub loop_len: u32,
    pub path_len: u32,
    pub seed: u64,
}

impl Default for TrapSpec {
    fn default() -> Self {
        TrapSpec {
            entries: 24,
            loop_len: 10,
            path_len: 3,
            seed: 0,
        }
    }
}

const GROUP_SIZE: u32 = (VIEWPORT - 1) as u32;

fn close_group(b: &mut Builder, group: Option<(PageId, Token, Vec<Element>)>, hub: PageId) {
    if let Some((page, label, mut links)) = group {
        links.push(Element::link(0, hub, vec![HOME]));
        b.pages[page.0 as usize] = Page::new(page.0, with_ids(links), vec![label]);
    }
}

/// The trap site and one reach-the-goal task per section.
pub fn trap_site(spec: &TrapSpec) -> Result<(Environment, Vec<Task>)> {
    if spec.entries == 0 || spec.loop_len == 0 {
        return Err(Error::InvalidSpec("trap site needs sections and a cycle".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = Builder {
        pages: Vec::new(),
        next_token: FIRST_FREE,
    };
    let hub = b.reserve();
    let mut hub_links = Vec::new();
    let mut goals = Vec::new();
    let mut group: Option<(PageId, Token, Vec<Element>)> = None;
    for i in 0..spec.entries {
        if i % GROUP_SIZE == 0 {
            close_group(&mut b, group.take(), hub);
            let page = b.reserve();
            let label = b.token();
            hub_links.push(Element::link(0, page, vec![label]));
            group = Some((page, label, Vec::new()));
        }
        let (group_page, group_label, links) = group.as_mut().expect("opened above");
        let (group_page, group_label) = (*group_page, *group_label);
        let entry = b.reserve();
        let (name, t1, t2) = (b.token(), b.token(), b.token());
        links.push(Element::link(0, entry, vec![name]));

        let cycle: Vec<PageId> = (0..spec.loop_len).map(|_| b.reserve()).collect();
        for (i, &p) in cycle.iter().enumerate() {
            let next = cycle[(i + 1) % cycle.len()];
            let filler = b.token();
            b.pages[p.0 as usize] = Page::new(p.0, with_ids(vec![Element::link(0, next, vec![t1, t2])]), vec![filler]);
        }

        let goal = b.reserve();
        b.pages[goal.0 as usize] = Page::new(goal.0, with_ids(vec![Element::link(0, hub, vec![HOME])]), vec![group_label, name, t1, t2]);
        let mut next = goal;
        for _ in 0..spec.path_len {
            let p = b.reserve();
            let filler = b.token();
            b.pages[p.0 as usize] = Page::new(p.0, with_ids(vec![Element::link(0, next, vec![t1])]), vec![filler]);
            next = p;
        }

        let mut links = vec![Element::link(0, cycle[0], vec![t1, t2]), Element::link(0, next, vec![t1])];
        // which of the two comes first on the page is random
        if rng.random_bool(0.5) {
            links.swap(0, 1);
        }
        links.push(Element::link(0, group_page, vec![BACK]));
        b.pages[entry.0 as usize] = Page::new(entry.0, with_ids(links), vec![group_label, name]);
        goals.push((goal, vec![group_label, name, t1, t2]));
    }
    close_group(&mut b, group, hub);
    if hub_links.len() > VIEWPORT {
        return Err(Error::InvalidSpec(format!("{} sections overflow the hub", spec.entries)));
    }
    b.pages[0] = Page::new(0, with_ids(hub_links), vec![HOME]);
    let env = Environment::new(b.pages, hub, 0.0, spec.seed)?;
    let tasks = goals
        .into_iter()
        .enumerate()
        .map(|(i, (page, intent))| Task {
            id: i as u32,
            goal: Goal::ReachPage { page },
            intent,
            nominal_steps: spec.path_len + 3,
        })
        .collect();
    Ok((env, tasks))
}
