use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agentcore::{Action, ActionKind, PageState};
use crate::error::{Error, Result};
use crate::webenv::graph::stationary_distribution;

pub type Token = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PageId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementId(pub u32);

impl fmt::Display for PageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementKind {
    Link,
    Button,
    Textbox,
    ScrollRegion,
}

impl ElementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Link => "link",
            ElementKind::Button => "button",
            ElementKind::Textbox => "textbox",
            ElementKind::ScrollRegion => "scroll-region",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: ElementId,
    pub kind: ElementKind,
    pub tokens: Vec<Token>,
    #[serde(default)]
    pub target: Option<PageId>,
    /// Rendered but inert: activating it is an invalid action.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub disabled: bool,
}

impl Element {
    pub fn link(id: u32, target: PageId, tokens: Vec<Token>) -> Self {
        Element {
            id: ElementId(id),
            kind: ElementKind::Link,
            tokens,
            target: Some(target),
            disabled: false,
        }
    }

    pub fn button(id: u32, target: Option<PageId>, tokens: Vec<Token>) -> Self {
        Element {
            id: ElementId(id),
            kind: ElementKind::Button,
            tokens,
            target,
            disabled: false,
        }
    }

    pub fn textbox(id: u32, tokens: Vec<Token>) -> Self {
        Element {
            id: ElementId(id),
            kind: ElementKind::Textbox,
            tokens,
            target: None,
            disabled: false,
        }
    }

    pub fn scroll_region(id: u32, tokens: Vec<Token>) -> Self {
        Element {
            id: ElementId(id),
            kind: ElementKind::ScrollRegion,
            tokens,
            target: None,
            disabled: false,
        }
    }

    pub fn disabled(mut self) -> Self {
        self.disabled = true;
        self
    }

    pub fn accepts_text(&self) -> bool {
        self.kind == ElementKind::Textbox
    }

    /// A button without a navigation target submits and ends the episode.
    pub fn is_terminal(&self) -> bool {
        self.kind == ElementKind::Button && self.target.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub id: PageId,
    pub elements: Vec<Element>,
    pub tokens: Vec<Token>,
}

impl Page {
    pub fn new(id: u32, elements: Vec<Element>, tokens: Vec<Token>) -> Self {
        Page {
            id: PageId(id),
            elements,
            tokens,
        }
    }

    pub fn element(&self, id: ElementId) -> Option<&Element> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn element_index(&self, id: ElementId) -> Option<usize> {
        self.elements.iter().position(|e| e.id == id)
    }

    /// Targets of every element that navigates (links and targeted buttons).
    pub fn out_links(&self) -> impl Iterator<Item = PageId> + '_ {
        self.elements.iter().filter_map(|e| e.target)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next: PageState,
    pub terminated: bool,
    pub invalid: bool,
}

/// A synthetic website: a directed page graph whose edges are the targets
/// of link/button elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pages: BTreeMap<PageId, Page>,
    start: PageId,
    drift_rate: f64,
    seed: u64,
    visit: BTreeMap<PageId, f64>,
}

impl Environment {
    pub fn new(pages: Vec<Page>, start: PageId, drift_rate: f64, seed: u64) -> Result<Self> {
        if pages.is_empty() {
            return Err(Error::InvalidSpec("environment needs at least one page".into()));
        }
        if !(0.0..=1.0).contains(&drift_rate) {
            return Err(Error::InvalidSpec(format!("drift rate {drift_rate} outside [0,1]")));
        }
        let mut map = BTreeMap::new();
        for page in pages {
            let mut ids = BTreeSet::new();
            for el in &page.elements {
                if !ids.insert(el.id) {
                    return Err(Error::InvalidSpec(format!(
                        "duplicate element {} on page {}",
                        el.id, page.id
                    )));
                }
                if el.kind == ElementKind::Link && el.target.is_none() {
                    return Err(Error::InvalidSpec(format!(
                        "link {} on page {} has no target",
                        el.id, page.id
                    )));
                }
            }
            let id = page.id;
            if map.insert(id, page).is_some() {
                return Err(Error::InvalidSpec(format!("duplicate page {id}")));
            }
        }
        for page in map.values() {
            for t in page.out_links() {
                if !map.contains_key(&t) {
                    return Err(Error::InvalidSpec(format!(
                        "page {} links to missing page {t}",
                        page.id
                    )));
                }
            }
        }
        if !map.contains_key(&start) {
            return Err(Error::InvalidSpec(format!("start page {start} missing")));
        }
        let visit = stationary_distribution(&map);
        Ok(Environment {
            pages: map,
            start,
            drift_rate,
            seed,
            visit,
        })
    }

    pub fn pages(&self) -> impl Iterator<Item = &Page> {
        self.pages.values()
    }

    pub fn page(&self, id: PageId) -> Option<&Page> {
        self.pages.get(&id)
    }

    pub fn page_ids(&self) -> impl Iterator<Item = PageId> + '_ {
        self.pages.keys().copied()
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn edge_count(&self) -> usize {
        self.pages.values().map(|p| p.out_links().count()).sum()
    }

    pub fn start(&self) -> PageId {
        self.start
    }

    pub fn drift_rate(&self) -> f64 {
        self.drift_rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn visit_distribution(&self) -> &BTreeMap<PageId, f64> {
        &self.visit
    }

    pub fn with_drift_rate(mut self, drift_rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&drift_rate) {
            return Err(Error::InvalidSpec(format!("drift rate {drift_rate} outside [0,1]")));
        }
        self.drift_rate = drift_rate;
        Ok(self)
    }

    pub fn initial_state(&self) -> PageState {
        PageState::enter(&self.pages[&self.start])
    }

    /// Page of a state; panics only if the state was not produced by this environment.
    pub fn page_of(&self, state: &PageState) -> &Page {
        self.pages
            .get(&state.page)
            .unwrap_or_else(|| panic!("state references unknown page {}", state.page))
    }

    /// Apply one action. Invalid actions are reported in the result and leave
    /// the state unchanged apart from its invalid flag.
    pub fn step(&self, state: &PageState, action: &Action) -> StepResult {
        let page = self.page_of(state);
        let invalid = || StepResult {
            next: state.with_invalid(true),
            terminated: false,
            invalid: true,
        };
        let ok = |next: PageState, terminated: bool| StepResult {
            next,
            terminated,
            invalid: false,
        };

        if action.kind == ActionKind::Stop {
            return ok(state.with_invalid(false), true);
        }

        let visible = |id: ElementId| -> Option<&Element> {
            let idx = page.element_index(id)?;
            state.window_contains(idx).then(|| &page.elements[idx])
        };

        match action.kind {
            ActionKind::Click | ActionKind::OpenTab => {
                let Some(el) = action.element.and_then(visible) else {
                    return invalid();
                };
                if el.disabled {
                    return invalid();
                }
                match (el.kind, el.target) {
                    (ElementKind::Link | ElementKind::Button, Some(t)) => match self.pages.get(&t) {
                        Some(p) => ok(PageState::enter(p), false),
                        None => invalid(),
                    },
                    (ElementKind::Button, None) if action.kind == ActionKind::Click => {
                        ok(state.with_invalid(false), true)
                    }
                    // open-tab is a flat alias of navigating a link
                    _ if action.kind == ActionKind::OpenTab => invalid(),
                    _ => ok(state.with_invalid(false), false),
                }
            }
            ActionKind::TypeText => {
                let Some(el) = action.element.and_then(visible) else {
                    return invalid();
                };
                if !el.accepts_text() || el.disabled {
                    return invalid();
                }
                let mut next = state.with_invalid(false);
                next.buffers
                    .insert(el.id, action.text.clone().unwrap_or_default());
                ok(next, false)
            }
            ActionKind::Scroll => {
                if let Some(id) = action.element {
                    match visible(id) {
                        Some(el) if el.kind == ElementKind::ScrollRegion => {}
                        _ => return invalid(),
                    }
                }
                ok(state.scrolled(page), false)
            }
            ActionKind::Stop => unreachable!(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&EnvironmentJson::from(self))?)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&EnvironmentJson::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: EnvironmentJson = serde_json::from_str(s)?;
        Environment::new(raw.pages, raw.start, raw.drift_rate, raw.seed)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// On-disk form. The visit distribution is derived data and recomputed on load.
#[derive(Serialize, Deserialize)]
struct EnvironmentJson {
    pages: Vec<Page>,
    start: PageId,
    drift_rate: f64,
    seed: u64,
}

impl From<&Environment> for EnvironmentJson {
    fn from(env: &Environment) -> Self {
        EnvironmentJson {
            pages: env.pages.values().cloned().collect(),
            start: env.start,
            drift_rate: env.drift_rate,
            seed: env.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_pages() -> Environment {
        let a = Page::new(
            0,
            vec![Element::link(1, PageId(1), vec![10]), Element::textbox(2, vec![11])],
            vec![1, 2],
        );
        let b = Page::new(1, vec![Element::button(1, None, vec![12])], vec![3]);
        Environment::new(vec![a, b], PageId(0), 0.0, 0).unwrap()
    }

    #[test]
    fn click_link_moves() {
        let env = two_pages();
        let s = env.initial_state();
        let r = env.step(&s, &Action::click(ElementId(1)));
        assert_eq!(r.next.page, PageId(1));
        assert!(!r.invalid && !r.terminated);
    }

    #[test]
    fn click_absent_element_is_invalid() {
        let env = two_pages();
        let s = env.initial_state();
        let r = env.step(&s, &Action::click(ElementId(99)));
        assert!(r.invalid);
        assert_eq!(r.next.page, s.page);
        assert_eq!(r.next.buffers, s.buffers);
        assert_eq!(r.next.window_start, s.window_start);
    }

    #[test]
    fn stop_terminates() {
        let env = two_pages();
        let r = env.step(&env.initial_state(), &Action::stop_with_answer(vec![1]));
        assert!(r.terminated);
    }

    #[test]
    fn type_text_fills_buffer() {
        let env = two_pages();
        let r = env.step(&env.initial_state(), &Action::type_text(ElementId(2), vec![5, 6]));
        assert!(!r.invalid);
        assert_eq!(r.next.buffers.get(&ElementId(2)), Some(&vec![5, 6]));
        let bad = env.step(&env.initial_state(), &Action::type_text(ElementId(1), vec![5]));
        assert!(bad.invalid);
    }

    #[test]
    fn terminal_button_ends_episode() {
        let env = two_pages();
        let s = env.step(&env.initial_state(), &Action::click(ElementId(1))).next;
        let r = env.step(&s, &Action::click(ElementId(1)));
        assert!(r.terminated && !r.invalid);
    }

    #[test]
    fn rejects_dangling_link() {
        let a = Page::new(0, vec![Element::link(1, PageId(5), vec![])], vec![]);
        assert!(Environment::new(vec![a], PageId(0), 0.0, 0).is_err());
    }

    #[test]
    fn json_shape() {
        let env = two_pages();
        let v: serde_json::Value = serde_json::from_str(&env.to_json().unwrap()).unwrap();
        assert_eq!(v["start"], 0);
        assert_eq!(v["pages"][0]["elements"][0]["kind"], "link");
        assert_eq!(v["pages"][0]["elements"][0]["target"], 1);
        assert!(v["pages"][0]["tokens"].is_array());
        assert!(v.get("drift_rate").is_some() && v.get("seed").is_some());
    }
}
