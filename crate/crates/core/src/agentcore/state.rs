use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::hash::StableHasher;
use crate::webenv::{ElementId, Page, PageId, Token};

/// Number of elements visible at once; scrolling moves the window by this much.
pub const VIEWPORT: usize = 8;

/// What the agent observes of its current page: which page, which slice of
/// its elements is on screen, typed text, and whether the last action failed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PageState {
    pub page: PageId,
    pub window_start: usize,
    pub window_len: usize,
    #[serde(default)]
    pub buffers: BTreeMap<ElementId, Vec<Token>>,
    #[serde(default)]
    pub invalid: bool,
}

impl PageState {
    /// Fresh arrival on a page: top of the page, empty buffers.
    pub fn enter(page: &Page) -> Self {
        PageState {
            page: page.id,
            window_start: 0,
            window_len: page.elements.len().min(VIEWPORT),
            buffers: BTreeMap::new(),
            invalid: false,
        }
    }

    pub fn with_invalid(&self, invalid: bool) -> Self {
        PageState {
            invalid,
            ..self.clone()
        }
    }

    /// Advance the window by one viewport, wrapping to the top after the end.
    pub fn scrolled(&self, page: &Page) -> Self {
        let n = page.elements.len();
        let start = if self.window_start + VIEWPORT < n {
            self.window_start + VIEWPORT
        } else {
            0
        };
        PageState {
            window_start: start,
            window_len: (n - start).min(VIEWPORT),
            invalid: false,
            ..self.clone()
        }
    }

    pub fn window_contains(&self, index: usize) -> bool {
        index >= self.window_start && index < self.window_start + self.window_len
    }

    pub fn visible<'p>(&self, page: &'p Page) -> &'p [crate::webenv::Element] {
        let end = (self.window_start + self.window_len).min(page.elements.len());
        &page.elements[self.window_start.min(end)..end]
    }

    /// 64-bit stable digest of (page, window, buffers, invalid flag).
    pub fn digest(&self) -> StateDigest {
        let mut h = StableHasher::new();
        h.u32(self.page.0)
            .u64(self.window_start as u64)
            .u64(self.window_len as u64)
            .u64(self.buffers.len() as u64);
        for (id, toks) in &self.buffers {
            h.u32(id.0).u64(toks.len() as u64);
            for &t in toks {
                h.u32(t);
            }
        }
        h.u8(self.invalid as u8);
        StateDigest(h.finish())
    }

    /// Digest ignoring the invalid flag: equal for states that differ only
    /// by whether the previous action failed.
    pub fn position_digest(&self) -> StateDigest {
        self.with_invalid(false).digest()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateDigest(pub u64);
