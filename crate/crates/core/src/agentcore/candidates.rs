use crate::agentcore::{Action, PageState};
use crate::webenv::{ElementKind, Page, Token};

/// Candidate actions in a state, in canonical order: every visible element
/// paired with the kinds that apply to it, a page-level scroll when the page
/// is longer than the viewport, and stop. Text entry proposes the intent.
pub fn candidates(page: &Page, state: &PageState, intent: &[Token]) -> Vec<Action> {
    let mut out = Vec::new();
    for el in state.visible(page) {
        match el.kind {
            ElementKind::Link | ElementKind::Button => out.push(Action::click(el.id)),
            ElementKind::Textbox => out.push(Action::type_text(el.id, intent.to_vec())),
            ElementKind::ScrollRegion => out.push(Action::scroll(Some(el.id))),
        }
    }
    if page.elements.len() > state.window_len {
        out.push(Action::scroll(None));
    }
    out.push(Action::stop());
    out.sort_by_key(Action::order_key);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agentcore::{ActionKind, VIEWPORT};
    use crate::webenv::{Element, ElementId, PageId};

    #[test]
    fn stop_is_always_last() {
        let page = Page::new(0, vec![], vec![]);
        let c = candidates(&page, &PageState::enter(&page), &[1]);
        assert_eq!(c, vec![Action::stop()]);
    }

    #[test]
    fn only_visible_elements() {
        let mut els: Vec<Element> = (1..=10).map(|i| Element::link(i, PageId(0), vec![])).collect();
        els.insert(0, Element::scroll_region(0, vec![]));
        let page = Page::new(0, els, vec![]);
        let s = PageState::enter(&page);
        let c = candidates(&page, &s, &[]);
        assert_eq!(c.len(), VIEWPORT + 2);
        assert_eq!(c[0], Action::scroll(Some(ElementId(0))));
        assert_eq!(c[VIEWPORT].kind, ActionKind::Scroll);
        assert!(c[VIEWPORT].element.is_none());
        let s2 = s.scrolled(&page);
        let c2 = candidates(&page, &s2, &[]);
        assert_eq!(c2[0], Action::click(ElementId(8)));
    }
}
