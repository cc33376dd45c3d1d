use serde::{Deserialize, Serialize};

use crate::webenv::{ElementId, Token};

/// Action kinds. Declaration order is the tie-break order used wherever
/// candidates are ranked.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum ActionKind {
    Click,
    TypeText,
    Scroll,
    OpenTab,
    Stop,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] = [
        ActionKind::Click,
        ActionKind::TypeText,
        ActionKind::Scroll,
        ActionKind::OpenTab,
        ActionKind::Stop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::TypeText => "type-text",
            ActionKind::Scroll => "scroll",
            ActionKind::OpenTab => "open-tab",
            ActionKind::Stop => "stop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<ElementId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<Vec<Token>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<Vec<Token>>,
    /// "Unachievable" hint carried by a stop.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unachievable: bool,
    /// Free text attached to harness-created stops (early stop, error, placeholder).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub emitted_len: u32,
}

impl Action {
    fn base(kind: ActionKind) -> Self {
        Action {
            kind,
            element: None,
            text: None,
            answer: None,
            unachievable: false,
            note: None,
            emitted_len: 0,
        }
        .with_emitted_len()
    }

    fn with_emitted_len(mut self) -> Self {
        self.emitted_len = self.compute_emitted_len();
        self
    }

    /// Tokens the action costs to emit: a kind token, an element reference,
    /// and any literal payload.
    fn compute_emitted_len(&self) -> u32 {
        let mut n = 1;
        if self.element.is_some() {
            n += 1;
        }
        n += self.text.as_ref().map_or(0, Vec::len) as u32;
        n += self.answer.as_ref().map_or(0, Vec::len) as u32;
        if self.unachievable {
            n += 1;
        }
        if let Some(note) = &self.note {
            n += note.split_whitespace().count() as u32;
        }
        n
    }

    pub fn click(element: ElementId) -> Self {
        Action {
            element: Some(element),
            ..Self::base(ActionKind::Click)
        }
        .with_emitted_len()
    }

    pub fn open_tab(element: ElementId) -> Self {
        Action {
            element: Some(element),
            ..Self::base(ActionKind::OpenTab)
        }
        .with_emitted_len()
    }

    pub fn type_text(element: ElementId, text: Vec<Token>) -> Self {
        Action {
            element: Some(element),
            text: Some(text),
            ..Self::base(ActionKind::TypeText)
        }
        .with_emitted_len()
    }

    pub fn scroll(element: Option<ElementId>) -> Self {
        Action {
            element,
            ..Self::base(ActionKind::Scroll)
        }
        .with_emitted_len()
    }

    pub fn stop() -> Self {
        Self::base(ActionKind::Stop)
    }

    pub fn stop_with_answer(answer: Vec<Token>) -> Self {
        Action {
            answer: Some(answer),
            ..Self::base(ActionKind::Stop)
        }
        .with_emitted_len()
    }

    /// Stop carrying the unachievable hint.
    pub fn stop_unachievable(note: impl Into<String>) -> Self {
        Action {
            unachievable: true,
            note: Some(note.into()),
            ..Self::base(ActionKind::Stop)
        }
        .with_emitted_len()
    }

    /// Harness-created stop (`"Early stop:..."`, `"ERROR: ..."`, or the empty placeholder).
    pub fn stop_with_note(note: impl Into<String>) -> Self {
        Action {
            note: Some(note.into()),
            ..Self::base(ActionKind::Stop)
        }
        .with_emitted_len()
    }

    pub fn is_stop(&self) -> bool {
        self.kind == ActionKind::Stop
    }

    pub fn key(&self) -> ActionKey {
        ActionKey {
            kind: self.kind,
            element: self.element,
        }
    }

    /// Canonical ordering key: lowest element id first (element-less last),
    /// then kind order.
    pub fn order_key(&self) -> (u32, ActionKind) {
        (self.element.map_or(u32::MAX, |e| e.0), self.kind)
    }

    pub fn describe(&self) -> String {
        match (self.kind, self.element) {
            (ActionKind::Stop, _) => match (&self.note, self.unachievable) {
                (Some(n), true) => format!("stop[UA: {n}]"),
                (Some(n), false) => format!("stop[{n}]"),
                (None, _) => "stop".to_string(),
            },
            (kind, Some(e)) => format!("{}#{}", kind.as_str(), e.0),
            (kind, None) => kind.as_str().to_string(),
        }
    }
}

/// Identity of an action for memory lookups: kind plus element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionKey {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<ElementId>,
}
