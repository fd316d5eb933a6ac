use std::fmt;

use serde::{Deserialize, Serialize};

/// Partition of the action alphabet.
///
/// `Tau` and `Delta` are reserved kinds: they never appear among the input or
/// output names of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Input,
    Output,
    Tau,
    Delta,
}

/// A named action. Names are empty for `tau` and `delta`.
///
/// Serialized in marker notation (`?a`, `!x`, `tau`, `delta`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ActionLabel {
    kind: ActionKind,
    name: String,
}

impl ActionLabel {
    pub fn input(name: impl Into<String>) -> Self {
        ActionLabel { kind: ActionKind::Input, name: name.into() }
    }

    pub fn output(name: impl Into<String>) -> Self {
        ActionLabel { kind: ActionKind::Output, name: name.into() }
    }

    pub fn tau() -> Self {
        ActionLabel { kind: ActionKind::Tau, name: String::new() }
    }

    pub fn delta() -> Self {
        ActionLabel { kind: ActionKind::Delta, name: String::new() }
    }

    pub fn kind(&self) -> ActionKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_input(&self) -> bool {
        self.kind == ActionKind::Input
    }

    pub fn is_output(&self) -> bool {
        self.kind == ActionKind::Output
    }

    pub fn is_tau(&self) -> bool {
        self.kind == ActionKind::Tau
    }

    pub fn is_delta(&self) -> bool {
        self.kind == ActionKind::Delta
    }

    /// Parses the marker notation used throughout the crate: `?name` for
    /// inputs, `!name` for outputs, `tau` / `i` for internal steps and
    /// `delta` for quiescence.
    pub fn parse_marked(text: &str) -> Option<Self> {
        match text {
            "tau" | "i" => Some(Self::tau()),
            "delta" => Some(Self::delta()),
            _ => {
                if let Some(name) = text.strip_prefix('?') {
                    Some(Self::input(name))
                } else {
                    text.strip_prefix('!').map(Self::output)
                }
            }
        }
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ActionKind::Input => write!(f, "?{}", self.name),
            ActionKind::Output => write!(f, "!{}", self.name),
            ActionKind::Tau => f.write_str("tau"),
            ActionKind::Delta => f.write_str("delta"),
        }
    }
}

impl From<ActionLabel> for String {
    fn from(label: ActionLabel) -> String {
        label.to_string()
    }
}

impl TryFrom<String> for ActionLabel {
    type Error = String;

    fn try_from(text: String) -> Result<Self, Self::Error> {
        ActionLabel::parse_marked(&text).ok_or_else(|| format!("label '{text}' lacks an action marker"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equality_is_kind_and_name() {
        assert_eq!(ActionLabel::input("a"), ActionLabel::input("a"));
        assert_ne!(ActionLabel::input("a"), ActionLabel::output("a"));
        assert_ne!(ActionLabel::tau(), ActionLabel::delta());
    }

    #[test]
    fn marker_notation_round_trips() {
        for text in ["?a", "!x", "tau", "delta", "?with space", "!"] {
            let label = ActionLabel::parse_marked(text).unwrap();
            assert_eq!(label.to_string(), text);
        }
        assert_eq!(ActionLabel::parse_marked("i"), Some(ActionLabel::tau()));
        assert_eq!(ActionLabel::parse_marked("a"), None);
    }

    #[test]
    fn serializes_as_marker_string() {
        let json = serde_json::to_string(&ActionLabel::output("x")).unwrap();
        assert_eq!(json, r#""!x""#);
        assert_eq!(serde_json::from_str::<ActionLabel>(r#""?a""#).unwrap(), ActionLabel::input("a"));
        assert!(serde_json::from_str::<ActionLabel>(r#""a""#).is_err());
    }
}
