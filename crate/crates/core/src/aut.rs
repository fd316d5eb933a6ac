//! Aldebaran (`.aut`) reading and writing.
//!
//! ```text
//! des (0,3,3)
//! (0,"?a",1)
//! (1,"!x",2)
//! (2,"?b",0)
//! ```
//!
//! Labels carry their role as a prefix: `?` marks inputs and `!` outputs,
//! `tau` and `i` are internal steps and `delta` is quiescence. Other naming
//! schemes can be read by passing a custom [`LabelConvention`]. The alphabet of
//! a parsed model is exactly the set of labels that occur in its body.

use thiserror::Error;

use crate::iolts::{ActionKind, ActionLabel, Iolts, IoltsBuilder, ModelError, StateId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AutError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: state {state} out of range (header declares {count} states)")]
    StateOutOfRange { line: usize, state: u64, count: usize },
    #[error("line {line}: unmarked label \"{label}\"")]
    UnmarkedLabel { line: usize, label: String },
    #[error("header declares {declared} transitions but the body has {found}")]
    TransitionCount { declared: usize, found: usize },
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
}

/// How raw `.aut` label strings map onto the action partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelConvention {
    pub input_prefix: String,
    pub output_prefix: String,
    pub tau_names: Vec<String>,
    pub delta_name: String,
}

impl Default for LabelConvention {
    fn default() -> Self {
        LabelConvention {
            input_prefix: "?".into(),
            output_prefix: "!".into(),
            tau_names: vec!["tau".into(), "i".into()],
            delta_name: "delta".into(),
        }
    }
}

impl LabelConvention {
    pub fn classify(&self, raw: &str) -> Option<ActionLabel> {
        if self.tau_names.iter().any(|t| t == raw) {
            return Some(ActionLabel::tau());
        }
        if raw == self.delta_name {
            return Some(ActionLabel::delta());
        }
        let input = raw.strip_prefix(self.input_prefix.as_str());
        let output = raw.strip_prefix(self.output_prefix.as_str());
        match (input, output) {
            // Both prefixes match: the longer one wins.
            (Some(i), Some(o)) => Some(if i.len() <= o.len() {
                ActionLabel::input(i)
            } else {
                ActionLabel::output(o)
            }),
            (Some(i), None) => Some(ActionLabel::input(i)),
            (None, Some(o)) => Some(ActionLabel::output(o)),
            (None, None) => None,
        }
    }
}

pub fn parse_aut(text: &str) -> Result<Iolts, AutError> {
    parse_aut_with(text, &LabelConvention::default())
}

pub fn parse_aut_with(text: &str, convention: &LabelConvention) -> Result<Iolts, AutError> {
    let mut lines = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let (line, header) = lines.next().ok_or(AutError::Syntax { line: 1, message: "missing header".into() })?;
    let (first, declared, count) = parse_header(line, header)?;
    let count = usize::try_from(count).map_err(|_| syntax(line, "state count too large"))?;
    let declared = usize::try_from(declared).map_err(|_| syntax(line, "transition count too large"))?;

    let check = |line: usize, state: u64| -> Result<StateId, AutError> {
        if state < count as u64 {
            Ok(state as StateId)
        } else {
            Err(AutError::StateOutOfRange { line, state, count })
        }
    };

    let mut builder = IoltsBuilder::new(count);
    builder.initial(check(line, first)?);
    let mut found = 0usize;
    for (line, body) in lines {
        let (source, raw, target) = parse_transition(line, body)?;
        let source = check(line, source)?;
        let target = check(line, target)?;
        let label = convention
            .classify(raw)
            .ok_or_else(|| AutError::UnmarkedLabel { line, label: raw.to_string() })?;
        if label.kind() == ActionKind::Delta && source != target {
            return Err(AutError::Model(ModelError::DeltaNotSelfLoop { from: source, to: target }));
        }
        builder.transition(source, label, target);
        found += 1;
    }
    if found != declared {
        return Err(AutError::TransitionCount { declared, found });
    }
    Ok(builder.build()?)
}

fn syntax(line: usize, message: &str) -> AutError {
    AutError::Syntax { line, message: message.to_string() }
}

fn parse_header(line: usize, text: &str) -> Result<(u64, u64, u64), AutError> {
    let rest = text
        .trim()
        .strip_prefix("des")
        .ok_or_else(|| syntax(line, "header must start with 'des'"))?;
    let inner = parenthesised(line, rest)?;
    let fields: Vec<&str> = inner.split(',').collect();
    if fields.len() != 3 {
        return Err(syntax(line, "header needs three fields"));
    }
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| syntax(line, "expected a number in header"));
    Ok((num(fields[0])?, num(fields[1])?, num(fields[2])?))
}

fn parenthesised(line: usize, text: &str) -> Result<&str, AutError> {
    text.trim()
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| syntax(line, "expected '(...)'"))
}

fn parse_transition(line: usize, text: &str) -> Result<(u64, &str, u64), AutError> {
    let inner = parenthesised(line, text)?;
    let comma = inner.find(',').ok_or_else(|| syntax(line, "expected '(src,label,dst)'"))?;
    let last = inner.rfind(',').filter(|&c| c > comma).ok_or_else(|| syntax(line, "expected '(src,label,dst)'"))?;
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| syntax(line, "expected a state number"));
    let source = num(&inner[..comma])?;
    let target = num(&inner[last + 1..])?;
    let middle = inner[comma + 1..last].trim();
    let label = if let Some(quoted) = middle.strip_prefix('"') {
        let body = quoted.strip_suffix('"').ok_or_else(|| syntax(line, "unterminated label"))?;
        if body.contains('"') {
            return Err(syntax(line, "labels may not contain '\"'"));
        }
        body
    } else {
        if middle.contains('"') {
            return Err(syntax(line, "stray '\"' in label"));
        }
        middle
    };
    Ok((source, label, target))
}

/// Serializes `model` in canonical form: `?`/`!` markers, LF line endings,
/// transitions sorted by source, label text and target.
pub fn write_aut(model: &Iolts) -> String {
    let mut rows: Vec<(StateId, String, StateId)> = model
        .transitions()
        .iter()
        .map(|t| (t.source, model.label(t.label).to_string(), t.target))
        .collect();
    rows.sort();
    let mut out = format!("des ({},{},{})\n", model.initial(), rows.len(), model.state_count());
    for (s, label, t) in rows {
        out.push_str(&format!("({s},\"{label}\",{t})\n"));
    }
    out
}
