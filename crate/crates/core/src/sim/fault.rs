use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::iolts::{ActionKind, ActionLabel, Iolts, IoltsBuilder, ModelError, StateId, Transition};

/// A single behavioural fault, applied to one transition of a model.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FaultSpec {
    /// `source -label-> target` now leads to `new_target`.
    Redirect { source: StateId, label: ActionLabel, target: StateId, new_target: StateId },
    /// `source -!from-> target` now emits `to`, another member of the output
    /// alphabet.
    RelabelOutput { source: StateId, from: String, target: StateId, to: String },
    /// `source -!output-> target` is never emitted.
    DropOutput { source: StateId, output: String, target: StateId },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FaultError {
    #[error("state {0} does not exist")]
    UnknownState(StateId),
    #[error("no transition {0}")]
    UnknownTransition(String),
    #[error("'{0}' is not in the output alphabet")]
    UnknownOutput(String),
    #[error("faults cannot be placed on {0} transitions")]
    UnsupportedLabel(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl FaultSpec {
    fn located(&self) -> (StateId, ActionLabel, StateId) {
        match self {
            FaultSpec::Redirect { source, label, target, .. } => (*source, label.clone(), *target),
            FaultSpec::RelabelOutput { source, from, target, .. } => (*source, ActionLabel::output(from.clone()), *target),
            FaultSpec::DropOutput { source, output, target } => (*source, ActionLabel::output(output.clone()), *target),
        }
    }

    /// Returns the mutated model. The label table (and so the alphabet) is
    /// kept unchanged.
    pub fn apply(&self, model: &Iolts) -> Result<Iolts, FaultError> {
        let (source, label, target) = self.located();
        let count = model.state_count();
        for q in [source, target] {
            if q as usize >= count {
                return Err(FaultError::UnknownState(q));
            }
        }
        if matches!(label.kind(), ActionKind::Tau | ActionKind::Delta) {
            return Err(FaultError::UnsupportedLabel(label.to_string()));
        }
        let located = model
            .label_id(&label)
            .map(|l| Transition { source, label: l, target })
            .filter(|t| model.transitions().binary_search(t).is_ok())
            .ok_or_else(|| FaultError::UnknownTransition(format!("{source} -{label}-> {target}")))?;

        let replacement = match self {
            FaultSpec::Redirect { new_target, .. } => {
                if *new_target as usize >= count {
                    return Err(FaultError::UnknownState(*new_target));
                }
                Some((source, label, *new_target))
            }
            FaultSpec::RelabelOutput { to, .. } => {
                if model.output_id(to).is_none() {
                    return Err(FaultError::UnknownOutput(to.clone()));
                }
                Some((source, ActionLabel::output(to.clone()), target))
            }
            FaultSpec::DropOutput { .. } => None,
        };

        let mut b: IoltsBuilder = IoltsBuilder::new(count);
        b.initial(model.initial());
        for l in model.labels() {
            match l.kind() {
                ActionKind::Input => {
                    b.declare_input(l.name());
                }
                ActionKind::Output => {
                    b.declare_output(l.name());
                }
                _ => {}
            }
        }
        for t in model.transitions() {
            if *t != located {
                b.transition(t.source, model.label(t.label).clone(), t.target);
            }
        }
        if let Some((s, l, t)) = replacement {
            b.transition(s, l, t);
        }
        Ok(b.build()?)
    }
}
