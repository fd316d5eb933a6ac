//! Input-output labelled transition systems and their observable semantics.
//!
//! An [`Iolts`] is immutable once built. States are dense ids `0..state_count`
//! and labels are interned into a table indexed by [`LabelId`], so the hot
//! loops of the engine and the greedy strategy never touch strings.

mod label;
mod state_set;
mod validate;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use label::{ActionKind, ActionLabel};
pub use state_set::StateSet;
pub use validate::{DeltaFault, Severity, Violation};

pub type StateId = u32;

/// Index into a model's label table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelId(u32);

impl LabelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Transition {
    pub source: StateId,
    pub label: LabelId,
    pub target: StateId,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("a model needs at least one state")]
    NoStates,
    #[error("state {state} out of range (model has {count} states)")]
    StateOutOfRange { state: StateId, count: usize },
    #[error("action '{0}' is declared both as input and as output")]
    AlphabetOverlap(String),
    #[error("delta transition {from} -> {to} is not a self-loop")]
    DeltaNotSelfLoop { from: StateId, to: StateId },
    #[error("delta on state {0}, which enables an output or tau transition")]
    DeltaOnNonQuiescent(StateId),
    #[error("model already contains delta transitions")]
    AlreadyDeltaCompleted,
}

/// An input-output labelled transition system.
///
/// The label table is sorted by `(kind, name)` and always contains `tau` and
/// `delta`; transitions are sorted by `(source, label, target)` and free of
/// duplicates. Two models built from the same content therefore compare equal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Iolts {
    state_count: usize,
    initial: StateId,
    labels: Vec<ActionLabel>,
    label_ids: HashMap<ActionLabel, LabelId>,
    transitions: Vec<Transition>,
    offsets: Vec<usize>,
    tau: LabelId,
    delta: LabelId,
}

/// Collects states, alphabet and transitions, then checks the structural
/// invariants in [`IoltsBuilder::build`].
#[derive(Clone, Debug)]
pub struct IoltsBuilder {
    state_count: usize,
    initial: StateId,
    alphabet: BTreeSet<ActionLabel>,
    transitions: Vec<(StateId, ActionLabel, StateId)>,
}

impl IoltsBuilder {
    pub fn new(state_count: usize) -> Self {
        IoltsBuilder {
            state_count,
            initial: 0,
            alphabet: BTreeSet::new(),
            transitions: Vec::new(),
        }
    }

    pub fn initial(&mut self, q: StateId) -> &mut Self {
        self.initial = q;
        self
    }

    /// Declares an input name even if no transition uses it.
    pub fn declare_input(&mut self, name: impl Into<String>) -> &mut Self {
        self.alphabet.insert(ActionLabel::input(name));
        self
    }

    /// Declares an output name even if no transition uses it.
    pub fn declare_output(&mut self, name: impl Into<String>) -> &mut Self {
        self.alphabet.insert(ActionLabel::output(name));
        self
    }

    pub fn transition(&mut self, source: StateId, label: ActionLabel, target: StateId) -> &mut Self {
        self.transitions.push((source, label, target));
        self
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.len()
    }

    pub fn build(&self) -> Result<Iolts, ModelError> {
        let model = self.build_unchecked_delta()?;
        model.check_delta_placement()?;
        Ok(model)
    }

    /// Builds without checking where delta loops sit. Only used to construct
    /// deliberately malformed models for validation tests.
    pub(crate) fn build_unchecked_delta(&self) -> Result<Iolts, ModelError> {
        let count = self.state_count;
        if count == 0 {
            return Err(ModelError::NoStates);
        }
        let in_range = |state: StateId| {
            if (state as usize) < count {
                Ok(())
            } else {
                Err(ModelError::StateOutOfRange { state, count })
            }
        };
        in_range(self.initial)?;

        let mut alphabet = self.alphabet.clone();
        alphabet.insert(ActionLabel::tau());
        alphabet.insert(ActionLabel::delta());
        for (source, label, target) in &self.transitions {
            in_range(*source)?;
            in_range(*target)?;
            alphabet.insert(label.clone());
        }
        let inputs: BTreeSet<&str> =
            alphabet.iter().filter(|l| l.is_input()).map(|l| l.name()).collect();
        if let Some(clash) = alphabet.iter().find(|l| l.is_output() && inputs.contains(l.name())) {
            return Err(ModelError::AlphabetOverlap(clash.name().to_string()));
        }

        let labels: Vec<ActionLabel> = alphabet.into_iter().collect();
        let label_ids: HashMap<ActionLabel, LabelId> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), LabelId(i as u32)))
            .collect();

        let mut transitions: Vec<Transition> = self
            .transitions
            .iter()
            .map(|(source, label, target)| Transition {
                source: *source,
                label: label_ids[label],
                target: *target,
            })
            .collect();
        transitions.sort_unstable();
        transitions.dedup();

        let mut offsets = vec![0usize; count + 1];
        for t in &transitions {
            offsets[t.source as usize + 1] += 1;
        }
        for i in 0..count {
            offsets[i + 1] += offsets[i];
        }

        let tau = label_ids[&ActionLabel::tau()];
        let delta = label_ids[&ActionLabel::delta()];
        Ok(Iolts {
            state_count: count,
            initial: self.initial,
            labels,
            label_ids,
            transitions,
            offsets,
            tau,
            delta,
        })
    }
}

impl Iolts {
    /// Convenience constructor from marker-notation triples such as
    /// `(0, "?a", 1)`.
    ///
    /// # Panics
    /// Panics on labels that are not in marker notation.
    pub fn from_triples(state_count: usize, initial: StateId, triples: &[(StateId, &str, StateId)]) -> Result<Iolts, ModelError> {
        let mut b = IoltsBuilder::new(state_count);
        b.initial(initial);
        for &(s, label, t) in triples {
            let label = ActionLabel::parse_marked(label)
                .unwrap_or_else(|| panic!("label '{label}' lacks an action marker"));
            b.transition(s, label, t);
        }
        b.build()
    }

    /// Returns a builder pre-filled with this model's content.
    pub fn to_builder(&self) -> IoltsBuilder {
        let mut b = IoltsBuilder::new(self.state_count);
        b.initial(self.initial);
        for l in &self.labels {
            if l.is_input() || l.is_output() {
                b.alphabet.insert(l.clone());
            }
        }
        for t in &self.transitions {
            b.transition(t.source, self.label(t.label).clone(), t.target);
        }
        b
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.len()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn labels(&self) -> &[ActionLabel] {
        &self.labels
    }

    pub fn label(&self, id: LabelId) -> &ActionLabel {
        &self.labels[id.index()]
    }

    pub fn label_id(&self, label: &ActionLabel) -> Option<LabelId> {
        self.label_ids.get(label).copied()
    }

    pub fn input_id(&self, name: &str) -> Option<LabelId> {
        self.label_id(&ActionLabel::input(name))
    }

    pub fn output_id(&self, name: &str) -> Option<LabelId> {
        self.label_id(&ActionLabel::output(name))
    }

    pub fn tau_id(&self) -> LabelId {
        self.tau
    }

    pub fn delta_id(&self) -> LabelId {
        self.delta
    }

    pub fn kind(&self, id: LabelId) -> ActionKind {
        self.labels[id.index()].kind()
    }

    /// Input names (A_I), including declared but unused ones.
    pub fn inputs(&self) -> impl Iterator<Item = LabelId> + '_ {
        self.label_ids_of(ActionKind::Input)
    }

    /// Output names (A_O), including declared but unused ones.
    pub fn outputs(&self) -> impl Iterator<Item = LabelId> + '_ {
        self.label_ids_of(ActionKind::Output)
    }

    fn label_ids_of(&self, kind: ActionKind) -> impl Iterator<Item = LabelId> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, l)| l.kind() == kind)
            .map(|(i, _)| LabelId(i as u32))
    }

    pub fn outgoing(&self, q: StateId) -> &[Transition] {
        let q = q as usize;
        &self.transitions[self.offsets[q]..self.offsets[q + 1]]
    }

    /// Targets of `q -label->`.
    pub fn successors(&self, q: StateId, label: LabelId) -> impl Iterator<Item = StateId> + '_ {
        let out = self.outgoing(q);
        let lo = out.partition_point(|t| t.label < label);
        let hi = out.partition_point(|t| t.label <= label);
        out[lo..hi].iter().map(|t| t.target)
    }

    pub fn enables(&self, q: StateId, label: LabelId) -> bool {
        self.successors(q, label).next().is_some()
    }

    /// A state is quiescent when it enables neither outputs nor tau.
    pub fn is_quiescent(&self, q: StateId) -> bool {
        self.outgoing(q).iter().all(|t| {
            let kind = self.kind(t.label);
            kind != ActionKind::Output && kind != ActionKind::Tau
        })
    }

    pub fn has_delta(&self) -> bool {
        self.transitions.iter().any(|t| t.label == self.delta)
    }

    pub fn has_tau(&self) -> bool {
        self.transitions.iter().any(|t| t.label == self.tau)
    }

    /// True when exactly the quiescent states carry a delta loop.
    pub fn is_delta_complete(&self) -> bool {
        (0..self.state_count as StateId).all(|q| self.is_quiescent(q) == self.enables(q, self.delta))
    }

    fn check_delta_placement(&self) -> Result<(), ModelError> {
        for t in self.transitions.iter().filter(|t| t.label == self.delta) {
            if t.source != t.target {
                return Err(ModelError::DeltaNotSelfLoop { from: t.source, to: t.target });
            }
            if !self.is_quiescent(t.source) {
                return Err(ModelError::DeltaOnNonQuiescent(t.source));
            }
        }
        Ok(())
    }

    /// Smallest superset of `qs` closed under tau steps.
    pub fn epsilon_closure(&self, qs: &StateSet) -> StateSet {
        let mut closed = qs.clone();
        let mut stack: Vec<StateId> = qs.iter().collect();
        while let Some(q) = stack.pop() {
            for t in self.successors(q, self.tau) {
                if closed.insert(t) {
                    stack.push(t);
                }
            }
        }
        closed
    }

    /// Observable actions (inputs, outputs, delta) enabled in some state of
    /// the tau-closed set `qs`.
    pub fn next_actions(&self, qs: &StateSet) -> BTreeSet<LabelId> {
        qs.iter()
            .flat_map(|q| self.outgoing(q).iter().map(|t| t.label))
            .filter(|&l| l != self.tau)
            .collect()
    }

    /// States reachable from the tau-closed set `qs` by one observable step
    /// `label`, closed under tau. For delta this keeps the quiescent members.
    pub fn after(&self, qs: &StateSet, label: LabelId) -> StateSet {
        debug_assert_ne!(label, self.tau, "after is defined on observable labels only");
        let step: StateSet = qs.iter().flat_map(|q| self.successors(q, label)).collect();
        self.epsilon_closure(&step)
    }

    /// Folds [`Iolts::after`] over a trace, starting from the closure of the
    /// initial state.
    pub fn after_trace(&self, trace: &[LabelId]) -> StateSet {
        let mut qs = self.initial_states();
        for &label in trace {
            qs = self.after(&qs, label);
        }
        qs
    }

    pub fn initial_states(&self) -> StateSet {
        self.epsilon_closure(&StateSet::singleton(self.initial))
    }

    /// Output labels enabled from some state of `qs`.
    pub fn out(&self, qs: &StateSet) -> BTreeSet<LabelId> {
        qs.iter()
            .flat_map(|q| self.outgoing(q).iter().map(|t| t.label))
            .filter(|&l| self.kind(l) == ActionKind::Output)
            .collect()
    }

    /// Adds a delta self-loop to every quiescent state.
    pub fn delta_completion(&self) -> Result<Iolts, ModelError> {
        if self.has_delta() {
            return Err(ModelError::AlreadyDeltaCompleted);
        }
        let mut transitions = self.transitions.clone();
        for q in 0..self.state_count as StateId {
            if self.is_quiescent(q) {
                transitions.push(Transition { source: q, label: self.delta, target: q });
            }
        }
        Ok(self.with_transitions(transitions))
    }

    /// Removes all delta transitions.
    pub fn strip_delta(&self) -> Iolts {
        let delta = self.delta;
        self.with_transitions(self.transitions.iter().copied().filter(|t| t.label != delta).collect())
    }

    fn with_transitions(&self, mut transitions: Vec<Transition>) -> Iolts {
        transitions.sort_unstable();
        transitions.dedup();
        let mut offsets = vec![0usize; self.state_count + 1];
        for t in &transitions {
            offsets[t.source as usize + 1] += 1;
        }
        for i in 0..self.state_count {
            offsets[i + 1] += offsets[i];
        }
        Iolts { transitions, offsets, ..self.clone_header() }
    }

    fn clone_header(&self) -> Iolts {
        Iolts {
            state_count: self.state_count,
            initial: self.initial,
            labels: self.labels.clone(),
            label_ids: self.label_ids.clone(),
            transitions: Vec::new(),
            offsets: Vec::new(),
            tau: self.tau,
            delta: self.delta,
        }
    }

    /// Renders a transition in marker notation, e.g. `3 -?a-> 4`.
    pub fn describe(&self, t: &Transition) -> String {
        format!("{} -{}-> {}", t.source, self.label(t.label), t.target)
    }
}

impl fmt::Display for Iolts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "IOLTS({} states, {} transitions, initial {})",
            self.state_count,
            self.transitions.len(),
            self.initial
        )
    }
}
