use std::fmt;

use serde::Serialize;

use super::{ActionKind, ActionLabel, Iolts, StateId};
use crate::scc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaFault {
    NotSelfLoop,
    OnNonQuiescentState,
    /// The model is partially completed: some quiescent state lacks its loop.
    MissingOnQuiescentState,
}

/// A model property the greedy benchmarks rely on that does not hold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Violation {
    /// Two transitions leave `state` with the same label.
    Nondeterministic { state: StateId, label: ActionLabel },
    /// A tau transition leaves `state`. Reported in strict mode only.
    InternalStep { state: StateId },
    /// The graph without delta loops has more than one strongly connected
    /// component.
    NotStronglyConnected { components: usize },
    /// `state` enables both inputs and outputs.
    MixedChoice { state: StateId },
    MalformedDelta { state: StateId, fault: DeltaFault },
}

impl Violation {
    pub fn severity(&self) -> Severity {
        match self {
            Violation::MixedChoice { .. } => Severity::Warning,
            _ => Severity::Error,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity() == Severity::Error
    }

    /// Single-letter rule code: D, T, C, I or W.
    pub fn code(&self) -> char {
        match self {
            Violation::Nondeterministic { .. } => 'D',
            Violation::InternalStep { .. } => 'T',
            Violation::NotStronglyConnected { .. } => 'C',
            Violation::MixedChoice { .. } => 'I',
            Violation::MalformedDelta { .. } => 'W',
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Nondeterministic { state, label } => {
                write!(f, "[D] state {state} has several '{label}' transitions")
            }
            Violation::InternalStep { state } => write!(f, "[T] state {state} has a tau transition"),
            Violation::NotStronglyConnected { components } => {
                write!(f, "[C] not strongly connected ({components} components)")
            }
            Violation::MixedChoice { state } => {
                write!(f, "[I] state {state} enables both inputs and outputs (warning)")
            }
            Violation::MalformedDelta { state, fault } => {
                write!(f, "[W] malformed delta on state {state}: {fault:?}")
            }
        }
    }
}

impl Iolts {
    /// Reports every violation of the model requirements for greedy testing.
    /// An empty list means the model is accepted. Tau transitions are only
    /// flagged when `strict` is set.
    pub fn validate(&self, strict: bool) -> Vec<Violation> {
        let mut found = Vec::new();
        let delta = self.delta_id();
        let any_delta = self.has_delta();

        for q in 0..self.state_count() as StateId {
            let out = self.outgoing(q);
            for pair in out.windows(2) {
                if pair[0].label == pair[1].label {
                    let dup = Violation::Nondeterministic { state: q, label: self.label(pair[0].label).clone() };
                    if found.last() != Some(&dup) {
                        found.push(dup);
                    }
                }
            }

            let mut has_in = false;
            let mut has_out = false;
            let mut has_tau = false;
            for t in out {
                match self.kind(t.label) {
                    ActionKind::Input => has_in = true,
                    ActionKind::Output => has_out = true,
                    ActionKind::Tau => has_tau = true,
                    ActionKind::Delta => {
                        if t.target != q {
                            found.push(Violation::MalformedDelta { state: q, fault: DeltaFault::NotSelfLoop });
                        }
                    }
                }
            }
            let has_delta = self.enables(q, delta);
            if has_delta && (has_out || has_tau) {
                found.push(Violation::MalformedDelta { state: q, fault: DeltaFault::OnNonQuiescentState });
            }
            if any_delta && !has_delta && !has_out && !has_tau {
                found.push(Violation::MalformedDelta { state: q, fault: DeltaFault::MissingOnQuiescentState });
            }
            if strict && has_tau {
                found.push(Violation::InternalStep { state: q });
            }
            if has_in && has_out {
                found.push(Violation::MixedChoice { state: q });
            }
        }

        let (_, components) = scc::tarjan(self.state_count(), |q| {
            self.outgoing(q).iter().filter(|t| t.label != delta).map(|t| t.target).collect::<Vec<_>>()
        });
        if components > 1 {
            found.push(Violation::NotStronglyConnected { components });
        }
        found
    }

    /// True when [`Iolts::validate`] reports no error-level violation.
    pub fn is_valid(&self, strict: bool) -> bool {
        self.validate(strict).iter().all(|v| !v.is_error())
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::toy1;
    use super::super::IoltsBuilder;
    use super::*;

    #[test]
    fn toy1_is_clean() {
        assert_eq!(toy1().validate(true), vec![]);
    }

    #[test]
    fn duplicate_label_is_nondeterminism() {
        let m = Iolts::from_triples(
            3,
            0,
            &[(0, "?a", 1), (0, "?a", 2), (1, "!x", 2), (2, "?b", 0), (0, "delta", 0), (2, "delta", 2)],
        )
        .unwrap();
        assert_eq!(
            m.validate(true),
            vec![Violation::Nondeterministic { state: 0, label: ActionLabel::input("a") }]
        );
    }

    #[test]
    fn three_way_duplicate_reported_once() {
        let m = Iolts::from_triples(3, 0, &[(0, "!a", 1), (0, "!a", 2), (0, "!a", 0), (1, "!b", 0), (2, "!b", 0)])
            .unwrap();
        let d: Vec<_> = m.validate(false).into_iter().filter(|v| v.code() == 'D').collect();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn disjoint_copies_are_not_connected() {
        let m = Iolts::from_triples(
            6,
            0,
            &[
                (0, "?a", 1), (1, "!x", 2), (2, "?b", 0), (0, "delta", 0), (2, "delta", 2),
                (3, "?a", 4), (4, "!x", 5), (5, "?b", 3), (3, "delta", 3), (5, "delta", 5),
            ],
        )
        .unwrap();
        assert_eq!(m.validate(true), vec![Violation::NotStronglyConnected { components: 2 }]);
    }

    #[test]
    fn delta_loops_do_not_count_for_connectivity() {
        let m = Iolts::from_triples(2, 0, &[(0, "?a", 1), (0, "delta", 0), (1, "delta", 1)]).unwrap();
        assert!(m.validate(false).contains(&Violation::NotStronglyConnected { components: 2 }));
    }

    #[test]
    fn tau_only_flagged_in_strict_mode() {
        let m = Iolts::from_triples(2, 0, &[(0, "tau", 1), (1, "?a", 0), (1, "delta", 1)]).unwrap();
        assert_eq!(m.validate(false), vec![]);
        assert_eq!(m.validate(true), vec![Violation::InternalStep { state: 0 }]);
    }

    #[test]
    fn mixed_state_is_a_warning() {
        let m = Iolts::from_triples(2, 0, &[(0, "?a", 1), (0, "!x", 1), (1, "?b", 0), (1, "delta", 1)]).unwrap();
        let v = m.validate(true);
        assert_eq!(v, vec![Violation::MixedChoice { state: 0 }]);
        assert_eq!(v[0].severity(), Severity::Warning);
        assert!(m.is_valid(true));
    }

    #[test]
    fn malformed_delta_reported() {
        let mut b = IoltsBuilder::new(2);
        b.transition(0, ActionLabel::output("x"), 1)
            .transition(0, ActionLabel::delta(), 0)
            .transition(1, ActionLabel::delta(), 0)
            .transition(1, ActionLabel::input("a"), 0);
        let m = b.build_unchecked_delta().unwrap();
        let v = m.validate(false);
        assert!(v.contains(&Violation::MalformedDelta { state: 0, fault: DeltaFault::OnNonQuiescentState }));
        assert!(v.contains(&Violation::MalformedDelta { state: 1, fault: DeltaFault::NotSelfLoop }));
    }

    #[test]
    fn partial_completion_reported() {
        let m = Iolts::from_triples(3, 0, &[(0, "?a", 1), (1, "!x", 2), (2, "?b", 0), (0, "delta", 0)]).unwrap();
        assert_eq!(
            m.validate(true),
            vec![Violation::MalformedDelta { state: 2, fault: DeltaFault::MissingOnQuiescentState }]
        );
    }
}
