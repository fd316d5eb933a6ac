use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use mbt_core::aut::{parse_aut, write_aut};
use mbt_core::engine::{self, EngineConfig, Verdict};
use mbt_core::generator::{gen_model, GenParams};
use mbt_core::iolts::{ActionKind, ActionLabel, Iolts, IoltsBuilder, LabelId, StateId, StateSet};
use mbt_core::sim::{Observation, Simulator, TimeMode};
use mbt_core::strategy::StrategyKind;
use proptest::prelude::*;

const NAMES: [&str; 7] = ["?a", "?b", "?c", "!x", "!y", "tau", "!z"];

/// Random models over a fixed small alphabet, possibly with tau steps and
/// nondeterminism, delta-completed.
fn arb_model() -> impl Strategy<Value = Iolts> {
    (1usize..7).prop_flat_map(|n| {
        let edge = (0..n as StateId, 0..NAMES.len(), 0..n as StateId);
        (Just(n), 0..n as StateId, prop::collection::vec(edge, 0..18)).prop_map(|(n, init, edges)| {
            let mut b = IoltsBuilder::new(n);
            b.initial(init);
            for name in NAMES {
                if let Some(i) = name.strip_prefix('?') {
                    b.declare_input(i);
                } else if let Some(o) = name.strip_prefix('!') {
                    b.declare_output(o);
                }
            }
            for (s, l, t) in edges {
                b.transition(s, ActionLabel::parse_marked(NAMES[l]).unwrap(), t);
            }
            b.build().unwrap().delta_completion().unwrap()
        })
    })
}

/// The explicit triples of a model.
fn triples(m: &Iolts) -> Vec<(StateId, ActionLabel, StateId)> {
    m.transitions().iter().map(|t| (t.source, m.label(t.label).clone(), t.target)).collect()
}

fn oracle_closure(m: &Iolts, start: &BTreeSet<StateId>) -> BTreeSet<StateId> {
    let edges = triples(m);
    let mut set = start.clone();
    loop {
        let more: BTreeSet<_> =
            edges.iter().filter(|(s, l, _)| l.is_tau() && set.contains(s)).map(|(_, _, t)| *t).collect();
        let before = set.len();
        set.extend(more);
        if set.len() == before {
            return set;
        }
    }
}

fn oracle_quiescent(m: &Iolts, q: StateId) -> bool {
    !triples(m).iter().any(|(s, l, _)| *s == q && (l.is_output() || l.is_tau()))
}

fn oracle_after(m: &Iolts, qs: &BTreeSet<StateId>, label: &ActionLabel) -> BTreeSet<StateId> {
    let from = oracle_closure(m, qs);
    let step: BTreeSet<_> = if label.is_delta() {
        from.iter().copied().filter(|&q| oracle_quiescent(m, q)).collect()
    } else {
        triples(m).iter().filter(|(s, l, _)| l == label && from.contains(s)).map(|(_, _, t)| *t).collect()
    };
    oracle_closure(m, &step)
}

fn to_set(s: &StateSet) -> BTreeSet<StateId> {
    s.iter().collect()
}

fn observable(m: &Iolts) -> Vec<LabelId> {
    (0..m.labels().len() as u32)
        .map(|i| m.label_id(&m.labels()[i as usize]).unwrap())
        .filter(|&l| m.kind(l) != ActionKind::Tau)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn after_matches_oracle(m in arb_model(), trace in prop::collection::vec(0usize..8, 0..6)) {
        let labels = observable(&m);
        let mut qs = m.initial_states();
        let mut expected = oracle_closure(&m, &BTreeSet::from([m.initial()]));
        prop_assert_eq!(to_set(&qs), expected.clone());
        for k in trace {
            let l = labels[k % labels.len()];
            qs = m.after(&qs, l);
            expected = oracle_after(&m, &expected, m.label(l));
            prop_assert_eq!(to_set(&qs), expected.clone());
        }
    }

    #[test]
    fn out_and_next_match_oracle(m in arb_model(), pick in prop::collection::vec(any::<bool>(), 6)) {
        let qs: StateSet = (0..m.state_count() as StateId).filter(|&q| pick[q as usize]).collect();
        let closure = oracle_closure(&m, &to_set(&qs));
        prop_assert_eq!(to_set(&m.epsilon_closure(&qs)), closure.clone());
        let edges = triples(&m);
        let out: BTreeSet<ActionLabel> = edges
            .iter()
            .filter(|(s, l, _)| l.is_output() && qs.contains(*s))
            .map(|(_, l, _)| l.clone())
            .collect();
        let got: BTreeSet<ActionLabel> = m.out(&qs).into_iter().map(|l| m.label(l).clone()).collect();
        prop_assert_eq!(got, out);

        let next: BTreeSet<ActionLabel> = edges
            .iter()
            .filter(|(s, l, _)| !l.is_tau() && closure.contains(s))
            .map(|(_, l, _)| l.clone())
            .collect();
        let got: BTreeSet<ActionLabel> = m.next_actions(&m.epsilon_closure(&qs)).into_iter().map(|l| m.label(l).clone()).collect();
        prop_assert_eq!(got, next);
    }

    #[test]
    fn delta_loops_sit_on_quiescent_states(m in arb_model()) {
        prop_assert!(m.is_delta_complete());
        for q in 0..m.state_count() as StateId {
            prop_assert_eq!(m.enables(q, m.delta_id()), oracle_quiescent(&m, q));
        }
        let stripped = m.strip_delta();
        prop_assert_eq!(stripped.delta_completion().unwrap(), m);
    }

    #[test]
    fn aut_round_trips(m in arb_model()) {
        let text = write_aut(&m);
        let back = parse_aut(&text).unwrap();
        prop_assert_eq!(write_aut(&back), text);
        prop_assert_eq!(triples(&back), triples(&m));
        prop_assert_eq!(back.initial(), m.initial());
    }

    #[test]
    fn simulator_traces_are_suspension_traces(
        params in (2usize..5, 1usize..4, 0usize..3, 1usize..3, any::<u64>()),
        choices in prop::collection::vec(any::<u8>(), 1..60),
    ) {
        let (n, lambda, r, p, seed) = params;
        let m = gen_model(&GenParams::new(n, lambda, r, p, seed)).unwrap().model;
        let mut sim = Simulator::new(Arc::new(m.clone()), TimeMode::Logical, seed).unwrap();
        let inputs: Vec<LabelId> = m.inputs().collect();
        let mut trace = Vec::new();
        for c in choices {
            if c % 2 == 0 {
                let l = inputs[c as usize / 2 % inputs.len()];
                // An input may only be sent once every queued output was read.
                if sim.queued().next().is_none() && sim.send(m.label(l).name()).unwrap() {
                    trace.push(l);
                }
            } else {
                match sim.receive(Duration::ZERO) {
                    Observation::Output(o) => trace.push(m.output_id(&o).unwrap()),
                    Observation::Quiescent => trace.push(m.delta_id()),
                }
            }
            prop_assert!(!m.after_trace(&trace).is_empty(), "{:?}", trace);
        }
    }

    #[test]
    fn conforming_runs_never_fail(
        params in (2usize..6, 1usize..4, 0usize..3, 1usize..3, any::<u64>()),
        greedy in any::<bool>(),
        bias in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let (n, lambda, r, p, gen_seed) = params;
        let m = gen_model(&GenParams::new(n, lambda, r, p, gen_seed)).unwrap().model;
        let strategy = if greedy { StrategyKind::Greedy { depth: 1 + (seed % 6) as u32 } } else { StrategyKind::Random };
        let cfg = EngineConfig { strategy, coverage_target: None, max_transitions: 2_000, input_bias: bias, seed, ..Default::default() };
        let mut sim = Simulator::new(Arc::new(m.clone()), TimeMode::Logical, seed ^ 1).unwrap();
        let report = engine::run(&m, &mut sim, &cfg).unwrap();
        prop_assert_eq!(&report.verdict, &Verdict::BudgetExhausted);
        prop_assert_eq!(report.transitions_taken as usize, report.trace.len());
        let ids: Vec<LabelId> = report.trace.iter().map(|l| m.label_id(l).unwrap()).collect();
        prop_assert!(!m.after_trace(&ids).is_empty());
        let curve = &report.coverage_curve;
        prop_assert!(curve.windows(2).all(|w| w[0].transitions <= w[1].transitions && w[0].visited <= w[1].visited));
        prop_assert_eq!(curve.last().unwrap().transitions, report.transitions_taken);
    }

    #[test]
    fn coverage_runs_stop_at_the_goal(
        params in (2usize..6, 1usize..4, 1usize..3, any::<u64>()),
        target in 0.05f64..=1.0,
        seed in any::<u64>(),
    ) {
        let (n, lambda, r, gen_seed) = params;
        let m = gen_model(&GenParams::new(n, lambda, r, 1, gen_seed)).unwrap().model;
        let cfg = EngineConfig { coverage_target: Some(target), max_transitions: 1_000_000, seed, ..Default::default() };
        let mut sim = Simulator::new(Arc::new(m.clone()), TimeMode::Logical, seed).unwrap();
        let report = engine::run(&m, &mut sim, &cfg).unwrap();
        prop_assert_eq!(&report.verdict, &Verdict::CoverageReached);
        let goal = engine::coverage_goal(target, m.state_count());
        prop_assert!(report.states_visited() >= goal);
        // The run stops at the first step that reaches the goal.
        let curve = &report.coverage_curve;
        if curve.len() > 1 {
            prop_assert!(curve[curve.len() - 2].visited < goal);
        }
    }
}
