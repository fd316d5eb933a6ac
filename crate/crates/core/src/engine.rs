//! The online testing loop: stimulate, observe, check against the model.

use std::collections::BTreeSet;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::iolts::{ActionKind, ActionLabel, Iolts, LabelId, StateSet};
use crate::sim::{Observation, PortError, SutPort};
use crate::strategy::{Strategy, StrategyKind, Visited, DEFAULT_DEPTH};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub strategy: StrategyKind,
    /// Stop once this fraction of the model's states has been visited.
    /// `None` runs until a failure or the transition budget.
    pub coverage_target: Option<f64>,
    pub max_transitions: u64,
    pub timeout_millis: u64,
    /// Probability of sending when both sending and listening are possible.
    pub input_bias: f64,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            strategy: StrategyKind::Greedy { depth: DEFAULT_DEPTH },
            coverage_target: Some(1.0),
            max_transitions: 100_000,
            timeout_millis: 0,
            input_bias: 0.5,
            seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if let Some(t) = self.coverage_target {
            if !(t > 0.0 && t <= 1.0) {
                return Err(EngineError::Config(format!("coverage target {t} outside (0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.input_bias) {
            return Err(EngineError::Config(format!("input bias {} outside [0, 1]", self.input_bias)));
        }
        if let StrategyKind::Greedy { depth: 0 } = self.strategy {
            return Err(EngineError::Config("greedy depth must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    CoverageReached,
    /// The implementation produced `output`, which the model does not allow
    /// after the recorded trace.
    FailUnexpectedOutput { output: String },
    /// The implementation stayed silent where the model requires an output.
    FailUnexpectedQuiescence,
    BudgetExhausted,
    /// No observable action is enabled in the current states.
    NoEnabledActions,
}

impl Verdict {
    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::FailUnexpectedOutput { .. } | Verdict::FailUnexpectedQuiescence)
    }
}

/// One coverage sample: after `transitions` steps, `visited` states were seen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub transitions: u64,
    pub visited: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub transitions_taken: u64,
    /// Actions performed, excluding the failing observation.
    pub trace: Vec<ActionLabel>,
    pub coverage_curve: Vec<CoveragePoint>,
    pub state_count: usize,
    /// Inputs the implementation refused (treated as ignored).
    pub refused_inputs: u64,
}

impl RunReport {
    pub fn states_visited(&self) -> usize {
        self.coverage_curve.last().map_or(0, |p| p.visited)
    }

    /// Transitions needed until `count` states had been visited.
    pub fn transitions_to_reach(&self, count: usize) -> Option<u64> {
        self.coverage_curve.iter().find(|p| p.visited >= count).map(|p| p.transitions)
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("port failure: {0}")]
    Port(#[from] PortError),
    #[error("model is not delta-complete; complete it before testing")]
    NotDeltaComplete,
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Send,
    Listen,
}

/// Resolves the choice between sending and listening for the actions in
/// `next`: forced when only one side is possible, otherwise send with
/// probability `input_bias`.
pub fn choose_branch(model: &Iolts, next: &BTreeSet<LabelId>, input_bias: f64, rng: &mut ChaCha8Rng) -> Branch {
    let can_send = next.iter().any(|&l| model.kind(l) == ActionKind::Input);
    let can_listen = next.iter().any(|&l| matches!(model.kind(l), ActionKind::Output | ActionKind::Delta));
    match (can_send, can_listen) {
        (false, _) => Branch::Listen,
        (true, false) => Branch::Send,
        (true, true) => {
            if rng.random_bool(input_bias) {
                Branch::Send
            } else {
                Branch::Listen
            }
        }
    }
}

/// Number of visited states that satisfies `fraction` of `state_count`.
pub fn coverage_goal(fraction: f64, state_count: usize) -> usize {
    // The small slack keeps e.g. 0.9875 * 800 at exactly 790.
    ((fraction * state_count as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Runs one test against `port` with the strategy named in `cfg`.
pub fn run(model: &Iolts, port: &mut dyn SutPort, cfg: &EngineConfig) -> Result<RunReport, EngineError> {
    cfg.validate()?;
    let mut strategy = cfg.strategy.build();
    run_with(model, port, strategy.as_mut(), cfg)
}

/// Runs one test with a caller-supplied strategy; `cfg.strategy` is ignored.
pub fn run_with(
    model: &Iolts,
    port: &mut dyn SutPort,
    strategy: &mut dyn Strategy,
    cfg: &EngineConfig,
) -> Result<RunReport, EngineError> {
    cfg.validate()?;
    if !model.is_delta_complete() {
        return Err(EngineError::NotDeltaComplete);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let timeout = Duration::from_millis(cfg.timeout_millis);
    let goal = cfg.coverage_target.map(|t| coverage_goal(t, model.state_count()));

    let mut run = Run {
        model,
        qs: model.initial_states(),
        visited: Visited::new(model.state_count()),
        trace: Vec::new(),
        curve: Vec::new(),
        refused: 0,
    };
    for q in &run.qs {
        run.visited.insert(q);
    }
    run.curve.push(CoveragePoint { transitions: 0, visited: run.visited.len() });

    let verdict = loop {
        if goal.is_some_and(|g| run.visited.len() >= g) {
            break Verdict::CoverageReached;
        }
        if run.trace.len() as u64 >= cfg.max_transitions {
            break Verdict::BudgetExhausted;
        }
        let next = model.next_actions(&run.qs);
        if next.is_empty() {
            break Verdict::NoEnabledActions;
        }
        match choose_branch(model, &next, cfg.input_bias, &mut rng) {
            Branch::Send => {
                let options: BTreeSet<LabelId> =
                    next.iter().copied().filter(|&l| model.kind(l) == ActionKind::Input).collect();
                let input = strategy.pick_input(model, &run.qs, &options, &run.visited, &mut rng);
                if !port.send(model.label(input).name())? {
                    run.refused += 1;
                }
                run.step(input, strategy);
            }
            Branch::Listen => match port.receive(timeout)? {
                Observation::Output(name) => match model.output_id(&name).filter(|l| next.contains(l)) {
                    Some(output) => run.step(output, strategy),
                    None => break Verdict::FailUnexpectedOutput { output: name },
                },
                Observation::Quiescent => {
                    let delta = model.delta_id();
                    if next.contains(&delta) {
                        run.step(delta, strategy);
                    } else {
                        break Verdict::FailUnexpectedQuiescence;
                    }
                }
            },
        }
    };

    let transitions = run.trace.len() as u64;
    if run.curve.last().is_some_and(|p| p.transitions != transitions) {
        run.curve.push(CoveragePoint { transitions, visited: run.visited.len() });
    }
    Ok(RunReport {
        verdict,
        transitions_taken: transitions,
        trace: run.trace.iter().map(|&l| model.label(l).clone()).collect(),
        coverage_curve: run.curve,
        state_count: model.state_count(),
        refused_inputs: run.refused,
    })
}

struct Run<'a> {
    model: &'a Iolts,
    qs: StateSet,
    visited: Visited,
    trace: Vec<LabelId>,
    curve: Vec<CoveragePoint>,
    refused: u64,
}

impl Run<'_> {
    fn step(&mut self, label: LabelId, strategy: &mut dyn Strategy) {
        self.qs = self.model.after(&self.qs, label);
        debug_assert!(!self.qs.is_empty());
        self.trace.push(label);
        let before = self.visited.len();
        for q in &self.qs {
            self.visited.insert(q);
        }
        if self.visited.len() > before {
            self.curve.push(CoveragePoint { transitions: self.trace.len() as u64, visited: self.visited.len() });
        }
        strategy.observe(self.model, label);
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::iolts::fixtures::toy1;
    use crate::sim::{FaultSpec, Simulator, TimeMode};

    fn toy1_with_y() -> Iolts {
        let mut b = toy1().to_builder();
        b.declare_output("y");
        b.build().unwrap()
    }

    fn sim(model: &Iolts) -> Simulator {
        Simulator::new(Arc::new(model.clone()), TimeMode::Logical, 3).unwrap()
    }

    fn greedy(depth: u32) -> EngineConfig {
        EngineConfig { strategy: StrategyKind::Greedy { depth }, input_bias: 1.0, ..Default::default() }
    }

    #[test]
    fn toy1_reaches_full_coverage() {
        let m = toy1();
        let report = run(&m, &mut sim(&m), &greedy(2)).unwrap();
        assert_eq!(report.verdict, Verdict::CoverageReached);
        assert_eq!(report.trace, vec![ActionLabel::input("a"), ActionLabel::output("x")]);
        assert_eq!(report.transitions_taken, 2);
        assert_eq!(report.states_visited(), 3);
        assert_eq!(report.coverage_curve.last().unwrap().transitions, report.transitions_taken);
    }

    #[test]
    fn toy1_with_default_bias_still_covers() {
        let m = toy1();
        for seed in 0..20 {
            let cfg = EngineConfig { seed, ..greedy(2) };
            let cfg = EngineConfig { input_bias: 0.5, ..cfg };
            let report = run(&m, &mut sim(&m), &cfg).unwrap();
            assert_eq!(report.verdict, Verdict::CoverageReached);
            assert!(report.trace.ends_with(&[ActionLabel::input("a"), ActionLabel::output("x")]));
        }
    }

    #[test]
    fn relabelled_output_is_caught() {
        let m = toy1_with_y();
        let mut imp = sim(&m);
        imp.mutate(&FaultSpec::RelabelOutput { source: 1, from: "x".into(), target: 2, to: "y".into() }).unwrap();
        let report = run(&m, &mut imp, &greedy(2)).unwrap();
        assert_eq!(report.verdict, Verdict::FailUnexpectedOutput { output: "y".into() });
        assert_eq!(report.trace, vec![ActionLabel::input("a")]);
        assert_eq!(report.transitions_taken, 1);
    }

    #[test]
    fn dropped_output_is_caught_as_quiescence() {
        let m = toy1();
        let mut imp = sim(&m);
        imp.mutate(&FaultSpec::DropOutput { source: 1, output: "x".into(), target: 2 }).unwrap();
        let report = run(&m, &mut imp, &greedy(2)).unwrap();
        assert_eq!(report.verdict, Verdict::FailUnexpectedQuiescence);
        assert_eq!(report.trace, vec![ActionLabel::input("a")]);
    }

    #[test]
    fn budget_is_respected() {
        let m = toy1();
        let cfg = EngineConfig { coverage_target: None, max_transitions: 17, ..greedy(2) };
        let report = run(&m, &mut sim(&m), &cfg).unwrap();
        assert_eq!(report.verdict, Verdict::BudgetExhausted);
        assert_eq!(report.transitions_taken, 17);
        assert_eq!(report.trace.len(), 17);
    }

    #[test]
    fn undercompleted_model_is_rejected() {
        let m = toy1().strip_delta();
        let err = run(&m, &mut sim(&m), &greedy(2)).unwrap_err();
        assert!(matches!(err, EngineError::NotDeltaComplete));
    }

    #[test]
    fn bad_config_is_rejected() {
        let m = toy1();
        for cfg in [
            EngineConfig { coverage_target: Some(0.0), ..Default::default() },
            EngineConfig { coverage_target: Some(1.5), ..Default::default() },
            EngineConfig { input_bias: -0.1, ..Default::default() },
            EngineConfig { strategy: StrategyKind::Greedy { depth: 0 }, ..Default::default() },
        ] {
            assert!(matches!(run(&m, &mut sim(&m), &cfg), Err(EngineError::Config(_))));
        }
    }

    #[test]
    fn branch_choice() {
        let m = toy1();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let at1 = m.next_actions(&StateSet::singleton(1));
        assert_eq!(choose_branch(&m, &at1, 1.0, &mut rng), Branch::Listen);
        let at0 = m.next_actions(&StateSet::singleton(0));
        assert_eq!(choose_branch(&m, &at0, 1.0, &mut rng), Branch::Send);
        assert_eq!(choose_branch(&m, &at0, 0.0, &mut rng), Branch::Listen);
        let sends = (0..1000).filter(|_| choose_branch(&m, &at0, 0.5, &mut rng) == Branch::Send).count();
        assert!((400..600).contains(&sends), "{sends}");

        let inputs_only = Iolts::from_triples(1, 0, &[(0, "?a", 0)]).unwrap();
        let next = inputs_only.next_actions(&StateSet::singleton(0));
        assert_eq!(choose_branch(&inputs_only, &next, 0.0, &mut rng), Branch::Send);
    }

    #[test]
    fn goal_rounding() {
        assert_eq!(coverage_goal(0.9875, 800), 790);
        assert_eq!(coverage_goal(1.0, 3), 3);
        assert_eq!(coverage_goal(0.5, 3), 2);
        assert_eq!(coverage_goal(0.1, 10), 1);
    }

    #[test]
    fn report_json_shape() {
        let m = toy1();
        let report = run(&m, &mut sim(&m), &greedy(2)).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["verdict"], "coverage-reached");
        assert_eq!(json["trace"], serde_json::json!(["?a", "!x"]));
    }
}
