//! Random run-to-completion statespaces and synthesized mutants.
//!
//! A model is built in three stages: `p` random components with `N` states and
//! `λ` uniformly targeted edges each, their interleaving product, and the
//! expansion of every product edge into one input followed by `r` outputs.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::iolts::{ActionKind, ActionLabel, Iolts, IoltsBuilder, LabelId, ModelError, StateId, StateSet};
use crate::scc::tarjan;
use crate::sim::FaultSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum LabelMode {
    /// Every action id gets its own input and output names.
    Fresh,
    /// Names are drawn from `symbols` input and `symbols` output names, which
    /// may make a model nondeterministic and trigger a retry.
    SmallAlphabet { symbols: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    /// States per component.
    pub n: usize,
    /// Outgoing edges per component state.
    pub lambda: usize,
    /// Outputs following each input.
    pub r: usize,
    /// Number of components.
    pub p: usize,
    pub seed: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_labels")]
    pub labels: LabelMode,
    /// Keep the largest strongly connected part instead of retrying.
    #[serde(default)]
    pub extract_scc: bool,
}

fn default_attempts() -> u32 {
    1000
}

fn default_labels() -> LabelMode {
    LabelMode::Fresh
}

impl GenParams {
    pub fn new(n: usize, lambda: usize, r: usize, p: usize, seed: u64) -> Self {
        GenParams { n, lambda, r, p, seed, max_attempts: default_attempts(), labels: LabelMode::Fresh, extract_scc: false }
    }

    pub fn check(&self) -> Result<(), GenError> {
        if self.n == 0 || self.lambda == 0 || self.p == 0 {
            return Err(GenError::Params("N, lambda and p must be at least 1".into()));
        }
        if self.max_attempts == 0 {
            return Err(GenError::Params("max_attempts must be at least 1".into()));
        }
        if let LabelMode::SmallAlphabet { symbols: 0 } = self.labels {
            return Err(GenError::Params("a small alphabet needs at least one symbol".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("no acceptable model after {attempts} attempts; last rejection: {reason}")]
    Exhausted { attempts: u32, reason: String },
    #[error("found only {found} of {wanted} distinguishable mutants in {draws} draws")]
    TooFewMutants { wanted: usize, found: usize, draws: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub source: u32,
    pub action: u32,
    pub target: u32,
}

/// A rooted digraph whose edges carry abstract action ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Digraph {
    pub state_count: usize,
    pub initial: u32,
    pub edges: Vec<Edge>,
}

impl Digraph {
    fn out_edges(&self) -> Vec<Vec<Edge>> {
        let mut adj = vec![Vec::new(); self.state_count];
        for e in &self.edges {
            adj[e.source as usize].push(*e);
        }
        adj
    }
}

/// `n` states with `lambda` edges each; targets are uniform over all states and
/// action ids run from `first_action` upwards.
pub fn gen_component(n: usize, lambda: usize, first_action: u32, rng: &mut impl Rng) -> Digraph {
    let mut edges = Vec::with_capacity(n * lambda);
    let mut action = first_action;
    for s in 0..n as u32 {
        for _ in 0..lambda {
            edges.push(Edge { source: s, action, target: rng.random_range(0..n as u32) });
            action += 1;
        }
    }
    Digraph { state_count: n, initial: 0, edges }
}

/// Interleaving product of components over disjoint action ids. Only states
/// reachable from the tuple of initial states are kept, numbered in
/// breadth-first order.
pub fn compose(components: &[Digraph]) -> Digraph {
    assert!(!components.is_empty(), "compose needs at least one component");
    if components.len() == 1 {
        return components[0].clone();
    }
    let adj: Vec<_> = components.iter().map(Digraph::out_edges).collect();
    let start: Vec<u32> = components.iter().map(|c| c.initial).collect();
    let mut index: HashMap<Vec<u32>, u32> = HashMap::from([(start.clone(), 0)]);
    let mut queue = VecDeque::from([start]);
    let mut edges = Vec::new();
    while let Some(tuple) = queue.pop_front() {
        let source = index[&tuple];
        for (i, comp) in adj.iter().enumerate() {
            for e in &comp[tuple[i] as usize] {
                let mut next = tuple.clone();
                next[i] = e.target;
                let fresh = index.len() as u32;
                let target = *index.entry(next.clone()).or_insert_with(|| {
                    queue.push_back(next);
                    fresh
                });
                edges.push(Edge { source, action: e.action, target });
            }
        }
    }
    Digraph { state_count: index.len(), initial: 0, edges }
}

/// Replaces every edge `s -id-> t` by `s -?in_id-> m1 -!o1-> .. -!or-> t` with
/// fresh intermediate states numbered after the graph's own, then adds the
/// quiescence loops.
pub fn expand_rtc(g: &Digraph, r: usize, labels: LabelMode, rng: &mut impl Rng) -> Result<Iolts, ModelError> {
    let mut input_names: HashMap<u32, String> = HashMap::new();
    let mut output_names: HashMap<u32, Vec<String>> = HashMap::new();
    let mut actions: Vec<u32> = g.edges.iter().map(|e| e.action).collect();
    actions.sort_unstable();
    actions.dedup();
    for &a in &actions {
        let (input, outputs) = match labels {
            LabelMode::Fresh => (format!("in{a}"), (0..r).map(|k| format!("out{a}_{k}")).collect()),
            LabelMode::SmallAlphabet { symbols } => (
                format!("in{}", rng.random_range(0..symbols)),
                (0..r).map(|_| format!("out{}", rng.random_range(0..symbols))).collect(),
            ),
        };
        input_names.insert(a, input);
        output_names.insert(a, outputs);
    }

    let state_count = g.state_count + g.edges.len() * r;
    let mut b = IoltsBuilder::new(state_count);
    b.initial(g.initial);
    let mut fresh = g.state_count as StateId;
    for e in &g.edges {
        let outputs = &output_names[&e.action];
        let mut at = e.source;
        for (k, label) in std::iter::once(ActionLabel::input(input_names[&e.action].clone()))
            .chain(outputs.iter().map(|o| ActionLabel::output(o.clone())))
            .enumerate()
        {
            let to = if k == r {
                e.target
            } else {
                fresh += 1;
                fresh - 1
            };
            b.transition(at, label, to);
            at = to;
        }
    }
    b.build()?.delta_completion()
}

/// A generated model with the seed that produced it.
#[derive(Clone, Debug)]
pub struct Generated {
    pub model: Iolts,
    pub params: GenParams,
    /// Seed of the accepted attempt: `params.seed + attempts - 1`.
    pub seed: u64,
    pub attempts: u32,
}

impl Generated {
    /// Sidecar metadata for the written model.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "params": self.params,
            "accepted_seed": self.seed,
            "attempts": self.attempts,
            "states": self.model.state_count(),
            "transitions": self.model.transition_count(),
        })
    }
}

fn build_once(params: &GenParams, seed: u64) -> Result<Iolts, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut components = Vec::with_capacity(params.p);
    let mut next_action = 0u32;
    for _ in 0..params.p {
        components.push(gen_component(params.n, params.lambda, next_action, &mut rng));
        next_action += (params.n * params.lambda) as u32;
    }
    let mut g = compose(&components);
    if params.extract_scc {
        g = largest_scc(&g);
    }
    expand_rtc(&g, params.r, params.labels, &mut rng)
}

/// Restricts `g` to its largest strongly connected component (ties go to the
/// one holding the initial state), renumbered in state order. The initial
/// state becomes the smallest member if the old one is dropped.
pub fn largest_scc(g: &Digraph) -> Digraph {
    let adj = g.out_edges();
    let (comp, count) = tarjan(g.state_count, |s| adj[s as usize].iter().map(|e| e.target).collect::<Vec<_>>());
    let mut sizes = vec![0usize; count];
    for &c in &comp {
        sizes[c as usize] += 1;
    }
    let home = comp[g.initial as usize];
    let best = (0..count as u32).max_by_key(|&c| (sizes[c as usize], c == home, std::cmp::Reverse(c))).unwrap();
    let mut renumber = vec![u32::MAX; g.state_count];
    let mut kept = 0u32;
    for s in 0..g.state_count {
        if comp[s] == best {
            renumber[s] = kept;
            kept += 1;
        }
    }
    let initial = if comp[g.initial as usize] == best {
        renumber[g.initial as usize]
    } else {
        0
    };
    let edges = g
        .edges
        .iter()
        .filter(|e| comp[e.source as usize] == best && comp[e.target as usize] == best)
        .map(|e| Edge { source: renumber[e.source as usize], action: e.action, target: renumber[e.target as usize] })
        .collect();
    Digraph { state_count: kept as usize, initial, edges }
}

/// Generates a model and retries with seeds `seed + 1`, `seed + 2`, .. until
/// it is deterministic, strongly connected and has well placed quiescence.
pub fn gen_model(params: &GenParams) -> Result<Generated, GenError> {
    params.check()?;
    let mut reason = String::new();
    for attempt in 0..params.max_attempts {
        let seed = params.seed.wrapping_add(u64::from(attempt));
        let model = build_once(params, seed)?;
        match model.validate(true).into_iter().find(|v| v.is_error()) {
            None => return Ok(Generated { model, params: params.clone(), seed, attempts: attempt + 1 }),
            Some(v) => reason = v.to_string(),
        }
    }
    Err(GenError::Exhausted { attempts: params.max_attempts, reason })
}

/// A specification variant carrying one fault.
#[derive(Clone, Debug)]
pub struct Mutant {
    pub model: Iolts,
    pub fault: FaultSpec,
}

/// Draws `count` single-fault mutants of `model` that an ioco tester can tell
/// apart from it within `2 |Q|` observable steps and that never emit outputs
/// forever.
pub fn gen_mutants(model: &Iolts, count: usize, rng: &mut impl Rng) -> Result<Vec<Mutant>, GenError> {
    let budget = 200 * count.max(1);
    let mut found = Vec::new();
    let mut seen = HashSet::new();
    let visible: Vec<_> = model
        .transitions()
        .iter()
        .copied()
        .filter(|t| matches!(model.kind(t.label), ActionKind::Input | ActionKind::Output))
        .collect();
    let outputs: Vec<_> = visible.iter().copied().filter(|t| model.kind(t.label) == ActionKind::Output).collect();
    let output_names: Vec<&str> = model.outputs().map(|l| model.label(l).name()).collect();
    let mut draws = 0;
    while found.len() < count && draws < budget {
        draws += 1;
        let fault = match rng.random_range(0..3) {
            0 if !visible.is_empty() => {
                let t = visible[rng.random_range(0..visible.len())];
                let new_target = rng.random_range(0..model.state_count() as StateId);
                if new_target == t.target {
                    continue;
                }
                FaultSpec::Redirect { source: t.source, label: model.label(t.label).clone(), target: t.target, new_target }
            }
            1 if !outputs.is_empty() && output_names.len() > 1 => {
                let t = outputs[rng.random_range(0..outputs.len())];
                let from = model.label(t.label).name();
                let to = output_names[rng.random_range(0..output_names.len())];
                if to == from {
                    continue;
                }
                FaultSpec::RelabelOutput { source: t.source, from: from.into(), target: t.target, to: to.into() }
            }
            2 if !outputs.is_empty() => {
                let t = outputs[rng.random_range(0..outputs.len())];
                FaultSpec::DropOutput { source: t.source, output: model.label(t.label).name().into(), target: t.target }
            }
            _ => continue,
        };
        if !seen.insert(fault.clone()) {
            continue;
        }
        let Ok(mutant) = fault.apply(model) else { continue };
        if has_output_cycle(&mutant) {
            continue;
        }
        if distinguishable(model, &mutant, 2 * model.state_count()) {
            found.push(Mutant { model: mutant, fault });
        }
    }
    if found.len() < count {
        return Err(GenError::TooFewMutants { wanted: count, found: found.len(), draws });
    }
    Ok(found)
}

/// True if some cycle consists of outputs and tau steps only, which would make
/// a run-to-completion implementation diverge.
pub fn has_output_cycle(model: &Iolts) -> bool {
    let autonomous = |q: StateId| {
        model
            .outgoing(q)
            .iter()
            .filter(|t| matches!(model.kind(t.label), ActionKind::Output | ActionKind::Tau))
            .map(|t| t.target)
            .collect::<Vec<_>>()
    };
    if (0..model.state_count() as StateId).any(|q| autonomous(q).contains(&q)) {
        return true;
    }
    let (_, count) = tarjan(model.state_count(), autonomous);
    count < model.state_count()
}

/// Bounded ioco check: is there a suspension trace of `spec` of length at most
/// `depth` after which `imp` can show an output, or quiescence, that `spec`
/// forbids? Inputs the implementation does not enable are ignored by it.
/// Both models must share one label table.
pub fn distinguishable(spec: &Iolts, imp: &Iolts, depth: usize) -> bool {
    debug_assert_eq!(spec.labels(), imp.labels());
    let delta = spec.delta_id();
    let start = (spec.initial_states(), imp.initial_states());
    let mut seen: HashSet<(StateSet, StateSet)> = HashSet::from([start.clone()]);
    let mut frontier = vec![start];
    for level in 0..=depth {
        let mut next = Vec::new();
        for (s, i) in frontier {
            let mut allowed = spec.out(&s);
            if s.iter().any(|q| spec.enables(q, delta)) {
                allowed.insert(delta);
            }
            let shown = imp_out(imp, &i);
            if !shown.is_subset(&allowed) {
                return true;
            }
            if level == depth {
                continue;
            }
            let steps = spec.next_actions(&s).into_iter().filter(|l| spec.kind(*l) == ActionKind::Input).chain(
                shown.iter().copied().filter(|l| *l == delta || allowed.contains(l)),
            );
            for l in steps {
                let pair = (spec.after(&s, l), imp_after(imp, &i, l));
                if !pair.1.is_empty() && seen.insert(pair.clone()) {
                    next.push(pair);
                }
            }
        }
        if next.is_empty() {
            return false;
        }
        frontier = next;
    }
    false
}

fn imp_out(imp: &Iolts, qs: &StateSet) -> BTreeSet<LabelId> {
    let mut out = BTreeSet::new();
    for q in qs {
        if imp.is_quiescent(q) {
            out.insert(imp.delta_id());
        }
        out.extend(imp.outgoing(q).iter().filter(|t| imp.kind(t.label) == ActionKind::Output).map(|t| t.label));
    }
    out
}

fn imp_after(imp: &Iolts, qs: &StateSet, label: LabelId) -> StateSet {
    let reached: StateSet = match imp.kind(label) {
        ActionKind::Delta => qs.iter().filter(|&q| imp.is_quiescent(q)).collect(),
        ActionKind::Input => qs
            .iter()
            .flat_map(|q| {
                let succ: Vec<_> = imp.successors(q, label).collect();
                if succ.is_empty() {
                    vec![q]
                } else {
                    succ
                }
            })
            .collect(),
        _ => qs.iter().flat_map(|q| imp.successors(q, label).collect::<Vec<_>>()).collect(),
    };
    imp.epsilon_closure(&reached)
}
