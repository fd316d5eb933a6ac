//! Test-case selection: which enabled input to send next.

mod path_tree;
mod visited;

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::iolts::{ActionKind, Iolts, LabelId, StateSet};

pub use path_tree::{advance, grow, pick_input, GrowOptions, GrowStats, PathTree, Pick};
pub use visited::{Visited, VisitedStamp};

/// Lookahead depth used when none is given.
pub const DEFAULT_DEPTH: u32 = 5;

/// Uniform choice from a non-empty set.
///
/// # Panics
/// Panics if `options` is empty.
pub fn random_pick<T: Copy>(options: &BTreeSet<T>, rng: &mut ChaCha8Rng) -> T {
    assert!(!options.is_empty(), "random_pick needs at least one option");
    let k = rng.random_range(0..options.len());
    *options.iter().nth(k).unwrap()
}

/// Strategy selector, as it appears in configs and reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StrategyKind {
    Random,
    Greedy { depth: u32 },
}

impl StrategyKind {
    pub fn build(self) -> Box<dyn Strategy + Send> {
        match self {
            StrategyKind::Random => Box::new(RandomStrategy),
            StrategyKind::Greedy { depth } => Box::new(GreedyState::new(depth)),
        }
    }

    /// Short identifier used in CSV output, e.g. `random` or `greedy5`.
    pub fn id(&self) -> String {
        match self {
            StrategyKind::Random => "random".into(),
            StrategyKind::Greedy { depth } => format!("greedy{depth}"),
        }
    }
}

pub trait Strategy {
    /// Chooses one input from the non-empty set `options`, all of which are
    /// enabled in `qs`.
    fn pick_input(
        &mut self,
        model: &Iolts,
        qs: &StateSet,
        options: &BTreeSet<LabelId>,
        visited: &Visited,
        rng: &mut ChaCha8Rng,
    ) -> LabelId;

    /// Called after every performed action (sent input, received output or
    /// observed quiescence).
    fn observe(&mut self, _model: &Iolts, _label: LabelId) {}
}

/// The uniform baseline.
#[derive(Clone, Copy, Debug, Default)]
pub struct RandomStrategy;

impl Strategy for RandomStrategy {
    fn pick_input(
        &mut self,
        _model: &Iolts,
        _qs: &StateSet,
        options: &BTreeSet<LabelId>,
        _visited: &Visited,
        rng: &mut ChaCha8Rng,
    ) -> LabelId {
        random_pick(options, rng)
    }
}

/// Greedy lookahead over path-trees, reusing subtrees between steps.
#[derive(Clone, Debug)]
pub struct GreedyState {
    paths: Vec<PathTree>,
    depth: u32,
    opts: GrowOptions,
    stats: GrowStats,
    last_stamp: Option<VisitedStamp>,
}

impl GreedyState {
    pub fn new(depth: u32) -> Self {
        assert!(depth >= 1, "lookahead depth must be at least 1");
        GreedyState { paths: Vec::new(), depth, opts: GrowOptions::default(), stats: GrowStats::default(), last_stamp: None }
    }

    pub fn with_pruning(mut self, prune: bool) -> Self {
        self.opts.prune = prune;
        self
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn paths(&self) -> &[PathTree] {
        &self.paths
    }

    pub fn stats(&self) -> GrowStats {
        self.stats
    }

    pub fn clear(&mut self) {
        self.paths.clear();
        self.last_stamp = None;
    }

    /// Runs the greedy selection and returns the preferred actions.
    pub fn preferred(&mut self, model: &Iolts, qs: &StateSet, options: &BTreeSet<LabelId>, visited: &Visited) -> Pick {
        // Stored values are only upper bounds if the visited set has grown
        // monotonically since they were computed.
        if let Some(stamp) = self.last_stamp {
            if !visited.extends(stamp) {
                self.paths.clear();
            }
        }
        self.last_stamp = Some(visited.stamp());
        pick_input(model, &mut self.paths, qs, self.depth, options, visited, self.opts, &mut self.stats)
    }

    pub fn advance(&mut self, label: LabelId) {
        advance(&mut self.paths, label);
    }
}

impl Strategy for GreedyState {
    fn pick_input(
        &mut self,
        model: &Iolts,
        qs: &StateSet,
        options: &BTreeSet<LabelId>,
        visited: &Visited,
        rng: &mut ChaCha8Rng,
    ) -> LabelId {
        let pick = self.preferred(model, qs, options, visited);
        random_pick(&pick.pref, rng)
    }

    fn observe(&mut self, model: &Iolts, label: LabelId) {
        // Quiescence is a self-loop: the trees rooted here stay valid.
        if model.kind(label) != ActionKind::Delta {
            self.advance(label);
        }
    }
}
