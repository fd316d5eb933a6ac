//! Memoised lookahead trees for greedy input selection.
//!
//! A [`PathTree`] stands for one transition `p -a-> q` together with the
//! explored continuations from `q`. Its value is the best number of unvisited
//! states along any path of `depth` transitions that starts with that
//! transition, counting `covered` once per path node.
//!
//! Values are time-dependent: the visited set grows while the tester runs.
//! A stored value computed against an older visited set is therefore an upper
//! bound of the current one, which is exactly what the pruning test needs to
//! stay exact. Every node [`grow`] reaches is recomputed against the current
//! set unless it already carries a value for that very set and depth.

use std::collections::BTreeSet;

use super::visited::{Visited, VisitedStamp};
use crate::iolts::{ActionKind, Iolts, LabelId, StateId, StateSet};

#[derive(Clone, Debug)]
pub struct PathTree {
    action: LabelId,
    state: StateId,
    next: Vec<PathTree>,
    depth: u32,
    value: u32,
    vmax: u32,
    stamp: VisitedStamp,
}

impl PathTree {
    /// A depth-1 tree for the transition `_ -action-> state`.
    pub fn leaf(action: LabelId, state: StateId, visited: &Visited) -> Self {
        PathTree {
            action,
            state,
            next: Vec::new(),
            depth: 1,
            value: visited.covered(state),
            vmax: 0,
            stamp: visited.stamp(),
        }
    }

    pub fn action(&self) -> LabelId {
        self.action
    }

    pub fn state(&self) -> StateId {
        self.state
    }

    pub fn next(&self) -> &[PathTree] {
        &self.next
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn value(&self) -> u32 {
        self.value
    }

    pub fn vmax(&self) -> u32 {
        self.vmax
    }

    pub fn into_next(self) -> Vec<PathTree> {
        self.next
    }

    /// Number of nodes in this tree.
    pub fn size(&self) -> usize {
        1 + self.next.iter().map(PathTree::size).sum::<usize>()
    }
}

/// Work counters, used to compare pruned and unpruned growth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GrowStats {
    /// Calls to grow that (re)computed a node.
    pub expansions: u64,
    /// Nodes allocated.
    pub created: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct GrowOptions {
    /// Skip children that cannot beat the best sibling found so far.
    pub prune: bool,
}

impl Default for GrowOptions {
    fn default() -> Self {
        GrowOptions { prune: true }
    }
}

/// Extends `pt` to depth `n` (`n >= depth(pt)`) and refreshes its value
/// against `visited`.
pub fn grow(model: &Iolts, pt: &mut PathTree, n: u32, visited: &Visited, opts: GrowOptions, stats: &mut GrowStats) {
    debug_assert!(n >= 1);
    let stamp = visited.stamp();
    if pt.depth == n && pt.stamp == stamp {
        return;
    }
    stats.expansions += 1;
    if n == 1 {
        pt.value = visited.covered(pt.state);
        pt.vmax = 0;
        pt.depth = 1;
        pt.stamp = stamp;
        return;
    }
    if pt.next.is_empty() {
        for t in model.outgoing(pt.state) {
            if matches!(model.kind(t.label), ActionKind::Input | ActionKind::Output) {
                pt.next.push(PathTree::leaf(t.label, t.target, visited));
                stats.created += 1;
            }
        }
    }
    let child_target = n - 1;
    let mut vmax = 0;
    for child in pt.next.iter_mut() {
        let bound = child.value + child_target.saturating_sub(child.depth);
        if !opts.prune || bound >= vmax {
            grow(model, child, child_target, visited, opts, stats);
            vmax = vmax.max(child.value);
        }
    }
    pt.vmax = vmax;
    pt.value = vmax + visited.covered(pt.state);
    pt.depth = n;
    pt.stamp = stamp;
}

/// Outcome of one greedy selection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pick {
    /// Root actions whose tree attains `best`.
    pub pref: BTreeSet<LabelId>,
    pub best: u32,
}

/// Greedy selection over `paths`: keeps the trees whose action is among
/// `options`, seeds fresh depth-1 trees from `qs` when none remain, grows all
/// of them to depth `n` and returns the actions of the best ones.
#[allow(clippy::too_many_arguments)]
pub fn pick_input(
    model: &Iolts,
    paths: &mut Vec<PathTree>,
    qs: &StateSet,
    n: u32,
    options: &BTreeSet<LabelId>,
    visited: &Visited,
    opts: GrowOptions,
    stats: &mut GrowStats,
) -> Pick {
    paths.retain(|pt| options.contains(&pt.action));
    if paths.is_empty() {
        for q in qs {
            for t in model.outgoing(q) {
                if options.contains(&t.label) {
                    paths.push(PathTree::leaf(t.label, t.target, visited));
                    stats.created += 1;
                }
            }
        }
    }
    let mut best = 0;
    let mut pref = BTreeSet::new();
    for pt in paths.iter_mut() {
        grow(model, pt, n, visited, opts, stats);
        if pt.value > best {
            best = pt.value;
            pref.clear();
            pref.insert(pt.action);
        } else if pt.value == best {
            pref.insert(pt.action);
        }
    }
    Pick { pref, best }
}

/// Replaces `paths` by the children of every tree labelled `action`.
pub fn advance(paths: &mut Vec<PathTree>, action: LabelId) {
    let old = std::mem::take(paths);
    for pt in old {
        if pt.action == action {
            paths.extend(pt.into_next());
        }
    }
}
