use std::sync::atomic::{AtomicU64, Ordering};

use crate::iolts::StateId;

static LINEAGES: AtomicU64 = AtomicU64::new(1);

/// Identifies the contents of a [`Visited`] set: sets only ever grow, so the
/// pair (lineage, size) pins down exactly which states are in it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VisitedStamp {
    lineage: u64,
    len: usize,
}

/// Grow-only set of states the tester has reached.
#[derive(Debug)]
pub struct Visited {
    seen: Vec<bool>,
    len: usize,
    lineage: u64,
}

impl Visited {
    pub fn new(state_count: usize) -> Self {
        Visited { seen: vec![false; state_count], len: 0, lineage: LINEAGES.fetch_add(1, Ordering::Relaxed) }
    }

    pub fn from_states(state_count: usize, states: impl IntoIterator<Item = StateId>) -> Self {
        let mut v = Visited::new(state_count);
        for q in states {
            v.insert(q);
        }
        v
    }

    pub fn insert(&mut self, q: StateId) -> bool {
        let slot = &mut self.seen[q as usize];
        if *slot {
            false
        } else {
            *slot = true;
            self.len += 1;
            true
        }
    }

    pub fn contains(&self, q: StateId) -> bool {
        self.seen[q as usize]
    }

    /// 1 if `q` has not been visited yet, else 0.
    #[inline]
    pub fn covered(&self, q: StateId) -> u32 {
        u32::from(!self.seen[q as usize])
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn state_count(&self) -> usize {
        self.seen.len()
    }

    pub fn stamp(&self) -> VisitedStamp {
        VisitedStamp { lineage: self.lineage, len: self.len }
    }

    /// True if every state recorded under `earlier` is still in this set.
    pub fn extends(&self, earlier: VisitedStamp) -> bool {
        earlier.lineage == self.lineage && earlier.len <= self.len
    }
}

impl Clone for Visited {
    /// A clone can diverge from its origin, so it starts a new lineage.
    fn clone(&self) -> Self {
        Visited { seen: self.seen.clone(), len: self.len, lineage: LINEAGES.fetch_add(1, Ordering::Relaxed) }
    }
}
