use std::collections::{BTreeMap, BTreeSet};

use rustc_hash::FxHashMap;

use super::{AccessContext, EvictionContext, Policy};
use crate::error::{Error, Result};
use crate::oracle::{furthest_key, FurthestKey};
use crate::pageset::PageSet;
use crate::trace::{PageId, Trace};

/// Least recently used.
#[derive(Debug, Default)]
pub struct Lru {
    order: BTreeMap<usize, PageId>,
    last_use: FxHashMap<PageId, usize>,
}

impl Lru {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn touch(&mut self, page: PageId, now: usize) {
        if let Some(old) = self.last_use.insert(page, now) {
            self.order.remove(&old);
        }
        self.order.insert(now, page);
    }

    pub(crate) fn forget(&mut self, page: PageId) {
        if let Some(t) = self.last_use.remove(&page) {
            self.order.remove(&t);
        }
    }

    pub(crate) fn oldest_candidate(&self, ctx: &EvictionContext<'_>) -> Option<PageId> {
        self.order.values().copied().find(|&p| ctx.is_candidate(p))
    }
}

impl Policy for Lru {
    fn name(&self) -> String {
        "lru".into()
    }

    fn choose_victim(&mut self, ctx: &mut EvictionContext<'_>) -> Result<PageId> {
        self.oldest_candidate(ctx).ok_or(Error::NoCandidates)
    }

    fn on_access(&mut self, ctx: &mut AccessContext<'_>) -> Result<()> {
        self.touch(ctx.page, ctx.now);
        Ok(())
    }

    fn on_evict(&mut self, page: PageId) {
        self.forget(page);
    }
}

/// Randomized marking: requested pages are marked, victims are drawn from
/// the unmarked ones, and a fully marked cache starts a new phase.
#[derive(Debug, Default)]
pub struct Marker {
    unmarked: PageSet,
    marked: PageSet,
}

impl Marker {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Policy for Marker {
    fn name(&self) -> String {
        "marker".into()
    }

    fn choose_victim(&mut self, ctx: &mut EvictionContext<'_>) -> Result<PageId> {
        if self.unmarked.is_empty() {
            for p in self.marked.iter() {
                self.unmarked.insert(p);
            }
            self.marked.clear();
        }
        if ctx.unrestricted() {
            if let Some(p) = self.unmarked.sample(ctx.rng) {
                return Ok(p);
            }
        }
        let pool: Vec<PageId> = self.unmarked.iter().filter(|&p| ctx.is_candidate(p)).collect();
        let pool = if pool.is_empty() { ctx.candidates() } else { pool };
        if pool.is_empty() {
            return Err(Error::NoCandidates);
        }
        use rand::Rng;
        Ok(pool[ctx.rng.random_range(0..pool.len())])
    }

    fn on_access(&mut self, ctx: &mut AccessContext<'_>) -> Result<()> {
        self.unmarked.remove(ctx.page);
        self.marked.insert(ctx.page);
        Ok(())
    }

    fn on_evict(&mut self, page: PageId) {
        self.unmarked.remove(page);
        self.marked.remove(page);
    }
}

/// Offline Belady as an online-interface policy: reads true next requests
/// from the trace it was built for.
#[derive(Debug)]
pub struct Belady {
    next: Vec<usize>,
    order: BTreeSet<FurthestKey>,
    state: FxHashMap<PageId, (usize, usize)>,
}

impl Belady {
    pub fn new(trace: &Trace) -> Self {
        Belady {
            next: trace.next_occurrence().to_vec(),
            order: BTreeSet::new(),
            state: FxHashMap::default(),
        }
    }
}

impl Policy for Belady {
    fn name(&self) -> String {
        "belady".into()
    }

    fn choose_victim(&mut self, ctx: &mut EvictionContext<'_>) -> Result<PageId> {
        self.order
            .iter()
            .rev()
            .map(|&(_, _, p)| p)
            .find(|&p| ctx.is_candidate(p))
            .ok_or(Error::NoCandidates)
    }

    fn on_access(&mut self, ctx: &mut AccessContext<'_>) -> Result<()> {
        let next = self.next[ctx.now - 1];
        if let Some((n, u)) = self.state.insert(ctx.page, (next, ctx.now)) {
            self.order.remove(&furthest_key(n, u, ctx.page));
        }
        self.order.insert(furthest_key(next, ctx.now, ctx.page));
        Ok(())
    }

    fn on_evict(&mut self, page: PageId) {
        if let Some((n, u)) = self.state.remove(&page) {
            self.order.remove(&furthest_key(n, u, page));
        }
    }
}
