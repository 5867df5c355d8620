//! Offline ground truth: Belady simulation, OPT cost, Belady binary labels
//! and an exhaustive optimum used as a test oracle.
//!
//! Ties on the next-request index (only possible between pages that are
//! never requested again) go to the least recently used page, then to the
//! larger page id. Labels depend on this rule.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustc_hash::{FxHashMap, FxHashSet};

use crate::error::{Error, Result};
use crate::trace::{PageId, Trace};

/// Ordering key for furthest-in-the-future choices: larger is evicted first.
pub(crate) type FurthestKey = (usize, Reverse<usize>, PageId);

pub(crate) fn furthest_key(next: usize, last_use: usize, page: PageId) -> FurthestKey {
    (next, Reverse(last_use), page)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BeladyOutcome {
    pub misses: u64,
    /// `(request index, evicted page)` in order.
    pub eviction_events: Vec<(usize, PageId)>,
    /// `labels[i]` is `true` when the page of request `i + 1` is evicted
    /// before its next request.
    pub labels: Vec<bool>,
}

struct Engine<'a> {
    trace: &'a Trace,
    k: usize,
    order: BTreeSet<FurthestKey>,
    state: FxHashMap<PageId, (usize, usize)>,
    misses: u64,
    events: Vec<(usize, PageId)>,
}

impl<'a> Engine<'a> {
    fn new(trace: &'a Trace, k: usize) -> Self {
        assert!(k >= 1, "cache size must be at least 1");
        Engine {
            trace,
            k,
            order: BTreeSet::new(),
            state: FxHashMap::default(),
            misses: 0,
            events: Vec::new(),
        }
    }

    fn preload(&mut self, page: PageId, next: usize, last_use: usize) {
        self.state.insert(page, (next, last_use));
        self.order.insert(furthest_key(next, last_use, page));
    }

    /// Serves request `t`; returns the evicted page and its last use.
    fn serve(&mut self, t: usize) -> Option<(PageId, usize)> {
        let page = self.trace.page_at(t);
        let next = self.trace.next_at(t);
        let mut evicted = None;
        match self.state.get(&page).copied() {
            Some((old_next, old_use)) => {
                self.order.remove(&furthest_key(old_next, old_use, page));
            }
            None => {
                self.misses += 1;
                if self.state.len() == self.k {
                    let (_, Reverse(last_use), victim) =
                        self.order.pop_last().expect("full cache");
                    self.state.remove(&victim);
                    self.events.push((t, victim));
                    evicted = Some((victim, last_use));
                }
            }
        }
        self.state.insert(page, (next, t));
        self.order.insert(furthest_key(next, t, page));
        evicted
    }
}

pub fn belady_simulate(trace: &Trace, k: usize) -> BeladyOutcome {
    let mut eng = Engine::new(trace, k);
    let mut labels = vec![false; trace.len()];
    for t in 1..=trace.len() {
        if let Some((_, last_use)) = eng.serve(t) {
            labels[last_use - 1] = true;
        }
    }
    BeladyOutcome {
        misses: eng.misses,
        eviction_events: eng.events,
        labels,
    }
}

pub fn opt_cost(trace: &Trace, k: usize) -> u64 {
    belady_simulate(trace, k).misses
}

pub fn belady_labels(trace: &Trace, k: usize) -> Vec<bool> {
    belady_simulate(trace, k).labels
}

/// Cached page with the largest next-request index.
pub fn fitf_page(
    cached: &[PageId],
    next_of: impl Fn(PageId) -> usize,
    last_use_of: impl Fn(PageId) -> usize,
) -> Result<PageId> {
    cached
        .iter()
        .copied()
        .max_by_key(|&p| furthest_key(next_of(p), last_use_of(p), p))
        .ok_or(Error::NoCandidates)
}

/// Split of a cache into pages that Belady, restarted from that cache,
/// evicts before their next request (`ones`) and the rest (`zeros`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CurrentLabels {
    pub ones: Vec<PageId>,
    pub zeros: Vec<PageId>,
    /// Next request index of every classified page.
    pub next: FxHashMap<PageId, usize>,
}

fn next_and_last_use(trace: &Trace, after: usize, page: PageId) -> (usize, usize) {
    let next = (after + 1..=trace.len())
        .find(|&t| trace.page_at(t) == page)
        .unwrap_or(trace.sentinel());
    let last = (1..=after.min(trace.len()))
        .rev()
        .find(|&t| trace.page_at(t) == page)
        .unwrap_or(0);
    (next, last)
}

/// Labels the pages of `cached` as seen right after serving request `after`,
/// by rerunning Belady from that cache over the remaining requests.
/// Quadratic; meant for test-sized traces.
pub fn current_labels(trace: &Trace, k: usize, after: usize, cached: &[PageId]) -> CurrentLabels {
    let mut eng = Engine::new(trace, k.max(cached.len()));
    let mut next = FxHashMap::default();
    let mut pending: FxHashSet<PageId> = FxHashSet::default();
    for &p in cached {
        let (nx, last) = next_and_last_use(trace, after, p);
        eng.preload(p, nx, last);
        next.insert(p, nx);
        pending.insert(p);
    }
    let mut ones = Vec::new();
    for t in after + 1..=trace.len() {
        if pending.is_empty() {
            break;
        }
        let page = trace.page_at(t);
        if let Some((victim, _)) = eng.serve(t) {
            if pending.remove(&victim) {
                ones.push(victim);
            }
        }
        pending.remove(&page);
    }
    let mut zeros: Vec<PageId> = cached.iter().copied().filter(|p| !ones.contains(p)).collect();
    ones.sort_unstable();
    zeros.sort_unstable();
    CurrentLabels { ones, zeros, next }
}

/// Exhaustive optimum over all eviction choices, memoized on
/// `(position, cache contents)`. Limited to `n <= 16` and `universe <= 6`.
pub fn brute_force_opt(trace: &Trace, k: usize) -> Result<u64> {
    if trace.len() > 16 || trace.universe_size() > 6 {
        return Err(Error::InstanceTooLarge(format!(
            "n = {}, universe = {}",
            trace.len(),
            trace.universe_size()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let mut ids: HashMap<PageId, u32> = HashMap::new();
    let seq: Vec<u32> = trace
        .pages()
        .map(|p| {
            let next = ids.len() as u32;
            *ids.entry(p).or_insert(next)
        })
        .collect();

    fn go(seq: &[u32], k: u32, pos: usize, mask: u8, memo: &mut HashMap<(usize, u8), u64>) -> u64 {
        if pos == seq.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(pos, mask)) {
            return v;
        }
        let bit = 1u8 << seq[pos];
        let best = if mask & bit != 0 {
            go(seq, k, pos + 1, mask, memo)
        } else if mask.count_ones() < k {
            1 + go(seq, k, pos + 1, mask | bit, memo)
        } else {
            (0..8)
                .filter(|q| mask & (1 << q) != 0)
                .map(|q| 1 + go(seq, k, pos + 1, (mask & !(1 << q)) | bit, memo))
                .min()
                .expect("full cache has a page")
        };
        memo.insert((pos, mask), best);
        best
    }

    let mut memo = HashMap::new();
    Ok(go(&seq, k as u32, 0, 0, &mut memo))
}

/// Pages it is safe for an optimal policy to evict at request `t`, given the
/// current cache: Belady's eventual victims from this state plus any cached
/// page that is never requested again (those are interchangeable).
pub fn true_one_pages(trace: &Trace, k: usize, t: usize, cached: &[PageId]) -> Vec<PageId> {
    let labels = current_labels(trace, k, t - 1, cached);
    let mut ones = labels.ones;
    if !ones.is_empty() {
        let sentinel = trace.sentinel();
        for &p in &labels.zeros {
            if labels.next[&p] == sentinel {
                ones.push(p);
            }
        }
        ones.sort_unstable();
    }
    ones
}

/// Misses of a policy that evicts a uniformly random true 1-page on every
/// eviction. Optimal by construction; used as an executable check of that
/// claim.
pub fn rb_random_policy_cost(trace: &Trace, k: usize, seed: u64) -> u64 {
    rb_random_run(trace, k, seed, |_, _| {})
}

/// As [`rb_random_policy_cost`], calling `observe(t, cache)` after serving
/// each request.
pub fn rb_random_run(
    trace: &Trace,
    k: usize,
    seed: u64,
    mut observe: impl FnMut(usize, &[PageId]),
) -> u64 {
    use rand::Rng;
    assert!(k >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cache: Vec<PageId> = Vec::with_capacity(k);
    let mut misses = 0;
    for t in 1..=trace.len() {
        let page = trace.page_at(t);
        if !cache.contains(&page) {
            misses += 1;
            if cache.len() == k {
                let ones = true_one_pages(trace, k, t, &cache);
                let victim = ones[rng.random_range(0..ones.len())];
                cache.retain(|&p| p != victim);
            }
            cache.push(page);
        }
        observe(t, &cache);
    }
    misses
}
