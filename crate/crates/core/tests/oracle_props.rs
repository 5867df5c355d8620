//! Structural properties of the offline optimum, checked against a naive
//! forward-scanning Belady written here.

use std::cmp::Reverse;
use std::collections::HashMap;

use guardcache::oracle::{belady_simulate, brute_force_opt, current_labels, opt_cost, rb_random_run};
use guardcache::{PageId, Trace};
use proptest::prelude::*;

struct Step {
    t: usize,
    /// Cache right after serving request `t`.
    cache: Vec<PageId>,
    /// Page evicted while serving `t`, with its last use before `t`.
    evicted: Option<(PageId, usize)>,
}

/// Belady with the same tie-break (furthest next request, then least
/// recently used, then larger id), one linear scan per lookup.
fn naive_belady(trace: &Trace, k: usize) -> (u64, Vec<Step>) {
    let pages: Vec<PageId> = trace.pages().collect();
    let n = pages.len();
    let next_after = |p: PageId, t: usize| (t + 1..=n).find(|&s| pages[s - 1] == p).unwrap_or(n + 1);
    let mut cache: Vec<PageId> = Vec::new();
    let mut last: HashMap<PageId, usize> = HashMap::new();
    let mut misses = 0;
    let mut steps = Vec::new();
    for t in 1..=n {
        let p = pages[t - 1];
        let mut evicted = None;
        if !cache.contains(&p) {
            misses += 1;
            if cache.len() == k {
                let &v = cache
                    .iter()
                    .max_by_key(|&&q| (next_after(q, t), Reverse(last[&q]), q))
                    .unwrap();
                cache.retain(|&q| q != v);
                evicted = Some((v, last[&v]));
            }
            cache.push(p);
        }
        last.insert(p, t);
        steps.push(Step {
            t,
            cache: cache.clone(),
            evicted,
        });
    }
    (misses, steps)
}

fn instance(max_n: usize, max_u: u64, max_k: usize) -> impl Strategy<Value = (Trace, usize)> {
    (1..=max_u, 1..=max_k).prop_flat_map(move |(u, k)| {
        prop::collection::vec(0..u, 1..=max_n).prop_map(move |v| (Trace::from_pages(v), k))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn engine_matches_naive_belady((trace, k) in instance(60, 8, 5)) {
        let out = belady_simulate(&trace, k);
        let (misses, steps) = naive_belady(&trace, k);
        prop_assert_eq!(out.misses, misses);
        let events: Vec<(usize, PageId)> =
            steps.iter().filter_map(|s| s.evicted.map(|(v, _)| (s.t, v))).collect();
        prop_assert_eq!(&out.eviction_events, &events);
        // Labels: y_i = 1 iff p_i is evicted after t_i and before T_i.
        let mut expected = vec![false; trace.len()];
        for s in &steps {
            if let Some((_, last_use)) = s.evicted {
                expected[last_use - 1] = true;
            }
        }
        prop_assert_eq!(out.labels, expected);
    }

    #[test]
    fn belady_is_optimal((trace, k) in instance(14, 5, 3)) {
        prop_assert_eq!(opt_cost(&trace, k), brute_force_opt(&trace, k).unwrap());
    }

    #[test]
    fn ones_are_requested_after_zeros((trace, k) in instance(30, 7, 4)) {
        let sentinel = trace.sentinel();
        let (_, steps) = naive_belady(&trace, k);
        for s in &steps {
            let labels = current_labels(&trace, k, s.t, &s.cache);
            for o in &labels.ones {
                for z in &labels.zeros {
                    let (no, nz) = (labels.next[o], labels.next[z]);
                    prop_assert!(no > nz || (no == sentinel && nz == sentinel),
                        "t = {}: 1-page {o} next {no}, 0-page {z} next {nz}", s.t);
                }
            }
        }
    }

    #[test]
    fn evicted_pages_come_back_to_a_fully_requested_cache((trace, k) in instance(60, 8, 5)) {
        let (_, steps) = naive_belady(&trace, k);
        let pages: Vec<PageId> = trace.pages().collect();
        let mut evicted_at: HashMap<PageId, usize> = HashMap::new();
        for i in 0..steps.len() {
            let t = steps[i].t;
            let p = pages[t - 1];
            let before: &[PageId] = if i == 0 { &[] } else { &steps[i - 1].cache };
            if !before.contains(&p) {
                if let Some(&mu) = evicted_at.get(&p) {
                    // The request at mu loaded its own page, so the window
                    // includes mu.
                    for &q in before {
                        prop_assert!((mu..t).any(|s| pages[s - 1] == q),
                            "{q} cached at {t} but not requested since {p} was evicted at {mu}");
                    }
                }
            }
            if let Some((v, _)) = steps[i].evicted {
                evicted_at.insert(v, t);
            }
        }
    }

    #[test]
    fn rb_compliant_zero_pages_match_opt((trace, k) in instance(14, 6, 3), seed in 0u64..1000) {
        let sentinel = trace.sentinel();
        let (_, opt_steps) = naive_belady(&trace, k);
        let finite_zeros = |t: usize, cache: &[PageId]| {
            let l = current_labels(&trace, k, t, cache);
            let finite: Vec<PageId> = l.zeros.iter().copied().filter(|z| l.next[z] != sentinel).collect();
            (finite, l.zeros.len())
        };
        let mut mismatch = None;
        let cost = rb_random_run(&trace, k, seed, |t, cache| {
            if mismatch.is_none() {
                let ours = finite_zeros(t, cache);
                let theirs = finite_zeros(t, &opt_steps[t - 1].cache);
                if ours != theirs {
                    mismatch = Some((t, ours, theirs));
                }
            }
        });
        prop_assert_eq!(mismatch, None);
        prop_assert_eq!(cost, opt_cost(&trace, k));
    }
}

#[test]
fn documented_examples() {
    let t = Trace::from_pages([0u64, 1, 2, 1, 0]);
    assert_eq!(opt_cost(&t, 2), 4);
    assert_eq!(belady_simulate(&t, 2).labels, vec![true, false, true, false, false]);
    assert_eq!(opt_cost(&Trace::from_pages([0u64, 1, 0, 1]), 1), 4);
    assert_eq!(opt_cost(&Trace::from_pages([0u64, 1, 0, 2, 0]), 2), 3);
    assert_eq!(brute_force_opt(&Trace::from_pages([0u64]), 3).unwrap(), 1);
}
