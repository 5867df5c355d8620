//! Phase-based guarding around any eviction policy.
//!
//! Execution is split into phases. A phase starts when a miss hits a full
//! cache while the set `U` of unrequested old pages is empty: every cached
//! page becomes old and enters `U`, and all guards are dropped. A miss on a
//! page already evicted in the current phase is taken as evidence of a
//! prediction error: a uniformly random page of `U` is evicted instead of
//! asking the base policy, and the requested page is guarded until the
//! phase ends. Any other miss lets the base policy choose among unguarded
//! pages.
//!
//! Besides the algorithm itself, the wrapper keeps per-phase counters
//! ([`PhaseStats`]) and records violations of its structural invariants.

use std::io::Write;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pageset::PageSet;
use crate::policy::{AccessContext, EvictionContext, Policy};
use crate::predict::PredictionKind;
use crate::trace::PageId;

/// Counters for one phase. "New" pages are those not cached when the phase
/// began.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub q: usize,
    /// Distinct new pages requested in the phase.
    pub c_q: u64,
    /// Eviction-causing misses on new pages.
    pub n_q: u64,
    /// Eviction-causing misses on old pages.
    pub o_q: u64,
    /// Part of `n_q` that evicted a new page.
    pub n_q_new: u64,
    /// Part of `n_q` that evicted an old page.
    pub n_q_old: u64,
}

impl PhaseStats {
    fn new(q: usize) -> Self {
        PhaseStats {
            q,
            ..Default::default()
        }
    }
}

pub const PHASE_CSV_HEADER: [&str; 6] = ["phase", "c_q", "n_q", "o_q", "n_q_new", "n_q_old"];

impl PhaseStats {
    pub fn csv_fields(&self) -> [String; 6] {
        [
            self.q.to_string(),
            self.c_q.to_string(),
            self.n_q.to_string(),
            self.o_q.to_string(),
            self.n_q_new.to_string(),
            self.n_q_old.to_string(),
        ]
    }
}

pub fn write_phase_csv<W: Write>(out: W, phases: &[PhaseStats]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PHASE_CSV_HEADER)?;
    for p in phases {
        w.write_record(p.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

/// What a guarded run leaves behind.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardReport {
    pub phases: Vec<PhaseStats>,
    /// Structural invariant violations seen during the run.
    pub violations: Vec<String>,
    /// Number of times a page was guarded.
    pub guard_events: u64,
    /// Largest size of the guarded set at any point.
    pub max_guarded: usize,
}

impl GuardReport {
    pub fn total_distinct_new(&self) -> u64 {
        self.phases.iter().map(|p| p.c_q).sum()
    }

    pub fn total_old_evictions(&self) -> u64 {
        self.phases.iter().map(|p| p.n_q_old).sum()
    }

    /// Index of the last phase.
    pub fn last_phase(&self) -> usize {
        self.phases.len().saturating_sub(1)
    }
}

/// Result of checking a report against the phase-accounting bounds.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCheck {
    /// Per-phase bounds and the lower bound on OPT.
    pub violations: Vec<String>,
    /// Whether `opt <= sum n_q_old`; `None` when no phase reset happened.
    /// Kept apart from `violations` because it does not hold in general
    /// once compulsory misses are counted (`a b c` with `k = 2` already
    /// gives OPT = 3 against a single old-page eviction).
    pub opt_upper_bound: Option<bool>,
}

impl PhaseCheck {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks per-phase and global accounting for a guarded run whose optimum
/// costs `opt` misses: `n_q = n_q_new + n_q_old`, `n_q <= 2 c_q` and
/// `n_q_old <= c_q` per phase, `sum c_q / 2 <= opt` overall, and separately
/// `opt <= sum n_q_old`.
pub fn phase_report(report: &GuardReport, opt: u64) -> PhaseCheck {
    let mut violations = Vec::new();
    for p in &report.phases {
        if p.n_q != p.n_q_new + p.n_q_old {
            violations.push(format!("phase {}: n_q {} != n_new {} + n_old {}", p.q, p.n_q, p.n_q_new, p.n_q_old));
        }
        if p.n_q > 2 * p.c_q {
            violations.push(format!("phase {}: n_q {} > 2 c_q = {}", p.q, p.n_q, 2 * p.c_q));
        }
        if p.n_q_old > p.c_q {
            violations.push(format!("phase {}: n_q_old {} > c_q {}", p.q, p.n_q_old, p.c_q));
        }
    }
    let c_sum = report.total_distinct_new();
    if c_sum > 2 * opt {
        violations.push(format!("sum c_q / 2 = {} > OPT = {opt}", c_sum as f64 / 2.0));
    }
    let opt_upper_bound = (report.last_phase() >= 1).then(|| opt <= report.total_old_evictions());
    PhaseCheck {
        violations,
        opt_upper_bound,
    }
}

/// Phase stamps per page; a field equal to the current stamp is set.
#[derive(Clone, Copy, Debug, Default)]
struct Marks {
    old: u32,
    requested: u32,
    evicted: u32,
}

/// Wraps a base policy with phase-based guarding.
pub struct Guard<P> {
    base: P,
    unrequested_old: PageSet,
    guarded: PageSet,
    marks: FxHashMap<PageId, Marks>,
    loads_this_phase: FxHashMap<PageId, u8>,
    report: GuardReport,
    audit: bool,
    scratch: PageSet,
}

impl<P: Policy> Guard<P> {
    pub fn new(base: P) -> Self {
        Guard {
            base,
            unrequested_old: PageSet::new(),
            guarded: PageSet::new(),
            marks: FxHashMap::default(),
            loads_this_phase: FxHashMap::default(),
            report: GuardReport {
                phases: vec![PhaseStats::new(0)],
                ..Default::default()
            },
            audit: false,
            scratch: PageSet::new(),
        }
    }

    /// Enables the per-request structural checks (load counts and a full
    /// `guarded ∩ U` scan). Eviction-time checks are always on.
    pub fn with_audit(mut self, audit: bool) -> Self {
        self.audit = audit;
        self
    }

    pub fn base(&self) -> &P {
        &self.base
    }

    pub fn report(&self) -> &GuardReport {
        &self.report
    }

    pub fn phase(&self) -> usize {
        self.report.last_phase()
    }

    pub fn guarded(&self) -> &PageSet {
        &self.guarded
    }

    pub fn unrequested_old(&self) -> &PageSet {
        &self.unrequested_old
    }

    fn violation(&mut self, msg: String) {
        self.report.violations.push(msg);
    }

    fn start_phase(&mut self, cached: &PageSet) {
        self.guarded.clear();
        self.unrequested_old.clear();
        self.loads_this_phase.clear();
        let q = self.report.phases.len();
        self.report.phases.push(PhaseStats::new(q));
        let stamp = self.stamp();
        for p in cached.iter() {
            self.unrequested_old.insert(p);
            self.marks.entry(p).or_default().old = stamp;
        }
    }

    /// `U` and the guarded set live in the cache; a page evicted this phase
    /// is back in the cache only if it was guarded on its return.
    fn audit_cache(&mut self, now: usize, cached: &PageSet) {
        let mut found = Vec::new();
        if let Some(p) = self.unrequested_old.iter().find(|&p| !cached.contains(p)) {
            found.push(format!("request {now}: {p} in U but not cached"));
        }
        if let Some(p) = self.guarded.iter().find(|&p| !cached.contains(p)) {
            found.push(format!("request {now}: guarded {p} not cached"));
        }
        let stamp = self.stamp();
        if let Some(p) = self
            .marks
            .iter()
            .filter(|(_, m)| m.evicted == stamp)
            .map(|(&p, _)| p)
            .find(|&p| cached.contains(p) && !self.guarded.contains(p))
        {
            found.push(format!("request {now}: {p} evicted this phase, cached again but unguarded"));
        }
        self.report.violations.extend(found);
    }

    /// Marks equal to this value belong to the current phase.
    fn stamp(&self) -> u32 {
        self.report.phases.len() as u32
    }

    fn marks(&self, page: PageId) -> Marks {
        self.marks.get(&page).copied().unwrap_or_default()
    }

    fn stats(&mut self) -> &mut PhaseStats {
        self.report.phases.last_mut().expect("phase 0 always exists")
    }
}

impl<P: Policy> Policy for Guard<P> {
    fn name(&self) -> String {
        format!("guard:{}", self.base.name())
    }

    fn requires(&self) -> PredictionKind {
        self.base.requires()
    }

    fn start(&mut self, k: usize) {
        self.base.start(k);
    }

    fn choose_victim(&mut self, ctx: &mut EvictionContext<'_>) -> Result<PageId> {
        if self.audit {
            self.audit_cache(ctx.now, ctx.cached);
        }
        if self.unrequested_old.is_empty() {
            self.start_phase(ctx.cached);
        }
        let requested = ctx.requested;
        let stamp = self.stamp();
        let m = self.marks(requested);
        let requested_is_old = m.old == stamp;

        let victim = if m.evicted == stamp {
            let x = self
                .unrequested_old
                .sample(ctx.rng)
                .ok_or_else(|| Error::Invariant(format!("U empty on a guard miss at request {}", ctx.now)))?;
            if self.unrequested_old.contains(requested) {
                self.violation(format!("request {}: guarding {requested}, which is in U", ctx.now));
            }
            self.guarded.insert(requested);
            self.report.guard_events += 1;
            self.report.max_guarded = self.report.max_guarded.max(self.guarded.len());
            x
        } else {
            if requested_is_old {
                self.violation(format!(
                    "request {}: miss on old page {requested} bypassed the guard branch",
                    ctx.now
                ));
            }
            let excluded: &PageSet = if ctx.excluded.is_empty() {
                &self.guarded
            } else {
                self.scratch.clear();
                for p in self.guarded.iter().chain(ctx.excluded.iter()) {
                    self.scratch.insert(p);
                }
                &self.scratch
            };
            let mut inner = EvictionContext {
                now: ctx.now,
                requested,
                prediction: ctx.prediction,
                cached: ctx.cached,
                excluded,
                predictions: &mut *ctx.predictions,
                rng: &mut *ctx.rng,
            };
            if !inner.has_candidates() {
                return Err(Error::Invariant(format!(
                    "no unguarded page to evict at request {}",
                    ctx.now
                )));
            }
            let x = self.base.choose_victim(&mut inner)?;
            if !inner.is_candidate(x) {
                return Err(Error::Invariant(format!(
                    "`{}` chose {x} at request {}, outside the unguarded candidates",
                    self.base.name(),
                    ctx.now
                )));
            }
            x
        };

        if self.guarded.contains(victim) {
            self.violation(format!("request {}: guarded page {victim} evicted", ctx.now));
        }
        let victim_is_old = self.marks(victim).old == stamp;
        let stats = self.stats();
        if requested_is_old {
            stats.o_q += 1;
        } else {
            stats.n_q += 1;
            if victim_is_old {
                stats.n_q_old += 1;
            } else {
                stats.n_q_new += 1;
            }
        }
        Ok(victim)
    }

    fn on_access(&mut self, ctx: &mut AccessContext<'_>) -> Result<()> {
        self.base.on_access(ctx)?;
        let page = ctx.page;
        let stamp = self.stamp();
        let m = self.marks.entry(page).or_default();
        let is_new = m.old != stamp;
        let first = m.requested != stamp;
        m.requested = stamp;
        if first {
            if is_new {
                self.stats().c_q += 1;
            } else {
                self.unrequested_old.remove(page);
            }
        }
        if self.audit {
            if !ctx.hit && is_new {
                let loads = self.loads_this_phase.entry(page).or_insert(0);
                *loads += 1;
                if *loads > 2 {
                    let msg = format!("request {}: new page {page} loaded {} times this phase", ctx.now, *loads);
                    self.violation(msg);
                }
            }
            let both = self.guarded.iter().find(|&p| self.unrequested_old.contains(p));
            if let Some(p) = both {
                let msg = format!("request {}: page {p} both guarded and in U", ctx.now);
                self.violation(msg);
            }
        }
        Ok(())
    }

    fn on_evict(&mut self, page: PageId) {
        self.unrequested_old.remove(page);
        let stamp = self.stamp();
        self.marks.entry(page).or_default().evicted = stamp;
        self.base.on_evict(page);
    }

    fn guard_report(&self) -> Option<&GuardReport> {
        Some(&self.report)
    }
}
