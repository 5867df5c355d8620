//! Online eviction policies behind one interface, and the simulator that
//! drives them over a trace.
//!
//! The simulator owns the cache contents. A policy keeps whatever
//! bookkeeping it needs, learns about every request through
//! [`Policy::on_access`] and every eviction through [`Policy::on_evict`], and
//! is asked for a victim only on a miss with a full cache.

mod classic;
mod learned;
mod switch;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use classic::{Belady, Lru, Marker};
pub use learned::{BlindOracle, FitfFollower, LrbFollower};
pub use switch::{SwitchDeterministic, SwitchRandomized};

use crate::error::{Error, Result};
use crate::guard::GuardReport;
use crate::metrics::cost_ratio;
use crate::oracle::opt_cost;
use crate::pageset::PageSet;
use crate::predict::{Prediction, PredictionBundle, PredictionKind};
use crate::trace::{PageId, Trace};

/// What a policy sees when it must pick a victim.
pub struct EvictionContext<'a> {
    pub now: usize,
    pub requested: PageId,
    /// Prediction attached to the current request.
    pub prediction: Prediction,
    pub cached: &'a PageSet,
    /// Cached pages that must not be chosen.
    pub excluded: &'a PageSet,
    pub predictions: &'a mut PredictionBundle,
    pub rng: &'a mut ChaCha8Rng,
}

impl EvictionContext<'_> {
    pub fn is_candidate(&self, page: PageId) -> bool {
        self.cached.contains(page) && !self.excluded.contains(page)
    }

    pub fn candidates(&self) -> Vec<PageId> {
        self.cached
            .iter()
            .filter(|&p| !self.excluded.contains(p))
            .collect()
    }

    pub fn has_candidates(&self) -> bool {
        self.cached.iter().any(|p| !self.excluded.contains(p))
    }

    pub fn unrestricted(&self) -> bool {
        self.excluded.is_empty()
    }
}

/// A served request, after the page is in the cache.
pub struct AccessContext<'a> {
    pub now: usize,
    pub page: PageId,
    pub hit: bool,
    pub prediction: Prediction,
    pub predictions: &'a mut PredictionBundle,
    pub rng: &'a mut ChaCha8Rng,
}

pub trait Policy: Send {
    fn name(&self) -> String;

    fn requires(&self) -> PredictionKind {
        PredictionKind::None
    }

    /// Called once before the first request.
    fn start(&mut self, _k: usize) {}

    /// Must return a member of `ctx.candidates()`.
    fn choose_victim(&mut self, ctx: &mut EvictionContext<'_>) -> Result<PageId>;

    fn on_access(&mut self, ctx: &mut AccessContext<'_>) -> Result<()>;

    fn on_evict(&mut self, page: PageId);

    fn guard_report(&self) -> Option<&GuardReport> {
        None
    }
}

macro_rules! forward_policy {
    ($($ty:ty),*) => {$(
impl<P: Policy + ?Sized> Policy for $ty {
    fn name(&self) -> String {
        (**self).name()
    }
    fn requires(&self) -> PredictionKind {
        (**self).requires()
    }
    fn start(&mut self, k: usize) {
        (**self).start(k)
    }
    fn choose_victim(&mut self, ctx: &mut EvictionContext<'_>) -> Result<PageId> {
        (**self).choose_victim(ctx)
    }
    fn on_access(&mut self, ctx: &mut AccessContext<'_>) -> Result<()> {
        (**self).on_access(ctx)
    }
    fn on_evict(&mut self, page: PageId) {
        (**self).on_evict(page)
    }
    fn guard_report(&self) -> Option<&GuardReport> {
        (**self).guard_report()
    }
}
    )*};
}

forward_policy!(Box<P>, &mut P);

/// Prediction kind needed by a combination of two policies.
pub(crate) fn combine_kinds(name: &str, a: PredictionKind, b: PredictionKind) -> Result<PredictionKind> {
    match (a, b) {
        (PredictionKind::None, x) | (x, PredictionKind::None) => Ok(x),
        (x, y) if x == y => Ok(x),
        (x, y) => Err(Error::Config(format!(
            "`{name}` mixes {x} and {y} predictions"
        ))),
    }
}

pub(crate) fn check_kind(policy: &dyn Policy, bundle: &PredictionBundle) -> Result<()> {
    let required = policy.requires();
    if required != PredictionKind::None && required != bundle.kind() {
        return Err(Error::PredictionKindMismatch {
            policy: policy.name(),
            required: required.to_string(),
            got: bundle.kind().to_string(),
        });
    }
    Ok(())
}

/// A cache of size `k` driven by one policy. Also used for the virtual
/// caches of the switching combiners.
pub(crate) struct CacheRun<P> {
    pub policy: P,
    pub cache: PageSet,
    pub k: usize,
    pub misses: u64,
    pub last_missed: bool,
    no_exclusions: PageSet,
}

impl<P: Policy> CacheRun<P> {
    pub fn new(mut policy: P, k: usize) -> Self {
        policy.start(k);
        CacheRun {
            policy,
            cache: PageSet::with_capacity(k + 1),
            k,
            misses: 0,
            last_missed: false,
            no_exclusions: PageSet::new(),
        }
    }

    /// Serves one request; returns the evicted page, if any.
    pub fn step(
        &mut self,
        now: usize,
        page: PageId,
        prediction: Prediction,
        predictions: &mut PredictionBundle,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<PageId>> {
        let hit = self.cache.contains(page);
        self.last_missed = !hit;
        let mut evicted = None;
        if !hit {
            self.misses += 1;
            if self.cache.len() >= self.k {
                let mut ctx = EvictionContext {
                    now,
                    requested: page,
                    prediction,
                    cached: &self.cache,
                    excluded: &self.no_exclusions,
                    predictions: &mut *predictions,
                    rng: &mut *rng,
                };
                let victim = self.policy.choose_victim(&mut ctx)?;
                if !self.cache.remove(victim) {
                    return Err(Error::Invariant(format!(
                        "`{}` chose {victim} at request {now}, which is not cached",
                        self.policy.name()
                    )));
                }
                self.policy.on_evict(victim);
                evicted = Some(victim);
            }
            self.cache.insert(page);
        }
        self.policy.on_access(&mut AccessContext {
            now,
            page,
            hit,
            prediction,
            predictions,
            rng,
        })?;
        Ok(evicted)
    }
}

/// Outcome of driving one policy over one trace.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub misses: u64,
    pub opt_misses: u64,
    pub ratio: f64,
    pub guard: Option<GuardReport>,
}

/// Serves the whole trace with a cache of size `k`, without computing OPT.
pub fn run_policy<P: Policy>(
    policy: P,
    trace: &Trace,
    k: usize,
    bundle: &mut PredictionBundle,
    seed: u64,
) -> Result<(u64, Option<GuardReport>)> {
    if k == 0 {
        return Err(Error::InvalidParameter("cache size must be at least 1".into()));
    }
    check_kind(&policy, bundle)?;
    bundle.validate(trace)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut run = CacheRun::new(policy, k);
    for r in trace.requests() {
        let prediction = bundle.at(r.index);
        run.step(r.index, r.page, prediction, bundle, &mut rng)?;
    }
    Ok((run.misses, run.policy.guard_report().cloned()))
}

pub fn simulate<P: Policy>(
    policy: P,
    trace: &Trace,
    k: usize,
    bundle: &mut PredictionBundle,
    seed: u64,
) -> Result<Simulation> {
    let (misses, guard) = run_policy(policy, trace, k, bundle, seed)?;
    let opt_misses = opt_cost(trace, k);
    Ok(Simulation {
        misses,
        opt_misses,
        ratio: cost_ratio(misses, opt_misses),
        guard,
    })
}
