//! Combiners that run two policies on virtual caches and let the real cache
//! follow one of them.
//!
//! The real cache evicts the active policy's virtual victim when that page
//! is an eligible real candidate, and its least recently used candidate
//! otherwise.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::classic::Lru;
use super::{combine_kinds, AccessContext, CacheRun, EvictionContext, Policy};
use crate::error::{Error, Result};
use crate::predict::{Prediction, PredictionBundle, PredictionKind};
use crate::trace::PageId;

struct Pair {
    runs: [CacheRun<Box<dyn Policy>>; 2],
    victims: [Option<PageId>; 2],
    stepped: usize,
    lru: Lru,
}

impl Pair {
    fn new(a: Box<dyn Policy>, b: Box<dyn Policy>) -> Self {
        Pair {
            runs: [CacheRun::new(a, 0), CacheRun::new(b, 0)],
            victims: [None, None],
            stepped: 0,
            lru: Lru::new(),
        }
    }

    fn start(&mut self, k: usize) {
        for run in &mut self.runs {
            run.k = k;
            run.policy.start(k);
        }
    }

    /// Advances both virtual caches past request `now`; returns whether this
    /// call did the work.
    fn step(
        &mut self,
        now: usize,
        page: PageId,
        prediction: Prediction,
        predictions: &mut PredictionBundle,
        rng: &mut ChaCha8Rng,
    ) -> Result<bool> {
        if self.stepped == now {
            return Ok(false);
        }
        for (run, victim) in self.runs.iter_mut().zip(self.victims.iter_mut()) {
            *victim = run.step(now, page, prediction, predictions, rng)?;
        }
        self.stepped = now;
        Ok(true)
    }

    fn real_victim(&self, active: usize, ctx: &EvictionContext<'_>) -> Result<PageId> {
        match self.victims[active] {
            Some(v) if ctx.is_candidate(v) => Ok(v),
            _ => self.lru.oldest_candidate(ctx).ok_or(Error::NoCandidates),
        }
    }

    fn misses(&self) -> [u64; 2] {
        [self.runs[0].misses, self.runs[1].misses]
    }

    fn names(&self) -> [String; 2] {
        [self.runs[0].policy.name(), self.runs[1].policy.name()]
    }

    fn kind(&self, name: &str) -> Result<PredictionKind> {
        combine_kinds(name, self.runs[0].policy.requires(), self.runs[1].policy.requires())
    }
}

/// Follows the policy with fewer virtual misses, switching whenever the
/// active one exceeds `bound` times the other's misses.
pub struct SwitchDeterministic {
    pair: Pair,
    bound: f64,
    active: usize,
    switches: u64,
}

impl SwitchDeterministic {
    pub fn new(a: Box<dyn Policy>, b: Box<dyn Policy>, bound: f64) -> Result<Self> {
        if bound.is_nan() || bound < 1.0 {
            return Err(Error::InvalidParameter(format!("switching bound must be >= 1, got {bound}")));
        }
        let s = SwitchDeterministic {
            pair: Pair::new(a, b),
            bound,
            active: 0,
            switches: 0,
        };
        s.pair.kind(&s.name())?;
        Ok(s)
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn switches(&self) -> u64 {
        self.switches
    }

    fn after_step(&mut self) {
        let m = self.pair.misses();
        let passive = 1 - self.active;
        if m[self.active] as f64 > self.bound * m[passive] as f64 {
            self.active = passive;
            self.switches += 1;
        }
    }
}

impl Policy for SwitchDeterministic {
    fn name(&self) -> String {
        let [a, b] = self.pair.names();
        format!("switch_det({a},{b},{})", self.bound)
    }

    fn requires(&self) -> PredictionKind {
        self.pair.kind(&self.name()).unwrap_or(PredictionKind::None)
    }

    fn start(&mut self, k: usize) {
        self.pair.start(k);
    }

    fn choose_victim(&mut self, ctx: &mut EvictionContext<'_>) -> Result<PageId> {
        if self.pair.step(ctx.now, ctx.requested, ctx.prediction, ctx.predictions, ctx.rng)? {
            self.after_step();
        }
        self.pair.real_victim(self.active, ctx)
    }

    fn on_access(&mut self, ctx: &mut AccessContext<'_>) -> Result<()> {
        if self.pair.step(ctx.now, ctx.page, ctx.prediction, ctx.predictions, ctx.rng)? {
            self.after_step();
        }
        self.pair.lru.touch(ctx.page, ctx.now);
        Ok(())
    }

    fn on_evict(&mut self, page: PageId) {
        self.pair.lru.forget(page);
    }
}

/// Multiplicative weights over the two policies: each virtual miss scales
/// that policy's weight by `beta`, and the active policy is redrawn in
/// proportion to the weights on every real eviction.
pub struct SwitchRandomized {
    pair: Pair,
    beta: f64,
    weights: [f64; 2],
    active: usize,
}

impl SwitchRandomized {
    pub fn new(a: Box<dyn Policy>, b: Box<dyn Policy>, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidParameter(format!("beta must lie in (0, 1), got {beta}")));
        }
        let s = SwitchRandomized {
            pair: Pair::new(a, b),
            beta,
            weights: [1.0, 1.0],
            active: 0,
        };
        s.pair.kind(&s.name())?;
        Ok(s)
    }

    pub fn weights(&self) -> [f64; 2] {
        self.weights
    }

    /// Probability currently assigned to the first policy.
    pub fn first_probability(&self) -> f64 {
        self.weights[0] / (self.weights[0] + self.weights[1])
    }

    fn after_step(&mut self) {
        for (w, run) in self.weights.iter_mut().zip(&self.pair.runs) {
            if run.last_missed {
                *w *= self.beta;
            }
        }
        let top = self.weights[0].max(self.weights[1]);
        for w in &mut self.weights {
            *w /= top;
        }
    }
}

impl Policy for SwitchRandomized {
    fn name(&self) -> String {
        let [a, b] = self.pair.names();
        format!("switch_rand({a},{b},{})", self.beta)
    }

    fn requires(&self) -> PredictionKind {
        self.pair.kind(&self.name()).unwrap_or(PredictionKind::None)
    }

    fn start(&mut self, k: usize) {
        self.pair.start(k);
    }

    fn choose_victim(&mut self, ctx: &mut EvictionContext<'_>) -> Result<PageId> {
        if self.pair.step(ctx.now, ctx.requested, ctx.prediction, ctx.predictions, ctx.rng)? {
            self.after_step();
        }
        let u: f64 = ctx.rng.random();
        self.active = usize::from(u >= self.first_probability());
        self.pair.real_victim(self.active, ctx)
    }

    fn on_access(&mut self, ctx: &mut AccessContext<'_>) -> Result<()> {
        if self.pair.step(ctx.now, ctx.page, ctx.prediction, ctx.predictions, ctx.rng)? {
            self.after_step();
        }
        self.pair.lru.touch(ctx.page, ctx.now);
        Ok(())
    }

    fn on_evict(&mut self, page: PageId) {
        self.pair.lru.forget(page);
    }
}
