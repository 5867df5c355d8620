//! Policies that follow predictions blindly. Each one evicts only true
//! 1-pages when its predictions are perfect.

use std::cmp::Reverse;
use std::collections::BTreeSet;

use rand::Rng;
use rustc_hash::FxHashMap;

use super::{AccessContext, EvictionContext, Policy};
use crate::error::{Error, Result};
use crate::pageset::PageSet;
use crate::predict::PredictionKind;
use crate::trace::PageId;

type NrtKey = (u64, Reverse<usize>, PageId);

/// Evicts the page whose attached predicted next request is furthest away.
#[derive(Debug, Default)]
pub struct BlindOracle {
    order: BTreeSet<NrtKey>,
    attached: FxHashMap<PageId, (u64, usize)>,
}

impl BlindOracle {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Policy for BlindOracle {
    fn name(&self) -> String {
        "blind_oracle".into()
    }

    fn requires(&self) -> PredictionKind {
        PredictionKind::Nrt
    }

    fn choose_victim(&mut self, ctx: &mut EvictionContext<'_>) -> Result<PageId> {
        if self.attached.len() < ctx.cached.len() {
            let missing = ctx
                .cached
                .iter()
                .find(|p| !self.attached.contains_key(p))
                .expect("some cached page lacks a prediction");
            return Err(Error::MissingPrediction(missing));
        }
        self.order
            .iter()
            .rev()
            .map(|&(_, _, p)| p)
            .find(|&p| ctx.is_candidate(p))
            .ok_or(Error::NoCandidates)
    }

    fn on_access(&mut self, ctx: &mut AccessContext<'_>) -> Result<()> {
        let pred = ctx.prediction.nrt.ok_or(Error::MissingPrediction(ctx.page))?;
        if let Some((old, used)) = self.attached.insert(ctx.page, (pred, ctx.now)) {
            self.order.remove(&(old, Reverse(used), ctx.page));
        }
        self.order.insert((pred, Reverse(ctx.now), ctx.page));
        Ok(())
    }

    fn on_evict(&mut self, page: PageId) {
        if let Some((pred, used)) = self.attached.remove(&page) {
            self.order.remove(&(pred, Reverse(used), page));
        }
    }
}

/// Evicts a uniformly random page predicted to be a 1-page, or any page
/// when none is.
#[derive(Debug, Default)]
pub struct LrbFollower {
    ones: PageSet,
    zeros: PageSet,
}

impl LrbFollower {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Policy for LrbFollower {
    fn name(&self) -> String {
        "lrb".into()
    }

    fn requires(&self) -> PredictionKind {
        PredictionKind::Binary
    }

    fn choose_victim(&mut self, ctx: &mut EvictionContext<'_>) -> Result<PageId> {
        if ctx.unrestricted() {
            if let Some(p) = self.ones.sample(ctx.rng) {
                return Ok(p);
            }
            return ctx.cached.sample(ctx.rng).ok_or(Error::NoCandidates);
        }
        let ones: Vec<PageId> = self.ones.iter().filter(|&p| ctx.is_candidate(p)).collect();
        let pool = if ones.is_empty() { ctx.candidates() } else { ones };
        if pool.is_empty() {
            return Err(Error::NoCandidates);
        }
        Ok(pool[ctx.rng.random_range(0..pool.len())])
    }

    fn on_access(&mut self, ctx: &mut AccessContext<'_>) -> Result<()> {
        let label = ctx.prediction.label.ok_or(Error::MissingPrediction(ctx.page))?;
        if label {
            self.zeros.remove(ctx.page);
            self.ones.insert(ctx.page);
        } else {
            self.ones.remove(ctx.page);
            self.zeros.insert(ctx.page);
        }
        Ok(())
    }

    fn on_evict(&mut self, page: PageId) {
        self.ones.remove(page);
        self.zeros.remove(page);
    }
}

/// Evicts whatever the FitF predictor names among the candidates.
#[derive(Debug, Default)]
pub struct FitfFollower;

impl FitfFollower {
    pub fn new() -> Self {
        FitfFollower
    }
}

impl Policy for FitfFollower {
    fn name(&self) -> String {
        "fitf".into()
    }

    fn requires(&self) -> PredictionKind {
        PredictionKind::Fitf
    }

    fn choose_victim(&mut self, ctx: &mut EvictionContext<'_>) -> Result<PageId> {
        let candidates = ctx.candidates();
        let kind = ctx.predictions.kind();
        let predictor = ctx
            .predictions
            .fitf_mut()
            .ok_or_else(|| Error::PredictionKindMismatch {
                policy: "fitf".into(),
                required: PredictionKind::Fitf.to_string(),
                got: kind.to_string(),
            })?;
        predictor.choose(&candidates, ctx.now)
    }

    fn on_access(&mut self, _ctx: &mut AccessContext<'_>) -> Result<()> {
        Ok(())
    }

    fn on_evict(&mut self, _page: PageId) {}
}
