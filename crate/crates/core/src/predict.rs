//! Prediction bundles: synthetic (noise-controlled) and online predictors in
//! three flavours: next request times (NRT), Belady binary labels, and
//! furthest-in-the-future page choices.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{belady_labels, belady_simulate, fitf_page};
use crate::trace::{PageId, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredictionKind {
    None,
    Nrt,
    Binary,
    Fitf,
}

impl fmt::Display for PredictionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictionKind::None => "no",
            PredictionKind::Nrt => "NRT",
            PredictionKind::Binary => "binary",
            PredictionKind::Fitf => "FitF",
        })
    }
}

/// Prediction attached to a single request.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Prediction {
    pub nrt: Option<u64>,
    pub label: Option<bool>,
}

/// Per-request predictions for one trace. NRT and binary bundles are plain
/// data; a FitF bundle answers queries and carries its own RNG.
#[derive(Debug)]
#[allow(clippy::large_enum_variant)]
pub enum PredictionBundle {
    None,
    /// Predicted next request index for each request, in request order.
    Nrt(Vec<u64>),
    /// Predicted Belady label for each request.
    Binary(Vec<bool>),
    Fitf(FitfPredictor),
}

impl PredictionBundle {
    pub fn kind(&self) -> PredictionKind {
        match self {
            PredictionBundle::None => PredictionKind::None,
            PredictionBundle::Nrt(_) => PredictionKind::Nrt,
            PredictionBundle::Binary(_) => PredictionKind::Binary,
            PredictionBundle::Fitf(_) => PredictionKind::Fitf,
        }
    }

    /// Prediction for request `t` (1-based).
    pub fn at(&self, t: usize) -> Prediction {
        match self {
            PredictionBundle::Nrt(v) => Prediction {
                nrt: Some(v[t - 1]),
                label: None,
            },
            PredictionBundle::Binary(v) => Prediction {
                nrt: None,
                label: Some(v[t - 1]),
            },
            _ => Prediction::default(),
        }
    }

    pub fn fitf_mut(&mut self) -> Option<&mut FitfPredictor> {
        match self {
            PredictionBundle::Fitf(f) => Some(f),
            _ => None,
        }
    }

    pub fn validate(&self, trace: &Trace) -> Result<()> {
        let len = match self {
            PredictionBundle::Nrt(v) => {
                if let Some(i) = v.iter().enumerate().position(|(i, &p)| p <= (i + 1) as u64) {
                    return Err(Error::InvalidParameter(format!(
                        "predicted next request {} at request {} is not in the future",
                        v[i],
                        i + 1
                    )));
                }
                v.len()
            }
            PredictionBundle::Binary(v) => v.len(),
            PredictionBundle::Fitf(f) => f.n,
            PredictionBundle::None => return Ok(()),
        };
        if len != trace.len() {
            return Err(Error::InvalidParameter(format!(
                "bundle covers {len} requests, trace has {}",
                trace.len()
            )));
        }
        Ok(())
    }

    /// Writes `index,predicted_nrt` or `index,label` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match self {
            PredictionBundle::Nrt(v) => {
                w.write_record(["index", "predicted_nrt"])?;
                for (i, p) in v.iter().enumerate() {
                    w.write_record([(i + 1).to_string(), p.to_string()])?;
                }
            }
            PredictionBundle::Binary(v) => {
                w.write_record(["index", "label"])?;
                for (i, &y) in v.iter().enumerate() {
                    w.write_record([(i + 1).to_string(), (y as u8).to_string()])?;
                }
            }
            other => {
                return Err(Error::InvalidParameter(format!(
                    "{} predictions cannot be exported",
                    other.kind()
                )))
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        let kind = match headers.get(1).map(str::trim) {
            Some("predicted_nrt") => PredictionKind::Nrt,
            Some("label") => PredictionKind::Binary,
            other => {
                return Err(Error::parse(1, format!("unknown prediction column {other:?}")));
            }
        };
        let mut nrt = Vec::new();
        let mut labels = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let line = row + 2;
            let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
            let idx: usize = rec
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::parse(line, "bad index"))?;
            if idx != row + 1 {
                return Err(Error::parse(line, format!("expected index {}, got {idx}", row + 1)));
            }
            let val = rec.get(1).map(str::trim).unwrap_or("");
            match kind {
                PredictionKind::Nrt => nrt.push(
                    val.parse::<u64>()
                        .map_err(|_| Error::parse(line, format!("bad prediction `{val}`")))?,
                ),
                _ => labels.push(match val {
                    "0" => false,
                    "1" => true,
                    _ => return Err(Error::parse(line, format!("bad label `{val}`"))),
                }),
            }
        }
        Ok(match kind {
            PredictionKind::Nrt => PredictionBundle::Nrt(nrt),
            _ => PredictionBundle::Binary(labels),
        })
    }
}

/// Answers "which of these cached pages is requested furthest in the
/// future?", correctly with probability `1 - epsilon`.
#[derive(Debug)]
pub struct FitfPredictor {
    occurrences: FxHashMap<PageId, Vec<usize>>,
    n: usize,
    epsilon: f64,
    rng: ChaCha8Rng,
    queries: u64,
    wrong: u64,
}

impl FitfPredictor {
    pub fn true_choice(&self, candidates: &[PageId], now: usize) -> Result<PageId> {
        let sentinel = self.n + 1;
        let next_of = |p: PageId| {
            self.occurrences.get(&p).map_or(sentinel, |occ| {
                let i = occ.partition_point(|&t| t <= now);
                occ.get(i).copied().unwrap_or(sentinel)
            })
        };
        let last_use_of = |p: PageId| {
            self.occurrences.get(&p).map_or(0, |occ| {
                let i = occ.partition_point(|&t| t <= now);
                if i == 0 {
                    0
                } else {
                    occ[i - 1]
                }
            })
        };
        fitf_page(candidates, next_of, last_use_of)
    }

    /// One uniform draw per query: below `epsilon` the answer is a wrong
    /// candidate, picked by rescaling the same draw.
    pub fn choose(&mut self, candidates: &[PageId], now: usize) -> Result<PageId> {
        let truth = self.true_choice(candidates, now)?;
        self.queries += 1;
        let u: f64 = self.rng.random();
        if u >= self.epsilon || candidates.len() < 2 {
            return Ok(truth);
        }
        let others: Vec<PageId> = candidates.iter().copied().filter(|&p| p != truth).collect();
        let pick = ((u / self.epsilon) * others.len() as f64) as usize;
        self.wrong += 1;
        Ok(others[pick.min(others.len() - 1)])
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    pub fn wrong_answers(&self) -> u64 {
        self.wrong
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionError {
    /// Total absolute error of predicted next request times.
    pub eta_t: u64,
    /// Number of wrong binary labels.
    pub eta_b: u64,
    /// Number of wrong FitF answers.
    pub eta_f: u64,
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

fn gap_to_nrt(t: usize, gap: f64) -> u64 {
    (t as u64).saturating_add(gap.round().max(1.0) as u64)
}

/// True next request times with multiplicative log-normal noise on the gap
/// to the next request: `t + round((T - t) * X)`, `X ~ LogNormal(0, sigma)`.
pub fn synthetic_nrt(trace: &Trace, sigma: f64, seed: u64) -> Result<PredictionBundle> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
    }
    let next = trace.next_occurrence();
    if sigma == 0.0 {
        return Ok(PredictionBundle::Nrt(next.iter().map(|&x| x as u64).collect()));
    }
    let noise = LogNormal::new(0.0, sigma)
        .map_err(|e| Error::InvalidParameter(format!("log-normal: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let preds = next
        .iter()
        .enumerate()
        .map(|(i, &nx)| {
            let t = i + 1;
            let x: f64 = noise.sample(&mut rng);
            gap_to_nrt(t, (nx - t) as f64 * x)
        })
        .collect();
    Ok(PredictionBundle::Nrt(preds))
}

/// Adversarial NRT: the order of true next requests reversed, as
/// `2n + 2 - T`. Pages never requested again look imminent.
pub fn inverted_nrt(trace: &Trace) -> PredictionBundle {
    let n = trace.len() as u64;
    PredictionBundle::Nrt(
        trace
            .next_occurrence()
            .iter()
            .map(|&nx| 2 * n + 2 - nx as u64)
            .collect(),
    )
}

/// Belady labels with each bit flipped independently with probability `p_flip`.
pub fn flip_labels(trace: &Trace, k: usize, p_flip: f64, seed: u64) -> Result<PredictionBundle> {
    check_probability("p_flip", p_flip)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = belady_labels(trace, k)
        .into_iter()
        .map(|y| y ^ rng.random_bool(p_flip))
        .collect();
    Ok(PredictionBundle::Binary(labels))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlecoParams {
    pub alpha: f64,
    pub offset: f64,
}

impl Default for PlecoParams {
    fn default() -> Self {
        PlecoParams {
            alpha: 1.8,
            offset: 10.0,
        }
    }
}

/// Power-law recency predictor. A past access `d` steps ago weighs
/// `(d + offset)^-alpha`; `p` is the requested page's share of the total
/// weight of earlier accesses (1 on a page's first appearance) and the next
/// request is predicted `round(1 / p)` steps ahead.
pub fn pleco(trace: &Trace, params: PlecoParams) -> Result<PredictionBundle> {
    if params.alpha.is_nan() || params.alpha <= 0.0 || params.offset.is_nan() || params.offset <= 0.0 {
        return Err(Error::InvalidParameter("PLECO parameters must be positive".into()));
    }
    let weight = |d: usize| (d as f64 + params.offset).powf(-params.alpha);
    let n = trace.len();
    // total[t] = sum of weights of all accesses before t, seen from t.
    let mut total = vec![0.0; n + 1];
    for d in 1..n {
        total[d + 1] = total[d] + weight(d);
    }
    let mut history: FxHashMap<PageId, Vec<usize>> = FxHashMap::default();
    let mut preds = Vec::with_capacity(n);
    for r in trace.requests() {
        let t = r.index;
        let past = history.entry(r.page).or_default();
        let p = if past.is_empty() {
            1.0
        } else {
            past.iter().map(|&s| weight(t - s)).sum::<f64>() / total[t]
        };
        past.push(t);
        preds.push(gap_to_nrt(t, 1.0 / p));
    }
    Ok(PredictionBundle::Nrt(preds))
}

/// Frequency predictor: a page making up fraction `p` of the first `t`
/// requests is predicted back in `round(1 / p)` steps.
pub fn popu(trace: &Trace) -> PredictionBundle {
    let mut counts: FxHashMap<PageId, u64> = FxHashMap::default();
    PredictionBundle::Nrt(
        trace
            .requests()
            .iter()
            .map(|r| {
                let c = counts.entry(r.page).or_insert(0);
                *c += 1;
                let p = *c as f64 / r.index as f64;
                gap_to_nrt(r.index, 1.0 / p)
            })
            .collect(),
    )
}

pub fn noisy_fitf(trace: &Trace, epsilon: f64, seed: u64) -> Result<PredictionBundle> {
    check_probability("epsilon", epsilon)?;
    let mut occurrences: FxHashMap<PageId, Vec<usize>> = FxHashMap::default();
    for r in trace.requests() {
        occurrences.entry(r.page).or_default().push(r.index);
    }
    Ok(PredictionBundle::Fitf(FitfPredictor {
        occurrences,
        n: trace.len(),
        epsilon,
        rng: ChaCha8Rng::seed_from_u64(seed),
        queries: 0,
        wrong: 0,
    }))
}

/// Forward distance at which requests count as predicted 1-pages: the 90th
/// percentile (nearest rank) of the distance from each Belady eviction to
/// the victim's next request, over the first 10% of the trace. Falls back
/// to the whole trace, then to `n`, when no eviction is observed.
pub fn default_boundary(trace: &Trace, k: usize) -> f64 {
    let out = belady_simulate(trace, k);
    let mut occurrences: FxHashMap<PageId, Vec<usize>> = FxHashMap::default();
    for r in trace.requests() {
        occurrences.entry(r.page).or_default().push(r.index);
    }
    let gap = |(t, victim): &(usize, PageId)| {
        let occ = &occurrences[victim];
        let i = occ.partition_point(|&s| s <= *t);
        occ.get(i).copied().unwrap_or(trace.sentinel()) - t
    };
    let warmup = (trace.len() / 10).max(1);
    let mut gaps: Vec<usize> = out
        .eviction_events
        .iter()
        .filter(|(t, _)| *t <= warmup)
        .map(gap)
        .collect();
    if gaps.is_empty() {
        gaps = out.eviction_events.iter().map(gap).collect();
    }
    if gaps.is_empty() {
        return trace.len().max(1) as f64;
    }
    gaps.sort_unstable();
    let rank = ((0.9 * gaps.len() as f64).ceil() as usize).clamp(1, gaps.len());
    gaps[rank - 1] as f64
}

/// Labels a request 1 when its predicted next request lies more than
/// `boundary` steps ahead.
pub fn binary_from_nrt(bundle: &PredictionBundle, boundary: f64) -> Result<PredictionBundle> {
    let PredictionBundle::Nrt(nrt) = bundle else {
        return Err(Error::InvalidParameter("binary_from_nrt needs an NRT bundle".into()));
    };
    if boundary.is_nan() || boundary <= 0.0 {
        return Err(Error::InvalidParameter(format!("boundary must be positive, got {boundary}")));
    }
    Ok(PredictionBundle::Binary(
        nrt.iter()
            .enumerate()
            .map(|(i, &p)| (p - (i as u64 + 1)) as f64 > boundary)
            .collect(),
    ))
}

pub fn measure_error(bundle: &PredictionBundle, trace: &Trace, k: usize) -> PredictionError {
    match bundle {
        PredictionBundle::None => PredictionError::default(),
        PredictionBundle::Nrt(v) => PredictionError {
            eta_t: v
                .iter()
                .zip(trace.next_occurrence())
                .map(|(&p, &t)| p.abs_diff(t as u64))
                .sum(),
            ..Default::default()
        },
        PredictionBundle::Binary(v) => PredictionError {
            eta_b: v
                .iter()
                .zip(belady_labels(trace, k))
                .filter(|(a, b)| **a != *b)
                .count() as u64,
            ..Default::default()
        },
        PredictionBundle::Fitf(f) => PredictionError {
            eta_f: f.wrong,
            ..Default::default()
        },
    }
}
