//! Cache replacement with predictions.
//!
//! The crate contains offline oracles (Belady, brute-force OPT, true
//! labels), synthetic and statistical predictors, a set of online eviction
//! policies, the phase-based [`Guard`] wrapper that bounds the damage done
//! by bad predictions, and an experiment harness with a CLI on top.

pub mod error;
pub mod guard;
pub mod harness;
pub mod metrics;
pub mod oracle;
pub mod pageset;
pub mod policy;
pub mod predict;
pub mod trace;

pub use error::{Error, Result};
pub use guard::{phase_report, Guard, GuardReport, PhaseCheck, PhaseStats};
pub use pageset::PageSet;
pub use policy::{run_policy, simulate, Policy, Simulation};
pub use predict::{Prediction, PredictionBundle, PredictionKind};
pub use trace::{PageId, Request, Trace};

/// Floating-point scalar used by the harness.
pub type Real = f64;
/// Exact rational scalar, for checking bounds without rounding.
pub type Exact = num_rational::Ratio<u64>;
