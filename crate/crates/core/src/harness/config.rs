use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::spec::{PolicyRegistry, PolicySpec, PredictorSpec};
use crate::error::{Error, Result};
use crate::trace::{
    ingest_address_trace, ingest_brightkite, ingest_citibike, parse_plain_trace, SetAssociativeConfig, Trace,
    DEFAULT_CITI_COLUMN,
};

/// Default output directory for results when no path is given.
pub const OUT_DIR_ENV: &str = "GUARDCACHE_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    Plain,
    Brightkite,
    Citi,
    Addr,
}

impl TraceFormat {
    pub fn default_k(self) -> Option<usize> {
        match self {
            TraceFormat::Plain => None,
            TraceFormat::Brightkite => Some(10),
            TraceFormat::Citi => Some(100),
            TraceFormat::Addr => Some(16),
        }
    }
}

impl FromStr for TraceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(TraceFormat::Plain),
            "brightkite" => Ok(TraceFormat::Brightkite),
            "citi" => Ok(TraceFormat::Citi),
            "addr" => Ok(TraceFormat::Addr),
            _ => Err(Error::Config(format!("unknown trace format `{s}`"))),
        }
    }
}

impl fmt::Display for TraceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceFormat::Plain => "plain",
            TraceFormat::Brightkite => "brightkite",
            TraceFormat::Citi => "citi",
            TraceFormat::Addr => "addr",
        })
    }
}

fn default_pred() -> String {
    "none".into()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_true() -> bool {
    true
}

/// One experiment. Mirrors the CLI flags; can also be read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trace: PathBuf,
    pub format: TraceFormat,
    /// Cache size; defaults depend on the format.
    #[serde(default)]
    pub k: Option<usize>,
    pub policies: Vec<String>,
    #[serde(default = "default_pred")]
    pub pred: String,
    /// Parameter grid for the predictor; empty means a single point.
    #[serde(default)]
    pub sweep: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub phase_stats: bool,
    #[serde(default)]
    pub assert_invariants: bool,
    /// Record wall-clock time per run. Off gives byte-identical output.
    #[serde(default = "default_true")]
    pub timing: bool,
    /// Directory for cached OPT costs.
    #[serde(default)]
    pub opt_cache: Option<PathBuf>,
    #[serde(default)]
    pub citi_column: Option<String>,
    /// Cache size used by the BrightKite user filter; defaults to `k`.
    #[serde(default)]
    pub brightkite_filter_k: Option<usize>,
    #[serde(default)]
    pub addr: Option<SetAssociativeConfig>,
}

impl ExperimentConfig {
    pub fn new(trace: impl Into<PathBuf>, format: TraceFormat) -> Self {
        ExperimentConfig {
            trace: trace.into(),
            format,
            k: None,
            policies: Vec::new(),
            pred: default_pred(),
            sweep: Vec::new(),
            seeds: default_seeds(),
            out: None,
            phase_stats: false,
            assert_invariants: false,
            timing: true,
            opt_cache: None,
            citi_column: None,
            brightkite_filter_k: None,
            addr: None,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn cache_size(&self) -> Result<usize> {
        let k = self
            .k
            .or(self.format.default_k())
            .ok_or_else(|| Error::Config(format!("cache size is required for {} traces", self.format)))?;
        if k == 0 {
            return Err(Error::Config("cache size must be at least 1".into()));
        }
        Ok(k)
    }

    pub fn policy_specs(&self) -> Result<Vec<PolicySpec>> {
        self.policies.iter().map(|s| PolicySpec::parse(s)).collect()
    }

    pub fn predictor(&self) -> Result<PredictorSpec> {
        PredictorSpec::parse(&self.pred)
    }

    /// Sweep points: the grid, or a single point with no override.
    pub fn sweep_points(&self) -> Vec<Option<f64>> {
        if self.sweep.is_empty() {
            vec![None]
        } else {
            self.sweep.iter().copied().map(Some).collect()
        }
    }

    /// Output path: explicit, else `$GUARDCACHE_OUT_DIR/results.csv`, else
    /// `results.csv`.
    pub fn out_path(&self) -> PathBuf {
        if let Some(p) = &self.out {
            return p.clone();
        }
        match std::env::var_os(OUT_DIR_ENV) {
            Some(dir) => PathBuf::from(dir).join("results.csv"),
            None => PathBuf::from("results.csv"),
        }
    }

    pub fn phase_stats_path(&self) -> PathBuf {
        let out = self.out_path();
        let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.with_file_name(format!("{stem}.phases.csv"))
    }

    /// Checks everything that can be checked without reading the trace.
    pub fn validate(&self, registry: &PolicyRegistry) -> Result<()> {
        self.cache_size()?;
        if self.policies.is_empty() {
            return Err(Error::Config("no policy given".into()));
        }
        for spec in self.policy_specs()? {
            registry.resolve(&spec)?;
        }
        let pred = self.predictor()?;
        if !self.sweep.is_empty() && !pred.sweepable() {
            return Err(Error::Config(format!("predictor `{}` has no parameter to sweep", pred.label())));
        }
        if let Some(x) = self.sweep.iter().find(|x| !x.is_finite()) {
            return Err(Error::Config(format!("sweep value {x} is not finite")));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds given".into()));
        }
        if let Some(a) = &self.addr {
            a.validate()?;
        }
        Ok(())
    }

    /// Reads and splits the trace source. Names identify each trace (user,
    /// set index) in phase output.
    pub fn load_traces(&self) -> Result<Vec<(String, Trace)>> {
        let text = std::fs::read_to_string(&self.trace)
            .map_err(|e| Error::Config(format!("{}: {e}", self.trace.display())))?;
        let traces = match self.format {
            TraceFormat::Plain => vec![("trace".to_string(), parse_plain_trace(&text)?)],
            TraceFormat::Brightkite => {
                let filter = self.brightkite_filter_k.map_or_else(|| self.cache_size(), Ok)?;
                ingest_brightkite(&text, filter)?
            }
            TraceFormat::Citi => {
                let column = self.citi_column.as_deref().unwrap_or(DEFAULT_CITI_COLUMN);
                vec![("trace".to_string(), ingest_citibike(&text, column)?)]
            }
            TraceFormat::Addr => ingest_address_trace(&text, &self.addr.unwrap_or_default())?
                .into_iter()
                .map(|(set, t)| (format!("set{set}"), t))
                .collect(),
        };
        if traces.is_empty() {
            return Err(Error::Config(format!("{}: no usable trace", self.trace.display())));
        }
        Ok(traces)
    }
}
