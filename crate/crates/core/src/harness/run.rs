use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::spec::{PolicyRegistry, PolicySpec, PredictorSpec};
use crate::error::{Error, Result};
use crate::guard::{phase_report, PhaseStats, PHASE_CSV_HEADER};
use crate::metrics::{cost_ratio, mean};
use crate::oracle::opt_cost;
use crate::policy::run_policy;
use crate::predict::{measure_error, PredictionError};
use crate::trace::Trace;

pub const CSV_HEADER: [&str; 11] = [
    "policy", "predictor", "param", "seed", "misses", "opt", "ratio", "eta_t", "eta_b", "eta_f", "wall_ms",
];

/// One (policy, sweep point, seed) run over every trace of the source.
/// Multi-trace sources (BrightKite users, cache sets) report summed misses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub policy: String,
    pub predictor: String,
    pub param: Option<f64>,
    pub seed: u64,
    pub misses: u64,
    pub opt_misses: u64,
    pub ratio: f64,
    pub eta: PredictionError,
    /// Per-trace phase counters of guarded runs, when requested.
    pub phases: Vec<(String, Vec<PhaseStats>)>,
    pub wall_ms: f64,
    /// Invariant violations found with auditing on.
    pub violations: Vec<String>,
}

/// Mean over the seeds of one (policy, sweep point).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub policy: String,
    pub predictor: String,
    pub param: Option<f64>,
    pub runs: usize,
    pub misses: f64,
    pub opt_misses: f64,
    pub ratio: f64,
    pub eta_t: f64,
    pub eta_b: f64,
    pub eta_f: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTable {
    pub runs: Vec<RunResult>,
    pub aggregates: Vec<Aggregate>,
}

fn param_field(p: Option<f64>) -> String {
    p.map(|x| x.to_string()).unwrap_or_default()
}

impl RunTable {
    pub fn violations(&self) -> impl Iterator<Item = &String> {
        self.runs.iter().flat_map(|r| &r.violations)
    }

    pub fn aggregate(&self, policy: &str, param: Option<f64>) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.policy == policy && a.param == param)
    }

    /// Per-seed rows, each group followed by its `seed=mean` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        let mut runs = self.runs.iter().peekable();
        for a in &self.aggregates {
            for _ in 0..a.runs {
                let r = runs.next().expect("aggregate counts match the runs");
                w.write_record([
                    r.policy.clone(),
                    r.predictor.clone(),
                    param_field(r.param),
                    r.seed.to_string(),
                    r.misses.to_string(),
                    r.opt_misses.to_string(),
                    r.ratio.to_string(),
                    r.eta.eta_t.to_string(),
                    r.eta.eta_b.to_string(),
                    r.eta.eta_f.to_string(),
                    format!("{:.3}", r.wall_ms),
                ])?;
            }
            w.write_record([
                a.policy.clone(),
                a.predictor.clone(),
                param_field(a.param),
                "mean".into(),
                a.misses.to_string(),
                a.opt_misses.to_string(),
                a.ratio.to_string(),
                a.eta_t.to_string(),
                a.eta_b.to_string(),
                a.eta_f.to_string(),
                format!("{:.3}", a.wall_ms),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_phase_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["policy", "predictor", "param", "seed", "trace"];
        header.extend(PHASE_CSV_HEADER);
        w.write_record(&header)?;
        for r in &self.runs {
            for (trace, phases) in &r.phases {
                for p in phases {
                    let mut row = vec![r.policy.clone(), r.predictor.clone(), param_field(r.param), r.seed.to_string(), trace.clone()];
                    row.extend(p.csv_fields());
                    w.write_record(&row)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// OPT costs, optionally cached on disk under `(trace fingerprint, k)`.
#[derive(Clone, Debug, Default)]
pub struct OptCache {
    dir: Option<PathBuf>,
}

impl OptCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        OptCache { dir }
    }

    fn path(dir: &Path, trace: &Trace, k: usize) -> PathBuf {
        dir.join(format!("{}-k{k}.opt", trace.fingerprint()))
    }

    pub fn get(&self, trace: &Trace, k: usize) -> Result<u64> {
        let Some(dir) = &self.dir else {
            return Ok(opt_cost(trace, k));
        };
        let path = Self::path(dir, trace, k);
        if let Some(v) = std::fs::read_to_string(&path).ok().and_then(|s| s.trim().parse().ok()) {
            return Ok(v);
        }
        let v = opt_cost(trace, k);
        std::fs::create_dir_all(dir)?;
        let tmp = tempfile::NamedTempFile::new_in(dir)?;
        std::fs::write(tmp.path(), v.to_string())?;
        tmp.persist(&path).map_err(|e| Error::Io(e.error))?;
        Ok(v)
    }
}

/// Derives independent seeds for each trace and purpose from a run seed.
fn derive_seed(seed: u64, trace: usize, stream: u64) -> u64 {
    let mut z = seed ^ (trace as u64).rotate_left(32) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Job<'a> {
    spec: &'a PolicySpec,
    param: Option<f64>,
    seed: u64,
}

struct Setup<'a> {
    config: &'a ExperimentConfig,
    registry: &'a PolicyRegistry,
    predictor: PredictorSpec,
    traces: &'a [(String, Trace)],
    opts: Vec<u64>,
    k: usize,
}

impl Setup<'_> {
    fn run_one(&self, job: &Job<'_>) -> Result<RunResult> {
        let audit = self.config.assert_invariants;
        let start = Instant::now();
        let mut result = RunResult {
            policy: job.spec.to_string(),
            predictor: self.predictor.label(),
            param: job.param.or(self.predictor.fixed_param()),
            seed: job.seed,
            misses: 0,
            opt_misses: 0,
            ratio: 0.0,
            eta: PredictionError::default(),
            phases: Vec::new(),
            wall_ms: 0.0,
            violations: Vec::new(),
        };
        for (i, ((name, trace), &opt)) in self.traces.iter().zip(&self.opts).enumerate() {
            let mut bundle = self.predictor.build(trace, self.k, job.param, derive_seed(job.seed, i, 0))?;
            let policy = self.registry.build(job.spec, trace, audit)?;
            let (misses, report) = run_policy(policy, trace, self.k, &mut bundle, derive_seed(job.seed, i, 1))?;
            let eta = measure_error(&bundle, trace, self.k);
            result.eta.eta_t += eta.eta_t;
            result.eta.eta_b += eta.eta_b;
            result.eta.eta_f += eta.eta_f;
            result.misses += misses;
            result.opt_misses += opt;
            if audit {
                let at = |v: &String| format!("{} seed {} {name}: {v}", result.policy, job.seed);
                if misses < opt {
                    result.violations.push(at(&format!("{misses} misses below OPT {opt}")));
                }
                if let Some(rep) = &report {
                    let check = phase_report(rep, opt);
                    let found: Vec<String> = rep.violations.iter().chain(&check.violations).map(at).collect();
                    result.violations.extend(found);
                }
            }
            if self.config.phase_stats {
                if let Some(rep) = report {
                    result.phases.push((name.clone(), rep.phases));
                }
            }
        }
        result.ratio = cost_ratio(result.misses, result.opt_misses);
        if self.config.timing {
            result.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        }
        Ok(result)
    }
}

fn aggregate(runs: &[RunResult]) -> Aggregate {
    let avg = |f: &dyn Fn(&RunResult) -> f64| mean(&runs.iter().map(f).collect::<Vec<f64>>()).unwrap_or(0.0);
    let first = &runs[0];
    Aggregate {
        policy: first.policy.clone(),
        predictor: first.predictor.clone(),
        param: first.param,
        runs: runs.len(),
        misses: avg(&|r| r.misses as f64),
        opt_misses: avg(&|r| r.opt_misses as f64),
        ratio: avg(&|r| r.ratio),
        eta_t: avg(&|r| r.eta.eta_t as f64),
        eta_b: avg(&|r| r.eta.eta_b as f64),
        eta_f: avg(&|r| r.eta.eta_f as f64),
        wall_ms: avg(&|r| r.wall_ms),
    }
}

/// Runs the experiment on traces already in memory. Runs execute in
/// parallel; the table keeps config order.
pub fn run_traces(
    config: &ExperimentConfig,
    registry: &PolicyRegistry,
    traces: &[(String, Trace)],
) -> Result<RunTable> {
    config.validate(registry)?;
    let k = config.cache_size()?;
    let specs = config.policy_specs()?;
    let cache = OptCache::new(config.opt_cache.clone());
    let opts = traces
        .par_iter()
        .map(|(_, t)| cache.get(t, k))
        .collect::<Result<Vec<u64>>>()?;
    let setup = Setup {
        config,
        registry,
        predictor: config.predictor()?,
        traces,
        opts,
        k,
    };
    let points = config.sweep_points();
    let jobs: Vec<Job<'_>> = specs
        .iter()
        .flat_map(|spec| {
            points.iter().flat_map(move |&param| {
                config.seeds.iter().map(move |&seed| Job { spec, param, seed })
            })
        })
        .collect();
    let runs = jobs
        .par_iter()
        .map(|job| setup.run_one(job))
        .collect::<Result<Vec<RunResult>>>()?;
    let aggregates = runs.chunks(config.seeds.len()).map(aggregate).collect();
    Ok(RunTable { runs, aggregates })
}

/// Loads the configured trace source and runs the experiment.
pub fn run(config: &ExperimentConfig, registry: &PolicyRegistry) -> Result<RunTable> {
    config.validate(registry)?;
    let traces = config.load_traces()?;
    run_traces(config, registry, &traces)
}

/// Policies as rows, predictor settings as columns, mean ratios as cells.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompareTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

impl CompareTable {
    pub fn from_tables(tables: &[RunTable]) -> Self {
        let column_of = |a: &Aggregate| match a.param {
            Some(p) => format!("{}={p}", a.predictor),
            None => a.predictor.clone(),
        };
        let mut columns: Vec<String> = Vec::new();
        let mut policies: Vec<String> = Vec::new();
        for a in tables.iter().flat_map(|t| &t.aggregates) {
            let c = column_of(a);
            if !columns.contains(&c) {
                columns.push(c);
            }
            if !policies.contains(&a.policy) {
                policies.push(a.policy.clone());
            }
        }
        let rows = policies
            .into_iter()
            .map(|p| {
                let cells = columns
                    .iter()
                    .map(|c| {
                        let vals: Vec<f64> = tables
                            .iter()
                            .flat_map(|t| &t.aggregates)
                            .filter(|a| a.policy == p && &column_of(a) == c)
                            .map(|a| a.ratio)
                            .collect();
                        mean(&vals)
                    })
                    .collect();
                (p, cells)
            })
            .collect();
        CompareTable { columns, rows }
    }

    pub fn cell(&self, policy: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.iter().find(|(p, _)| p == policy)?.1[c]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["policy".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (p, cells) in &self.rows {
            let mut row = vec![p.clone()];
            row.extend(cells.iter().map(|c| c.map(|x| x.to_string()).unwrap_or_default()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned text for terminals.
    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|(p, _)| p.len()).max().unwrap_or(0).max(6);
        let mut s = format!("{:width$}", "policy");
        for c in &self.columns {
            s += &format!("  {c:>12}");
        }
        s.push('\n');
        for (p, cells) in &self.rows {
            s += &format!("{p:width$}");
            for (c, v) in self.columns.iter().zip(cells) {
                let w = c.len().max(12);
                match v {
                    Some(x) => s += &format!("  {x:>w$.4}"),
                    None => s += &format!("  {:>w$}", "-"),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Runs several configs over the same trace and cache size and lays the
/// results side by side.
pub fn compare(configs: &[ExperimentConfig], registry: &PolicyRegistry) -> Result<CompareTable> {
    let first = configs.first().ok_or_else(|| Error::Config("nothing to compare".into()))?;
    for c in configs {
        if c.trace != first.trace || c.format != first.format || c.cache_size()? != first.cache_size()? {
            return Err(Error::Config("compared configs must share trace, format and cache size".into()));
        }
    }
    let traces = first.load_traces()?;
    let tables = configs
        .iter()
        .map(|c| run_traces(c, registry, &traces))
        .collect::<Result<Vec<_>>>()?;
    Ok(CompareTable::from_tables(&tables))
}
