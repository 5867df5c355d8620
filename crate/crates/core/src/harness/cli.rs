//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 on configuration or input errors, 2 on an
//! invariant violation when `--assert-invariants` is set.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::Parser;

use super::config::{ExperimentConfig, TraceFormat};
use super::run::{run, CompareTable};
use super::spec::{parse_grid, PolicyRegistry};
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "guardcache", version, about = "Cache replacement experiments with predictions")]
pub struct Args {
    /// JSON config; flags given on the command line override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Trace file
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// plain | brightkite | citi | addr
    #[arg(long)]
    pub format: Option<String>,
    /// Cache size; brightkite, citi and addr have defaults
    #[arg(long)]
    pub k: Option<usize>,
    /// Policy spec; repeat for several policies.
    #[arg(long = "policy")]
    pub policies: Vec<String>,
    /// Predictor spec, e.g. `lognormal`, `binary:pleco`, `fitf(0.2)`.
    #[arg(long)]
    pub pred: Option<String>,
    /// Comma-separated parameter grid for the predictor.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Number of seeds, run as 0..N.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Results CSV (default `$GUARDCACHE_OUT_DIR/results.csv`, else ./results.csv)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write per-phase counters of guarded runs next to the output.
    #[arg(long)]
    pub phase_stats: bool,
    /// Audit guard invariants and phase accounting; violations exit with 2.
    #[arg(long)]
    pub assert_invariants: bool,
    /// Write 0 for wall_ms so that reruns produce identical files.
    #[arg(long)]
    pub no_timing: bool,
    /// Directory for cached OPT costs.
    #[arg(long)]
    pub opt_cache: Option<PathBuf>,
}

impl Args {
    pub fn into_config(self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => {
                let trace = self.trace.clone().ok_or_else(|| Error::Config("--trace is required".into()))?;
                let format = self.format.as_deref().unwrap_or("plain").parse::<TraceFormat>()?;
                ExperimentConfig::new(trace, format)
            }
        };
        if let Some(t) = self.trace {
            cfg.trace = t;
        }
        if let Some(f) = self.format {
            cfg.format = f.parse()?;
        }
        if self.k.is_some() {
            cfg.k = self.k;
        }
        if !self.policies.is_empty() {
            cfg.policies = self.policies;
        }
        if let Some(p) = self.pred {
            cfg.pred = p;
        }
        if let Some(s) = self.sweep {
            cfg.sweep = parse_grid(&s)?;
        }
        if let Some(n) = self.seeds {
            cfg.seeds = (0..n).collect();
        }
        if self.out.is_some() {
            cfg.out = self.out;
        }
        if self.opt_cache.is_some() {
            cfg.opt_cache = self.opt_cache;
        }
        cfg.phase_stats |= self.phase_stats;
        cfg.assert_invariants |= self.assert_invariants;
        if self.no_timing {
            cfg.timing = false;
        }
        Ok(cfg)
    }
}

fn create(path: &PathBuf) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn execute(cfg: &ExperimentConfig, registry: &PolicyRegistry) -> Result<Vec<String>> {
    let table = run(cfg, registry)?;
    let out = cfg.out_path();
    table.write_csv(create(&out)?)?;
    if cfg.phase_stats {
        table.write_phase_csv(create(&cfg.phase_stats_path())?)?;
    }
    print!("{}", CompareTable::from_tables(std::slice::from_ref(&table)).render());
    println!("wrote {}", out.display());
    Ok(table.violations().cloned().collect())
}

/// Runs the CLI with an explicit registry and returns the exit code.
pub fn main_with<I, T>(args: I, registry: &PolicyRegistry) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let cfg = match args.into_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match execute(&cfg, registry) {
        Ok(violations) if violations.is_empty() => 0,
        Ok(violations) => {
            for v in violations.iter().take(20) {
                eprintln!("invariant violated: {v}");
            }
            eprintln!("{} invariant violation(s)", violations.len());
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            if cfg.assert_invariants && e.is_invariant() {
                2
            } else {
                1
            }
        }
    }
}

pub fn main() -> i32 {
    main_with(std::env::args_os(), &PolicyRegistry::default())
}
