use std::path::{Path, PathBuf};
use std::process::Command;

use guardcache::harness::cli::main_with;
use guardcache::harness::{compare, run, ExperimentConfig, PolicyRegistry, TraceFormat, OUT_DIR_ENV};
use guardcache::policy::{AccessContext, EvictionContext};
use guardcache::{PageId, Policy, Result};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn cli(args: &[&str], registry: &PolicyRegistry) -> i32 {
    let mut argv = vec!["guardcache"];
    argv.extend(args);
    main_with(argv, registry)
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

/// Evicts a page that is not in the cache.
struct Broken;

impl Policy for Broken {
    fn name(&self) -> String {
        "broken".into()
    }

    fn choose_victim(&mut self, _ctx: &mut EvictionContext<'_>) -> Result<PageId> {
        Ok(PageId(u64::MAX))
    }

    fn on_access(&mut self, _ctx: &mut AccessContext<'_>) -> Result<()> {
        Ok(())
    }

    fn on_evict(&mut self, _page: PageId) {}
}

fn with_broken() -> PolicyRegistry {
    let mut r = PolicyRegistry::default();
    r.register("broken", |_| Box::new(Broken));
    r
}

#[test]
fn plain_lru_run_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let code = cli(
        &["--trace", &fixture("small.txt"), "--format", "plain", "--k", "2", "--policy", "lru", "--out", out.to_str().unwrap(), "--no-timing"],
        &PolicyRegistry::default(),
    );
    assert_eq!(code, 0);
    // a b c a b c d a d b with k = 2: LRU hits only the second d; OPT
    // misses a b c, then b, d, a and b again.
    assert_eq!(
        read(&out),
        "policy,predictor,param,seed,misses,opt,ratio,eta_t,eta_b,eta_f,wall_ms\n\
         lru,none,,0,9,7,1.2857142857142858,0,0,0,0.000\n\
         lru,none,,mean,9,7,1.2857142857142858,0,0,0,0.000\n"
    );
}

#[test]
fn config_errors_exit_1() {
    let r = PolicyRegistry::default();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let out = out.to_str().unwrap();
    let small = fixture("small.txt");
    assert_eq!(cli(&["--trace", &small, "--k", "2", "--policy", "nonsense", "--out", out], &r), 1);
    assert_eq!(cli(&["--trace", &small, "--k", "2", "--policy", "lru", "--sweep", "0,1", "--out", out], &r), 1);
    assert_eq!(cli(&["--trace", &small, "--policy", "lru", "--out", out], &r), 1, "plain needs --k");
    assert_eq!(cli(&["--trace", "/nonexistent", "--k", "2", "--policy", "lru", "--out", out], &r), 1);
    assert_eq!(cli(&["--trace", &small, "--format", "weird", "--k", "2", "--policy", "lru"], &r), 1);
    assert_eq!(cli(&["--trace", &small, "--k", "2", "--policy", "blind_oracle", "--out", out], &r), 1);
    assert_eq!(cli(&["--bogus-flag"], &r), 1);
    assert!(!Path::new(out).exists());
}

#[test]
fn broken_policy_exits_2_under_assertions() {
    let r = with_broken();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let base = ["--trace", &fixture("small.txt"), "--k", "2", "--out", out.to_str().unwrap()];
    let mut args: Vec<&str> = base.to_vec();
    args.extend(["--policy", "broken", "--assert-invariants"]);
    assert_eq!(cli(&args, &r), 2);
    let mut args: Vec<&str> = base.to_vec();
    args.extend(["--policy", "guard:broken", "--assert-invariants"]);
    assert_eq!(cli(&args, &r), 2);
    let mut args: Vec<&str> = base.to_vec();
    args.extend(["--policy", "broken"]);
    assert_eq!(cli(&args, &r), 1);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let r = PolicyRegistry::default();
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("r{i}.csv"));
        let code = cli(
            &[
                "--trace", &fixture("brightkite_sample.tsv"), "--format", "brightkite",
                "--policy", "guard:blind_oracle", "--policy", "lru", "--policy", "switch_rand(blind_oracle,marker,0.9)",
                "--pred", "lognormal", "--sweep", "0,1,4", "--seeds", "4", "--no-timing", "--phase-stats",
                "--out", out.to_str().unwrap(),
            ],
            &r,
        );
        assert_eq!(code, 0);
        outputs.push((read(&out), read(&dir.path().join(format!("r{i}.phases.csv")))));
    }
    assert_eq!(outputs[0], outputs[1]);
    let (csv, phases) = &outputs[0];
    // 3 policies x 3 sweep points x (4 seeds + mean).
    assert_eq!(csv.lines().count(), 1 + 3 * 3 * 5);
    assert!(phases.starts_with("policy,predictor,param,seed,trace,phase,c_q,n_q,o_q,n_q_new,n_q_old\n"));
    assert!(phases.lines().skip(1).all(|l| l.starts_with("guard:blind_oracle,lognormal,")));
}

#[test]
fn json_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.json");
    let out = dir.path().join("from_json.csv");
    let mut cfg = ExperimentConfig::new(fixture("citi_sample.csv"), TraceFormat::Citi);
    cfg.k = Some(5);
    cfg.policies = vec!["guard:lrb".into()];
    cfg.pred = "flip".into();
    cfg.sweep = vec![0.0, 0.5];
    cfg.seeds = vec![3, 4];
    cfg.out = Some(dir.path().join("ignored.csv"));
    cfg.timing = false;
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let code = cli(
        &["--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--assert-invariants"],
        &PolicyRegistry::default(),
    );
    assert_eq!(code, 0);
    let text = read(&out);
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert!(text.contains("guard:lrb,flip,0,3,"));
    assert!(text.contains("guard:lrb,flip,0,mean,"));
    let zero = text.lines().find(|l| l.starts_with("guard:lrb,flip,0,mean")).unwrap();
    assert_eq!(zero.split(',').nth(6), Some("1"), "perfect labels are optimal: {zero}");
}

#[test]
fn binary_respects_out_dir_env() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_guardcache"))
        .args(["--trace", &fixture("small.txt"), "--k", "3", "--policy", "marker", "--seeds", "2"])
        .env(OUT_DIR_ENV, dir.path())
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let text = read(&dir.path().join("results.csv"));
    assert_eq!(text.lines().count(), 4);
    let status = Command::new(env!("CARGO_BIN_EXE_guardcache"))
        .args(["--trace", &fixture("small.txt"), "--k", "3", "--policy", "bogus"])
        .env(OUT_DIR_ENV, dir.path())
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&status.stderr).contains("unknown policy `bogus`"));
}

#[test]
fn guard_with_perfect_predictions_is_optimal() {
    let mut cfg = ExperimentConfig::new(fixture("brightkite_sample.tsv"), TraceFormat::Brightkite);
    cfg.policies = vec!["guard:blind_oracle".into()];
    cfg.pred = "lognormal(0)".into();
    cfg.seeds = vec![0, 1];
    cfg.assert_invariants = true;
    let mut reg = PolicyRegistry::default();
    let table = run(&cfg, &reg).unwrap();
    assert_eq!(table.aggregate("guard:blind_oracle", Some(0.0)).unwrap().ratio, 1.0);
    assert_eq!(table.violations().count(), 0);
    // fitf needs its own predictor kind.
    cfg.policies = vec!["guard:fitf".into()];
    assert!(run(&cfg, &reg).is_err());
    reg.register("lru_again", |_| Box::new(guardcache::policy::Lru::new()));
    cfg.policies = vec!["lru_again".into()];
    assert!(run(&cfg, &reg).unwrap().aggregates[0].ratio >= 1.0);
}

#[test]
fn address_mode_sums_over_sets() {
    use rand::{Rng, SeedableRng};
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mem.txt");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    // A small geometry: 4 sets of 2 ways.
    let lines: Vec<String> = (0..2000).map(|_| format!("{:#x}", rng.random_range(0..64u64) * 64)).collect();
    std::fs::write(&path, lines.join("\n")).unwrap();
    let mut cfg = ExperimentConfig::new(&path, TraceFormat::Addr);
    cfg.addr = Some(guardcache::trace::SetAssociativeConfig {
        capacity_bytes: 512,
        line_bytes: 64,
        ways: 2,
    });
    cfg.k = Some(2);
    cfg.policies = vec!["lru".into()];
    let table = run(&cfg, &PolicyRegistry::default()).unwrap();
    let traces = cfg.load_traces().unwrap();
    assert_eq!(traces.len(), 4);
    let opt: u64 = traces.iter().map(|(_, t)| guardcache::oracle::opt_cost(t, 2)).sum();
    let r = &table.runs[0];
    assert_eq!(r.opt_misses, opt);
    assert_eq!(r.ratio, r.misses as f64 / opt as f64);
}

#[test]
fn compare_requires_shared_trace() {
    let r = PolicyRegistry::default();
    let mut a = ExperimentConfig::new(fixture("citi_sample.csv"), TraceFormat::Citi);
    a.k = Some(8);
    a.policies = vec!["lru".into(), "guard:blind_oracle".into()];
    a.pred = "popu".into();
    let mut b = a.clone();
    b.pred = "pleco".into();
    let table = compare(&[a.clone(), b.clone()], &r).unwrap();
    assert_eq!(table.columns, vec!["popu", "pleco(1.8,10)"]);
    assert_eq!(table.rows.len(), 2);
    assert_eq!(table.cell("lru", "popu"), table.cell("lru", "pleco(1.8,10)"));
    let same = compare(&[a.clone(), a.clone()], &r).unwrap();
    assert_eq!(same.rows[0].1.len(), 1);
    b.k = Some(9);
    assert!(compare(&[a, b], &r).is_err());
}
