use std::fs;
use std::process::Command;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spartan_bo::benchmarks::{Benchmark, MixedToy, Problem};
use spartan_bo::design::{latin_hypercube, DesignKind};
use spartan_bo::driver::{run, AcquisitionConfig, DesignConfig, HierarchicalConfig, Method, RunConfig, Trace};
use spartan_bo::experiment::{aggregate, aggregate_dir, exit_code, read_trace, run_experiment, ExperimentConfig};
use spartan_bo::inference::McmcSettings;
use spartan_bo::Error;

fn quick(method: Method, budget: usize, seed: u64) -> RunConfig {
    RunConfig {
        initial_design: DesignConfig { kind: DesignKind::Lhs, points: 4 },
        mcmc: McmcSettings { samples: 3, burnin: 10, thinning: 2, ..McmcSettings::default() },
        acquisition: AcquisitionConfig { candidates_per_dim: 100, refined_candidates: 2, refinement_evaluations: 30 },
        ..RunConfig::new(method, budget, seed)
    }
}

fn bits(t: &Trace) -> Vec<u64> {
    t.records.iter().flat_map(|r| r.x.iter().chain([&r.y, &r.y_best]).map(|v| v.to_bits())).collect()
}

proptest! {
    #[test]
    fn lhs_is_stratified(p in 1usize..60, dim in 1usize..6, seed in any::<u64>()) {
        let pts = latin_hypercube(p, dim, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(pts.len(), p);
        for j in 0..dim {
            let mut strata: Vec<usize> = pts.iter().map(|x| (x[j] * p as f64).floor() as usize).collect();
            strata.sort_unstable();
            prop_assert_eq!(strata, (0..p).collect::<Vec<_>>());
        }
    }
}

#[test]
fn lhs_quartiles() {
    let pts = latin_hypercube(4, 1, &mut ChaCha8Rng::seed_from_u64(0));
    let mut q: Vec<usize> = pts.iter().map(|x| (x[0] * 4.0) as usize).collect();
    q.sort_unstable();
    assert_eq!(q, vec![0, 1, 2, 3]);
}

#[test]
fn traces_are_monotone_exact_and_feasible() {
    let branin = Problem::Continuous(Benchmark::Branin);
    for (method, budget) in [(Method::Bo, 9), (Method::Sbo, 9), (Method::Bo, 4)] {
        for seed in 0..2 {
            let t = run(&quick(method, budget, seed), &branin).unwrap();
            assert_eq!(t.len(), budget);
            assert_eq!(t.method, Some(method));
            let mut best = f64::INFINITY;
            for (i, r) in t.records.iter().enumerate() {
                assert_eq!(r.iteration, i);
                best = best.min(r.y);
                assert_eq!(r.y_best, best);
                assert!(r.x[0] >= -5.0 && r.x[0] <= 10.0 && r.x[1] >= 0.0 && r.x[1] <= 15.0);
            }
        }
    }
}

#[test]
fn common_random_numbers_and_bitwise_determinism() {
    let p = Problem::Continuous(Benchmark::Hartmann6);
    let bo = run(&quick(Method::Bo, 7, 21), &p).unwrap();
    let sbo = run(&quick(Method::Sbo, 7, 21), &p).unwrap();
    for i in 0..4 {
        assert_eq!(bo.records[i].x, sbo.records[i].x);
        assert_eq!(bo.records[i].y.to_bits(), sbo.records[i].y.to_bits());
    }
    assert_eq!(bits(&sbo), bits(&run(&quick(Method::Sbo, 7, 21), &p).unwrap()));
    assert_ne!(bits(&sbo), bits(&run(&quick(Method::Sbo, 7, 22), &p).unwrap()));
}

#[test]
fn hierarchical_trace_shape() {
    let cfg = RunConfig {
        hierarchical: Some(HierarchicalConfig { outer: 5, inner: 3, ..HierarchicalConfig::default() }),
        ..quick(Method::Hierarchical, 15, 8)
    };
    let t = run(&cfg, &Problem::Mixed(MixedToy)).unwrap();
    assert_eq!(t.len(), 15);
    assert!(t.records.iter().all(|r| r.categories.len() == 1 && r.categories[0] < 3));
    assert!(t.records.windows(2).all(|w| w[1].y_best <= w[0].y_best));
    assert_eq!(bits(&t), bits(&run(&cfg, &Problem::Mixed(MixedToy)).unwrap()));
}

fn experiment_json(dir: &std::path::Path, budget: usize, repeats: usize) -> String {
    format!(
        r#"{{
  "benchmark": "branin",
  "repeats": {repeats},
  "seed": 5,
  "output_dir": {dir:?},
  "methods": [
    {{"method": "bo", "budget": {budget}, "initial_design": {{"points": 4}},
      "mcmc": {{"samples": 2, "burnin": 5, "thinning": 2}},
      "acquisition": {{"candidates_per_dim": 50, "refined_candidates": 2, "refinement_evaluations": 20}}}},
    {{"method": "sbo", "budget": {budget}, "initial_design": {{"points": 4}},
      "mcmc": {{"samples": 2, "burnin": 5, "thinning": 2}},
      "acquisition": {{"candidates_per_dim": 50, "refined_candidates": 2, "refinement_evaluations": 20}}}}
  ]
}}"#
    )
}

#[test]
fn design_only_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut cfg = ExperimentConfig::from_json(&experiment_json(&out, 4, 1)).unwrap();
    cfg.methods.truncate(1);
    let res = run_experiment(&cfg, Some(1)).unwrap();
    assert_eq!(res.manifest.runs.len(), 1);
    let lines = read_trace(&out.join("traces/bo/run_000.jsonl")).unwrap();
    assert_eq!(lines.len(), 4);
    assert_eq!(res.curves[&Method::Bo].median, lines.iter().map(|l| l.y_best).collect::<Vec<_>>());
}

#[test]
fn reruns_write_identical_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let read_all = |dir: &std::path::Path| {
        let mut files = Vec::new();
        for m in ["bo", "sbo"] {
            for r in 0..2 {
                files.push(fs::read(dir.join(format!("traces/{m}/run_{r:03}.jsonl"))).unwrap());
            }
        }
        (files, fs::read(dir.join("aggregate_sbo.csv")).unwrap())
    };
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_experiment(&ExperimentConfig::from_json(&experiment_json(&a, 7, 2)).unwrap(), Some(1)).unwrap();
    run_experiment(&ExperimentConfig::from_json(&experiment_json(&b, 7, 2)).unwrap(), Some(2)).unwrap();
    assert_eq!(read_all(&a), read_all(&b));

    // Rebuilding aggregates from the trace files reproduces them.
    let before = fs::read(a.join("aggregate_bo.csv")).unwrap();
    fs::remove_file(a.join("aggregate_bo.csv")).unwrap();
    let curves = aggregate_dir(&a).unwrap();
    assert_eq!(curves.len(), 2);
    assert_eq!(fs::read(a.join("aggregate_bo.csv")).unwrap(), before);
}

#[test]
fn synthetic_traces_match_reference_quantiles() {
    // Reference values computed with numpy (quantile method "linear", std ddof=1).
    let traces: Vec<Vec<f64>> = (0..20)
        .map(|r| {
            let mut best = f64::INFINITY;
            (0..8)
                .map(|i| {
                    let (r, i) = (r as f64, i as f64);
                    best = best.min((1.3 * r + 0.7 * i).sin() + 0.1 * r * i / 5.0 - 0.05 * i);
                    best
                })
                .collect()
        })
        .collect();
    let c = aggregate(&traces).unwrap();
    let median = [
        0.05387682614972115,
        -0.32226570026935303,
        -0.5074461239619008,
        -0.5074461239619008,
        -0.6238041220095456,
        -0.6238041220095456,
        -0.6829063727107527,
        -0.6829063727107527,
    ];
    let q25 = [
        -0.7063205153677385,
        -0.7923513518693124,
        -0.8034655354109844,
        -0.8837291388411121,
        -0.8956954443365843,
        -0.8956954443365843,
        -0.9427657604591434,
        -0.9427657604591434,
    ];
    let q75 = [
        0.5380109962959984,
        0.4665102450498809,
        0.3364884804914148,
        -0.09608001176096057,
        -0.22804875381123246,
        -0.3905369383253343,
        -0.4299612960514915,
        -0.4299612960514915,
    ];
    let mean = [
        -0.007452588120972969,
        -0.15745743571014154,
        -0.31467910959336315,
        -0.43335317224709263,
        -0.4915498652275305,
        -0.5866260891039692,
        -0.6400521477928323,
        -0.6480959898033695,
    ];
    let std = [
        0.7122856342046523,
        0.679089364725564,
        0.5720014085433864,
        0.4926244282789397,
        0.49859103958671824,
        0.4058007429097987,
        0.40925983536126376,
        0.42164999305620937,
    ];
    for i in 0..8 {
        assert!((c.median[i] - median[i]).abs() < 1e-12);
        assert!((c.q25[i] - q25[i]).abs() < 1e-12);
        assert!((c.q75[i] - q75[i]).abs() < 1e-12);
        assert!((c.mean[i] - mean[i]).abs() < 1e-12);
        assert!((c.std[i] - std[i]).abs() < 1e-12);
    }
}

fn spartan(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_spartan")).args(args).env("SPARTAN_WORKERS", "1").output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let good = tmp.path().join("good.json");
    fs::write(&good, experiment_json(&out, 5, 1)).unwrap();

    let listed = spartan(&["list-benchmarks"]);
    assert_eq!(listed.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&listed.stdout).contains("hartmann6"));

    assert_eq!(spartan(&["validate", good.to_str().unwrap()]).status.code(), Some(0));
    let ran = spartan(&["run", good.to_str().unwrap(), "--seed", "9"]);
    assert_eq!(ran.status.code(), Some(0), "{}", String::from_utf8_lossy(&ran.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 9);
    assert_eq!(spartan(&["aggregate", out.to_str().unwrap()]).status.code(), Some(0));

    let invalid = tmp.path().join("invalid.json");
    fs::write(&invalid, r#"{"benchmark": "branin", "methods": [{"method": "bo", "budget": 3}]}"#).unwrap();
    assert_eq!(spartan(&["validate", invalid.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(spartan(&["run", invalid.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(spartan(&["validate", "/nonexistent/config.json"]).status.code(), Some(2));

    // Bounds outside the benchmark's domain are a configuration error.
    let outside = tmp.path().join("outside.json");
    fs::write(&outside, r#"{"benchmark": "branin", "methods": [{"method": "bo", "bounds": [[-50, 10], [0, 15]]}]}"#)
        .unwrap();
    assert_eq!(spartan(&["validate", outside.to_str().unwrap()]).status.code(), Some(2));

    assert_eq!(exit_code(&Error::Objective("episode diverged".into())), 3);
}
