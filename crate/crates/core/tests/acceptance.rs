//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line.
//!
//! `SPARTAN_ACCEPTANCE=1,5,8` selects a subset; `SPARTAN_WORKERS` sets the
//! number of repeats run in parallel (criterion 8 always runs serially since
//! it measures process CPU time).

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rayon::prelude::*;
use spartan_bo::benchmarks::{Benchmark, MixedToy, MountainCar, Problem};
use spartan_bo::driver::{run, HierarchicalConfig, Method, RunConfig, Trace};
use spartan_bo::experiment::{quantile_sorted, repeat_seed};

const REPEATS: usize = 20;
const BASE_SEED: u64 = 0;

type Check = (usize, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn runs(method: Method, budget: usize, problem: &Problem, configure: impl Fn(&mut RunConfig) + Sync) -> Vec<Trace> {
    (0..REPEATS)
        .into_par_iter()
        .map(|i| {
            let mut cfg = RunConfig::new(method, budget, repeat_seed(BASE_SEED, i));
            configure(&mut cfg);
            run(&cfg, problem).unwrap_or_else(|e| panic!("{method} repeat {i}: {e}"))
        })
        .collect()
}

fn median(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

fn iqr(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25)
}

fn final_best(traces: &[Trace]) -> impl Iterator<Item = f64> + '_ {
    traces.iter().map(|t| t.best_y().expect("nonempty trace"))
}

fn exp2d_convergence() -> Outcome {
    let traces = runs(Method::Sbo, 60, &Problem::Continuous(Benchmark::Exp2d), |_| {});
    let gaps: Vec<f64> = traces.iter().map(|t| (t.records[39].y_best + 0.42888).abs()).collect();
    let m = median(gaps.iter().copied());
    let hits = gaps.iter().filter(|g| **g <= 0.01).count();
    Outcome { pass: m <= 0.01, detail: format!("median gap at evaluation 40 = {m:.4} ({hits}/{REPEATS} within 0.01)") }
}

fn branin_pair() -> (Vec<Trace>, Vec<Trace>) {
    // Serial: per-record CPU time is process-wide.
    let problem = Problem::Continuous(Benchmark::Branin);
    let serial = |method| -> Vec<Trace> {
        (0..REPEATS).map(|i| run(&RunConfig::new(method, 40, repeat_seed(BASE_SEED, i)), &problem).unwrap()).collect()
    };
    (serial(Method::Bo), serial(Method::Sbo))
}

fn branin_parity(bo: &[Trace], sbo: &[Trace]) -> Outcome {
    let opt = 0.397887;
    let (mb, ms) = (median(final_best(bo).map(|y| y - opt)), median(final_best(sbo).map(|y| y - opt)));
    Outcome {
        pass: mb <= 0.1 && ms <= 0.1 && (ms - mb).abs() <= 0.1,
        detail: format!("median final gap BO {mb:.4}, SBO {ms:.4}"),
    }
}

fn hartmann_robustness() -> Outcome {
    let problem = Problem::Continuous(Benchmark::Hartmann6);
    let bo = runs(Method::Bo, 70, &problem, |_| {});
    let sbo = runs(Method::Sbo, 70, &problem, |_| {});
    let (ib, is) = (iqr(final_best(&bo)), iqr(final_best(&sbo)));
    let (mb, ms) = (median(final_best(&bo)), median(final_best(&sbo)));
    Outcome {
        pass: is <= 1.5 * ib && ms <= mb + 0.1,
        detail: format!("IQR BO {ib:.4}, SBO {is:.4}; median BO {mb:.4}, SBO {ms:.4} (optimum -3.3224)"),
    }
}

fn michalewicz_reduced() -> Outcome {
    let problem = Problem::Continuous(Benchmark::Michalewicz { dim: 5, m: 10, negate: true });
    let bo = runs(Method::Bo, 100, &problem, |_| {});
    let sbo = runs(Method::Sbo, 100, &problem, |_| {});
    let (mb, ms) = (median(final_best(&bo)), median(final_best(&sbo)));
    Outcome { pass: ms <= mb && mb <= -2.0 && ms <= -2.0, detail: format!("median final BO {mb:.4}, SBO {ms:.4}") }
}

fn mountain_car() -> Outcome {
    let mc = MountainCar::default();
    let horizon = mc.horizon as f64;
    let traces = runs(Method::Sbo, 40, &Problem::Continuous(Benchmark::MountainCar(mc)), |_| {});
    // The objective is the step count, which stays below the horizon only on reaching the goal.
    let solved = final_best(&traces).filter(|steps| *steps < horizon).count();
    let steps = median(final_best(&traces));
    Outcome { pass: solved >= 16, detail: format!("{solved}/{REPEATS} reached the goal, median steps {steps}") }
}

fn hierarchical() -> Outcome {
    let traces = runs(Method::Hierarchical, 90, &Problem::Mixed(MixedToy), |cfg| {
        cfg.hierarchical = Some(HierarchicalConfig { outer: 15, inner: 6, ..HierarchicalConfig::default() });
    });
    let lengths_ok = traces.iter().all(|t| t.len() == 90);
    let recovered = traces.iter().filter(|t| t.best().is_some_and(|r| r.categories == [1])).count();
    Outcome {
        pass: lengths_ok && recovered >= 18,
        detail: format!("best category recovered in {recovered}/{REPEATS}, all traces length 90: {lengths_ok}"),
    }
}

/// Newest sibling test binary whose file name starts with `name-`.
fn test_binary(dir: &Path, name: &str) -> Option<PathBuf> {
    std::fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok())
        .filter(|e| {
            let f = e.file_name().to_string_lossy().into_owned();
            f.strip_prefix(name).and_then(|r| r.strip_prefix('-')).is_some_and(|h| !h.contains('.'))
        })
        .max_by_key(|e| e.metadata().and_then(|m| m.modified()).ok())
        .map(|e| e.path())
}

fn property_suites() -> Outcome {
    let exe = std::env::current_exe().expect("own path");
    let dir = exe.parent().expect("deps directory");
    let start = Instant::now();
    let mut failed = Vec::new();
    for name in
        ["kernel_properties", "gp_properties", "acquisition_properties", "inference_properties", "run_properties"]
    {
        let ok = match test_binary(dir, name) {
            Some(bin) => Command::new(bin).arg("-q").output().is_ok_and(|o| o.status.success()),
            None => false,
        };
        if !ok {
            failed.push(name);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: failed.is_empty() && secs < 300.0,
        detail: if failed.is_empty() {
            format!("all suites passed in {secs:.0}s")
        } else {
            format!("failed or missing: {failed:?}")
        },
    }
}

fn cpu_ratio(bo: &[Trace], sbo: &[Trace]) -> Outcome {
    let per_iteration = |traces: &[Trace]| {
        let (mut cpu, mut n) = (0.0, 0usize);
        for t in traces {
            for r in &t.records[10..] {
                cpu += r.cpu_seconds;
                n += 1;
            }
        }
        cpu / n as f64
    };
    let (b, s) = (per_iteration(bo), per_iteration(sbo));
    let ratio = s / b;
    Outcome { pass: ratio <= 25.0, detail: format!("per-iteration CPU BO {b:.4}s, SBO {s:.4}s, ratio {ratio:.1}") }
}

fn main() {
    let selected: Vec<usize> = match std::env::var("SPARTAN_ACCEPTANCE") {
        Ok(s) if !s.trim().is_empty() => s.split(',').filter_map(|t| t.trim().parse().ok()).collect(),
        _ => (1..=8).collect(),
    };
    if let Some(n) = std::env::var("SPARTAN_WORKERS").ok().and_then(|s| s.parse().ok()) {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("thread pool");
    }
    let wanted = |c: usize| selected.contains(&c);
    let mut failures = 0;
    let mut report = |c: usize, name: &str, start: Instant, o: Outcome| {
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("{status} C{c} {name}: {} [{:.0}s]", o.detail, start.elapsed().as_secs_f64());
        failures += usize::from(!o.pass);
    };

    let branin = (wanted(2) || wanted(8)).then(|| (Instant::now(), branin_pair()));
    let checks: [Check; 5] = [
        (1, "exp2d convergence", exp2d_convergence),
        (3, "hartmann6 robustness", hartmann_robustness),
        (4, "michalewicz(5,10)", michalewicz_reduced),
        (5, "mountain car", mountain_car),
        (6, "hierarchical mixed toy", hierarchical),
    ];
    if wanted(1) {
        let t = Instant::now();
        report(1, checks[0].1, t, (checks[0].2)());
    }
    if let Some((t, (bo, sbo))) = &branin {
        if wanted(2) {
            report(2, "branin parity", *t, branin_parity(bo, sbo));
        }
    }
    for &(c, name, check) in &checks[1..] {
        if wanted(c) {
            let t = Instant::now();
            report(c, name, t, check());
        }
    }
    if wanted(7) {
        let t = Instant::now();
        report(7, "property suites", t, property_suites());
    }
    if let Some((t, (bo, sbo))) = &branin {
        if wanted(8) {
            report(8, "cpu ratio on branin", *t, cpu_ratio(bo, sbo));
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
