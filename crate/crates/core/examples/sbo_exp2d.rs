//! SBO against BO on the exponential 2-D function, whose interesting
//! region is a small corner of a large flat domain.

use spartan_bo::benchmarks::{Benchmark, Problem};
use spartan_bo::driver::{run, Method, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let repeats: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let problem = Problem::Continuous(Benchmark::Exp2d);
    let target = Benchmark::Exp2d.optimum().expect("known optimum").value;
    for method in [Method::Sbo, Method::Bo] {
        for seed in 0..repeats {
            let trace = run(&RunConfig::new(method, 60, seed), &problem)?;
            let hit = trace.records.iter().find(|r| (r.y_best - target).abs() <= 0.01).map(|r| r.iteration + 1);
            println!(
                "{method} seed {seed}: final {:.5}, within 0.01 at evaluation {}",
                trace.best_y().unwrap_or(f64::NAN),
                hit.map_or("-".to_string(), |h| h.to_string())
            );
        }
    }
    Ok(())
}
