//! BO and SBO on Branin with a shared seed; prints the incumbent curve.

use spartan_bo::benchmarks::{Benchmark, Problem};
use spartan_bo::driver::{run, Method, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let problem = Problem::Continuous(Benchmark::Branin);
    for method in [Method::Bo, Method::Sbo] {
        let trace = run(&RunConfig::new(method, 40, seed), &problem)?;
        let best = trace.best().expect("nonempty trace");
        println!(
            "{method}: best {:.6} at ({:.4}, {:.4}); cpu {:.2}s",
            best.y,
            best.x[0],
            best.x[1],
            trace.total_cpu_seconds()
        );
        for r in trace.records.iter().step_by(5) {
            println!("  eval {:>2}  y_best {:.6}", r.iteration + 1, r.y_best);
        }
    }
    Ok(())
}
