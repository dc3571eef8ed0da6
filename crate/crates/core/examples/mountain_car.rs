//! Direct policy search on mountain car: minimize steps to the goal.

use spartan_bo::benchmarks::{Benchmark, MountainCar, Problem};
use spartan_bo::driver::{run, Method, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let car = MountainCar::default();
    let trace = run(&RunConfig::new(Method::Sbo, 40, seed), &Problem::Continuous(Benchmark::MountainCar(car)))?;
    let best = trace.best().expect("nonempty trace");
    let episode = car.episode(&best.x)?;
    println!("best policy {:?}", best.x.iter().map(|w| format!("{w:.3}")).collect::<Vec<_>>());
    println!(
        "{:?} after {} steps (first success at trial {:?})",
        episode.termination,
        episode.steps,
        trace.records.iter().position(|r| r.y < car.horizon as f64).map(|i| i + 1)
    );
    Ok(())
}
