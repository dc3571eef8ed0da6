//! Hierarchical search over the mixed toy problem: Branin plus a
//! categorical penalty whose best level is 1.

use spartan_bo::benchmarks::{MixedToy, Problem};
use spartan_bo::driver::{run, HierarchicalConfig, Method, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let config = RunConfig {
        hierarchical: Some(HierarchicalConfig { outer: 15, inner: 6, ..HierarchicalConfig::default() }),
        ..RunConfig::new(Method::Hierarchical, 90, seed)
    };
    let trace = run(&config, &Problem::Mixed(MixedToy))?;
    let best = trace.best().expect("nonempty trace");
    println!("{} evaluations; best {:.5} at x {:?}, category {:?}", trace.len(), best.y, best.x, best.categories);
    Ok(())
}
