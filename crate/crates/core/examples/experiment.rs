//! Runs a small two-method experiment from a JSON config and prints the
//! median incumbent curves. Artifacts go to a temporary directory unless a
//! path is given.

use spartan_bo::experiment::{run_experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out =
        std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("spartan-example").display().to_string());
    let config = ExperimentConfig::from_json(&format!(
        r#"{{
  "benchmark": "branin",
  "repeats": 3,
  "seed": 11,
  "output_dir": {out:?},
  "methods": [
    {{"method": "bo", "budget": 20}},
    {{"method": "sbo", "budget": 20}}
  ]
}}"#
    ))?;
    let result = run_experiment(&config, None)?;
    for (method, curve) in &result.curves {
        let last = curve.median.len() - 1;
        println!("{method}: median y_best at eval 10 {:.4}, at eval 20 {:.4}", curve.median[9], curve.median[last]);
    }
    println!("artifacts in {out}");
    Ok(())
}
